import json

import numpy as np
import pytest

from bpsd.persistence import BundleError, data_hash, load_bundle, manifest_config, read_manifest, save_bundle

from .conftest import FAST


def _strip(manifest):
    return {k: v for k, v in manifest.items() if k != "created_at"}


def test_round_trip_predictions(tmp_path, small_models, small_data):
    save_bundle(tmp_path / "b", small_models, FAST, data_hash(small_data.train))
    loaded, manifest = load_bundle(tmp_path / "b")
    rows = np.isin(small_data.instances.patient_id, list(small_models.predictor.personalized))
    inst = small_data.instances[rows][:1000]
    a, b = small_models.predictor.predict_all(inst), loaded.predictor.predict_all(inst)
    for k in a:
        assert np.max(np.abs(a[k] - b[k])) <= 1e-9
    assert np.max(np.abs(small_models.baseline.predict_proba(inst.X) - loaded.baseline.predict_proba(inst.X))) <= 1e-9
    assert manifest_config(manifest) == FAST
    assert loaded.skipped == small_models.skipped


def test_bundle_files_deterministic(tmp_path, small_models, small_data):
    h = data_hash(small_data.train)
    m1 = save_bundle(tmp_path / "a", small_models, FAST, h)
    m2 = save_bundle(tmp_path / "b", small_models, FAST, h)
    assert _strip(m1) == _strip(m2)
    assert json.dumps(_strip(read_manifest(tmp_path / "a")), sort_keys=True) == json.dumps(_strip(m2), sort_keys=True)


def test_tampered_artifact_detected(tmp_path, small_models, small_data):
    save_bundle(tmp_path / "b", small_models, FAST, data_hash(small_data.train))
    path = tmp_path / "b" / "baseline.json"
    path.write_text(path.read_text().replace("1", "2", 1))
    with pytest.raises(BundleError, match="checksum"):
        load_bundle(tmp_path / "b")
    with pytest.raises(BundleError):
        read_manifest(tmp_path / "missing")


def test_data_hash_sensitivity(small_data):
    sub = small_data.train[:100]
    X = sub.X.copy()
    X[0, 0] += 1e-9
    assert data_hash(sub) == data_hash(sub[np.arange(100)])
    assert data_hash(sub) != data_hash(sub.with_X(X))
