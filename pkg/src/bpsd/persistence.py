"""Model bundles: a directory of deterministic JSON artifacts plus a run manifest.

Layout::

    manifest.json
    personalized/<patient_id>.json
    suite/scaler.json  suite/rdg.json  suite/irg.json  suite/tcn_net.json
    suite/tcn_latent.json  suite/meta.json
    baseline.json

Only ``created_at`` in the manifest depends on wall-clock time.
"""
from __future__ import annotations

import hashlib
import json
import shutil
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .config import config_to_dict, framework_config_from_dict
from .featurize import Instances, Scaler
from .framework import ConventionalBaseline, FrameworkConfig, GeneralizedSuite, PersonalizedModel, TwoStagePredictor
from .learners import model_from_dict
from .pipeline import TrainedModels
from .tcn import TcnNetwork

FORMAT_VERSION = 1
MANIFEST = "manifest.json"


class BundleError(ValueError):
    pass


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def data_hash(instances: Instances) -> str:
    """Content hash of an instance batch (ids, times, features, labels)."""
    h = hashlib.sha256()
    h.update("\n".join(instances.patient_id.tolist()).encode())
    for arr, dtype in ((instances.t, "<i8"), (instances.X, "<f8"), (instances.label4, "<i8")):
        h.update(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    return h.hexdigest()


def _model_dict(model) -> dict:
    return model.to_dict()


def _personalized_dict(m: PersonalizedModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "patient_id": m.patient_id,
        "threshold": m.threshold,
        "mask": np.asarray(m.mask, dtype=bool).tolist(),
        "scaler": m.scaler.to_dict(),
        "model": _model_dict(m.model),
    }


def _personalized_from(d: dict) -> PersonalizedModel:
    return PersonalizedModel(
        d["patient_id"], Scaler.from_dict(d["scaler"]), np.array(d["mask"], dtype=bool), model_from_dict(d["model"]), d["threshold"]
    )


def _write(root: Path, rel: str, obj: Any, hashes: dict[str, str]) -> str:
    path = root / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    hashes[rel] = sha256_file(path)
    return rel


def save_bundle(
    out_dir: str | Path,
    models: TrainedModels,
    config: FrameworkConfig,
    train_hash: str,
    extra: Mapping[str, Any] | None = None,
) -> dict:
    """Write the bundle into a temporary sibling directory, then move it into place."""
    out = Path(out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        manifest = _write_bundle(tmp, models, config, train_hash, extra or {})
        if out.exists():
            shutil.rmtree(out)
        tmp.rename(out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


def _write_bundle(root: Path, models: TrainedModels, config: FrameworkConfig, train_hash: str, extra: Mapping) -> dict:
    hashes: dict[str, str] = {}
    pred = models.predictor
    personalized = {
        pid: _write(root, f"personalized/{pid}.json", _personalized_dict(m), hashes) for pid, m in sorted(pred.personalized.items())
    }
    suite = pred.suite
    suite_paths = {
        "scaler": _write(root, "suite/scaler.json", suite.scaler.to_dict(), hashes),
        "rdg": _write(root, "suite/rdg.json", _model_dict(suite.rdg), hashes),
        "irg": _write(root, "suite/irg.json", _model_dict(suite.irg), hashes),
        "tcn_net": _write(root, "suite/tcn_net.json", suite.tcn_net.to_dict(), hashes),
        "meta": _write(
            root,
            "suite/meta.json",
            {
                "g2_classifier": suite.g2_classifier,
                "patient_stats": {p: v.tolist() for p, v in sorted(suite.patient_stats.items())},
                "cv": suite.cv,
            },
            hashes,
        ),
    }
    if suite.tcn_latent_model is not None:
        suite_paths["tcn_latent"] = _write(root, "suite/tcn_latent.json", _model_dict(suite.tcn_latent_model), hashes)
    baseline = {"scaler": models.baseline.scaler.to_dict(), "model": _model_dict(models.baseline.model)}
    baseline_path = _write(root, "baseline.json", baseline, hashes)

    manifest = {
        "format_version": FORMAT_VERSION,
        "model_version": __version__,
        "data_hash": train_hash,
        "seeds": {"framework": config.seed, "forest": config.forest.seed, "tcn": config.seed},
        "config": config_to_dict(config),
        "active": list(pred.active),
        "threshold": pred.threshold,
        "personalized": personalized,
        "skipped": dict(sorted(models.skipped.items())),
        "suite": suite_paths,
        "baseline": baseline_path,
        "sha256": dict(sorted(hashes.items())),
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **extra,
    }
    (root / MANIFEST).write_text(dumps(manifest))
    return manifest


def read_manifest(bundle_dir: str | Path) -> dict:
    path = Path(bundle_dir) / MANIFEST
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise BundleError(f"no manifest at {path}") from e
    except json.JSONDecodeError as e:
        raise BundleError(f"corrupt manifest {path}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise BundleError(f"unsupported bundle format_version {manifest.get('format_version')!r}")
    return manifest


def load_bundle(bundle_dir: str | Path, verify: bool = True) -> tuple[TrainedModels, dict]:
    root = Path(bundle_dir)
    manifest = read_manifest(root)

    def load(rel: str) -> dict:
        path = root / rel
        if not path.exists():
            raise BundleError(f"bundle artifact missing: {rel}")
        if verify and sha256_file(path) != manifest["sha256"].get(rel):
            raise BundleError(f"checksum mismatch for {rel}")
        return json.loads(path.read_text())

    personalized = {pid: _personalized_from(load(rel)) for pid, rel in manifest["personalized"].items()}
    paths = manifest["suite"]
    meta = load(paths["meta"])
    suite = GeneralizedSuite(
        scaler=Scaler.from_dict(load(paths["scaler"])),
        rdg=model_from_dict(load(paths["rdg"])),
        tcn_net=TcnNetwork.from_dict(load(paths["tcn_net"])),
        tcn_latent_model=model_from_dict(load(paths["tcn_latent"])) if "tcn_latent" in paths else None,
        irg=model_from_dict(load(paths["irg"])),
        patient_stats={p: np.array(v) for p, v in meta["patient_stats"].items()},
        g2_classifier=meta["g2_classifier"],
        cv=meta["cv"],
    )
    predictor = TwoStagePredictor(personalized, suite, tuple(manifest["active"]), manifest["threshold"])
    b = load(manifest["baseline"])
    baseline = ConventionalBaseline(Scaler.from_dict(b["scaler"]), model_from_dict(b["model"]))
    return TrainedModels(predictor, baseline, dict(manifest["skipped"])), manifest


def manifest_config(manifest: Mapping) -> FrameworkConfig:
    return framework_config_from_dict(manifest["config"])
