import json

import pytest

from bpsd.cli import main
from bpsd.config import ConfigError, framework_config, generator_config, read_config_file
from bpsd.featurize import read_instances

INI = """[generator]
patients = 4
days = 14
seed = 11

[forest]
n_trees = 8

[tcn]
epochs = 2
hidden_channels = 8
latent_dim = 16

[framework]
tune = false
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "run.ini").write_text(INI)
    assert main(["generate", "--config", str(root / "run.ini"), "--instances", "--out", str(root / "data")]) == 0
    assert main(["train", "--data", str(root / "data"), "--config", str(root / "run.ini"), "--out", str(root / "model")]) == 0
    return root


def test_config_file_and_flag_precedence(tmp_path):
    (tmp_path / "c.ini").write_text(INI + "backbone = RF\nensemble = rdg,tcn\n")
    sections = read_config_file(str(tmp_path / "c.ini"))
    gen = generator_config(sections, {"days": 7})
    assert (gen.n_patients, gen.days, gen.seed) == (4, 7, 11)
    fw = framework_config(sections, {"backbone": "LR", "threshold": 0.3})
    assert fw.backbone == "LR" and fw.active == ("rdg", "tcn") and fw.threshold == 0.3
    assert fw.forest.n_trees == 8 and fw.tcn.epochs == 2 and fw.tune is False


@pytest.mark.parametrize(
    "text",
    ["[framework]\nbackbone = SVM\n", "[framework]\ncolour = red\n", "[weird]\na = 1\n", "[forest]\nn_trees = many\n", "no section"],
)
def test_config_errors(tmp_path, text):
    (tmp_path / "c.ini").write_text(text)
    with pytest.raises(ConfigError):
        framework_config(read_config_file(str(tmp_path / "c.ini")), {})


def test_pipeline_smoke(workspace, capsys):
    out = workspace / "reports"
    assert main(["evaluate", "--model", str(workspace / "model"), "--out", str(out)]) == 0
    summary = (out / "summary.md").read_text()
    assert "Personalized two-stage vs conventional" in summary and "Ablation" in summary
    assert main(["ablate", "--model", str(workspace / "model"), "--out", str(workspace / "abl")]) == 0
    lines = (workspace / "abl" / "ablation.csv").read_text().splitlines()
    assert len(lines) == 5 and len(lines[0].split(",")) == 13


def test_predict_schema_and_gating(workspace, capsys):
    inst = read_instances(workspace / "data" / "instances.csv")
    manifest = json.loads((workspace / "model" / "manifest.json").read_text())
    modeled = set(manifest["personalized"])
    idx = next(i for i in range(len(inst)) if inst.patient_id[i] in modeled and inst.label4[i] == 0)
    capsys.readouterr()
    assert main(["predict", "--model", str(workspace / "model"), "--instance", str(workspace / "data" / "instances.csv"), "--index", str(idx)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert list(out) == ["patient_id", "occurrence_prob", "ensemble_probs", "final_class", "model_version"]
    assert sum(out["ensemble_probs"].values()) == pytest.approx(1.0)
    if out["occurrence_prob"] < 0.5:
        assert out["final_class"] == "Normal"
    else:
        assert out["final_class"] == max(out["ensemble_probs"], key=out["ensemble_probs"].get)
    # threshold above any probability forces the Normal branch
    assert main(["predict", "--model", str(workspace / "model"), "--instance", str(workspace / "data" / "instances.csv"), "--index", str(idx), "--threshold", "1.0"]) == 0
    forced = json.loads(capsys.readouterr().out)
    assert forced["final_class"] == "Normal" or forced["occurrence_prob"] == 1.0


def test_identical_train_runs_identical_manifests(workspace):
    args = ["train", "--data", str(workspace / "data"), "--config", str(workspace / "run.ini")]
    assert main(args + ["--out", str(workspace / "m2")]) == 0
    a = json.loads((workspace / "model" / "manifest.json").read_text())
    b = json.loads((workspace / "m2" / "manifest.json").read_text())
    a.pop("created_at"), b.pop("created_at")
    assert a == b


def test_error_exit_codes(workspace, tmp_path, capsys):
    ini = str(workspace / "run.ini")
    assert main(["train", "--data", str(tmp_path / "nothing"), "--config", ini, "--out", str(tmp_path / "m")]) == 3
    assert not (tmp_path / "m").exists()
    assert main(["train", "--data", str(workspace / "data"), "--threshold", "7", "--out", str(tmp_path / "m")]) == 2
    assert main(["train", "--data", str(workspace / "data"), "--patients", "3", "--out", str(tmp_path / "m")]) == 2
    assert main(["generate", "--seed", "1", "--patients", "2", "--days", "7", "--wear-days-per-week", "9", "--out", str(tmp_path / "g")]) == 2
    assert not (tmp_path / "g").exists()
    err = capsys.readouterr().err.strip().splitlines()
    assert all(line.startswith("error code=") and "kind=" in line and "msg=" in line for line in err)
    with pytest.raises(SystemExit) as e:
        main(["train"])  # missing --out
    assert e.value.code == 2


def test_degenerate_training_exit_code(workspace, tmp_path):
    data = tmp_path / "one_class"
    data.mkdir()
    for name in ("signals.csv", "demographics.csv"):
        (data / name).write_text((workspace / "data" / name).read_text())
    events = (workspace / "data" / "events.csv").read_text().splitlines()
    (data / "events.csv").write_text("\n".join([events[0]] + [e for e in events[1:] if e.endswith("Psychosis")]) + "\n")
    assert main(["train", "--data", str(data), "--config", str(workspace / "run.ini"), "--out", str(tmp_path / "m")]) == 4
    assert not (tmp_path / "m").exists()
