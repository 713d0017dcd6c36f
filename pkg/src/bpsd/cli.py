"""Command-line entry point: generate, train, evaluate, ablate, predict.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 degenerate training data.
Errors go to stderr as one line: ``error code=<n> kind=<name> msg=<text>``.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import __version__
from .cohort import BpsdClass, DataError, load_cohort, write_cohort
from .config import ConfigError, config_to_dict, framework_config, generator_config, read_config_file
from .evaluation import NoEvaluablePatients, evaluate_members, evaluate_two_stage, run_ablation, write_reports
from .evaluation.harness import write_ablation
from .featurize import read_instances, write_instances
from .framework import DegenerateTraining
from .persistence import BundleError, data_hash, load_bundle, save_bundle
from .pipeline import PreparedData, cohort_instances, prepare, train_all
from .synthgen import GeneratorConfig, InfeasibleConfig, generate_cohort

log = logging.getLogger("bpsd")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DEGENERATE = 0, 2, 3, 4
COHORT_FILES = ("signals.csv", "events.csv", "demographics.csv")


@contextlib.contextmanager
def staged_dir(out: str | Path) -> Iterator[Path]:
    """Yield a temporary sibling of ``out``; it replaces ``out`` only on success."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
        if out.exists():
            shutil.rmtree(out)
        tmp.rename(out)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


# --- data sources ----------------------------------------------------------------------


def _generator(args) -> GeneratorConfig:
    sections = read_config_file(args.config)
    overrides = {
        "seed": args.seed,
        "patients": args.patients,
        "days": args.days,
        "wear_days_per_week": getattr(args, "wear_days_per_week", None),
        "drift_scale": getattr(args, "drift_scale", None),
    }
    return generator_config(sections, overrides)


def _framework(args):
    sections = read_config_file(args.config)
    overrides = {"backbone": args.backbone, "ensemble": args.ensemble, "threshold": args.threshold, "seed": args.seed}
    if getattr(args, "no_tune", False):
        overrides["tune"] = False
    return framework_config(sections, overrides)


def load_cohort_dir(path: str | Path):
    root = Path(path)
    missing = [f for f in COHORT_FILES if not (root / f).is_file()]
    if missing:
        raise DataError(f"{root}: missing {', '.join(missing)}")
    return load_cohort(*(root / f for f in COHORT_FILES))


def resolve_data(source: dict, split_seed: int) -> PreparedData:
    """Rebuild instances and splits from a recorded data source."""
    if source["kind"] == "files":
        cohort = load_cohort_dir(source["path"])
    else:
        cfg = dict(source["generator"])
        for key in ("wear_window", "class_mix", "prodromal_lead"):
            cfg[key] = tuple(cfg[key])
        cohort = generate_cohort(GeneratorConfig(**cfg))
    return prepare(cohort, split_seed)


# --- commands ----------------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = _generator(args)
    log.info("generating %d patients x %d days, seed %d", cfg.n_patients, cfg.days, cfg.seed)
    cohort = generate_cohort(cfg)
    with staged_dir(args.out) as tmp:
        write_cohort(cohort, tmp)
        if args.instances:
            write_instances(cohort_instances(cohort), tmp / "instances.csv", cfg.utc_offset_minutes)
        (tmp / "generator.json").write_text(json.dumps(config_to_dict(cfg), sort_keys=True, indent=1) + "\n")
    print(json.dumps({"out": str(args.out), "patients": len(cohort), "seed": cfg.seed}))
    return EXIT_OK


def cmd_train(args) -> int:
    config = _framework(args)
    if args.data:
        if args.patients is not None or args.days is not None:
            raise ConfigError("give either --data or generator settings (--patients/--days), not both")
        source = {"kind": "files", "path": str(args.data)}
    else:
        gen = _generator(args)
        source = {"kind": "generator", "generator": config_to_dict(gen)}
    log.info("resolved seed %d, backbone %s, ensemble %s", config.seed, config.backbone, ",".join(config.active))
    data = resolve_data(source, config.seed)
    models = train_all(data, config)
    extra = {"data_source": source, "split_seed": config.seed, "excluded_patients": dict(sorted(data.plan.excluded.items()))}
    manifest = save_bundle(args.out, models, config, data_hash(data.train), extra)
    print(json.dumps({"out": str(args.out), "personalized": len(manifest["personalized"]), "skipped": len(manifest["skipped"])}))
    return EXIT_OK


def _bundle_and_data(args):
    models, manifest = load_bundle(args.model)
    source = {"kind": "files", "path": str(args.data)} if getattr(args, "data", None) else manifest["data_source"]
    data = resolve_data(source, manifest["split_seed"])
    if source == manifest["data_source"] and data_hash(data.train) != manifest["data_hash"]:
        raise DataError("training data no longer matches the bundle's data_hash")
    return models, manifest, data


def cmd_evaluate(args) -> int:
    models, _, data = _bundle_and_data(args)
    predictor = models.predictor
    if args.ensemble:
        predictor = predictor.with_active(tuple(m.strip() for m in args.ensemble.split(",")))
    if args.threshold is not None:
        predictor = predictor.with_threshold(args.threshold)
    ev = evaluate_two_stage(predictor, data.test, models.baseline, models.skipped)
    ablation = run_ablation(predictor, data.test)
    members = evaluate_members(predictor, data.test)
    with staged_dir(args.out) as tmp:
        write_reports(tmp, ev, ablation, members)
    base = ev.baseline.auc if ev.baseline else None
    print(json.dumps({"out": str(args.out), "two_stage_auc": ev.headline_auc(), "baseline_auc": base}))
    return EXIT_OK


def cmd_ablate(args) -> int:
    models, _, data = _bundle_and_data(args)
    rows = run_ablation(models.predictor, data.test)
    with staged_dir(args.out) as tmp:
        write_ablation(tmp / "ablation.csv", rows)
    print(json.dumps({r.label: r.metrics["auc"].mean for r in rows}))
    return EXIT_OK


def cmd_predict(args) -> int:
    models, manifest = load_bundle(args.model)
    instances = read_instances(args.instance)
    if not 0 <= args.index < len(instances):
        raise DataError(f"{args.instance}: row index {args.index} out of range (0..{len(instances) - 1})")
    row = instances[np.array([args.index])]
    pid = row.patient_id[0]
    pred = models.predictor
    if args.threshold is not None:
        pred = pred.with_threshold(args.threshold)
    if pid not in pred.personalized:
        raise DataError(f"no personalized model for patient {pid!r}")
    out = pred.predict_all(row)
    print(
        json.dumps(
            {
                "patient_id": pid,
                "occurrence_prob": float(out["occurrence"][0]),
                "ensemble_probs": {BpsdClass(c + 1).name: float(p) for c, p in enumerate(out["ensemble"][0])},
                "final_class": BpsdClass(int(out["label"][0])).name,
                "model_version": manifest["model_version"],
            },
            sort_keys=False,
        )
    )
    return EXIT_OK


# --- parser --------------------------------------------------------------------------------


def _add_generator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="generator and framework seed (default 42)")
    p.add_argument("--patients", type=int, help="number of synthetic patients")
    p.add_argument("--days", type=int, help="days per patient")
    p.add_argument("--wear-days-per-week", type=int, dest="wear_days_per_week")
    p.add_argument("--drift-scale", type=float, dest="drift_scale")


def _add_framework_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backbone", choices=("ERT", "RF", "LR"))
    p.add_argument("--ensemble", help="comma-separated active set, e.g. rdg,irg,tcn")
    p.add_argument("--threshold", type=float, help="personalized occurrence threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bpsd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic cohort as CSV files")
    _add_generator_flags(p)
    p.add_argument("--config")
    p.add_argument("--instances", action="store_true", help="also write windowed instances.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train personalized models, the generalized suite and the baseline")
    p.add_argument("--data", help="directory with signals.csv, events.csv, demographics.csv")
    _add_generator_flags(p)
    _add_framework_flags(p)
    p.add_argument("--no-tune", action="store_true", dest="no_tune", help="skip cross-validated tuning")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (
        ("evaluate", cmd_evaluate, "write evaluation reports for a bundle"),
        ("ablate", cmd_ablate, "write ablation.csv for a bundle"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--model", required=True)
        p.add_argument("--data", help="override the bundle's recorded data source")
        if name == "evaluate":
            p.add_argument("--ensemble")
            p.add_argument("--threshold", type=float)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("predict", help="predict one instance row as JSON")
    p.add_argument("--model", required=True)
    p.add_argument("--instance", required=True, help="instances CSV")
    p.add_argument("--index", type=int, default=0, help="row of the CSV to predict")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_predict)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    msg = " ".join(str(exc).split())
    print(f"error code={code} kind={type(exc).__name__} msg={msg}", file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InfeasibleConfig) as e:
        return _fail(EXIT_CONFIG, e)
    except (DataError, BundleError, FileNotFoundError, KeyError) as e:
        return _fail(EXIT_DATA, e)
    except (DegenerateTraining, NoEvaluablePatients) as e:
        return _fail(EXIT_DEGENERATE, e)
    except ValueError as e:
        return _fail(EXIT_CONFIG, e)


if __name__ == "__main__":
    sys.exit(main())
