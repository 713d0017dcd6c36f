"""Swap the backbone (ERT, RF, LR) inside the framework and compare per-patient results.

    python3 scripts/backbone_comparison.py --out reports/backbones
"""
from __future__ import annotations

import argparse
import logging

from bpsd.evaluation import evaluate_two_stage, write_reports
from bpsd.framework import FrameworkConfig
from bpsd.pipeline import prepare, train_all
from bpsd.synthgen import GeneratorConfig, generate_cohort


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--patients", type=int, default=30)
    ap.add_argument("--days", type=int, default=21)
    ap.add_argument("--out", default="reports/backbones")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    data = prepare(generate_cohort(GeneratorConfig(n_patients=args.patients, days=args.days, seed=args.seed)), args.seed)
    results = {}
    for backbone in ("ERT", "RF", "LR"):
        models = train_all(data, FrameworkConfig(backbone=backbone, seed=args.seed))
        results[backbone] = evaluate_two_stage(models.predictor, data.test, models.baseline, models.skipped)
        print(f"{backbone}: 4-class AUC {results[backbone].aggregates['4class']['auc'].fmt()}", flush=True)
    write_reports(args.out, results["ERT"], backbones=results)


if __name__ == "__main__":
    main()
