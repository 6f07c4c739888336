#!/usr/bin/env python3
"""Sweep one TrainConfig field over a list of values and record final clustering metrics.

    python3 scripts/sweep.py tau_d 0.0 0.1 0.3 --out results/sweep_tau_d.csv
    python3 scripts/sweep.py tau_s 0.2 0.5 1.0 --pretrain-epochs 30 --finetune-epochs 10
"""

from __future__ import annotations

import argparse
import csv
import logging
from dataclasses import fields
from pathlib import Path

from distilmvc.config import TrainConfig
from distilmvc.dataset import SyntheticSpec, normalize_minmax, synth_generate
from distilmvc.trainer import evaluate_params, finetune, pretrain

SWEEPABLE = {f.name: type(getattr(TrainConfig(), f.name)) for f in fields(TrainConfig)}


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("field", choices=sorted(k for k, t in SWEEPABLE.items() if t in (int, float, str)))
    p.add_argument("values", nargs="+")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pretrain-epochs", type=int, default=50)
    p.add_argument("--finetune-epochs", type=int, default=20)
    p.add_argument("--out", type=Path)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    data = normalize_minmax(synth_generate(SyntheticSpec()))
    base = TrainConfig(pretrain_epochs=args.pretrain_epochs, finetune_epochs=args.finetune_epochs, seed=args.seed)
    cast = SWEEPABLE[args.field]
    rows = []
    for raw in args.values:
        cfg = base.replace(**{args.field: cast(raw)})
        pre, _ = pretrain(data, cfg, track_metrics=False)
        fine, _ = finetune(data, pre, cfg, track_metrics=False)
        before, after = evaluate_params(data, pre), evaluate_params(data, fine)
        rows.append([raw, before.acc, after.acc, after.nmi, after.pur])
        logging.info("%s=%s: ACC %.4f -> %.4f", args.field, raw, before.acc, after.acc)

    out = args.out or Path(f"results/sweep_{args.field}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([args.field, "acc_pretrain", "acc", "nmi", "pur"])
        w.writerows(rows)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
