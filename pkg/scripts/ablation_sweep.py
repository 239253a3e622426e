#!/usr/bin/env python3
"""Ablation sweep: filter order and rule count on a shared scenario.

Runs the zero-shot LOSO experiment once per (arm, seed) and prints a
seed-averaged table. Arms cover the four filter chains and a small vs
large rule bank, so this reproduces the two qualitative effects of
interest: spatial-only filtering underperforms anything that includes
a temporal stage, and more rules do not hurt.

Fold subsetting (--folds) keeps the sweep affordable; the comparison
stays fair because all arms see identical folds and seeds.
"""

import argparse
import sys
import time
from collections import defaultdict

import numpy as np

from fuzzyssvep.network import ModelConfig
from fuzzyssvep.optim import TrainConfig, loso_run
from fuzzyssvep.signals import StimulusConfig, build_dataset

ORDERS = ["spatial_only", "temporal_only", "spatial_first", "temporal_first"]


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--subjects", type=int, default=6)
    p.add_argument("--folds", type=int, nargs="+", default=None,
                   help="held-out subject ids; default all")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--rules", type=int, nargs="+", default=[3, 10],
                   help="rule counts for the rule-count axis")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--windows-per-epoch", type=int, default=512)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--consequents", choices=["zero_order", "first_order"],
                   default="first_order")
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--data-seed", type=int, default=0)
    return p.parse_args(argv)


def run_arm(ds, order, rules, args, seed):
    mcfg = ModelConfig(
        n_channels=ds.n_channels,
        n_samples=int(round(1.0 * ds.fs)),
        n_classes=len(ds.stimulus.frequencies),
        n_rules=rules,
        hidden=args.hidden,
        consequent_mode=args.consequents,
        filter_order=order,
    )
    tcfg = TrainConfig(
        base_lr=args.lr,
        batch_size=args.batch,
        max_epochs=args.epochs,
        warmup_epochs=min(10, args.epochs // 2),
        windows_per_epoch=args.windows_per_epoch,
        window_seconds=1.0,
        seed=seed,
    )
    results = loso_run(ds, mcfg, tcfg, subjects=args.folds)
    return float(np.mean([r.accuracy for r in results]))


def main(argv=None) -> int:
    args = parse_args(argv)
    stim = StimulusConfig(
        frequencies=(10.0, 11.0, 12.0, 13.0),
        phases=(0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi),
        n_harmonics=3,
        harmonic_amplitudes=(1.0, 0.5, 0.25),
        harmonic_phases=(0.0, 0.0, 0.0),
    )
    ds = build_dataset(
        stim, n_subjects=args.subjects, trials_per_class=7, fs=256.0,
        duration=4.0, noise_snr_db=args.snr_db, n_channels=8,
        seed=args.data_seed,
    )
    folds = args.folds if args.folds is not None else list(range(args.subjects))
    print(f"scenario: {args.subjects} subjects, folds {folds}, "
          f"seeds {args.seeds}, {args.epochs} epochs, {args.consequents}")

    t0 = time.perf_counter()
    table: dict[str, list[float]] = defaultdict(list)

    # Axis 1: filter order at the largest rule count.
    r_big = max(args.rules)
    for order in ORDERS:
        for seed in args.seeds:
            table[f"order:{order}"].append(run_arm(ds, order, r_big, args, seed))
    # Axis 2: rule count on the reference chain.
    for rules in args.rules:
        key = f"rules:{rules}"
        if rules == r_big:
            table[key] = table["order:spatial_first"]
            continue
        for seed in args.seeds:
            table[key].append(run_arm(ds, "spatial_first", rules, args, seed))

    print(f"\n{'arm':<22}  {'mean acc':>8}  per-seed")
    for key, accs in table.items():
        per = " ".join(f"{a:.3f}" for a in accs)
        print(f"{key:<22}  {np.mean(accs):>8.3f}  {per}")

    sp = np.mean(table["order:spatial_only"])
    tp = np.mean(table["order:temporal_only"])
    sf = np.mean(table["order:spatial_first"])
    tf = np.mean(table["order:temporal_first"])
    print(f"\ntemporal_only >= spatial_only: {tp >= sp} ({tp:.3f} vs {sp:.3f})")
    print(f"both dual orders >= spatial_only: {sf >= sp and tf >= sp}")
    r_small = min(args.rules)
    print(f"R={r_big} >= R={r_small}: "
          f"{np.mean(table[f'rules:{r_big}']) >= np.mean(table[f'rules:{r_small}'])}")
    print(f"({(time.perf_counter() - t0)/60:.1f} min)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
