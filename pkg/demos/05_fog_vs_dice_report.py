#!/usr/bin/env python3
"""Lesion-wise F1 comparison: Dice alone vs Dice + gradient loss.

For a batch of seeded phantoms, each perturbed into an imperfect starting map
(30% of lesions dropped, two spurious blobs, blur, noise), run a tightly
budgeted direct optimization against the clean mask from that starting point,
once with plain Dice and once with Dice + the first-order gradient loss, and
compare the final lesion-wise F1 at threshold 0.5.

The budget is deliberately truncated (plain gradient descent, few steps): with
enough steps every loss drives the map to a perfect fit and the comparison
says nothing. Within the budget, the gradient term concentrates its pull on
lesion edges, which mostly shows up as faster suppression of spurious
components (higher lesion-wise precision).

This is a qualitative report, not a gate: the summary states the means and the
per-phantom wins; nothing here asserts that one loss must win.

Usage:
    python demos/05_fog_vs_dice_report.py [--n 20] [--steps 40] [--lr 400]
                                          [--out-csv report.csv] [--json]
"""

import argparse
import csv
import json
import sys

import numpy as np
from scipy.special import logit

from geoseg import (
    CompositeLoss,
    GridSpec,
    LossTerm,
    OptimConfig,
    PerturbSpec,
    PhantomSpec,
    binarize,
    dice_spec,
    fog_spec,
    generate_phantom,
    lesion_metrics,
    optimize_map,
    perturb,
)

DICE_ONLY = CompositeLoss((LossTerm(dice_spec()),))
DICE_PLUS_FOG = CompositeLoss((LossTerm(dice_spec()), LossTerm(fog_spec("full"), 1.0)))


def run_case(seed: int, loss: CompositeLoss, steps: int, lr: float):
    grid = GridSpec((24, 24, 24))
    gt = generate_phantom(
        PhantomSpec(seed=seed, grid=grid, n_lesions=3, radius_range_mm=(2.0, 3.5))
    )
    start = perturb(
        gt,
        PerturbSpec(
            seed=seed + 1000,
            drop_fraction=0.3,
            spurious_count=2,
            blur_radius_mm=1.5,
            noise_std=0.1,
        ),
    )
    theta0 = logit(np.clip(start.data, 1e-4, 1.0 - 1e-4))
    cfg = OptimConfig(
        loss=loss, steps=steps, base_lr=lr, optimizer="gd", record_every=steps
    )
    traj = optimize_map(gt, cfg, init_logits=theta0)
    return lesion_metrics(binarize(traj.final_map, 0.5), gt)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20, help="number of seeded phantoms")
    ap.add_argument("--steps", type=int, default=40)
    ap.add_argument("--lr", type=float, default=400.0)
    ap.add_argument("--out-csv", default=None, help="write per-phantom rows here")
    ap.add_argument("--json", action="store_true", help="print the summary as JSON only")
    args = ap.parse_args(argv)

    rows = []
    for seed in range(args.n):
        md = run_case(seed, DICE_ONLY, args.steps, args.lr)
        mf = run_case(seed, DICE_PLUS_FOG, args.steps, args.lr)
        rows.append((seed, md, mf))
        if not args.json:
            print(
                f"phantom {seed:2d}: dice LF1={md.lf1:.3f} (LTPR {md.ltpr:.2f}, LPPV {md.lppv:.2f})"
                f" | dice+fog LF1={mf.lf1:.3f} (LTPR {mf.ltpr:.2f}, LPPV {mf.lppv:.2f})"
            )

    lf1_dice = [md.lf1 for _, md, _ in rows]
    lf1_fog = [mf.lf1 for _, _, mf in rows]
    summary = {
        "n_phantoms": args.n,
        "steps": args.steps,
        "lr": args.lr,
        "mean_lf1_dice": float(np.mean(lf1_dice)),
        "mean_lf1_dice_fog": float(np.mean(lf1_fog)),
        "mean_lppv_dice": float(np.mean([md.lppv for _, md, _ in rows])),
        "mean_lppv_dice_fog": float(np.mean([mf.lppv for _, _, mf in rows])),
        "mean_ltpr_dice": float(np.mean([md.ltpr for _, md, _ in rows])),
        "mean_ltpr_dice_fog": float(np.mean([mf.ltpr for _, _, mf in rows])),
        "fog_wins": int(sum(f > d for d, f in zip(lf1_dice, lf1_fog))),
        "ties": int(sum(f == d for d, f in zip(lf1_dice, lf1_fog))),
        "dice_wins": int(sum(f < d for d, f in zip(lf1_dice, lf1_fog))),
    }

    if args.out_csv:
        with open(args.out_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "lf1_dice", "lf1_dice_fog", "lppv_dice", "lppv_dice_fog",
                        "ltpr_dice", "ltpr_dice_fog"])
            for seed, md, mf in rows:
                w.writerow([seed, md.lf1, mf.lf1, md.lppv, mf.lppv, md.ltpr, mf.ltpr])

    if args.json:
        print(json.dumps(summary))
    else:
        print()
        print(f"mean L-F1  dice:      {summary['mean_lf1_dice']:.4f}")
        print(f"mean L-F1  dice+fog:  {summary['mean_lf1_dice_fog']:.4f}")
        print(f"wins/ties/losses for dice+fog: {summary['fog_wins']}/{summary['ties']}/{summary['dice_wins']}")
        better = summary["mean_lf1_dice_fog"] >= summary["mean_lf1_dice"]
        print(f"dice+fog mean L-F1 >= dice alone: {better}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
