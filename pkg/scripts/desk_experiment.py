"""Desk-scale end-to-end run: frames -> dataset -> training -> evaluation.

Defaults match the acceptance configuration (50 train / 16 test pairs at 64x64,
width scale 1/4, batch 8, 200 steps).
"""

import argparse
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from desmoke.dataset import generate, make_clear_frames
from desmoke.metrics import evaluate
from desmoke.trainer import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--train", type=int, default=50)
    ap.add_argument("--test", type=int, default=16)
    ap.add_argument("--resolution", type=int, default=64)
    ap.add_argument("--scale", type=Fraction, default=Fraction(1, 4))
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--batch-size", type=int, default=8)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    out = Path(args.out)
    make_clear_frames(out / "frames", args.train + args.test, args.resolution, seed=1)
    manifest = generate(out / "frames", out / "data", args.train, args.test, seed=2024, resolution=args.resolution)
    cfg = TrainConfig(batch_size=args.batch_size, max_steps=args.steps, width_scale=args.scale,
                      seed=args.seed, log_every=25)
    res = train(manifest, cfg, out / "run")

    summary = {}
    for split in ("train", "test"):
        report = evaluate(manifest, res.checkpoint, split=split)
        report.write(out / f"eval_{split}")
        agg = report.aggregates["all"]
        summary[split] = {k: agg[k]["mean"] for k in ("psnr", "baseline_psnr", "ssim", "baseline_ssim")}
    losses = res.log.losses()
    summary["loss_first10_median"] = float(np.median(losses[:10]))
    summary["loss_last10_median"] = float(np.median(losses[-10:]))
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
