"""Command-line entry point: ``desmoke <subcommand> ...``.

Errors go to stderr prefixed with ``desmoke: error:``. Exit status is 0 on
success, 2 for usage errors and missing inputs, 1 for anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__

DATA_ENV = "DESMOKE_DATA_DIR"
PREFIX = "desmoke: error:"


class UsageError(Exception):
    pass


class MissingInput(Exception):
    pass


def _existing(path: str | None, what: str = "input") -> Path:
    if path is None:
        raise UsageError(f"no {what} given")
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"{what} not found: {p}")
    return p


def _factors(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return vals


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def _default_manifest() -> str | None:
    base = os.environ.get(DATA_ENV)
    return str(Path(base) / "manifest.jsonl") if base else None


def _pre_params(args, fallback=None):
    from .dcprior import DarkChannelParams, GuidedFilterParams

    dcp0, gfp0 = fallback or (DarkChannelParams(), GuidedFilterParams())
    dcp = DarkChannelParams(args.kernel if args.kernel is not None else dcp0.kernel_size)
    gfp = GuidedFilterParams(
        args.radius if args.radius is not None else gfp0.radius,
        args.eps if args.eps is not None else gfp0.epsilon,
    )
    return dcp, gfp


def _add_pre_flags(p):
    p.add_argument("--kernel", type=int, default=None, help="dark-channel window side (odd)")
    p.add_argument("--radius", type=int, default=None, help="guided-filter radius")
    p.add_argument("--eps", type=float, default=None, help="guided-filter regularizer")


def _load_model(args):
    from .pipeline import Desmoker, preprocess_from_state
    from .model import load_checkpoint

    ckpt = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    dcp, gfp = _pre_params(args, preprocess_from_state(ckpt.state))
    return Desmoker(ckpt.G, dcp, gfp)


# --- subcommands --------------------------------------------------------------

def cmd_make_frames(args) -> int:
    from .dataset import make_clear_frames

    paths = make_clear_frames(args.out, args.count, args.resolution, args.seed, args.groups)
    print(f"wrote {len(paths)} frames to {args.out}")
    return 0


def cmd_make_dataset(args) -> int:
    from .dataset import generate
    from .smokesim import SmokeConfig

    out = args.out or os.environ.get(DATA_ENV)
    if out is None:
        raise UsageError(f"--out not given and {DATA_ENV} is unset")
    m = generate(
        _existing(args.inp, "clear frame directory"),
        out,
        args.train,
        args.test,
        seed=args.seed,
        tier_mix=args.tier_mix,
        resolution=args.resolution,
        smoke_cfg=SmokeConfig(jitter_light=args.jitter_light),
    )
    print(f"wrote {len(m.records)} pairs to {out}")
    return 0


def cmd_synth(args) -> int:
    from .imagecore import load_image, save_image
    from .smokesim import IntensityTier, SmokeConfig, perlin_mask, smoke_pair

    src = _existing(args.inp)
    tier = IntensityTier.parse(args.tier)
    cfg = SmokeConfig(octaves=args.octaves, persistence=args.persistence, base_frequency=args.frequency,
                      jitter_light=args.jitter_light)
    if src.is_dir():
        inputs = sorted(src.glob("*.png"))
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        jobs = [(p, out_dir / p.name, args.seed + i) for i, p in enumerate(inputs)]
    else:
        out = Path(args.out) if args.out else src.with_name(src.stem + "_smoked.png")
        jobs = [(src, out, args.seed)]
    for path, out, seed in jobs:
        J = load_image(path)
        I, params = smoke_pair(J, tier, seed, cfg)
        save_image(I, out)
        side = {"input": str(path), "tier": tier.value, "smoke": params.to_dict()}
        out.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
        if args.emit_mask:
            save_image(perlin_mask(J.height, J.width, params), out.with_name(out.stem + "_mask.png"))
    print(f"wrote {len(jobs)} smoked image(s)")
    return 0


def cmd_darkchannel(args) -> int:
    from .dcprior import dark_channel
    from .imagecore import load_image, save_image

    img = load_image(_existing(args.inp))
    dcp, _ = _pre_params(args)
    save_image(dark_channel(img, dcp), args.out)
    return 0


def cmd_refine(args) -> int:
    from .dcprior import refined_dark_channel
    from .imagecore import load_image, save_image

    img = load_image(_existing(args.inp))
    dcp, gfp = _pre_params(args)
    save_image(refined_dark_channel(img, dcp, gfp), args.out)
    return 0


def cmd_train(args) -> int:
    from .dataset import load_manifest
    from .model import LossConfig
    from .trainer import TrainConfig, train

    manifest = load_manifest(_existing(args.manifest, "manifest"))
    if args.resolution is not None and args.resolution != manifest.resolution:
        raise UsageError(f"--resolution {args.resolution} differs from dataset resolution {manifest.resolution}")
    dcp, gfp = _pre_params(args)
    cfg = TrainConfig(
        batch_size=args.batch_size,
        learning_rate=args.lr,
        epochs=args.epochs,
        max_steps=args.steps,
        checkpoint_every=args.checkpoint_every,
        checkpoint_every_steps=args.checkpoint_every_steps,
        seed=args.seed,
        loss=LossConfig(args.lam),
        width_scale=args.scale,
        depth=args.depth,
        kernel=dcp.kernel_size,
        radius=gfp.radius,
        eps=gfp.epsilon,
        log_every=args.log_every,
    )
    resume = _existing(args.checkpoint, "checkpoint") if args.checkpoint else None
    res = train(manifest, cfg, args.out, resume_from=resume)
    print(f"final checkpoint: {res.checkpoint}")
    return 0


def cmd_infer(args) -> int:
    from .imagecore import load_image, save_image

    model = _load_model(args)
    src = _existing(args.inp)
    if src.is_dir():
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for p in sorted(src.glob("*.png")):
            save_image(model.restore(load_image(p)), out_dir / p.name)
    else:
        save_image(model.restore(load_image(src)), args.out)
    return 0


def cmd_eval(args) -> int:
    from .dataset import load_manifest
    from .metrics import MetricConfig, evaluate

    manifest = load_manifest(_existing(args.manifest, "manifest"))
    if not manifest.split(args.split):
        raise UsageError(f"manifest has no records in the {args.split!r} split")
    cfg = MetricConfig(ssim_mode=args.ssim_mode)
    report = evaluate(manifest, _existing(args.checkpoint, "checkpoint"), cfg, split=args.split)
    paths = report.write(args.out)
    agg = report.aggregates["all"]
    print(
        f"{len(report.rows)} records: psnr mean {agg['psnr']['mean']:.3f} dB "
        f"(baseline {agg['baseline_psnr']['mean']:.3f}), ssim mean {agg['ssim']['mean']:.4f} "
        f"(baseline {agg['baseline_ssim']['mean']:.4f})"
    )
    print(f"report: {paths['rows']}")
    return 0


def cmd_probe_mask(args) -> int:
    from .imagecore import ImageRgb, load_image, save_image
    from .pipeline import scale_guide_thirds, side_by_side

    model = _load_model(args)
    img = load_image(_existing(args.inp))
    stack = model.prepare(img)
    probed = scale_guide_thirds(stack, args.factors)
    out = model.run_stacks([probed])[0]
    guide_rgb = ImageRgb(probed.guide.data[:, :, None].repeat(3, axis=2))
    out_path = Path(args.out)
    save_image(side_by_side([stack.rgb, guide_rgb, out]), out_path)
    save_image(out, out_path.with_name(out_path.stem + "_output.png"))
    side = {"input": str(args.inp), "checkpoint": str(args.checkpoint), "factors": list(args.factors)}
    out_path.with_suffix(".json").write_text(json.dumps(side, indent=2) + "\n")
    print(f"factors {','.join(str(f) for f in args.factors)} -> {out_path}")
    return 0


def cmd_bench(args) -> int:
    from .bench import run_bench
    from .dataset import synthetic_clear_frame
    from .imagecore import load_image

    model = _load_model(args)
    img = load_image(_existing(args.inp)) if args.inp else synthetic_clear_frame(model.resolution, 0)
    report = run_bench(model, img, args.iterations, args.warmup)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
    print(report.to_json() if args.json else report.text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="desmoke", description="Dark-channel-guided smoke removal.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-frames", help="write procedural clear test frames")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--groups", type=int, default=0, help="spread frames over N video subdirectories")
    p.set_defaults(func=cmd_make_frames)

    p = sub.add_parser("make-dataset", help="build a paired clear/smoked dataset")
    p.add_argument("--in", dest="inp", required=True, help="directory of clear PNG frames")
    p.add_argument("--out", default=None, help=f"output directory (default ${DATA_ENV})")
    p.add_argument("--train", type=int, required=True)
    p.add_argument("--test", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tier-mix", type=_factors, default=(1 / 3, 1 / 3, 1 / 3), help="low,medium,high proportions")
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--jitter-light", action="store_true")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("synth", help="add synthetic smoke to an image or directory")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--tier", choices=("low", "medium", "high"), default="medium")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--octaves", type=int, default=4)
    p.add_argument("--persistence", type=float, default=0.5)
    p.add_argument("--frequency", type=float, default=4.0)
    p.add_argument("--jitter-light", action="store_true")
    p.add_argument("--emit-mask", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("darkchannel", help="write the dark channel of an image")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_pre_flags(p)
    p.set_defaults(func=cmd_darkchannel)

    p = sub.add_parser("refine", help="write the guided-filter-refined dark channel")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_pre_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("train", help="train generator and discriminator")
    p.add_argument("--manifest", default=_default_manifest())
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=_fraction, default=Fraction(1), help="width scale, e.g. 1/4")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=100.0)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=5, help="epochs")
    p.add_argument("--checkpoint-every-steps", type=int, default=None)
    p.add_argument("--log-every", type=int, default=10)
    _add_pre_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="desmoke an image or directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_pre_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    p.add_argument("--manifest", default=_default_manifest())
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--ssim-mode", default="global", choices=("global", "windowed"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("probe-mask", help="rescale guide thirds and desmoke")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--factors", type=_factors, default=(0.0, 1.0, 2.0))
    _add_pre_flags(p)
    p.set_defaults(func=cmd_probe_mask)

    p = sub.add_parser("bench", help="measure pipeline throughput")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="inp", default=None)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None, help="also write the JSON report here")
    _add_pre_flags(p)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, MissingInput) as exc:
        print(f"{PREFIX} {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"{PREFIX} {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every module error becomes a message
        print(f"{PREFIX} {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
