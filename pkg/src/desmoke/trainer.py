"""Alternating discriminator/generator training with checkpoint and resume.

Everything random during training is keyed on (seed, step): the batch order
of each epoch and the dropout masks of each step. A run resumed from a
checkpoint therefore follows the same trajectory as an uninterrupted one.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .dataset import DatasetManifest, epoch_order, make_batch
from .dcprior import DarkChannelParams, GuidedFilterParams
from .model import (
    Checkpoint,
    DiscriminatorSpec,
    GeneratorSpec,
    LossConfig,
    Mode,
    SpecMismatchError,
    build_discriminator,
    build_generator,
    discriminator_forward,
    generator_forward,
    l1_rgb,
    load_checkpoint,
    nhwc_to_nchw,
    save_checkpoint,
    total_generator_loss,
)
from .model.losses import discriminator_loss, generator_adversarial_loss
from .pipeline import preprocess_state


class TrainingError(RuntimeError):
    pass


class NonFiniteLossError(TrainingError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    epochs: int = 50
    max_steps: int | None = None  # overrides epochs when set
    checkpoint_every: int = 5  # epochs
    checkpoint_every_steps: int | None = None
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    width_scale: Fraction = Fraction(1)
    depth: int | None = None
    disc_downsample: int | None = None  # None: deepest valid, at most 3
    kernel: int = DarkChannelParams().kernel_size
    radius: int = GuidedFilterParams().radius
    eps: float = GuidedFilterParams().epsilon
    log_every: int = 10
    cache_limit: int = 2048  # keep preprocessed pairs in memory up to this many records
    verbose: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        self.width_scale = Fraction(self.width_scale).limit_denominator(1 << 16)

    @property
    def dcp(self) -> DarkChannelParams:
        return DarkChannelParams(self.kernel)

    @property
    def gfp(self) -> GuidedFilterParams:
        return GuidedFilterParams(self.radius, self.eps)

    def generator_spec(self, resolution: int) -> GeneratorSpec:
        return GeneratorSpec(resolution=resolution, width_scale=self.width_scale, depth=self.depth)

    def discriminator_spec(self, resolution: int) -> DiscriminatorSpec:
        if self.disc_downsample is not None:
            return DiscriminatorSpec(resolution=resolution, width_scale=self.width_scale, n_downsample=self.disc_downsample)
        for n in (3, 2, 1):
            try:
                return DiscriminatorSpec(resolution=resolution, width_scale=self.width_scale, n_downsample=n)
            except ValueError:
                continue
        raise ValueError(f"no discriminator fits resolution {resolution}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["width_scale"] = str(self.width_scale)
        d["betas"] = list(self.betas)
        return d


@dataclass
class LogRecord:
    step: int
    epoch: int
    d_loss: float
    g_adv: float
    l1: float
    total_g_loss: float
    wall_time: float


@dataclass
class TrainLog:
    records: list[LogRecord] = field(default_factory=list)

    def losses(self, key: str = "total_g_loss") -> np.ndarray:
        return np.array([getattr(r, key) for r in self.records])

    @classmethod
    def read(cls, path) -> "TrainLog":
        recs = [LogRecord(**json.loads(line)) for line in Path(path).read_text().splitlines() if line.strip()]
        return cls(recs)


def _seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1, np.uint64)[0] & 0x7FFF_FFFF_FFFF_FFFF)


@dataclass
class TrainResult:
    checkpoint: Path
    log: TrainLog
    G: torch.nn.Module
    D: torch.nn.Module


def train(
    manifest: DatasetManifest,
    cfg: TrainConfig,
    out_dir,
    resume_from=None,
    on_step: Callable | None = None,
) -> TrainResult:
    """Train until ``cfg.max_steps`` (or ``cfg.epochs``) steps have been taken in total.

    ``on_step(step, G, D)`` is called after each update with gradients still
    attached, which tests use to inspect gradient flow.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recs = manifest.split("train")
    if not recs:
        raise TrainingError("manifest has no train records")
    g_spec = cfg.generator_spec(manifest.resolution)
    d_spec = cfg.discriminator_spec(manifest.resolution)

    if resume_from is not None:
        ckpt = load_checkpoint(resume_from, expect_generator=g_spec)
        if ckpt.D.spec != d_spec:
            raise SpecMismatchError(f"checkpoint discriminator {ckpt.D.spec} does not match {d_spec}")
        G, D = ckpt.G, ckpt.D
        step = int(ckpt.state.get("step", 0))
    else:
        G = build_generator(g_spec, _seed(cfg.seed, 1))
        D = build_discriminator(d_spec, _seed(cfg.seed, 2))
        step = 0

    opt_g = torch.optim.Adam(G.parameters(), lr=cfg.learning_rate, betas=tuple(cfg.betas))
    opt_d = torch.optim.Adam(D.parameters(), lr=cfg.learning_rate, betas=tuple(cfg.betas))
    if resume_from is not None:
        if ckpt.opt_g is not None:
            opt_g.load_state_dict(ckpt.opt_g)
        if ckpt.opt_d is not None:
            opt_d.load_state_dict(ckpt.opt_d)

    n = len(recs)
    bs = cfg.batch_size
    per_epoch = math.ceil(n / bs)
    total_steps = cfg.max_steps if cfg.max_steps is not None else cfg.epochs * per_epoch
    cache = {} if n <= cfg.cache_limit else None
    dcp, gfp = cfg.dcp, cfg.gfp

    log = TrainLog()
    log_path = out_dir / "train.log"
    mode = "a" if resume_from is not None else "w"
    t_start = time.perf_counter()
    last_ckpt = None

    def snapshot(name: str) -> Path:
        state = {
            "step": step,
            "epoch": step // per_epoch,
            "seed": cfg.seed,
            "train_config": cfg.to_dict(),
            "preprocess": preprocess_state(dcp, gfp),
            "dataset_resolution": manifest.resolution,
        }
        return save_checkpoint(out_dir / name, Checkpoint(G, D, opt_g.state_dict(), opt_d.state_dict(), state))

    with open(log_path, mode) as log_fh:
        while step < total_steps:
            epoch, pos = divmod(step, per_epoch)
            order = epoch_order(n, cfg.seed, epoch)
            chunk = [recs[i] for i in order[pos * bs : (pos + 1) * bs]]
            batch = make_batch(manifest, chunk, dcp, gfp, cache)
            x = nhwc_to_nchw(batch.inputs)
            y = nhwc_to_nchw(batch.targets)
            G.rng.manual_seed(_seed(cfg.seed, 3, step))

            G.train()
            D.train()
            fake = generator_forward(G, x, Mode.TRAIN)

            D.requires_grad_(True)
            opt_d.zero_grad()
            d_loss = discriminator_loss(discriminator_forward(D, x, y), discriminator_forward(D, x, fake.detach()))
            _check_finite(step + 1, d_loss=d_loss)
            d_loss.backward()
            opt_d.step()

            D.requires_grad_(False)
            opt_g.zero_grad()
            g_adv = generator_adversarial_loss(discriminator_forward(D, x, fake))
            l1 = l1_rgb(fake, y)
            g_total = total_generator_loss(g_adv, l1, cfg.loss)
            _check_finite(step + 1, g_adv=g_adv, l1=l1)
            g_total.backward()
            opt_g.step()
            D.requires_grad_(True)

            step += 1
            rec = LogRecord(
                step=step,
                epoch=epoch,
                d_loss=d_loss.item(),
                g_adv=g_adv.item(),
                l1=l1.item(),
                total_g_loss=g_total.item(),
                wall_time=time.perf_counter() - t_start,
            )
            log.records.append(rec)
            log_fh.write(json.dumps(asdict(rec)) + "\n")
            log_fh.flush()
            if on_step is not None:
                on_step(step, G, D)
            if cfg.verbose and (step % cfg.log_every == 0 or step == total_steps):
                print(
                    f"step {step}/{total_steps} epoch {epoch}: d={rec.d_loss:.4f} "
                    f"g_adv={rec.g_adv:.4f} l1={rec.l1:.4f} total={rec.total_g_loss:.4f}",
                    flush=True,
                )
            if step % per_epoch == 0 and cfg.checkpoint_every and (step // per_epoch) % cfg.checkpoint_every == 0:
                last_ckpt = snapshot(f"ckpt_epoch{step // per_epoch:04d}.npz")
            if cfg.checkpoint_every_steps and step % cfg.checkpoint_every_steps == 0:
                last_ckpt = snapshot(f"ckpt_step{step:07d}.npz")

    final = snapshot("final.npz")
    return TrainResult(final or last_ckpt, log, G, D)


def resume(checkpoint, manifest: DatasetManifest, cfg: TrainConfig, out_dir) -> TrainResult:
    if not manifest.split("train"):
        raise TrainingError("cannot resume: manifest has no train records")
    return train(manifest, cfg, out_dir, resume_from=checkpoint)


def _check_finite(step: int, **losses) -> None:
    bad = {k: v.detach().item() for k, v in losses.items() if not torch.isfinite(v).all()}
    if bad:
        raise NonFiniteLossError(f"non-finite loss at step {step}: {bad}")
