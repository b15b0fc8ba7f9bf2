"""Forward wrappers at the [0, 1] image boundary and the training objectives."""

from __future__ import annotations

import enum
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .networks import PatchDiscriminator, UNetGenerator


class Mode(enum.Enum):
    TRAIN = "train"
    EVAL_STOCHASTIC = "eval-stochastic"
    EVAL_DETERMINISTIC = "eval-deterministic"


@dataclass(frozen=True)
class LossConfig:
    lam: float = 100.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")


def to_model_range(x: torch.Tensor) -> torch.Tensor:
    return x * 2.0 - 1.0


def from_model_range(y: torch.Tensor) -> torch.Tensor:
    return (y + 1.0) * 0.5


def nhwc_to_nchw(batch) -> torch.Tensor:
    if isinstance(batch, np.ndarray):
        batch = torch.from_numpy(np.ascontiguousarray(batch))
    return batch.permute(0, 3, 1, 2).contiguous()


def nchw_to_nhwc(t: torch.Tensor) -> np.ndarray:
    return t.detach().permute(0, 2, 3, 1).contiguous().cpu().numpy()


def _check_input(net, x: torch.Tensor, channels: int):
    res = net.spec.resolution
    if x.ndim != 4 or x.shape[1] != channels or x.shape[2] != res or x.shape[3] != res:
        raise ValueError(
            f"expected input of shape (N, {channels}, {res}, {res}), got {tuple(x.shape)}"
        )


@contextmanager
def mode_of(G: UNetGenerator, mode: Mode):
    """Temporarily put ``G`` into one of the three inference/training modes."""
    mode = Mode(mode)
    was_training = G.training
    G.train(mode is Mode.TRAIN)
    G.set_dropout(force=mode is Mode.EVAL_STOCHASTIC)
    try:
        yield G
    finally:
        G.train(was_training)
        G.set_dropout(force=False)


def generator_forward(G: UNetGenerator, stacks: torch.Tensor, mode: Mode = Mode.EVAL_DETERMINISTIC) -> torch.Tensor:
    """Map a (N, 4, H, W) stack batch in [0, 1] to (N, 3, H, W) output in [0, 1]."""
    _check_input(G, stacks, G.spec.input_channels)
    with mode_of(G, mode):
        if Mode(mode) is Mode.TRAIN:
            y = G(to_model_range(stacks))
        else:
            with torch.no_grad():
                y = G(to_model_range(stacks))
    return from_model_range(y)


def discriminator_forward(D: PatchDiscriminator, stacks: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
    """Raw patch scores for ``candidate`` conditioned on the 4-channel ``stacks``."""
    if stacks.shape[0] != candidate.shape[0] or stacks.shape[2:] != candidate.shape[2:]:
        raise ValueError(f"condition {tuple(stacks.shape)} and candidate {tuple(candidate.shape)} disagree")
    x = torch.cat([to_model_range(stacks), to_model_range(candidate)], dim=1)
    _check_input(D, x, D.spec.input_channels)
    return D(x)


def adversarial_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor):
    """Binary cross-entropy on logits.

    Returns ``(d_loss, g_adv)`` with d_loss = mean BCE(real, 1) + mean BCE(fake, 0)
    and g_adv = mean BCE(fake, 1). softplus keeps large logits finite.
    """
    return discriminator_loss(real_scores, fake_scores), generator_adversarial_loss(fake_scores)


def discriminator_loss(real_scores, fake_scores):
    return F.softplus(-real_scores).mean() + F.softplus(fake_scores).mean()


def generator_adversarial_loss(fake_scores):
    return F.softplus(-fake_scores).mean()


def l1_rgb(output: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over batch, pixels and the first three channels.

    Tensors are NCHW; any channel past the third is ignored on both sides.
    """
    if output.shape[0] != target.shape[0] or output.shape[2:] != target.shape[2:]:
        raise ValueError(f"shape mismatch: {tuple(output.shape)} vs {tuple(target.shape)}")
    if output.shape[1] < 3 or target.shape[1] < 3:
        raise ValueError("l1_rgb needs at least three channels")
    return (target[:, :3] - output[:, :3]).abs().mean()


def total_generator_loss(g_adv, l1, cfg: LossConfig = LossConfig()):
    return g_adv + cfg.lam * l1
