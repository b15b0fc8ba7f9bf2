"""Procedural smoke: fractal Perlin masks composited with the scattering model.

Randomness comes from numpy's PCG64 bit generator, whose stream is fixed
across platforms, so a seed fully determines a mask.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from .imagecore import ImagePlane, ImageRgb, ShapeMismatchError

DEFAULT_LIGHT = (0.92, 0.92, 0.92)
LIGHT_JITTER = (0.85, 1.0)


class IntensityTier(enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def range(self) -> tuple[float, float]:
        return TIER_RANGES[self]

    @classmethod
    def parse(cls, name: str) -> "IntensityTier":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown tier {name!r}; expected low, medium or high") from None


TIER_RANGES = {
    IntensityTier.LOW: (0.40, 0.55),
    IntensityTier.MEDIUM: (0.60, 0.75),
    IntensityTier.HIGH: (0.77, 0.92),
}


@dataclass(frozen=True)
class SmokeParams:
    intensity: float
    atmospheric_light: tuple[float, float, float] = DEFAULT_LIGHT
    seed: int = 0
    octaves: int = 4
    persistence: float = 0.5
    base_frequency: float = 4.0

    def __post_init__(self):
        if not 0.0 < self.intensity <= 1.0:
            raise ValueError(f"intensity must lie in (0, 1], got {self.intensity}")
        light = tuple(float(v) for v in self.atmospheric_light)
        if len(light) != 3 or not all(0.0 <= v <= 1.0 for v in light):
            raise ValueError(f"atmospheric light must be an RGB triple in [0, 1], got {light}")
        object.__setattr__(self, "atmospheric_light", light)
        if self.octaves < 1:
            raise ValueError("octaves must be >= 1")
        if not 0.0 < self.persistence < 1.0:
            raise ValueError("persistence must lie in (0, 1)")
        if not self.base_frequency > 0:
            raise ValueError("base_frequency must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["atmospheric_light"] = list(self.atmospheric_light)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SmokeParams":
        d = dict(d)
        d["atmospheric_light"] = tuple(d["atmospheric_light"])
        return cls(**d)


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def perlin_octave(height: int, width: int, freq: float, rng: np.random.Generator) -> np.ndarray:
    """One octave of 2-D gradient noise with ``freq`` cells across the width."""
    ys = (np.arange(height) + 0.5) / width * freq + rng.random()
    xs = (np.arange(width) + 0.5) / width * freq + rng.random()
    ny = int(np.floor(ys[-1])) + 2
    nx = int(np.floor(xs[-1])) + 2
    angles = rng.random((ny, nx)) * (2.0 * np.pi)
    gy, gx = np.sin(angles), np.cos(angles)

    y0 = np.floor(ys).astype(np.int64)[:, None]
    x0 = np.floor(xs).astype(np.int64)[None, :]
    fy = (ys[:, None] - y0)
    fx = (xs[None, :] - x0)

    def corner(dy, dx):
        return gy[y0 + dy, x0 + dx] * (fy - dy) + gx[y0 + dy, x0 + dx] * (fx - dx)

    u, v = _fade(fx), _fade(fy)
    top = corner(0, 0) + u * (corner(0, 1) - corner(0, 0))
    bot = corner(1, 0) + u * (corner(1, 1) - corner(1, 0))
    return top + v * (bot - top)


def fractal_noise(height: int, width: int, params: SmokeParams) -> np.ndarray:
    rng = _rng(params.seed, 0)
    total = np.zeros((height, width))
    amp = 1.0
    freq = params.base_frequency
    for _ in range(params.octaves):
        total += amp * perlin_octave(height, width, freq, rng)
        amp *= params.persistence
        freq *= 2.0
    return total


def perlin_mask(height: int, width: int, params: SmokeParams) -> ImagePlane:
    """Octave-summed Perlin noise rescaled to span exactly [0, 1]."""
    if height < 1 or width < 1:
        raise ValueError("mask dimensions must be >= 1")
    noise = fractal_noise(height, width, params)
    lo, hi = noise.min(), noise.max()
    if hi - lo <= 0:
        return ImagePlane(np.zeros((height, width)))
    return ImagePlane((noise - lo) / (hi - lo))


def transmission(m: ImagePlane, intensity: float) -> ImagePlane:
    if not 0.0 < intensity <= 1.0:
        raise ValueError(f"intensity must lie in (0, 1], got {intensity}")
    return ImagePlane(intensity * (1.0 - m.data.astype(np.float64)))


def composite(J: ImageRgb, t: ImagePlane, light) -> ImageRgb:
    """Blend the clear image toward the atmospheric light by 1 - t."""
    if J.shape != t.shape:
        raise ShapeMismatchError(f"image {J.shape} and transmission {t.shape} differ in shape")
    A = np.asarray(light, dtype=np.float64).reshape(1, 1, 3)
    tt = t.data.astype(np.float64)[:, :, None]
    out = J.data.astype(np.float64) * tt + (1.0 - tt) * A
    return ImageRgb(np.clip(out, 0.0, 1.0))


def decomposite(I: ImageRgb, t: ImagePlane, light) -> np.ndarray:
    """Algebraic inverse of :func:`composite`; undefined where t == 0."""
    A = np.asarray(light, dtype=np.float64).reshape(1, 1, 3)
    tt = t.data.astype(np.float64)[:, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        return (I.data.astype(np.float64) - (1.0 - tt) * A) / tt


def sample_intensity(tier: IntensityTier, seed: int) -> float:
    lo, hi = tier.range
    return float(_rng(seed, 1).uniform(lo, hi))


def sample_light(seed: int, jitter: bool = False) -> tuple[float, float, float]:
    if not jitter:
        return DEFAULT_LIGHT
    lo, hi = LIGHT_JITTER
    return tuple(float(v) for v in _rng(seed, 2).uniform(lo, hi, size=3))


@dataclass(frozen=True)
class SmokeConfig:
    """Mask-shape settings shared by every sample in a run."""

    octaves: int = 4
    persistence: float = 0.5
    base_frequency: float = 4.0
    light: tuple[float, float, float] = field(default=DEFAULT_LIGHT)
    jitter_light: bool = False


def sample_params(tier: IntensityTier, seed: int, cfg: SmokeConfig = SmokeConfig()) -> SmokeParams:
    light = sample_light(seed, True) if cfg.jitter_light else tuple(cfg.light)
    return SmokeParams(
        intensity=sample_intensity(tier, seed),
        atmospheric_light=light,
        seed=seed,
        octaves=cfg.octaves,
        persistence=cfg.persistence,
        base_frequency=cfg.base_frequency,
    )


def apply_smoke(J: ImageRgb, params: SmokeParams) -> ImageRgb:
    """Recreate the smoked image for a full parameter record."""
    m = perlin_mask(J.height, J.width, params)
    return composite(J, transmission(m, params.intensity), params.atmospheric_light)


def smoke_pair(
    J: ImageRgb, tier: IntensityTier, seed: int, cfg: SmokeConfig = SmokeConfig()
) -> tuple[ImageRgb, SmokeParams]:
    params = sample_params(tier, seed, cfg)
    return apply_smoke(J, params), params
