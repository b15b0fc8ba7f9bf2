"""Dark channel extraction, guided-filter refinement and 4-channel embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imagecore import ImagePlane, ImageRgb, ImageStack4, ShapeMismatchError, grayscale, stack_guide

DEFAULT_KERNEL = 15
DEFAULT_RADIUS = 20
DEFAULT_EPS = 1e-3


@dataclass(frozen=True)
class DarkChannelParams:
    kernel_size: int = DEFAULT_KERNEL

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")


@dataclass(frozen=True)
class GuidedFilterParams:
    radius: int = DEFAULT_RADIUS
    epsilon: float = DEFAULT_EPS

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def channel_min(img: ImageRgb) -> np.ndarray:
    return img.data.min(axis=2)


def dark_channel(img: ImageRgb, params: DarkChannelParams = DarkChannelParams()) -> ImagePlane:
    """Windowed minimum over the per-pixel channel minimum.

    The square window is applied as two 1-D passes (rows, then columns) with
    edge replication at the borders.
    """
    s = params.kernel_size
    if s > min(img.shape):
        raise ValueError(f"kernel size {s} larger than image {img.shape}")
    m = channel_min(img)
    if s > 1:
        m = ndimage.minimum_filter1d(m, s, axis=0, mode="nearest")
        m = ndimage.minimum_filter1d(m, s, axis=1, mode="nearest")
    return ImagePlane(m)


def box_mean(x: np.ndarray, radius: int) -> np.ndarray:
    """Mean over a (2r+1)^2 window with edge replication, via an integral image."""
    x = np.asarray(x, dtype=np.float64)
    k = 2 * radius + 1
    padded = np.pad(x, radius, mode="edge")
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1))
    np.cumsum(np.cumsum(padded, axis=0), axis=1, out=integral[1:, 1:])
    h, w = x.shape
    total = (
        integral[k : k + h, k : k + w]
        - integral[:h, k : k + w]
        - integral[k : k + h, :w]
        + integral[:h, :w]
    )
    return total / (k * k)


def guided_coefficients(guide: np.ndarray, p: np.ndarray, radius: int, eps: float):
    """Per-window linear coefficients (a, b) of the output on the guide."""
    mu = box_mean(guide, radius)
    p_mean = box_mean(p, radius)
    corr = box_mean(guide * p, radius)
    var = box_mean(guide * guide, radius) - mu * mu
    a = (corr - mu * p_mean) / (var + eps)
    b = p_mean - a * mu
    return a, b


def guided_filter_array(guide: np.ndarray, p: np.ndarray, radius: int, eps: float) -> np.ndarray:
    guide = np.asarray(guide, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    a, b = guided_coefficients(guide, p, radius, eps)
    return box_mean(a, radius) * guide + box_mean(b, radius)


def guided_filter(
    guide: ImagePlane, p: ImagePlane, params: GuidedFilterParams = GuidedFilterParams()
) -> ImagePlane:
    """Edge-preserving smoothing of ``p`` steered by ``guide``.

    The result is clamped to [0, 1]; the unclamped float64 output is available
    from :func:`guided_filter_array`.
    """
    if guide.shape != p.shape:
        raise ShapeMismatchError(f"guide {guide.shape} and input {p.shape} differ in shape")
    out = guided_filter_array(guide.data, p.data, params.radius, params.epsilon)
    return ImagePlane(np.clip(out, 0.0, 1.0))


def refined_dark_channel(
    img: ImageRgb,
    dcp: DarkChannelParams = DarkChannelParams(),
    gfp: GuidedFilterParams = GuidedFilterParams(),
) -> ImagePlane:
    dark = dark_channel(img, dcp)
    out = guided_filter_array(grayscale(img), dark.data, gfp.radius, gfp.epsilon)
    return ImagePlane(np.clip(out, 0.0, 1.0))


def prepare_input(
    img: ImageRgb,
    dcp: DarkChannelParams = DarkChannelParams(),
    gfp: GuidedFilterParams = GuidedFilterParams(),
    resolution: int | None = None,
) -> ImageStack4:
    """Stack the refined dark channel onto ``img`` as a fourth channel."""
    if resolution is not None and img.shape != (resolution, resolution):
        raise ShapeMismatchError(
            f"model expects {resolution}x{resolution} input, got {img.shape[0]}x{img.shape[1]}"
        )
    return stack_guide(img, refined_dark_channel(img, dcp, gfp))
