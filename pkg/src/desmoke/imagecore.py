"""Raster types and PNG I/O shared by the whole pipeline.

Pixel data is held as float32 in [0, 1]. Arrays are frozen (``writeable=False``)
at construction so the types can be shared between threads.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import cv2
import numpy as np

DTYPE = np.float32


class ImageError(Exception):
    """Base class for image I/O errors."""


class ImageNotFoundError(ImageError, FileNotFoundError):
    pass


class UnsupportedFormatError(ImageError):
    pass


class ChannelCountError(ImageError):
    pass


class ShapeMismatchError(ValueError):
    pass


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=DTYPE)
    arr.setflags(write=False)
    return arr


def _check_range(arr: np.ndarray, what: str) -> None:
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{what} values outside [0, 1]: [{arr.min()}, {arr.max()}]")


@dataclass(frozen=True, eq=False)
class ImagePlane:
    """Single-channel raster, shape (H, W)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.data)
        if arr.ndim != 2 or 0 in arr.shape:
            raise ValueError(f"ImagePlane expects a non-empty (H, W) array, got {arr.shape}")
        _check_range(arr, "ImagePlane")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def full(cls, height: int, width: int, value: float) -> "ImagePlane":
        return cls(np.full((height, width), value, dtype=DTYPE))


@dataclass(frozen=True, eq=False)
class ImageRgb:
    """Three-channel raster, shape (H, W, 3) in R, G, B order."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3 or 0 in arr.shape:
            raise ValueError(f"ImageRgb expects an (H, W, 3) array, got {arr.shape}")
        _check_range(arr, "ImageRgb")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def channel(self, c: int) -> ImagePlane:
        return ImagePlane(self.data[:, :, c])

    @classmethod
    def full(cls, height: int, width: int, value) -> "ImageRgb":
        arr = np.empty((height, width, 3), dtype=DTYPE)
        arr[...] = np.asarray(value, dtype=DTYPE)
        return cls(arr)


@dataclass(frozen=True, eq=False)
class ImageStack4:
    """RGB image with the refined dark channel attached as a guide plane."""

    rgb: ImageRgb
    guide: ImagePlane

    def __post_init__(self):
        if self.rgb.shape != self.guide.shape:
            raise ShapeMismatchError(
                f"guide shape {self.guide.shape} does not match rgb shape {self.rgb.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.rgb.shape

    def to_array(self) -> np.ndarray:
        """(H, W, 4) float32 array with the guide as channel 4."""
        return np.concatenate([self.rgb.data, self.guide.data[:, :, None]], axis=2)


AnyImage = Union[ImagePlane, ImageRgb, ImageStack4]


def stack_guide(rgb: ImageRgb, guide: ImagePlane) -> ImageStack4:
    return ImageStack4(rgb, guide)


def unstack(stack: ImageStack4) -> tuple[ImageRgb, ImagePlane]:
    return stack.rgb, stack.guide


def load_image(path) -> ImageRgb:
    """Read an 8- or 16-bit RGB(A) PNG; alpha is dropped."""
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"no such image: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head != b"\x89PNG\r\n\x1a\n":
        raise UnsupportedFormatError(f"not a PNG file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise UnsupportedFormatError(f"could not decode PNG: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise UnsupportedFormatError(f"unsupported bit depth {raw.dtype} in {path}")
    if raw.ndim != 3 or raw.shape[2] not in (3, 4):
        n = 1 if raw.ndim == 2 else raw.shape[2]
        raise ChannelCountError(f"expected an RGB image, {path} has {n} channel(s)")
    rgb = raw[:, :, 2::-1]  # BGR(A) -> RGB
    return ImageRgb(rgb.astype(np.float64) / scale)


def load_plane(path) -> ImagePlane:
    """Read a grayscale PNG written by :func:`save_image`."""
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"no such image: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise UnsupportedFormatError(f"could not decode PNG: {path}")
    if raw.ndim != 2:
        raise ChannelCountError(f"expected a grayscale image: {path}")
    scale = 65535.0 if raw.dtype == np.uint16 else 255.0
    return ImagePlane(raw.astype(np.float64) / scale)


def quantize(arr: np.ndarray) -> np.ndarray:
    """round(v * 255) as uint8; inputs are clipped to [0, 1] first."""
    return np.rint(np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def dequantize(arr: np.ndarray) -> np.ndarray:
    return (arr.astype(np.float64) / 255.0).astype(DTYPE)


def to_uint8(img: AnyImage) -> np.ndarray:
    """Quantized array in RGB(A) / gray channel order."""
    if isinstance(img, ImagePlane):
        return quantize(img.data)
    if isinstance(img, ImageRgb):
        return quantize(img.data)
    if isinstance(img, ImageStack4):
        return quantize(img.to_array())
    raise TypeError(f"cannot save object of type {type(img).__name__}")


def save_image(img: AnyImage, path) -> None:
    """Write an 8-bit PNG: gray for planes, RGB for images, RGBA for stacks."""
    path = Path(path)
    if not path.parent.is_dir():
        raise ImageError(f"output directory does not exist: {path.parent}")
    q = to_uint8(img)
    if q.ndim == 3:
        q = q[:, :, [2, 1, 0, 3]] if q.shape[2] == 4 else q[:, :, ::-1]
    ok = cv2.imwrite(os.fspath(path), np.ascontiguousarray(q))
    if not ok:
        raise ImageError(f"failed to write {path}")


def load_stack(path) -> ImageStack4:
    """Read back an RGBA PNG written for an :class:`ImageStack4`."""
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"no such image: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None or raw.ndim != 3 or raw.shape[2] != 4:
        raise ChannelCountError(f"expected a 4-channel PNG: {path}")
    arr = raw.astype(np.float64) / 255.0
    return ImageStack4(ImageRgb(arr[:, :, 2::-1]), ImagePlane(arr[:, :, 3]))


def _bilinear_axis(n_in: int, n_out: int):
    # half-pixel centres, edge clamped
    x = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1)
    i0 = np.floor(x).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = x - i0
    return i0, i1, frac


def resize_array(arr: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear resize of an (H, W) or (H, W, C) array, computed in float64."""
    if h < 1 or w < 1:
        raise ValueError(f"target size must be positive, got {h}x{w}")
    src = np.asarray(arr, dtype=np.float64)
    if src.shape[:2] == (h, w):
        return src.copy()
    y0, y1, fy = _bilinear_axis(src.shape[0], h)
    x0, x1, fx = _bilinear_axis(src.shape[1], w)
    if src.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def resize_to(img: ImageRgb, h: int, w: int) -> ImageRgb:
    if img.shape == (h, w):
        return img
    return ImageRgb(np.clip(resize_array(img.data, h, w), 0.0, 1.0))


def grayscale(img: ImageRgb) -> np.ndarray:
    """Per-pixel mean of R, G, B in float64."""
    return img.data.astype(np.float64).mean(axis=2)
