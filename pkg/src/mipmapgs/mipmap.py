"""Separable image resampling and mipmap pseudo-ground-truth.

Every resampler is a pair of dense 1D matrices (rows, columns) applied to an
``(H, W, C)`` image.  Rows of each matrix sum to one, so constants are
reproduced exactly, and the fixed summation order makes results deterministic.
Pixel ``i`` sits at continuous coordinate ``i + 0.5`` on both sides of a resize.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from .camera import Camera, Zoom, as_zoom, scale_camera
from .exceptions import InvalidConfig, InvalidFactor
from .gaussians import Scene
from .rasterizer import RenderConfig, render

KERNELS = ("bilinear", "lanczos3", "bicubic", "nearest")


def _triangle(x):
    return np.maximum(0.0, 1.0 - np.abs(x))


def _lanczos3(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < 3.0, np.sinc(x) * np.sinc(x / 3.0), 0.0)


def _keys_cubic(x, a=-0.5):
    x = np.abs(x)
    near = ((a + 2) * x - (a + 3)) * x * x + 1
    far = ((a * x - 5 * a) * x + 8 * a) * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


_SUPPORT = {"bilinear": (1.0, _triangle), "lanczos3": (3.0, _lanczos3), "bicubic": (2.0, _keys_cubic)}


def _reflect(j: np.ndarray, n: int) -> np.ndarray:
    """Mirror indices into ``[0, n)`` (edge pixel repeated: ``... 1 0 | 0 1 ...``)."""
    if n == 1:
        return np.zeros_like(j)
    period = 2 * n
    j = np.mod(j, period)
    return np.where(j >= n, period - 1 - j, j)


@lru_cache(maxsize=128)
def resample_matrix(n_in: int, n_out: int, kernel: str) -> np.ndarray:
    """``(n_out, n_in)`` weights mapping input samples to output samples."""
    if kernel not in KERNELS:
        raise InvalidConfig(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    scale = n_out / n_in
    centers = (np.arange(n_out) + 0.5) / scale  # continuous input coordinate
    M = np.zeros((n_out, n_in))
    if kernel == "nearest":
        idx = np.minimum(np.floor(centers).astype(np.int64), n_in - 1)
        M[np.arange(n_out), idx] = 1.0
    else:
        radius, fn = _SUPPORT[kernel]
        stretch = max(1.0, 1.0 / scale)  # widen the kernel when minifying
        for i, c in enumerate(centers):
            lo = math.floor(c - 0.5 - radius * stretch)
            hi = math.ceil(c - 0.5 + radius * stretch)
            taps = np.arange(lo, hi + 1)
            w = fn((taps + 0.5 - c) / stretch)
            np.add.at(M[i], _reflect(taps, n_in), w)
        M /= M.sum(axis=1, keepdims=True)
    M.setflags(write=False)
    return M


def _as_image(img) -> tuple[np.ndarray, bool]:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        return a[..., None], True
    if a.ndim != 3:
        raise InvalidConfig(f"expected an (H, W) or (H, W, C) image, got shape {a.shape}")
    return a, False


def _apply(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jkc,lk->ilc", rows, img, cols, optimize=True)


def resize(img, height: int, width: int, kernel: str = "bilinear") -> np.ndarray:
    """Resample to ``height x width`` with a separable kernel; output clamped to [0, 1]."""
    a, squeeze = _as_image(img)
    if height < 1 or width < 1:
        raise InvalidFactor("target size must be at least 1x1")
    out = _apply(a, resample_matrix(a.shape[0], height, kernel),
                 resample_matrix(a.shape[1], width, kernel))
    out = np.clip(out, 0.0, 1.0)
    return out[..., 0] if squeeze else out


def _halve(a: np.ndarray) -> np.ndarray:
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def _pad_to(a: np.ndarray, h: int, w: int) -> np.ndarray:
    ph, pw = h - a.shape[0], w - a.shape[1]
    if ph <= 0 and pw <= 0:
        return a[:h, :w]
    a = np.pad(a, ((0, max(ph, 0)), (0, max(pw, 0)), (0, 0)), mode="symmetric")
    return a[:h, :w]


def _check_factor(n) -> int:
    if isinstance(n, bool) or int(n) != n or n < 2:
        raise InvalidFactor(f"resampling factor must be an integer >= 2, got {n!r}")
    return int(n)


def downsample(img, n: int, kernel: str = "bilinear") -> np.ndarray:
    """Shrink by an integer factor ``n``.

    Bilinear minification walks a mipmap chain: each 2x level is the bilinear
    sample at the centre of a 2x2 block (i.e. its mean), so ``downsample(·, 4)``
    followed by ``downsample(·, 2)`` equals ``downsample(·, 8)``.  Odd leftover
    factors use a stretched triangle filter.  Sizes that do not divide evenly
    are reflect-padded (or trimmed) to ``n * round(size / n)`` first.
    """
    n = _check_factor(n)
    if kernel not in KERNELS:
        raise InvalidConfig(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    a, squeeze = _as_image(img)
    h, w = max(1, round(a.shape[0] / n)), max(1, round(a.shape[1] / n))
    a = _pad_to(a, h * n, w * n)
    if kernel == "bilinear":
        rest = n
        while rest % 2 == 0:
            a = _halve(a)
            rest //= 2
        if rest > 1:
            a = _apply(a, resample_matrix(a.shape[0], h, "bilinear"),
                       resample_matrix(a.shape[1], w, "bilinear"))
    else:
        a = _apply(a, resample_matrix(a.shape[0], h, kernel), resample_matrix(a.shape[1], w, kernel))
    a = np.clip(a, 0.0, 1.0)
    return a[..., 0] if squeeze else a


def upsample(img, n: int, kernel: str = "lanczos3") -> np.ndarray:
    """Enlarge by an integer factor ``n``; output clamped to [0, 1]."""
    n = _check_factor(n)
    a, _ = _as_image(img)
    return resize(img, a.shape[0] * n, a.shape[1] * n, kernel)


@dataclass(frozen=True)
class ResampleSpec:
    direction: str = "down"
    factor: Fraction = Fraction(2)
    kernel: str = "bilinear"

    def __post_init__(self):
        if self.direction not in ("down", "up"):
            raise InvalidConfig("direction must be 'down' or 'up'")
        if self.kernel not in KERNELS:
            raise InvalidConfig(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")
        f = as_zoom(self.factor)
        if f < 1:
            raise InvalidFactor("resampling factor must be >= 1 (direction carries the sense)")
        object.__setattr__(self, "factor", f)

    @classmethod
    def for_zoom(cls, zoom: Zoom, down_kernel: str = "bilinear",
                 up_kernel: str = "lanczos3") -> "ResampleSpec":
        z = as_zoom(zoom)
        if z < 1:
            return cls("down", 1 / z, down_kernel)
        return cls("up", z, up_kernel)

    @property
    def zoom(self) -> Fraction:
        return self.factor if self.direction == "up" else 1 / self.factor

    def apply(self, img, height: Optional[int] = None, width: Optional[int] = None) -> np.ndarray:
        """Resample ``img``; ``height``/``width`` pin the output size for fractional factors."""
        a, _ = _as_image(img)
        f = self.factor
        if f == 1:
            return np.array(img, dtype=np.float64)
        if f.denominator == 1:
            out = downsample(img, int(f), self.kernel) if self.direction == "down" \
                else upsample(img, int(f), self.kernel)
            if height is None or out.shape[:2] == (height, width):
                return out
        z = self.zoom
        h = height if height is not None else max(1, round(a.shape[0] * z))
        w = width if width is not None else max(1, round(a.shape[1] * z))
        return resize(img, h, w, self.kernel)


def make_pseudo_gt(base: Scene, views: list[Camera], zoom: Zoom,
                   cfg: RenderConfig = RenderConfig(),
                   spec: Optional[ResampleSpec] = None) -> list[tuple[Camera, np.ndarray]]:
    """Render ``base`` at the basic scale and resample each view to ``zoom``.

    Each target is paired with ``scale_camera(view, zoom)`` so that a render of
    the adapted scene lines up with it pixel for pixel.
    """
    z = as_zoom(zoom)
    if spec is None:
        spec = ResampleSpec.for_zoom(z)
    elif spec.zoom != z:
        raise InvalidConfig(f"resample spec zoom {spec.zoom} does not match target zoom {z}")
    out = []
    for cam in views:
        image = render(base, cam, cfg)
        target_cam = scale_camera(cam, z)
        if z != 1:
            image = spec.apply(image, target_cam.height, target_cam.width)
        out.append((target_cam, image))
    return out
