"""PSNR and SSIM, plus the SSIM gradient used by the D-SSIM loss."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .exceptions import DimensionMismatch, EmptyViewSet, TooSmall

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """PSNR in dB for data range 1; ``inf`` for identical images."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - size // 2
    w = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return w / w.sum()


@lru_cache(maxsize=32)
def _filter_matrix(n: int) -> np.ndarray:
    """Dense 1D Gaussian filter with mirror (reflect) boundaries."""
    w = gaussian_window()
    r = len(w) // 2
    F = np.zeros((n, n))
    for i in range(n):
        for k in range(-r, r + 1):
            j = i + k
            if j < 0:
                j = -j
            elif j >= n:
                j = 2 * (n - 1) - j
            F[i, j] += w[k + r]
    F.setflags(write=False)
    return F


def _blur(img: np.ndarray) -> np.ndarray:
    Fh, Fw = _filter_matrix(img.shape[0]), _filter_matrix(img.shape[1])
    return np.einsum("ij,jkc,lk->ilc", Fh, img, Fw, optimize=True)


def _blur_adjoint(img: np.ndarray) -> np.ndarray:
    Fh, Fw = _filter_matrix(img.shape[0]), _filter_matrix(img.shape[1])
    return np.einsum("ji,jkc,kl->ilc", Fh, img, Fw, optimize=True)


def _as_hwc(img):
    return img[..., None] if img.ndim == 2 else img


def ssim_map(a, b) -> np.ndarray:
    a, b = _check_pair(a, b)
    a, b = _as_hwc(a), _as_hwc(b)
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise TooSmall(f"SSIM needs both sides >= {SSIM_WINDOW}, got {a.shape[:2]}")
    mu_a, mu_b = _blur(a), _blur(b)
    saa = _blur(a * a) - mu_a ** 2
    sbb = _blur(b * b) - mu_b ** 2
    sab = _blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * sab + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (saa + sbb + SSIM_C2)
    return num / den


def ssim(a, b) -> float:
    """Mean local SSIM over all positions and channels (11x11 Gaussian window)."""
    return float(np.mean(ssim_map(a, b)))


def ssim_and_grad(x, y) -> tuple[float, np.ndarray]:
    """Mean SSIM of ``(x, y)`` and its gradient w.r.t. ``x``."""
    x, y = _check_pair(x, y)
    shape = x.shape
    x, y = _as_hwc(x), _as_hwc(y)
    if min(x.shape[0], x.shape[1]) < SSIM_WINDOW:
        raise TooSmall(f"SSIM needs both sides >= {SSIM_WINDOW}, got {x.shape[:2]}")
    mx, my = _blur(x), _blur(y)
    sxx = _blur(x * x) - mx ** 2
    syy = _blur(y * y) - my ** 2
    sxy = _blur(x * y) - mx * my
    a1 = 2 * mx * my + SSIM_C1
    a2 = 2 * sxy + SSIM_C2
    b1 = mx ** 2 + my ** 2 + SSIM_C1
    b2 = sxx + syy + SSIM_C2
    s = a1 * a2 / (b1 * b2)
    g = 1.0 / s.size
    d_mx = g * ((2 * my * a2 - 2 * my * a1) / (b1 * b2) - s * (2 * mx / b1 - 2 * mx / b2))
    d_exx = g * (-s / b2)
    d_exy = g * (2 * a1 / (b1 * b2))
    grad = _blur_adjoint(d_mx) + 2 * x * _blur_adjoint(d_exx) + y * _blur_adjoint(d_exy)
    return float(np.mean(s)), grad.reshape(shape)


@dataclass
class MetricReport:
    psnr: float
    ssim: Optional[float]
    per_view: list = field(default_factory=list)
    lpips: None = None

    def to_dict(self) -> dict:
        def num(v):
            if v is None:
                return None
            return "inf" if math.isinf(v) else float(v)

        return {
            "psnr": num(self.psnr),
            "ssim": num(self.ssim),
            "lpips": None,
            "per_view": [{k: num(v) if isinstance(v, float) else v for k, v in row.items()}
                         for row in self.per_view],
        }


def evaluate(rendered: list, reference: list) -> MetricReport:
    """Per-view and mean PSNR/SSIM; SSIM is ``None`` for images below the window size."""
    if len(rendered) != len(reference):
        raise DimensionMismatch(f"{len(rendered)} renders vs {len(reference)} references")
    if not rendered:
        raise EmptyViewSet("no views to evaluate")
    rows = []
    for i, (r, t) in enumerate(zip(rendered, reference)):
        p = psnr(r, t)
        try:
            s = ssim(r, t)
        except TooSmall:
            s = None
        rows.append({"view": i, "psnr": p, "ssim": s})
    ssims = [row["ssim"] for row in rows if row["ssim"] is not None]
    mean_psnr = float(np.mean([row["psnr"] for row in rows]))
    return MetricReport(mean_psnr, float(np.mean(ssims)) if ssims else None, rows)
