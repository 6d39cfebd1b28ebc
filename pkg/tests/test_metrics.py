import math

import numpy as np
import pytest

from mipmapgs.exceptions import DimensionMismatch, EmptyViewSet, TooSmall
from mipmapgs.metrics import MetricReport, evaluate, psnr, ssim, ssim_and_grad


def slow_ssim(a, b):
    """Scalar reference: explicit 11x11 windows over a mirror-padded image."""
    r = 5
    x = np.arange(-r, r + 1)
    w1 = np.exp(-x ** 2 / (2 * 1.5 ** 2))
    w1 /= w1.sum()
    win = np.outer(w1, w1)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    h, w, c = a.shape
    total = 0.0
    for ch in range(c):
        pa = np.pad(a[..., ch], r, mode="reflect")
        pb = np.pad(b[..., ch], r, mode="reflect")
        for i in range(h):
            for j in range(w):
                wa = pa[i:i + 2 * r + 1, j:j + 2 * r + 1]
                wb = pb[i:i + 2 * r + 1, j:j + 2 * r + 1]
                ma, mb = (win * wa).sum(), (win * wb).sum()
                va = (win * (wa - ma) ** 2).sum()
                vb = (win * (wb - mb) ** 2).sum()
                cov = (win * (wa - ma) * (wb - mb)).sum()
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
    return total / (h * w * c)


def test_psnr_known_value():
    a = np.zeros((10, 10, 3))
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-12)
    assert psnr(a, a) == math.inf


def test_psnr_long_hand():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(size=(7, 9, 3)), rng.uniform(size=(7, 9, 3))
    total = 0.0
    for v1, v2 in zip(a.ravel().tolist(), b.ravel().tolist()):
        total += (v1 - v2) ** 2
    mse = total / a.size
    assert psnr(a, b) == pytest.approx(-10 * math.log10(mse), rel=1e-12)


@pytest.mark.parametrize("shape", [(16, 16, 3), (13, 20, 1), (11, 11, 2)])
def test_ssim_matches_window_loop(shape):
    rng = np.random.default_rng(sum(shape))
    a = rng.uniform(size=shape)
    b = np.clip(a + rng.normal(0, 0.15, shape), 0, 1)
    assert abs(ssim(a, b) - slow_ssim(a, b)) <= 1e-6


def test_ssim_identity_negation_symmetry():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(size=(20, 20, 3)), rng.uniform(size=(20, 20, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ssim(a, 1 - a) < 1.0
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-14)


def test_ssim_of_shifted_copy_is_near_one():
    a = np.random.default_rng(2).uniform(0.2, 0.6, (16, 16, 3))
    assert ssim(a, a + 0.02) > 0.95


def test_ssim_grayscale_and_too_small():
    a = np.random.default_rng(3).uniform(size=(12, 12))
    assert ssim(a, a) == pytest.approx(1.0)
    with pytest.raises(TooSmall):
        ssim(np.zeros((10, 40, 3)), np.zeros((10, 40, 3)))
    with pytest.raises(DimensionMismatch):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))


def test_ssim_and_grad_value_agrees():
    rng = np.random.default_rng(4)
    a, b = rng.uniform(size=(14, 15, 3)), rng.uniform(size=(14, 15, 3))
    s, g = ssim_and_grad(a, b)
    assert s == ssim(a, b)
    assert g.shape == a.shape


def test_evaluate_report():
    rng = np.random.default_rng(5)
    refs = [rng.uniform(size=(12, 12, 3)) for _ in range(3)]
    small = [np.zeros((4, 4, 3))]
    rep = evaluate([r + 0.1 for r in refs[:2]] + [refs[2]], refs)
    assert rep.per_view[0]["psnr"] == pytest.approx(20.0)
    assert rep.psnr == math.inf
    d = rep.to_dict()
    assert d["psnr"] == "inf" and d["lpips"] is None and d["per_view"][2]["psnr"] == "inf"
    rep2 = evaluate(small, small)
    assert rep2.ssim is None
    with pytest.raises(DimensionMismatch):
        evaluate(refs, refs[:2])
    with pytest.raises(EmptyViewSet):
        evaluate([], [])
    assert isinstance(rep, MetricReport)
