"""3D Gaussian primitives, covariance assembly and spherical-harmonic color.

A :class:`Scene` stores its primitives as a struct of arrays so the projection
and rasterization code can work on whole scenes at once; :class:`Gaussian3D`
is the single-primitive view used by the scalar helpers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DegenerateCovariance, EmptyScene, InvalidConfig

SCALE_FLOOR = 1e-6

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
MAX_SH_DEGREE = 2


def n_sh_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def rgb_to_sh_dc(rgb):
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


@dataclass
class Gaussian3D:
    """One primitive. ``sh_coeffs`` has shape ``((L+1)**2, 3)``."""

    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float
    sh_coeffs: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64).reshape(3)
        self.opacity_logit = float(self.opacity_logit)
        sh = np.asarray(self.sh_coeffs, dtype=np.float64)
        if sh.ndim == 1:
            sh = sh.reshape(-1, 3)
        self.sh_coeffs = sh
        if sh.shape[0] not in (1, 4, 9) or sh.shape[1] != 3:
            raise InvalidConfig(f"sh_coeffs must have shape ((L+1)^2, 3), got {sh.shape}")

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt(self.sh_coeffs.shape[0]))) - 1

    @property
    def scale(self) -> np.ndarray:
        return np.maximum(np.exp(self.log_scale), SCALE_FLOOR)

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    @property
    def covariance(self) -> np.ndarray:
        return build_covariance(self.rotation, self.log_scale)


@dataclass
class Scene:
    """Ordered collection of Gaussians sharing one SH degree."""

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    sh_coeffs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        k = self.positions.shape[0]
        if k < 1:
            raise EmptyScene("a scene needs at least one Gaussian")
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64).reshape(k, 4)
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float64).reshape(k, 3)
        self.opacity_logits = np.ascontiguousarray(self.opacity_logits, dtype=np.float64).reshape(k)
        self.sh_coeffs = np.ascontiguousarray(self.sh_coeffs, dtype=np.float64).reshape(k, -1, 3)
        if self.sh_coeffs.shape[1] not in (1, 4, 9):
            raise InvalidConfig(f"unsupported SH coefficient count {self.sh_coeffs.shape[1]}")

    @classmethod
    def from_gaussians(cls, gaussians: Iterable[Gaussian3D], meta: dict | None = None) -> "Scene":
        gaussians = list(gaussians)
        if not gaussians:
            raise EmptyScene("a scene needs at least one Gaussian")
        degrees = {g.sh_degree for g in gaussians}
        if len(degrees) != 1:
            raise InvalidConfig(f"all primitives must share one sh_degree, got {sorted(degrees)}")
        return cls(
            positions=np.stack([g.position for g in gaussians]),
            rotations=np.stack([g.rotation for g in gaussians]),
            log_scales=np.stack([g.log_scale for g in gaussians]),
            opacity_logits=np.array([g.opacity_logit for g in gaussians]),
            sh_coeffs=np.stack([g.sh_coeffs for g in gaussians]),
            meta=dict(meta or {}),
        )

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __getitem__(self, k: int) -> Gaussian3D:
        return Gaussian3D(
            self.positions[k].copy(),
            self.rotations[k].copy(),
            self.log_scales[k].copy(),
            float(self.opacity_logits[k]),
            self.sh_coeffs[k].copy(),
        )

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt(self.sh_coeffs.shape[1]))) - 1

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    @property
    def scales(self) -> np.ndarray:
        return np.maximum(np.exp(self.log_scales), SCALE_FLOOR)

    def copy(self) -> "Scene":
        return Scene(
            self.positions.copy(),
            self.rotations.copy(),
            self.log_scales.copy(),
            self.opacity_logits.copy(),
            self.sh_coeffs.copy(),
            meta=dict(self.meta),
        )

    def take(self, index) -> "Scene":
        """New scene holding the rows selected by ``index`` (mask or indices)."""
        return Scene(
            self.positions[index],
            self.rotations[index],
            self.log_scales[index],
            self.opacity_logits[index],
            self.sh_coeffs[index],
            meta=dict(self.meta),
        )

    def append(self, other: "Scene") -> "Scene":
        if other.sh_degree != self.sh_degree:
            raise InvalidConfig("cannot concatenate scenes with different sh_degree")
        return Scene(
            np.concatenate([self.positions, other.positions]),
            np.concatenate([self.rotations, other.rotations]),
            np.concatenate([self.log_scales, other.log_scales]),
            np.concatenate([self.opacity_logits, other.opacity_logits]),
            np.concatenate([self.sh_coeffs, other.sh_coeffs]),
            meta=dict(self.meta),
        )

    def params(self) -> dict[str, np.ndarray]:
        """Optimizable arrays by group name (views, not copies)."""
        return {
            "position": self.positions,
            "rotation": self.rotations,
            "log_scale": self.log_scales,
            "opacity": self.opacity_logits,
            "sh": self.sh_coeffs,
        }

    def equals(self, other: "Scene") -> bool:
        """Bit-exact equality of all parameters."""
        return len(self) == len(other) and all(
            np.array_equal(a, b) for a, b in zip(self.params().values(), other.params().values())
        ) and self.sh_coeffs.shape == other.sh_coeffs.shape


# ---------------------------------------------------------------------------
# rotations and covariance


def normalize_quaternions(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for quaternions ``(w, x, y, z)``; normalizes first."""
    q = normalize_quaternions(q)
    r, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - r * z)
    R[..., 0, 2] = 2 * (x * z + r * y)
    R[..., 1, 0] = 2 * (x * y + r * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - r * x)
    R[..., 2, 0] = 2 * (x * z - r * y)
    R[..., 2, 1] = 2 * (y * z + r * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def covariances(rotations: np.ndarray, log_scales: np.ndarray) -> np.ndarray:
    """Batched ``R diag(s)^2 R^T`` with scales floored at ``SCALE_FLOOR``."""
    R = quat_to_rotmat(rotations)
    s = np.maximum(np.exp(log_scales), SCALE_FLOOR)
    M = R * s[..., None, :]
    return M @ np.swapaxes(M, -1, -2)


def build_covariance(rotation, log_scale) -> np.ndarray:
    return covariances(np.asarray(rotation)[None], np.asarray(log_scale)[None])[0]


def covariances_backward(rotations, log_scales, dL_dcov):
    """Gradients of a loss w.r.t. raw quaternions and log-scales.

    ``dL_dcov`` is the gradient w.r.t. the (symmetric) covariance, one 3x3 per row.
    """
    q_raw = np.asarray(rotations, dtype=np.float64)
    qn = np.linalg.norm(q_raw, axis=-1, keepdims=True)
    q = q_raw / qn
    R = quat_to_rotmat(q)
    exp_s = np.exp(log_scales)
    s = np.maximum(exp_s, SCALE_FLOOR)
    M = R * s[:, None, :]
    G = 0.5 * (dL_dcov + np.swapaxes(dL_dcov, -1, -2))
    dM = 2.0 * G @ M
    ds = np.einsum("kij,kij->kj", dM, R)
    dlog = np.where(exp_s > SCALE_FLOOR, ds * s, 0.0)
    dR = dM * s[:, None, :]

    r, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    g = dR
    dq = np.empty_like(q)
    dq[:, 0] = 2 * (-z * g[:, 0, 1] + y * g[:, 0, 2] + z * g[:, 1, 0] - x * g[:, 1, 2]
                    - y * g[:, 2, 0] + x * g[:, 2, 1])
    dq[:, 1] = 2 * (y * g[:, 0, 1] + z * g[:, 0, 2] + y * g[:, 1, 0] - 2 * x * g[:, 1, 1]
                    - r * g[:, 1, 2] + z * g[:, 2, 0] + r * g[:, 2, 1] - 2 * x * g[:, 2, 2])
    dq[:, 2] = 2 * (-2 * y * g[:, 0, 0] + x * g[:, 0, 1] + r * g[:, 0, 2] + x * g[:, 1, 0]
                    + z * g[:, 1, 2] - r * g[:, 2, 0] + z * g[:, 2, 1] - 2 * y * g[:, 2, 2])
    dq[:, 3] = 2 * (-2 * z * g[:, 0, 0] - r * g[:, 0, 1] + x * g[:, 0, 2] + r * g[:, 1, 0]
                    - 2 * z * g[:, 1, 1] + y * g[:, 1, 2] + x * g[:, 2, 0] + y * g[:, 2, 1])
    # through q / |q|
    dq_raw = (dq - q * np.sum(q * dq, axis=-1, keepdims=True)) / qn
    return dq_raw, dlog


def eval_gaussian3(g: Gaussian3D, x) -> float:
    """Unnormalized Gaussian value ``exp(-0.5 * Mahalanobis^2)`` at ``x``."""
    cov = g.covariance
    if not np.all(np.isfinite(cov)):
        raise DegenerateCovariance("covariance has non-finite entries")
    eig = np.linalg.eigvalsh(cov)
    if eig.min() < 1e-12 * (1 - 1e-6):
        raise DegenerateCovariance(f"covariance eigenvalues {eig} below 1e-12")
    d = np.asarray(x, dtype=np.float64) - g.position
    m2 = float(d @ np.linalg.solve(cov, d))
    return float(np.exp(-0.5 * m2))


# ---------------------------------------------------------------------------
# spherical harmonics; coefficient order: dc, (y, z, x), then degree 2


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    cols = [np.full_like(x, SH_C0)]
    if degree >= 1:
        cols += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if degree >= 2:
        cols += [
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2 * z * z - x * x - y * y),
            SH_C2[3] * x * z,
            SH_C2[4] * (x * x - y * y),
        ]
    return np.stack(cols, axis=-1)


def sh_basis_jacobian(dirs: np.ndarray, degree: int) -> np.ndarray:
    """d basis / d dir, shape ``(..., n_coeffs, 3)``."""
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    zero = np.zeros_like(x)
    rows = [(zero, zero, zero)]
    if degree >= 1:
        c = SH_C1
        rows += [(zero, zero - c, zero), (zero, zero, zero + c), (zero - c, zero, zero)]
    if degree >= 2:
        rows += [
            (SH_C2[0] * y, SH_C2[0] * x, zero),
            (zero, SH_C2[1] * z, SH_C2[1] * y),
            (-2 * SH_C2[2] * x, -2 * SH_C2[2] * y, 4 * SH_C2[2] * z),
            (SH_C2[3] * z, zero, SH_C2[3] * x),
            (2 * SH_C2[4] * x, -2 * SH_C2[4] * y, zero),
        ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def sh_colors_raw(sh_coeffs: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Unclamped ``SH(dir) + 0.5`` for a batch of primitives."""
    degree = int(round(np.sqrt(sh_coeffs.shape[-2]))) - 1
    basis = sh_basis(dirs, degree)
    return np.einsum("...c,...cj->...j", basis, sh_coeffs) + 0.5


def eval_sh_color(g: Gaussian3D, view_dir: Sequence[float]) -> np.ndarray:
    d = np.asarray(view_dir, dtype=np.float64)
    d = d / np.linalg.norm(d)
    return np.clip(sh_colors_raw(g.sh_coeffs, d), 0.0, 1.0)
