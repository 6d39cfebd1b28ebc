"""Screen-space projection of 3D Gaussians (EWA affine approximation).

:func:`project_scene` handles a whole scene at once and keeps the intermediates
that :func:`project_backward` needs; :func:`project_gaussian` and
:func:`splat_alpha` are the single-primitive views of the same computation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .camera import Camera
from .exceptions import InvalidConfig
from .gaussians import (
    Gaussian3D,
    Scene,
    covariances,
    covariances_backward,
    sh_basis,
    sh_basis_jacobian,
    sigmoid,
)

NEAR_PLANE = 0.01
ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
FRUSTUM_GUARD = 1.3


@dataclass(frozen=True)
class FilterMode:
    """Screen-space filter applied to every projected covariance.

    ``FilterMode.constant(s)`` adds ``s * I`` (pixels^2); ``FilterMode.none()``
    leaves the projected covariance untouched.
    """

    kind: str = "constant"
    s: float = 0.3

    def __post_init__(self):
        if self.kind not in ("constant", "none"):
            raise InvalidConfig(f"unknown filter kind {self.kind!r}")
        if self.s < 0:
            raise InvalidConfig("dilation must be non-negative")

    @classmethod
    def constant(cls, s: float = 0.3) -> "FilterMode":
        return cls("constant", float(s))

    @classmethod
    def none(cls) -> "FilterMode":
        return cls("none", 0.0)

    @property
    def dilation(self) -> float:
        return self.s if self.kind == "constant" else 0.0


@dataclass
class Splat2D:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float
    radius: float

    @property
    def conic(self) -> np.ndarray:
        return np.linalg.inv(self.cov2d)


@dataclass
class ProjectedSplats:
    """Per-Gaussian screen-space quantities for one camera.

    ``valid`` marks splats in front of the near plane with a positive-definite
    footprint; ``visible`` additionally requires that the culling extent reaches
    the viewport and that the splat can ever exceed the alpha floor.
    """

    t_cam: np.ndarray
    depth: np.ndarray
    mean2d: np.ndarray
    cov2d: np.ndarray
    conic: np.ndarray  # (a, b, c): inverse covariance [[a, b], [b, c]]
    opacity: np.ndarray
    color: np.ndarray
    color_raw: np.ndarray
    dirs: np.ndarray
    dir_norm: np.ndarray
    radius: np.ndarray
    rect: np.ndarray  # pixel bounds (x0, x1, y0, y1), inclusive
    valid: np.ndarray
    visible: np.ndarray
    T: np.ndarray  # J @ W, (K, 2, 3)
    cov3d: np.ndarray
    clamp_x: np.ndarray
    clamp_y: np.ndarray

    def __len__(self):
        return self.depth.shape[0]


def _frustum_limits(cam: Camera) -> tuple[float, float]:
    return (FRUSTUM_GUARD * 0.5 * cam.width / cam.fx,
            FRUSTUM_GUARD * 0.5 * cam.height / cam.fy)


def project_scene(scene: Scene, cam: Camera, filter: FilterMode = FilterMode(),
                  alpha_min: float = ALPHA_MIN) -> ProjectedSplats:
    W = cam.rotation
    t = scene.positions @ W.T + cam.translation
    depth = t[:, 2].copy()
    in_front = depth > NEAR_PLANE
    z = np.where(in_front, depth, 1.0)
    tx, ty = t[:, 0], t[:, 1]

    limx, limy = _frustum_limits(cam)
    rx, ry = tx / z, ty / z
    clamp_x = (rx < -limx) | (rx > limx)
    clamp_y = (ry < -limy) | (ry > limy)
    rxc = np.clip(rx, -limx, limx)
    ryc = np.clip(ry, -limy, limy)

    k = len(scene)
    J = np.zeros((k, 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * rxc / z
    J[:, 1, 1] = cam.fy / z
    J[:, 1, 2] = -cam.fy * ryc / z
    T = J @ W
    cov3d = covariances(scene.rotations, scene.log_scales)
    cov2d = T @ cov3d @ np.swapaxes(T, 1, 2)
    cov2d = 0.5 * (cov2d + np.swapaxes(cov2d, 1, 2))
    s = filter.dilation
    cov2d[:, 0, 0] += s
    cov2d[:, 1, 1] += s

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    valid = in_front & (det > 0) & (a > 0) & np.isfinite(det)
    det_safe = np.where(valid, det, 1.0)
    conic = np.stack([c / det_safe, -b / det_safe, a / det_safe], axis=1)
    conic[~valid] = 0.0

    mean2d = np.stack([cam.fx * tx / z + cam.cx, cam.fy * ty / z + cam.cy], axis=1)

    opacity = sigmoid(scene.opacity_logits)
    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    # widen 3 sigma when needed so every pixel with alpha >= alpha_min is inside the extent
    with np.errstate(divide="ignore"):
        reach = 2.0 * np.log(np.maximum(opacity, 1e-300) / alpha_min)
    radius = np.sqrt(np.maximum(9.0, reach) * np.maximum(lam_max, 0.0))
    radius[~valid] = 0.0

    x0 = np.ceil(mean2d[:, 0] - radius - 0.5)
    x1 = np.floor(mean2d[:, 0] + radius - 0.5)
    y0 = np.ceil(mean2d[:, 1] - radius - 0.5)
    y1 = np.floor(mean2d[:, 1] + radius - 0.5)
    with np.errstate(invalid="ignore"):
        rect = np.stack([
            np.clip(x0, 0, cam.width - 1), np.clip(x1, 0, cam.width - 1),
            np.clip(y0, 0, cam.height - 1), np.clip(y1, 0, cam.height - 1),
        ], axis=1)
        on_screen = (x1 >= 0) & (x0 <= cam.width - 1) & (y1 >= 0) & (y0 <= cam.height - 1) & (x0 <= x1) & (y0 <= y1)
    visible = valid & on_screen & (opacity >= alpha_min)
    rect = np.where(visible[:, None], rect, 0).astype(np.int64)

    v = scene.positions - cam.position
    dir_norm = np.linalg.norm(v, axis=1)
    dirs = v / np.maximum(dir_norm, 1e-12)[:, None]
    basis = sh_basis(dirs, scene.sh_degree)
    color_raw = np.einsum("kc,kcj->kj", basis, scene.sh_coeffs) + 0.5
    color = np.clip(color_raw, 0.0, 1.0)

    return ProjectedSplats(
        t_cam=t, depth=depth, mean2d=mean2d, cov2d=cov2d, conic=conic, opacity=opacity,
        color=color, color_raw=color_raw, dirs=dirs, dir_norm=dir_norm, radius=radius,
        rect=rect, valid=valid, visible=visible, T=T, cov3d=cov3d,
        clamp_x=clamp_x, clamp_y=clamp_y,
    )


def project_gaussian(g: Gaussian3D, cam: Camera, filter: FilterMode = FilterMode()) -> Optional[Splat2D]:
    """Project one Gaussian; returns ``None`` when it is culled."""
    p = project_scene(Scene.from_gaussians([g]), cam, filter)
    if not p.visible[0]:
        return None
    return Splat2D(p.mean2d[0], p.cov2d[0], float(p.depth[0]), p.color[0],
                   float(p.opacity[0]), float(p.radius[0]))


def splat_alpha(sp: Splat2D, pixel) -> float:
    d = np.asarray(pixel, dtype=np.float64) - sp.mean2d
    m2 = float(d @ np.linalg.solve(sp.cov2d, d))
    return min(sp.opacity * float(np.exp(-0.5 * m2)), ALPHA_MAX)


def project_backward(scene: Scene, cam: Camera, proj: ProjectedSplats,
                     d_mean2d, d_conic, d_opacity, d_color) -> dict[str, np.ndarray]:
    """Chain screen-space gradients back to the scene parameters.

    Inputs are per-Gaussian gradients w.r.t. the splat mean, conic ``(a, b, c)``,
    effective opacity and clamped color.  Returns a dict keyed like
    :meth:`Scene.params`.
    """
    valid = proj.valid
    mask = valid[:, None]
    d_mean2d = np.where(mask, d_mean2d, 0.0)
    d_conic = np.where(mask, d_conic, 0.0)
    d_opacity = np.where(valid, d_opacity, 0.0)
    d_color = np.where(mask, d_color, 0.0)

    o = proj.opacity
    g_logit = d_opacity * o * (1.0 - o)

    # color: clamp to [0, 1] passes gradient only strictly inside
    inside = (proj.color_raw > 0.0) & (proj.color_raw < 1.0)
    d_raw = np.where(inside, d_color, 0.0)
    degree = scene.sh_degree
    basis = sh_basis(proj.dirs, degree)
    g_sh = basis[:, :, None] * d_raw[:, None, :]
    g_pos = np.zeros_like(scene.positions)
    if degree > 0:
        dbasis = sh_basis_jacobian(proj.dirs, degree)
        d_dir = np.einsum("kcj,kj,kcd->kd", scene.sh_coeffs, d_raw, dbasis)
        d_dir -= proj.dirs * np.sum(proj.dirs * d_dir, axis=1, keepdims=True)
        g_pos += d_dir / np.maximum(proj.dir_norm, 1e-12)[:, None]

    # conic -> covariance (dilated), then through the projection
    C = np.zeros((len(scene), 2, 2))
    C[:, 0, 0] = d_conic[:, 0]
    C[:, 0, 1] = C[:, 1, 0] = 0.5 * d_conic[:, 1]
    C[:, 1, 1] = d_conic[:, 2]
    inv = np.zeros((len(scene), 2, 2))
    inv[:, 0, 0] = proj.conic[:, 0]
    inv[:, 0, 1] = inv[:, 1, 0] = proj.conic[:, 1]
    inv[:, 1, 1] = proj.conic[:, 2]
    d_cov2d = -inv @ C @ inv

    T = proj.T
    Sigma = proj.cov3d
    d_cov3d = np.swapaxes(T, 1, 2) @ d_cov2d @ T
    d_T = 2.0 * d_cov2d @ T @ Sigma
    W = cam.rotation
    d_J = d_T @ W.T

    t = proj.t_cam
    z = np.where(valid, t[:, 2], 1.0)
    tx, ty = t[:, 0], t[:, 1]
    fx, fy = cam.fx, cam.fy
    limx, limy = _frustum_limits(cam)
    rxc = np.clip(tx / z, -limx, limx)
    ryc = np.clip(ty / z, -limy, limy)
    free_x = ~proj.clamp_x
    free_y = ~proj.clamp_y

    d_t = np.zeros_like(t)
    # J02 = -fx * rxc / z, with rxc = tx / z unless clamped
    d_t[:, 0] = np.where(free_x, d_J[:, 0, 2] * (-fx / z ** 2), 0.0)
    d_t[:, 1] = np.where(free_y, d_J[:, 1, 2] * (-fy / z ** 2), 0.0)
    dJ02_dz = np.where(free_x, 2.0 * fx * tx / z ** 3, fx * rxc / z ** 2)
    dJ12_dz = np.where(free_y, 2.0 * fy * ty / z ** 3, fy * ryc / z ** 2)
    d_t[:, 2] = (d_J[:, 0, 0] * (-fx / z ** 2) + d_J[:, 1, 1] * (-fy / z ** 2)
                 + d_J[:, 0, 2] * dJ02_dz + d_J[:, 1, 2] * dJ12_dz)

    # mean2d = (fx tx / z + cx, fy ty / z + cy)
    d_t[:, 0] += d_mean2d[:, 0] * fx / z
    d_t[:, 1] += d_mean2d[:, 1] * fy / z
    d_t[:, 2] -= d_mean2d[:, 0] * fx * tx / z ** 2 + d_mean2d[:, 1] * fy * ty / z ** 2

    g_pos += d_t @ W
    g_rot, g_log = covariances_backward(scene.rotations, scene.log_scales, d_cov3d)

    g_rot[~valid] = 0.0
    g_log[~valid] = 0.0
    return {"position": g_pos, "rotation": g_rot, "log_scale": g_log,
            "opacity": g_logit, "sh": g_sh}
