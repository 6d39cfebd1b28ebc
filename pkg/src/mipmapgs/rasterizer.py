"""Tile-binned front-to-back alpha blending, its analytic backward pass, and a
brute-force reference renderer used as the correctness oracle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .camera import Camera
from .exceptions import DimensionMismatch, InvalidConfig, NonFiniteGradient
from .gaussians import Scene
from .projection import (
    ALPHA_MAX,
    ALPHA_MIN,
    FilterMode,
    ProjectedSplats,
    project_backward,
    project_scene,
)


@dataclass(frozen=True)
class RenderConfig:
    tile_size: int = 16
    transmittance_floor: float = 1e-4
    background: tuple = (0.0, 0.0, 0.0)
    filter: FilterMode = field(default_factory=FilterMode)
    alpha_min: float = ALPHA_MIN

    def __post_init__(self):
        if not 0.0 < self.alpha_min < ALPHA_MAX:
            raise InvalidConfig("alpha_min must lie in (0, alpha_max)")
        if int(self.tile_size) < 1:
            raise InvalidConfig("tile_size must be >= 1")
        if not 0.0 < self.transmittance_floor < 1.0:
            raise InvalidConfig("transmittance_floor must lie in (0, 1)")
        bg = tuple(float(v) for v in self.background)
        if len(bg) != 3:
            raise InvalidConfig("background must be an RGB triple")
        object.__setattr__(self, "background", bg)
        object.__setattr__(self, "tile_size", int(self.tile_size))


@dataclass
class TileBins:
    n_tiles_x: int
    n_tiles_y: int
    pair_splat: np.ndarray
    tile_start: np.ndarray
    order: np.ndarray  # visible splats, front to back


@dataclass
class RenderResult:
    image: np.ndarray
    final_t: np.ndarray
    n_contrib: np.ndarray
    proj: ProjectedSplats
    bins: TileBins


@dataclass
class SceneGradients:
    """Per-Gaussian parameter gradients plus densification statistics for one render."""

    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity: np.ndarray
    sh: np.ndarray
    screen_grad_norm: np.ndarray
    hit_count: np.ndarray

    def __len__(self):
        return self.position.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"position": self.position, "rotation": self.rotation,
                "log_scale": self.log_scale, "opacity": self.opacity, "sh": self.sh}

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params().values())


def depth_order(proj: ProjectedSplats, mask: np.ndarray) -> np.ndarray:
    """Indices of ``mask``-selected splats by depth, ties broken by index."""
    idx = np.flatnonzero(mask)
    return idx[np.lexsort((idx, proj.depth[idx]))]


def bin_splats(proj: ProjectedSplats, cam: Camera, tile_size: int) -> TileBins:
    ntx = -(-cam.width // tile_size)
    nty = -(-cam.height // tile_size)
    order = depth_order(proj, proj.visible)
    rect = proj.rect[order]
    tx0, tx1 = rect[:, 0] // tile_size, rect[:, 1] // tile_size + 1
    ty0, ty1 = rect[:, 2] // tile_size, rect[:, 3] // tile_size + 1
    span_x = tx1 - tx0
    counts = span_x * (ty1 - ty0)
    total = int(counts.sum())
    owner = np.repeat(np.arange(order.size), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    tiles = (ty0[owner] + offsets // span_x[owner]) * ntx + tx0[owner] + offsets % span_x[owner]
    perm = np.argsort(tiles, kind="stable")
    pair_splat = order[owner[perm]].astype(np.int64)
    tile_start = np.searchsorted(tiles[perm], np.arange(ntx * nty + 1)).astype(np.int64)
    return TileBins(ntx, nty, np.ascontiguousarray(pair_splat), tile_start, order)


def render_pass(scene: Scene, cam: Camera, cfg: RenderConfig = RenderConfig()) -> RenderResult:
    """Forward render keeping the per-pixel state the backward pass needs."""
    proj = project_scene(scene, cam, cfg.filter, cfg.alpha_min)
    bins = bin_splats(proj, cam, cfg.tile_size)
    H, W = cam.height, cam.width
    image = np.empty((H, W, 3))
    final_t = np.empty((H, W))
    n_contrib = np.empty((H, W), dtype=np.int64)
    _kernels.forward_tiles(
        np.ascontiguousarray(proj.mean2d), np.ascontiguousarray(proj.conic),
        np.ascontiguousarray(proj.opacity), np.ascontiguousarray(proj.color),
        bins.pair_splat, bins.tile_start, W, H, cfg.tile_size, bins.n_tiles_x,
        np.asarray(cfg.background, dtype=np.float64), cfg.transmittance_floor,
        cfg.alpha_min, ALPHA_MAX, image, final_t, n_contrib,
    )
    return RenderResult(image, final_t, n_contrib, proj, bins)


def render(scene: Scene, cam: Camera, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    """Render ``scene`` from ``cam`` as an ``(H, W, 3)`` float image."""
    return render_pass(scene, cam, cfg).image


def render_bruteforce(scene: Scene, cam: Camera, cfg: RenderConfig = RenderConfig(),
                      chunk: int = 4096) -> np.ndarray:
    """Reference renderer: every pixel blends every valid splat, no tiles or culling extents."""
    proj = project_scene(scene, cam, cfg.filter, cfg.alpha_min)
    order = depth_order(proj, proj.valid)
    H, W = cam.height, cam.width
    bg = np.asarray(cfg.background, dtype=np.float64)
    jj, ii = np.meshgrid(np.arange(H) + 0.5, np.arange(W) + 0.5, indexing="ij")
    pix = np.stack([ii.ravel(), jj.ravel()], axis=1)
    out = np.empty((H * W, 3))
    mean, conic = proj.mean2d[order], proj.conic[order]
    opac, color = proj.opacity[order], proj.color[order]
    for lo in range(0, H * W, chunk):
        p = pix[lo:lo + chunk]
        if order.size == 0:
            out[lo:lo + chunk] = bg
            continue
        dx = p[None, :, 0] - mean[:, None, 0]
        dy = p[None, :, 1] - mean[:, None, 1]
        power = (-0.5 * (conic[:, None, 0] * dx * dx + conic[:, None, 2] * dy * dy)
                 - conic[:, None, 1] * dx * dy)
        alpha = np.minimum(ALPHA_MAX, opac[:, None] * np.exp(np.minimum(power, 0.0)))
        alpha[(power > 0) | (alpha < cfg.alpha_min)] = 0.0
        t_after = np.cumprod(1.0 - alpha, axis=0)
        keep = t_after >= cfg.transmittance_floor
        alpha = np.where(keep, alpha, 0.0)
        t_after = np.cumprod(1.0 - alpha, axis=0)
        t_before = np.vstack([np.ones((1, p.shape[0])), t_after[:-1]])
        weights = alpha * t_before
        out[lo:lo + chunk] = weights.T @ color + t_after[-1][:, None] * bg
    return out.reshape(H, W, 3)


def render_backward(scene: Scene, cam: Camera, cfg: RenderConfig, upstream: np.ndarray,
                    forward: RenderResult | None = None) -> SceneGradients:
    """Exact gradients of ``sum(upstream * render(scene))`` w.r.t. every parameter."""
    if forward is None:
        forward = render_pass(scene, cam, cfg)
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    if upstream.shape != forward.image.shape:
        raise DimensionMismatch(f"upstream gradient {upstream.shape} vs image {forward.image.shape}")
    proj, bins = forward.proj, forward.bins
    n_pairs = bins.pair_splat.size
    g_mean = np.zeros((n_pairs, 2))
    g_conic = np.zeros((n_pairs, 3))
    g_opac = np.zeros(n_pairs)
    g_color = np.zeros((n_pairs, 3))
    _kernels.backward_tiles(
        np.ascontiguousarray(proj.mean2d), np.ascontiguousarray(proj.conic),
        np.ascontiguousarray(proj.opacity), np.ascontiguousarray(proj.color),
        bins.pair_splat, bins.tile_start, cam.width, cam.height, cfg.tile_size,
        bins.n_tiles_x, np.asarray(cfg.background, dtype=np.float64),
        cfg.alpha_min, ALPHA_MAX, forward.final_t, forward.n_contrib, upstream,
        g_mean, g_conic, g_opac, g_color,
    )
    k = len(scene)

    def reduce(values):
        if values.ndim == 1:
            return np.bincount(bins.pair_splat, weights=values, minlength=k)
        return np.stack([np.bincount(bins.pair_splat, weights=values[:, c], minlength=k)
                         for c in range(values.shape[1])], axis=1)

    d_mean2d = reduce(g_mean)
    grads = project_backward(scene, cam, proj, d_mean2d, reduce(g_conic),
                             reduce(g_opac), reduce(g_color))
    # screen-space gradient measured in NDC units, as 3DGS densification expects
    ndc = d_mean2d * np.array([0.5 * cam.width, 0.5 * cam.height])
    out = SceneGradients(
        screen_grad_norm=np.linalg.norm(ndc, axis=1),
        hit_count=proj.visible.astype(np.int64),
        **grads,
    )
    if not out.is_finite():
        raise NonFiniteGradient("non-finite gradient; the scene is probably degenerate")
    return out
