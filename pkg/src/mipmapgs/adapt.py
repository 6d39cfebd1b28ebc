"""Test-time adaptation of a fitted scene toward one zoom factor.

The base scene is rendered once per view at the basic scale and resampled to
the target zoom; those frozen targets then supervise a short optimization of a
copy of the scene rendered directly at the target zoom, with density control
and opacity pruning kept on for the whole run.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .camera import Camera, Zoom, as_zoom
from .exceptions import EmptyViewSet, InvalidConfig
from .gaussians import Scene
from .metrics import MetricReport, evaluate
from .mipmap import ResampleSpec, make_pseudo_gt
from .optim import (
    AdamState,
    DensityControlConfig,
    DensityStats,
    LossKind,
    adam_step,
    compute_loss,
    densify_and_prune,
)
from .rasterizer import RenderConfig, render, render_backward, render_pass

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ViewSource:
    kind: str = "test"
    count: int = 0

    def __post_init__(self):
        if self.kind not in ("test", "train", "synthetic"):
            raise InvalidConfig(f"unknown view source {self.kind!r}")
        if self.kind == "synthetic" and self.count < 1:
            raise InvalidConfig("synthetic view source needs count >= 1")

    @classmethod
    def parse(cls, text: Union[str, "ViewSource"]) -> "ViewSource":
        """``"test"``, ``"train"`` or ``"synthetic:50"``."""
        if isinstance(text, ViewSource):
            return text
        kind, _, count = str(text).strip().lower().partition(":")
        if kind == "synthetic":
            try:
                return cls(kind, int(count or 50))
            except ValueError:
                raise InvalidConfig(f"bad synthetic view count in {text!r}") from None
        if count:
            raise InvalidConfig(f"view source {kind!r} takes no count")
        return cls(kind)

    def __str__(self):
        return f"synthetic:{self.count}" if self.kind == "synthetic" else self.kind


@dataclass
class AdaptConfig:
    scale_N: Fraction = Fraction(1, 4)
    iterations_S: Optional[int] = None  # None: 1000 for zoom-in, 500 otherwise
    loss: LossKind = field(default_factory=LossKind)
    density_interval: int = 100
    view_source: ViewSource = field(default_factory=ViewSource)
    lr: dict = field(default_factory=dict)
    rng_seed: int = 0
    density: DensityControlConfig = field(default_factory=DensityControlConfig)
    down_kernel: str = "bilinear"
    up_kernel: str = "lanczos3"

    def __post_init__(self):
        self.scale_N = as_zoom(self.scale_N)
        self.view_source = ViewSource.parse(self.view_source)
        if self.iterations_S is None:
            self.iterations_S = 1000 if self.scale_N > 1 else 500
        if self.iterations_S < 1:
            raise InvalidConfig("iterations_S must be >= 1")
        if self.density_interval < 1:
            raise InvalidConfig("density_interval must be >= 1")
        ResampleSpec.for_zoom(self.scale_N, self.down_kernel, self.up_kernel)


@dataclass
class AdaptReport:
    scale: str
    loss_trace: list
    k_before: int
    k_after: int
    wall_time: float
    final: MetricReport  # adapted renders vs the pseudo ground truth

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "iterations": len(self.loss_trace),
            "k_before": self.k_before,
            "k_after": self.k_after,
            "wall_time_s": self.wall_time,
            "loss_first": self.loss_trace[0] if self.loss_trace else None,
            "loss_last": self.loss_trace[-1] if self.loss_trace else None,
            "loss_trace": list(self.loss_trace),
            "final_vs_pseudo_gt": self.final.to_dict(),
        }


def adapt(base: Scene, views: Sequence[Camera], cfg: AdaptConfig = AdaptConfig(),
          render_cfg: RenderConfig = RenderConfig()) -> tuple[Scene, AdaptReport]:
    """Deform a copy of ``base`` toward ``cfg.scale_N``; ``base`` itself is never modified."""
    if not views:
        raise EmptyViewSet("adaptation needs at least one view")
    t0 = time.perf_counter()
    spec = ResampleSpec.for_zoom(cfg.scale_N, cfg.down_kernel, cfg.up_kernel)
    targets = make_pseudo_gt(base, list(views), cfg.scale_N, render_cfg, spec)
    rng = np.random.default_rng(cfg.rng_seed)
    scene = base.copy()
    state = AdamState.for_scene(scene, cfg.lr)
    stats = DensityStats.zeros(len(scene))
    trace = []
    for it in range(1, cfg.iterations_S + 1):
        cam, target = targets[int(rng.integers(len(targets)))]
        fwd = render_pass(scene, cam, render_cfg)
        loss, upstream = compute_loss(fwd.image, target, cfg.loss)
        grads = render_backward(scene, cam, render_cfg, upstream, fwd)
        trace.append(loss)
        adam_step(scene, grads, state)
        stats.add(grads)
        if it % cfg.density_interval == 0:
            res = densify_and_prune(scene, state, stats, cfg.density, rng,
                                    prune=cfg.density.active_pruning)
            scene, state, stats = res.scene, res.state, res.stats
            log.debug("iter %d: K=%d (+%d clone, %d split, -%d pruned)", it, len(scene),
                      res.n_cloned, res.n_split, res.n_pruned)
    scene.meta = dict(base.meta, scale=str(cfg.scale_N))
    final = evaluate([render(scene, c, render_cfg) for c, _ in targets], [t for _, t in targets])
    report = AdaptReport(str(cfg.scale_N), trace, len(base), len(scene),
                         time.perf_counter() - t0, final)
    return scene, report


def select_views(all_test: Sequence[Camera], all_train: Sequence[Camera],
                 source: Union[str, ViewSource] = "test", trajectory_seed: int = 0,
                 radius_jitter: float = 0.05, center=(0.0, 0.0, 0.0)) -> list[Camera]:
    """Cameras to adapt on.

    Synthetic views pick a random segment between consecutive test poses, slerp
    the orientation and the viewing direction about ``center``, and perturb the
    radius by up to ``radius_jitter`` times the segment's chord length.
    """
    source = ViewSource.parse(source)
    if source.kind == "test":
        pool = list(all_test)
    elif source.kind == "train":
        pool = list(all_train)
    else:
        pool = list(all_test)
    if not pool:
        raise EmptyViewSet(f"no cameras available for view source {source}")
    if source.kind != "synthetic":
        return pool
    return _synthetic_views(pool, source.count, np.random.default_rng(trajectory_seed),
                            radius_jitter, np.asarray(center, dtype=np.float64))


def _slerp_dir(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    omega = np.arccos(np.clip(a @ b, -1.0, 1.0))
    if omega < 1e-9:
        return a
    return (np.sin((1 - t) * omega) * a + np.sin(t * omega) * b) / np.sin(omega)


def _synthetic_views(pool, count, rng, radius_jitter, center) -> list[Camera]:
    pairs = [(pool[i], pool[i + 1]) for i in range(len(pool) - 1)] or [(pool[0], pool[0])]
    out = []
    for _ in range(count):
        a, b = pairs[int(rng.integers(len(pairs)))]
        t = float(rng.uniform())
        jitter = float(rng.uniform(-1.0, 1.0))
        rots = Rotation.from_matrix(np.stack([a.rotation.T, b.rotation.T]))
        c2w = Slerp([0.0, 1.0], rots)(t).as_matrix()
        ea, eb = a.position - center, b.position - center
        ra, rb = np.linalg.norm(ea), np.linalg.norm(eb)
        radius = (1 - t) * ra + t * rb + radius_jitter * jitter * np.linalg.norm(ea - eb)
        if a is b or (np.array_equal(ea, eb) and np.array_equal(a.rotation, b.rotation)):
            out.append(a)
            continue
        eye = center + radius * _slerp_dir(ea, eb, t)
        R = c2w.T
        # re-orthonormalize to keep the camera validity check exact
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        out.append(Camera(a.fx, a.fy, a.cx, a.cy, a.width, a.height, R, -R @ eye))
    return out
