"""Fitting a fresh Gaussian scene to posed images at one scale."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .camera import Camera
from .exceptions import EmptyViewSet, InvalidConfig
from .gaussians import SH_C0, Scene, logit, n_sh_coeffs
from .optim import (
    AdamState,
    DensityControlConfig,
    DensityStats,
    LossKind,
    adam_step,
    compute_loss,
    densify_and_prune,
)
from .rasterizer import RenderConfig, render_backward, render_pass

log = logging.getLogger(__name__)


@dataclass
class FitConfig:
    iterations: int = 3000
    init_count: int = 1000
    extent: float = 1.0
    sh_degree: int = 1
    loss: LossKind = field(default_factory=lambda: LossKind("l1_dssim"))
    lr: dict = field(default_factory=dict)
    position_lr_final_ratio: float = 0.01
    density: DensityControlConfig = field(default_factory=DensityControlConfig)
    densify_from: int = 100
    densify_until_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise InvalidConfig("iterations must be >= 0")
        if self.init_count < 1:
            raise InvalidConfig("init_count must be >= 1 (a scene cannot start empty)")
        if self.extent <= 0:
            raise InvalidConfig("extent must be positive")
        if not 0 <= self.sh_degree <= 2:
            raise InvalidConfig("sh_degree must be 0, 1 or 2")
        if not 0 < self.position_lr_final_ratio <= 1:
            raise InvalidConfig("position_lr_final_ratio must lie in (0, 1]")
        if not 0 <= self.densify_until_fraction <= 1:
            raise InvalidConfig("densify_until_fraction must lie in [0, 1]")


@dataclass
class FitReport:
    loss_trace: list
    k_initial: int
    k_final: int
    wall_time: float


def initial_scene(cfg: FitConfig, rng: np.random.Generator) -> Scene:
    """Uniform positions in the extent cube, isotropic 2%-extent scales, opacity 0.1, grey."""
    k = cfg.init_count
    positions = rng.uniform(-cfg.extent, cfg.extent, size=(k, 3))
    rotations = np.tile([1.0, 0.0, 0.0, 0.0], (k, 1))
    log_scales = np.full((k, 3), np.log(0.02 * cfg.extent))
    sh = np.zeros((k, n_sh_coeffs(cfg.sh_degree), 3))
    sh[:, 0] = (rng.uniform(0.3, 0.7, size=(k, 3)) - 0.5) / SH_C0
    return Scene(positions, rotations, log_scales, np.full(k, logit(0.1)), sh,
                 meta={"scale": "1", "seed": int(cfg.seed), "extent": float(cfg.extent)})


def fit(targets: list[tuple[Camera, np.ndarray]], cfg: FitConfig = FitConfig(),
        render_cfg: RenderConfig = RenderConfig(),
        init: Optional[Scene] = None) -> tuple[Scene, FitReport]:
    """Optimize a scene against ``(camera, image)`` pairs with periodic density control.

    Density control runs every ``cfg.density.interval`` iterations from
    ``densify_from`` until ``densify_until_fraction`` of the run; the position
    learning rate decays exponentially to ``position_lr_final_ratio`` of its start.
    """
    if not targets:
        raise EmptyViewSet("fit needs at least one target view")
    rng = np.random.default_rng(cfg.seed)
    scene = init.copy() if init is not None else initial_scene(cfg, rng)
    state = AdamState.for_scene(scene, cfg.lr)
    lr0 = state.lr["position"]
    stats = DensityStats.zeros(len(scene))
    stop = int(cfg.densify_until_fraction * cfg.iterations)
    trace = []
    k0 = len(scene)
    t0 = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        frac = (it - 1) / max(cfg.iterations - 1, 1)
        state.lr["position"] = lr0 * cfg.position_lr_final_ratio ** frac
        cam, target = targets[int(rng.integers(len(targets)))]
        fwd = render_pass(scene, cam, render_cfg)
        loss, upstream = compute_loss(fwd.image, target, cfg.loss)
        grads = render_backward(scene, cam, render_cfg, upstream, fwd)
        trace.append(loss)
        adam_step(scene, grads, state)
        if it <= stop:
            stats.add(grads)
            if it >= cfg.densify_from and it % cfg.density.interval == 0:
                res = densify_and_prune(scene, state, stats, cfg.density, rng)
                scene, state, stats = res.scene, res.state, res.stats
                log.debug("iter %d: K=%d (+%d clone, %d split, -%d pruned)", it, len(scene),
                          res.n_cloned, res.n_split, res.n_pruned)
    state.lr["position"] = lr0
    return scene, FitReport(trace, k0, len(scene), time.perf_counter() - t0)
