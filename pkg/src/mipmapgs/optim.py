"""Losses, Adam updates and density control (clone / split / prune)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DimensionMismatch, EmptySceneWarning, InvalidConfig, NonFiniteGradient
from .gaussians import Scene, logit, normalize_quaternions, quat_to_rotmat, sigmoid
from .metrics import ssim_and_grad
from .rasterizer import SceneGradients

LOSS_KINDS = ("l2", "l1", "l1_dssim", "ssim")


@dataclass(frozen=True)
class LossKind:
    kind: str = "l2"
    l1_weight: float = 0.8
    dssim_weight: float = 0.2

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidConfig(f"unknown loss {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.l1_weight < 0 or self.dssim_weight < 0:
            raise InvalidConfig("loss weights must be non-negative")
        if self.kind == "l1_dssim" and self.l1_weight + self.dssim_weight <= 0:
            raise InvalidConfig("loss weights must not both be zero")

    @classmethod
    def parse(cls, name: str) -> "LossKind":
        aliases = {"l2": "l2", "mse": "l2", "l1": "l1", "l1_dssim": "l1_dssim",
                   "l1+dssim": "l1_dssim", "ssim": "ssim", "dssim": "ssim", "ssim_only": "ssim"}
        try:
            return cls(aliases[name.lower()])
        except KeyError:
            raise InvalidConfig(f"unknown loss {name!r}") from None


def compute_loss(rendered, target, kind: LossKind = LossKind()) -> tuple[float, np.ndarray]:
    """Mean-reduced loss and its gradient w.r.t. ``rendered``.

    D-SSIM is ``(1 - SSIM) / 2``.
    """
    r = np.asarray(rendered, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if r.shape != t.shape:
        raise DimensionMismatch(f"rendered {r.shape} vs target {t.shape}")
    n = r.size
    diff = r - t
    if kind.kind == "l2":
        return float(np.mean(diff ** 2)), 2.0 * diff / n
    if kind.kind == "l1":
        return float(np.mean(np.abs(diff))), np.sign(diff) / n
    s, ds = ssim_and_grad(r, t)
    dssim, g_dssim = 0.5 * (1.0 - s), -0.5 * ds
    if kind.kind == "ssim":
        return dssim, g_dssim
    loss = kind.l1_weight * float(np.mean(np.abs(diff))) + kind.dssim_weight * dssim
    grad = kind.l1_weight * np.sign(diff) / n + kind.dssim_weight * g_dssim
    return loss, grad


# ---------------------------------------------------------------------------
# Adam

GROUPS = ("position", "rotation", "log_scale", "opacity", "sh")

DEFAULT_LR = {
    "position": 1.6e-4,
    "rotation": 1e-3,
    "log_scale": 5e-3,
    "opacity": 5e-2,
    "sh": 2.5e-3,
    "sh_rest": 2.5e-3 / 20,
}


@dataclass
class AdamState:
    lr: dict
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15

    @classmethod
    def for_scene(cls, scene: Scene, lr: Optional[dict] = None) -> "AdamState":
        rates = dict(DEFAULT_LR)
        if lr:
            unknown = set(lr) - set(rates)
            if unknown:
                raise InvalidConfig(f"unknown learning-rate group(s): {sorted(unknown)}")
            rates.update(lr)
        params = scene.params()
        return cls(rates, {g: np.zeros_like(params[g]) for g in GROUPS},
                   {g: np.zeros_like(params[g]) for g in GROUPS})

    def __len__(self):
        return self.m["position"].shape[0]

    def take(self, index) -> "AdamState":
        return AdamState(dict(self.lr), {g: a[index] for g, a in self.m.items()},
                         {g: a[index] for g, a in self.v.items()}, self.step,
                         self.beta1, self.beta2, self.eps)

    def extend(self, n: int) -> "AdamState":
        """Append ``n`` zero-moment rows."""
        def pad(a):
            return np.concatenate([a, np.zeros((n,) + a.shape[1:])])

        return AdamState(dict(self.lr), {g: pad(a) for g, a in self.m.items()},
                         {g: pad(a) for g, a in self.v.items()}, self.step,
                         self.beta1, self.beta2, self.eps)


def adam_step(scene: Scene, grads: SceneGradients, state: AdamState) -> tuple[Scene, AdamState]:
    """One Adam update, in place; quaternions are renormalized afterwards."""
    if len(grads) != len(scene) or len(state) != len(scene):
        raise DimensionMismatch("scene, gradients and optimizer state lengths differ")
    if not grads.is_finite():
        raise NonFiniteGradient("non-finite gradient passed to adam_step")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    params = scene.params()
    g_all = grads.params()
    for group in GROUPS:
        p, g = params[group], g_all[group]
        m, v = state.m[group], state.v[group]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        step = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if group == "sh":
            p[:, :1] -= state.lr["sh"] * step[:, :1]
            p[:, 1:] -= state.lr["sh_rest"] * step[:, 1:]
        else:
            p -= state.lr[group] * step
    _renormalize(scene.rotations)
    return scene, state


def _renormalize(q: np.ndarray) -> None:
    # rows already unit to rounding are left alone: rewriting them would inject
    # ulp noise that Adam's tiny epsilon amplifies into full-size steps
    norms = np.linalg.norm(q, axis=1)
    off = np.abs(norms - 1.0) > 4 * np.finfo(np.float64).eps
    if off.any():
        q[off] = normalize_quaternions(q[off])


# ---------------------------------------------------------------------------
# density control


@dataclass
class DensityControlConfig:
    grad_threshold: float = 2e-4
    scale_split_threshold: Optional[float] = None  # None: 1% of the scene extent
    opacity_prune_threshold: float = 0.01
    interval: int = 100
    split_factor: float = 1.6
    active_pruning: bool = True

    def __post_init__(self):
        if self.grad_threshold <= 0 or self.opacity_prune_threshold <= 0:
            raise InvalidConfig("density-control thresholds must be positive")
        if self.scale_split_threshold is not None and self.scale_split_threshold <= 0:
            raise InvalidConfig("scale_split_threshold must be positive")
        if self.interval < 1:
            raise InvalidConfig("density-control interval must be >= 1")
        if self.split_factor <= 0:
            raise InvalidConfig("split_factor must be positive")

    def split_threshold_for(self, scene: Scene) -> float:
        if self.scale_split_threshold is not None:
            return self.scale_split_threshold
        return 0.01 * scene_extent(scene)


def scene_extent(scene: Scene) -> float:
    if "extent" in scene.meta:
        return float(scene.meta["extent"])
    p = scene.positions
    return float(max(np.linalg.norm(p - p.mean(axis=0), axis=1).max(), 1e-6))


@dataclass
class DensityStats:
    """Screen-space gradient statistics accumulated between density-control calls."""

    grad_accum: np.ndarray
    hits: np.ndarray
    position_grad: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "DensityStats":
        return cls(np.zeros(n), np.zeros(n, dtype=np.int64), np.zeros((n, 3)))

    def __len__(self):
        return self.grad_accum.shape[0]

    def add(self, grads: SceneGradients) -> None:
        seen = grads.hit_count > 0
        self.grad_accum[seen] += grads.screen_grad_norm[seen]
        self.hits += grads.hit_count
        self.position_grad += grads.position

    def mean_grad(self) -> np.ndarray:
        return np.where(self.hits > 0, self.grad_accum / np.maximum(self.hits, 1), 0.0)


@dataclass
class DensityResult:
    scene: Scene
    state: AdamState
    stats: DensityStats
    n_cloned: int = 0
    n_split: int = 0
    n_pruned: int = 0
    prune_skipped: bool = False


def _prune_mask(scene: Scene, threshold: float) -> np.ndarray:
    return sigmoid(scene.opacity_logits) < threshold


def _apply_prune(scene, state, remove) -> tuple[Scene, AdamState, bool]:
    if remove.all():
        warnings.warn("pruning would remove every Gaussian; skipped", EmptySceneWarning, stacklevel=3)
        return scene, state, True
    if not remove.any():
        return scene, state, False
    keep = ~remove
    return scene.take(keep), state.take(keep), False


def densify_and_prune(scene: Scene, state: AdamState, stats: DensityStats,
                      cfg: DensityControlConfig = DensityControlConfig(),
                      rng: Optional[np.random.Generator] = None,
                      prune: bool = True) -> DensityResult:
    """Clone small high-gradient Gaussians, split large ones, then prune by opacity.

    Survivors keep their order and exact values; clones follow them, then split
    children.  Optimizer rows for new primitives start at zero.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if not (len(scene) == len(state) == len(stats)):
        raise DimensionMismatch("scene, optimizer state and statistics lengths differ")
    grad = stats.mean_grad()
    scales = scene.scales
    max_scale = scales.max(axis=1)
    split_thr = cfg.split_threshold_for(scene)
    hot = grad > cfg.grad_threshold
    clone = hot & (max_scale <= split_thr)
    split = hot & (max_scale > split_thr)

    n_clone = int(clone.sum())
    if n_clone:
        # clones step half a sigma downhill along the accumulated positional gradient
        g3 = stats.position_grad[clone]
        g3n = np.linalg.norm(g3, axis=1, keepdims=True)
        direction = np.where(g3n > 0, -g3 / np.where(g3n > 0, g3n, 1.0), 0.0)
        clones = scene.take(clone)
        clones.positions += 0.5 * max_scale[clone][:, None] * direction

    n_split = int(split.sum())
    children = []
    if n_split:
        parents = scene.take(split)
        R = quat_to_rotmat(parents.rotations)
        for _ in range(2):
            eps = rng.standard_normal((n_split, 3)) * parents.scales
            child = parents.copy()
            child.positions = parents.positions + np.einsum("kij,kj->ki", R, eps)
            child.log_scales = np.log(parents.scales / cfg.split_factor)
            children.append(child)

    if n_split == len(scene):
        new_scene, new_state = children[0], state.take(np.zeros(0, dtype=np.int64))
        children = children[1:]
        new_state = new_state.extend(n_split)
    elif n_split:
        new_scene, new_state = scene.take(~split), state.take(~split)
    else:
        new_scene, new_state = scene.copy(), state.take(np.arange(len(state)))
    if n_clone:
        new_scene = new_scene.append(clones)
        new_state = new_state.extend(n_clone)
    for child in children:
        new_scene = new_scene.append(child)
        new_state = new_state.extend(n_split)

    before = len(new_scene)
    skipped = False
    if prune:
        remove = _prune_mask(new_scene, cfg.opacity_prune_threshold)
        new_scene, new_state, skipped = _apply_prune(new_scene, new_state, remove)
    return DensityResult(new_scene, new_state, DensityStats.zeros(len(new_scene)),
                         n_cloned=n_clone, n_split=n_split,
                         n_pruned=before - len(new_scene), prune_skipped=skipped)


def active_prune(scene: Scene, state: AdamState, threshold: float = 0.01) -> tuple[Scene, AdamState]:
    """Drop every primitive whose effective opacity is below ``threshold``."""
    if len(state) != len(scene):
        raise DimensionMismatch("scene and optimizer state lengths differ")
    scene, state, _ = _apply_prune(scene, state, _prune_mask(scene, threshold))
    return scene, state


def reset_opacity(scene: Scene, state: AdamState, ceiling: float = 0.01) -> None:
    """Clamp opacities to ``ceiling`` and clear their moments (3DGS training heuristic)."""
    capped = np.minimum(sigmoid(scene.opacity_logits), ceiling)
    scene.opacity_logits[:] = logit(capped)
    state.m["opacity"][:] = 0.0
    state.v["opacity"][:] = 0.0
