"""Run configuration: defaults, a JSON file, environment and CLI flags merged in
that order, with unknown keys rejected."""
from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any, Optional

from .adapt import AdaptConfig
from .camera import as_zoom
from .exceptions import InvalidConfig
from .fit import FitConfig
from .optim import DensityControlConfig, LossKind
from .projection import FilterMode
from .rasterizer import RenderConfig
from .scenegen import TeacherSpec, Toy1DSpec

SEED_ENV = "MIPMAPGS_SEED"
THREADS_ENV = "MIPMAPGS_THREADS"

# Defaults for the bundled desk-scale teacher.  The densification threshold is
# raised from the 2e-4 library default: at 96x96 with a few thousand primitives
# each splat carries a much larger share of the image gradient.
DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "render": {
        "tile_size": 16,
        "transmittance_floor": 1e-4,
        "background": [0.0, 0.0, 0.0],
        "filter": "constant",
        "dilation": 0.3,
    },
    "density": {
        "grad_threshold": 1e-3,
        "scale_split_threshold": None,
        "opacity_prune_threshold": 0.01,
        "interval": 100,
        "split_factor": 1.6,
        "active_pruning": True,
    },
    "teacher": {
        "seed": 0,
        "primitive_count": 300,
        "extent": 1.0,
        "sh_degree": 1,
        "n_cameras": 12,
        "radius": 3.5,
        "elevation_range": [-20.0, 35.0],
        "width": 96,
        "height": 96,
        "fov_deg": 50.0,
    },
    "fit": {
        "iterations": 3000,
        "init_count": 1000,
        "sh_degree": 1,
        "loss": "l1_dssim",
        "lr": {"position": 6e-4},
        "position_lr_final_ratio": 0.01,
        "densify_from": 100,
        "densify_until_fraction": 0.5,
    },
    "adapt": {
        "scale": "1/4",
        "iterations": None,
        "loss": "l2",
        "view_source": "test",
        "lr": {},
        "down_kernel": "bilinear",
        "up_kernel": "lanczos3",
        "radius_jitter": 0.05,
    },
    "toy1d": {
        "means": [3.0, 5.2, 9.0, 12.5, 13.4],
        "sigmas": [0.35, 0.2, 1.5, 0.15, 0.25],
        "amplitudes": [1.0, 0.8, 0.6, 1.0, 0.7],
        "spacing": 1.0,
        "length": 16.0,
        "zooms": ["1/4", "1/2", "1", "2", "4", "8"],
        "dilation": 0.3,
        "truncation": 3.0,
    },
}

# keys whose values are free-form dictionaries (learning-rate groups)
_OPEN_KEYS = {("fit", "lr"), ("adapt", "lr")}


def _merge(base: dict, override: dict, path: tuple = ()) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = path + (key,)
        if key not in base:
            raise InvalidConfig(f"unknown config key {'.'.join(here)!r}")
        if isinstance(base[key], dict) and here not in _OPEN_KEYS:
            if not isinstance(value, dict):
                raise InvalidConfig(f"config key {'.'.join(here)!r} must be an object")
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _set_dotted(tree: dict, dotted: str, value) -> dict:
    keys = dotted.split(".")
    patch: dict = {}
    node = patch
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value
    return patch


class RunConfig:
    """Effective configuration for one CLI run.

    ``RunConfig.load(path, overrides, env)`` applies the file, then
    ``MIPMAPGS_SEED``, then the dotted ``overrides`` (CLI flags), so an explicit
    flag always wins.
    """

    def __init__(self, data: Optional[dict] = None):
        self.data = _merge(DEFAULTS, data or {})
        self._validate()

    @classmethod
    def load(cls, path: Optional[os.PathLike] = None, overrides: Optional[dict] = None,
             env: Optional[dict] = None) -> "RunConfig":
        data = copy.deepcopy(DEFAULTS)
        if path is not None:
            try:
                file_doc = json.loads(Path(path).read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise InvalidConfig(f"config file {path} is not valid JSON: {exc}") from None
            if not isinstance(file_doc, dict):
                raise InvalidConfig("config file must hold a JSON object")
            data = _merge(data, file_doc)
        env = os.environ if env is None else env
        if env.get(SEED_ENV, "").strip():
            try:
                data["seed"] = int(env[SEED_ENV])
            except ValueError:
                raise InvalidConfig(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
        for dotted, value in (overrides or {}).items():
            if value is not None:
                data = _merge(data, _set_dotted(data, dotted, value))
        return cls(data)

    def _validate(self) -> None:
        # building every component surfaces bad values early, with their own messages
        self.render_config()
        self.density_config()
        self.teacher_spec()
        self.fit_config()
        self.adapt_config()
        self.toy1d_spec()
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise InvalidConfig("seed must be an integer")

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def render_config(self) -> RenderConfig:
        r = self.data["render"]
        if r["filter"] == "constant":
            filt = FilterMode.constant(float(r["dilation"]))
        elif r["filter"] == "none":
            filt = FilterMode.none()
        else:
            raise InvalidConfig(f"render.filter must be 'constant' or 'none', got {r['filter']!r}")
        return RenderConfig(tile_size=r["tile_size"], transmittance_floor=r["transmittance_floor"],
                            background=tuple(r["background"]), filter=filt)

    def density_config(self) -> DensityControlConfig:
        return DensityControlConfig(**self.data["density"])

    def teacher_spec(self) -> TeacherSpec:
        t = dict(self.data["teacher"])
        t["elevation_range"] = tuple(t["elevation_range"])
        return TeacherSpec(**t)

    def fit_config(self) -> FitConfig:
        f = dict(self.data["fit"])
        return FitConfig(
            iterations=f["iterations"], init_count=f["init_count"],
            extent=self.data["teacher"]["extent"], sh_degree=f["sh_degree"],
            loss=LossKind.parse(f["loss"]), lr=dict(f["lr"]),
            position_lr_final_ratio=f["position_lr_final_ratio"],
            density=self.density_config(), densify_from=f["densify_from"],
            densify_until_fraction=f["densify_until_fraction"], seed=self.seed,
        )

    def adapt_config(self) -> AdaptConfig:
        a = self.data["adapt"]
        return AdaptConfig(
            scale_N=as_zoom(a["scale"]), iterations_S=a["iterations"],
            loss=LossKind.parse(a["loss"]), density_interval=self.data["density"]["interval"],
            view_source=a["view_source"], lr=dict(a["lr"]), rng_seed=self.seed,
            density=self.density_config(), down_kernel=a["down_kernel"], up_kernel=a["up_kernel"],
        )

    def toy1d_spec(self) -> Toy1DSpec:
        t = self.data["toy1d"]
        return Toy1DSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in t.items()})


def thread_count(env: Optional[dict] = None) -> Optional[int]:
    """``MIPMAPGS_THREADS`` as an int; ``None`` when unset or 0 (automatic)."""
    env = os.environ if env is None else env
    raw = env.get(THREADS_ENV, "").strip()
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise InvalidConfig(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise InvalidConfig(f"{THREADS_ENV} must be >= 0")
    return n or None
