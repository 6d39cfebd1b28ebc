"""Synthetic teacher scenes with reference images at any zoom, and a 1D
sampling-rate toy showing erosion (zoom-in) and thickening (zoom-out)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .camera import Camera, Zoom, as_zoom, scale_camera
from .exceptions import InvalidConfig
from .gaussians import SH_C0, Scene, logit, n_sh_coeffs, normalize_quaternions
from .mipmap import resize
from .projection import FilterMode
from .rasterizer import RenderConfig, render

DEFAULT_PALETTE = (
    (0.90, 0.30, 0.20),
    (0.20, 0.60, 0.90),
    (0.95, 0.85, 0.30),
    (0.30, 0.80, 0.40),
    (0.85, 0.85, 0.85),
    (0.60, 0.30, 0.80),
)


@dataclass(frozen=True)
class TeacherSpec:
    seed: int = 0
    primitive_count: int = 300
    extent: float = 1.0
    palette: tuple = DEFAULT_PALETTE
    sh_degree: int = 1
    scale_range: tuple = (0.01, 0.12)
    anisotropy: float = 2.0
    opacity_range: tuple = (0.6, 0.95)
    n_cameras: int = 12
    radius: float = 3.5
    elevation_range: tuple = (-20.0, 35.0)  # degrees
    width: int = 96
    height: int = 96
    fov_deg: float = 50.0

    def __post_init__(self):
        if self.primitive_count < 1:
            raise InvalidConfig("primitive_count must be >= 1")
        if self.extent <= 0 or self.radius <= 0:
            raise InvalidConfig("extent and radius must be positive")
        if self.n_cameras < 1:
            raise InvalidConfig("camera rig needs at least one camera")
        if not 0 < self.scale_range[0] <= self.scale_range[1]:
            raise InvalidConfig("scale_range must be positive and ordered")
        if not 0 < self.opacity_range[0] <= self.opacity_range[1] < 1:
            raise InvalidConfig("opacity_range must lie inside (0, 1)")
        if self.anisotropy < 1:
            raise InvalidConfig("anisotropy must be >= 1")
        if not self.palette or any(len(c) != 3 for c in self.palette):
            raise InvalidConfig("palette must be a non-empty list of RGB triples")
        if not 0 <= self.sh_degree <= 2:
            raise InvalidConfig("sh_degree must be 0, 1 or 2")
        if not 0 < self.fov_deg < 180:
            raise InvalidConfig("fov_deg must lie in (0, 180)")


def camera_ring(spec: TeacherSpec) -> list[Camera]:
    """Cameras evenly spaced in azimuth, elevations sweeping ``elevation_range``, all aimed at the origin."""
    lo, hi = np.radians(spec.elevation_range)
    cams = []
    for i in range(spec.n_cameras):
        az = 2.0 * math.pi * i / spec.n_cameras
        t = 0.5 - 0.5 * math.cos(2.0 * math.pi * i / spec.n_cameras) if spec.n_cameras > 1 else 0.5
        el = lo + (hi - lo) * t
        eye = spec.radius * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        cams.append(Camera.look_at(eye, np.zeros(3), spec.width, spec.height, math.radians(spec.fov_deg)))
    return cams


def split_views(cameras: Sequence[Camera]) -> tuple[list[Camera], list[Camera]]:
    """Alternate around the ring: even indices train, odd indices test."""
    return list(cameras[0::2]), list(cameras[1::2])


def generate_teacher(spec: TeacherSpec = TeacherSpec()) -> tuple[Scene, list[Camera]]:
    rng = np.random.default_rng(spec.seed)
    k = spec.primitive_count
    positions = rng.uniform(-spec.extent, spec.extent, size=(k, 3))
    rotations = normalize_quaternions(rng.standard_normal((k, 4)))
    lo, hi = np.log(spec.scale_range)
    base = rng.uniform(lo, hi, size=(k, 1))
    spread = math.log(spec.anisotropy)
    log_scales = base + rng.uniform(-spread / 2, spread / 2, size=(k, 3))
    opacity = rng.uniform(*spec.opacity_range, size=k)
    palette = np.asarray(spec.palette, dtype=np.float64)
    colors = np.clip(palette[rng.integers(0, len(palette), size=k)]
                     + rng.uniform(-0.08, 0.08, size=(k, 3)), 0.02, 0.98)
    sh = np.zeros((k, n_sh_coeffs(spec.sh_degree), 3))
    sh[:, 0] = (colors - 0.5) / SH_C0
    if spec.sh_degree > 0:
        sh[:, 1:] = rng.normal(0.0, 0.05, size=sh[:, 1:].shape)
    scene = Scene(positions, rotations, log_scales, logit(opacity), sh,
                  meta={"scale": "1", "seed": int(spec.seed), "extent": float(spec.extent),
                        "source": "teacher"})
    return scene, camera_ring(spec)


#: teacher references are rendered at this zoom (or finer) and area-averaged down
REFERENCE_ZOOM = 4

TEACHER_RENDER = RenderConfig(filter=FilterMode.none())


def teacher_image(teacher: Scene, cam: Camera, zoom: Zoom = 1,
                  cfg: RenderConfig = TEACHER_RENDER,
                  reference_zoom: int = REFERENCE_ZOOM) -> np.ndarray:
    """Anti-aliased reference image of the teacher at ``zoom``.

    The teacher is rendered at an integer multiple ``m`` of the target
    resolution, with ``zoom * m >= reference_zoom``, then each ``m x m`` block
    is averaged, approximating the pixel-area integral of the teacher radiance.
    """
    z = as_zoom(zoom)
    target = scale_camera(cam, z)
    m = max(1, math.ceil(reference_zoom / z))
    fine = scale_camera(cam, z * m)
    img = render(teacher, fine, cfg)
    if m == 1:
        return img
    h, w = target.height, target.width
    if fine.height == h * m and fine.width == w * m:
        return img.reshape(h, m, w, m, 3).mean(axis=(1, 3))
    return resize(img, h, w, "bilinear")


# ---------------------------------------------------------------------------
# 1D toy


@dataclass(frozen=True)
class Toy1DSpec:
    means: tuple = (3.0, 5.2, 9.0, 12.5, 13.4)
    sigmas: tuple = (0.35, 0.2, 1.5, 0.15, 0.25)
    amplitudes: tuple = (1.0, 0.8, 0.6, 1.0, 0.7)
    spacing: float = 1.0
    length: float = 16.0
    zooms: tuple = ("1/4", "1/2", "1", "2", "4", "8")
    dilation: float = 0.3
    truncation: float = 3.0

    def __post_init__(self):
        n = len(self.means)
        if n == 0 or len(self.sigmas) != n or len(self.amplitudes) != n:
            raise InvalidConfig("means, sigmas and amplitudes must be non-empty and equally long")
        if any(s <= 0 for s in self.sigmas):
            raise InvalidConfig("toy component sigmas must be positive")
        if any(a < 0 for a in self.amplitudes):
            raise InvalidConfig("toy component amplitudes must be non-negative")
        if self.spacing <= 0 or self.length <= 0:
            raise InvalidConfig("spacing and length must be positive")
        if self.dilation < 0 or self.truncation <= 0:
            raise InvalidConfig("dilation must be >= 0 and truncation > 0")
        if not self.zooms:
            raise InvalidConfig("at least one zoom factor is required")
        for z in self.zooms:
            as_zoom(z)


@dataclass
class Toy1DLevel:
    zoom: str
    positions: np.ndarray  # cell centres, world units
    raw: np.ndarray  # truncated, undilated accumulation
    dilated: np.ndarray  # truncated at the dilated extent
    n_contributors: np.ndarray  # components reaching the cell without dilation

    @property
    def zero_cells(self) -> int:
        return int(np.count_nonzero(self.n_contributors == 0))


def _accumulate(spec: Toy1DSpec, x: np.ndarray, zoom: float, dilation: float,
                truncate: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell sums with every length measured in cells of the zoomed grid."""
    mu = np.asarray(spec.means)[:, None]
    var = (np.asarray(spec.sigmas)[:, None] * zoom / spec.spacing) ** 2 + dilation
    d = (x[None, :] - mu) * zoom / spec.spacing
    vals = np.asarray(spec.amplitudes)[:, None] * np.exp(-0.5 * d * d / var)
    reach = np.abs(d) <= spec.truncation * np.sqrt(var) if truncate else np.ones_like(vals, bool)
    vals = np.where(reach, vals, 0.0)
    return vals.sum(axis=0), (reach & (vals > 0)).sum(axis=0)


def toy1d(spec: Toy1DSpec = Toy1DSpec()) -> list[Toy1DLevel]:
    levels = []
    for z_raw in spec.zooms:
        z = as_zoom(z_raw)
        n = max(1, round(spec.length * z / spec.spacing))
        x = (np.arange(n) + 0.5) * spec.length / n
        raw, count = _accumulate(spec, x, float(z), 0.0)
        dilated, _ = _accumulate(spec, x, float(z), spec.dilation)
        levels.append(Toy1DLevel(str(z), x, raw, dilated, count))
    return levels


def toy1d_reference(spec: Toy1DSpec, zoom: Zoom = 1) -> np.ndarray:
    """Untruncated, dilated mixture summed directly on the zoomed grid."""
    z = as_zoom(zoom)
    n = max(1, round(spec.length * z / spec.spacing))
    x = (np.arange(n) + 0.5) * spec.length / n
    return _accumulate(spec, x, float(z), spec.dilation, truncate=False)[0]


TOY_COLUMNS = ("zoom", "cell_index", "raw", "dilated", "n_contributors")


def toy1d_csv(levels: list[Toy1DLevel]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TOY_COLUMNS)
    for lv in levels:
        for i in range(lv.raw.size):
            writer.writerow([lv.zoom, i, repr(float(lv.raw[i])), repr(float(lv.dilated[i])),
                             int(lv.n_contributors[i])])
    return buf.getvalue()
