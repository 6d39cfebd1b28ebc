"""Pinhole cameras and the zoom factor.

Pixel ``(i, j)`` samples the continuous image coordinate ``(i + 0.5, j + 0.5)``;
a zoom factor multiplies focal lengths, principal point and resolution together.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Union

import numpy as np

from .exceptions import InvalidConfig, InvalidZoom

Zoom = Union[int, float, str, Fraction]


def as_zoom(value: Zoom) -> Fraction:
    """Parse a zoom factor such as ``4``, ``0.25`` or ``"1/4"`` into a Fraction."""
    try:
        if isinstance(value, str):
            z = Fraction(value.strip())
        elif isinstance(value, float):
            z = Fraction(value).limit_denominator(1 << 20)
        else:
            z = Fraction(value)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise InvalidZoom(f"cannot parse zoom factor {value!r}") from exc
    if z <= 0:
        raise InvalidZoom(f"zoom factor must be positive, got {value!r}")
    return z


@dataclass(frozen=True, eq=False)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray  # world -> camera, 3x3
    translation: np.ndarray  # world -> camera, 3

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidConfig("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise InvalidConfig("camera resolution must be at least 1x1")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(R) - 1) > 1e-9:
            raise InvalidConfig("camera rotation must be orthonormal with det +1")

    @classmethod
    def look_at(cls, eye, target, width: int, height: int, fov_x: float,
                up=(0.0, 0.0, 1.0)) -> "Camera":
        """Camera at ``eye`` facing ``target`` (x right, y down, z forward)."""
        eye = np.asarray(eye, dtype=np.float64)
        f = np.asarray(target, dtype=np.float64) - eye
        f /= np.linalg.norm(f)
        right = np.cross(f, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-12:
            right = np.cross(f, [0.0, 1.0, 0.0])
        right /= np.linalg.norm(right)
        down = np.cross(f, right)
        R = np.stack([right, down, f])
        focal = 0.5 * width / np.tan(0.5 * fov_x)
        return cls(focal, focal, 0.5 * width, 0.5 * height, int(width), int(height), R, -R @ eye)

    @property
    def position(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def same_as(self, other: "Camera") -> bool:
        return (
            (self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            == (other.fx, other.fy, other.cx, other.cy, other.width, other.height)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx), "fy": float(self.fy),
            "cx": float(self.cx), "cy": float(self.cy),
            "width": int(self.width), "height": int(self.height),
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], int(d["width"]), int(d["height"]),
                   np.array(d["rotation"]), np.array(d["translation"]))


def scaled_size(size: int, zoom: Zoom) -> int:
    n = as_zoom(zoom) * size
    return int(round(n))


def scale_camera(cam: Camera, zoom: Zoom) -> Camera:
    """Apply a zoom factor: intrinsics and resolution scale together, pose is kept."""
    z = as_zoom(zoom)
    width, height = scaled_size(cam.width, z), scaled_size(cam.height, z)
    if width < 1 or height < 1:
        raise InvalidZoom(f"zoom {z} maps {cam.width}x{cam.height} below 1x1")
    if z == 1:
        return cam
    f = float(z)
    return replace(cam, fx=cam.fx * f, fy=cam.fy * f, cx=cam.cx * f, cy=cam.cy * f,
                   width=width, height=height)
