"""Scene files, PPM images, JSON reports and atomic writes.

Scene files are JSON with every float stored as a hexadecimal literal
(``float.hex``), one Gaussian per line, so parsing and re-serializing a file
reproduces it byte for byte.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np

from .camera import Camera
from .exceptions import SceneFormatError
from .gaussians import Scene, n_sh_coeffs

FORMAT_VERSION = 1
GAMMA = 2.2

PathLike = Union[str, os.PathLike]


def atomic_write(path: PathLike, data: Union[bytes, str]) -> None:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# scene files


def _hex_list(a) -> list:
    return [float(v).hex() for v in np.asarray(a, dtype=np.float64).ravel()]


def _unhex(v, where: str) -> float:
    if not isinstance(v, str):
        raise SceneFormatError(f"{where}: expected a hex float string, got {v!r}")
    try:
        return float.fromhex(v)
    except ValueError:
        raise SceneFormatError(f"{where}: bad hex float {v!r}") from None


def _unhex_list(values, n: int, where: str) -> list:
    if not isinstance(values, list) or len(values) != n:
        raise SceneFormatError(f"{where}: expected {n} values")
    return [_unhex(v, where) for v in values]


def scene_to_text(scene: Scene) -> str:
    head = {"format_version": FORMAT_VERSION, "sh_degree": scene.sh_degree, "count": len(scene)}
    lines = ["{"]
    for key, value in head.items():
        lines.append(f' "{key}": {json.dumps(value)},')
    lines.append(f' "meta": {json.dumps(scene.meta, sort_keys=True)},')
    lines.append(' "gaussians": [')
    records = []
    for k in range(len(scene)):
        rec = {
            "position": _hex_list(scene.positions[k]),
            "rotation": _hex_list(scene.rotations[k]),
            "log_scale": _hex_list(scene.log_scales[k]),
            "opacity_logit": float(scene.opacity_logits[k]).hex(),
            "sh_coeffs": _hex_list(scene.sh_coeffs[k]),
        }
        records.append("  " + json.dumps(rec, separators=(",", ":")))
    lines.append(",\n".join(records))
    lines.append(" ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def scene_from_text(text: str) -> Scene:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"scene file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SceneFormatError("scene file must hold a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise SceneFormatError(f"unsupported format_version {doc.get('format_version')!r}")
    degree = doc.get("sh_degree")
    if degree not in (0, 1, 2):
        raise SceneFormatError(f"unsupported sh_degree {degree!r}")
    records = doc.get("gaussians")
    if not isinstance(records, list) or not records:
        raise SceneFormatError("scene file holds no Gaussians")
    if doc.get("count", len(records)) != len(records):
        raise SceneFormatError(f"count {doc.get('count')} does not match {len(records)} records")
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise SceneFormatError("meta must be an object")
    n_sh = 3 * n_sh_coeffs(degree)
    cols = {"position": [], "rotation": [], "log_scale": [], "opacity_logit": [], "sh_coeffs": []}
    for i, rec in enumerate(records):
        where = f"gaussian {i}"
        if not isinstance(rec, dict) or set(rec) != set(cols):
            raise SceneFormatError(f"{where}: expected fields {sorted(cols)}")
        cols["position"].append(_unhex_list(rec["position"], 3, where))
        cols["rotation"].append(_unhex_list(rec["rotation"], 4, where))
        cols["log_scale"].append(_unhex_list(rec["log_scale"], 3, where))
        cols["opacity_logit"].append(_unhex(rec["opacity_logit"], where))
        cols["sh_coeffs"].append(_unhex_list(rec["sh_coeffs"], n_sh, where))
    return Scene(
        np.array(cols["position"]),
        np.array(cols["rotation"]),
        np.array(cols["log_scale"]),
        np.array(cols["opacity_logit"]),
        np.array(cols["sh_coeffs"]).reshape(len(records), -1, 3),
        meta=meta,
    )


def save_scene(path: PathLike, scene: Scene) -> None:
    atomic_write(path, scene_to_text(scene))


def load_scene(path: PathLike) -> Scene:
    return scene_from_text(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# cameras


def cameras_to_text(cams: list[Camera]) -> str:
    return json.dumps({"cameras": [c.to_dict() for c in cams]}, indent=1) + "\n"


def load_cameras(path: PathLike) -> list[Camera]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        items = doc["cameras"] if isinstance(doc, dict) and "cameras" in doc else [doc]
        return [Camera.from_dict(d) for d in items]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SceneFormatError(f"cannot parse camera file {path}: {exc}") from None


# ---------------------------------------------------------------------------
# images


def encode_srgb8(img) -> np.ndarray:
    """Linear [0, 1] floats to 8-bit with a 1/2.2 power curve."""
    a = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.round(255.0 * a ** (1.0 / GAMMA)).astype(np.uint8)


def decode_srgb8(data) -> np.ndarray:
    return (np.asarray(data, dtype=np.float64) / 255.0) ** GAMMA


def ppm_bytes(img) -> bytes:
    a = np.asarray(img)
    if a.ndim != 3 or a.shape[2] != 3:
        raise SceneFormatError(f"PPM output needs an (H, W, 3) image, got {a.shape}")
    h, w = a.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + encode_srgb8(a).tobytes()


def write_image(path: PathLike, img) -> None:
    if Path(path).suffix.lower() != ".ppm":
        raise SceneFormatError(f"unsupported image format {Path(path).suffix!r}; use .ppm")
    atomic_write(path, ppm_bytes(img))


def read_ppm(path: PathLike) -> np.ndarray:
    """Read a binary P6 file back into linear floats."""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P6" or int(fields[3]) != 255:
        raise SceneFormatError(f"{path}: only 8-bit binary PPM (P6) is supported")
    w, h = int(fields[1]), int(fields[2])
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos + 1)
    return decode_srgb8(pixels.reshape(h, w, 3))


# ---------------------------------------------------------------------------
# reports


def _jsonable(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def report_to_text(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2) + "\n"


def write_report(path: PathLike, report: dict) -> None:
    atomic_write(path, report_to_text(report))
