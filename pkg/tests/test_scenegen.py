import csv
import io
import math
from fractions import Fraction

import numpy as np
import pytest

from mipmapgs.camera import scale_camera
from mipmapgs.exceptions import InvalidConfig
from mipmapgs.projection import FilterMode, project_gaussian
from mipmapgs.rasterizer import RenderConfig, render
from mipmapgs.scenegen import (
    TOY_COLUMNS,
    TeacherSpec,
    Toy1DSpec,
    generate_teacher,
    split_views,
    teacher_image,
    toy1d,
    toy1d_csv,
    toy1d_reference,
)


def direct_sum(spec, zoom):
    """Plain double loop over cells and components; no truncation."""
    n = max(1, round(spec.length * zoom / spec.spacing))
    out = []
    for i in range(n):
        x = (i + 0.5) * spec.length / n
        total = 0.0
        for m, s, a in zip(spec.means, spec.sigmas, spec.amplitudes):
            d = (x - m) * zoom / spec.spacing
            var = (s * zoom / spec.spacing) ** 2 + spec.dilation
            total += a * math.exp(-0.5 * d * d / var)
        out.append(total)
    return np.array(out)


def test_teacher_is_deterministic():
    s1, c1 = generate_teacher(TeacherSpec(seed=3, primitive_count=40))
    s2, c2 = generate_teacher(TeacherSpec(seed=3, primitive_count=40))
    assert s1.equals(s2)
    assert all(a.same_as(b) for a, b in zip(c1, c2))
    assert not s1.equals(generate_teacher(TeacherSpec(seed=4, primitive_count=40))[0])


def test_teacher_rig_faces_centre_and_alternates():
    scene, cams = generate_teacher()
    assert len(scene) == 300 and len(cams) == 12
    assert np.all(np.abs(scene.positions) <= 1.0)
    assert np.all((scene.opacities >= 0.6 - 1e-12) & (scene.opacities <= 0.95 + 1e-12))
    for cam in cams:
        centre = cam.rotation @ np.zeros(3) + cam.translation
        assert centre[2] > 0 and np.allclose(centre[:2], 0, atol=1e-9)
    train, test = split_views(cams)
    assert train == cams[0::2] and test == cams[1::2]


def test_single_primitive_renders_only_near_its_projection():
    scene, cams = generate_teacher(TeacherSpec(primitive_count=1, seed=1))
    assert len(scene) == 1
    cam = cams[0]
    img = render(scene, cam)
    mask = np.any(img > 0, axis=-1)
    assert mask.any()
    sp = project_gaussian(scene[0], cam, RenderConfig().filter)
    ys, xs = np.nonzero(mask)
    dist = np.hypot(xs + 0.5 - sp.mean2d[0], ys + 0.5 - sp.mean2d[1])
    assert dist.max() <= sp.radius + 1.5


def test_default_teacher_coverage(teacher_rig):
    teacher, cams, _, _ = teacher_rig
    for cam in cams:
        img = teacher_image(teacher, cam)
        assert np.mean(np.any(img > 1 / 255, axis=-1)) > 0.05


def test_teacher_image_sizes_and_box_average(teacher_rig):
    teacher, cams, _, _ = teacher_rig
    cam = cams[1]
    assert teacher_image(teacher, cam, "1/4").shape == (24, 24, 3)
    assert teacher_image(teacher, cam, 4).shape == (384, 384, 3)
    fine = render(teacher, scale_camera(cam, 4), RenderConfig(filter=FilterMode.none()))
    boxed = fine.reshape(96, 4, 96, 4, 3).mean(axis=(1, 3))
    assert np.allclose(teacher_image(teacher, cam), boxed, atol=1e-12)


def test_teacher_spec_validation():
    for kw in ({"primitive_count": 0}, {"opacity_range": (0.5, 1.0)}, {"n_cameras": 0},
               {"anisotropy": 0.5}, {"palette": ()}):
        with pytest.raises(InvalidConfig):
            TeacherSpec(**kw)


def test_toy_spec_validation():
    with pytest.raises(InvalidConfig):
        Toy1DSpec(sigmas=(0.0, 0.2, 1.5, 0.15, 0.25))
    with pytest.raises(InvalidConfig):
        Toy1DSpec(spacing=0)
    with pytest.raises(InvalidConfig):
        Toy1DSpec(means=(1.0,), sigmas=(1.0, 2.0), amplitudes=(1.0,))


def test_wide_component_zoom_out_has_no_misses():
    spec = Toy1DSpec(means=(8.0,), sigmas=(5.0,), amplitudes=(1.0,), zooms=("1/4",))
    (lv,) = toy1d(spec)
    assert lv.raw.size == 4 and lv.zero_cells == 0


def test_narrow_gap_zoom_in_has_misses():
    # 6 units apart with sigma 0.2: 2 * 3 sigma = 1.2 < 6
    spec = Toy1DSpec(means=(5.0, 11.0), sigmas=(0.2, 0.2), amplitudes=(1.0, 1.0), zooms=("4",))
    (lv,) = toy1d(spec)
    between = (lv.positions > 5.6) & (lv.positions < 10.4)
    assert np.any(lv.n_contributors[between] == 0)
    assert np.all(lv.raw[between] == 0)


@pytest.mark.parametrize("spec", [
    Toy1DSpec(),
    Toy1DSpec(means=(2.0, 7.5), sigmas=(0.1, 0.3), amplitudes=(1.0, 0.5), dilation=0.5),
    Toy1DSpec(means=(4.0, 4.5, 12.0), sigmas=(0.05, 1.0, 0.4), amplitudes=(0.2, 1.0, 0.9), spacing=0.5),
])
def test_zoom_one_dilated_matches_direct_sum(spec):
    lv = next(lv for lv in toy1d(spec) if lv.zoom == "1")
    ref = direct_sum(spec, 1.0)
    assert np.allclose(toy1d_reference(spec, 1), ref, rtol=1e-12)
    assert np.abs(lv.dilated - ref).max() <= 0.05 * ref.max()
    assert abs(lv.dilated.sum() - ref.sum()) <= 0.05 * ref.sum()


@pytest.mark.parametrize("spec", [
    Toy1DSpec(),
    Toy1DSpec(zooms=("1", "2", "4", "8", "16")),
    Toy1DSpec(means=(3.0, 10.0), sigmas=(0.1, 0.25), amplitudes=(1.0, 1.0), zooms=("1", "2", "4", "8")),
])
def test_erosion_and_thickness_properties(spec):
    levels = toy1d(spec)
    zoom_in = sorted((lv for lv in levels if Fraction(lv.zoom) >= 1), key=lambda lv: Fraction(lv.zoom))
    zeros = [lv.zero_cells for lv in zoom_in]
    assert zeros == sorted(zeros)
    for lv in levels:
        assert lv.dilated.mean() >= lv.raw.mean()
        assert np.all(lv.dilated >= lv.raw)


def test_toy_csv_table():
    levels = toy1d()
    rows = list(csv.reader(io.StringIO(toy1d_csv(levels))))
    assert tuple(rows[0]) == TOY_COLUMNS
    assert len(rows) - 1 == sum(lv.raw.size for lv in levels)
    assert {r[0] for r in rows[1:]} == {"1/4", "1/2", "1", "2", "4", "8"}
    first = next(lv for lv in levels if lv.zoom == "1/4")
    assert float(rows[1][2]) == first.raw[0] and int(rows[1][4]) == first.n_contributors[0]
