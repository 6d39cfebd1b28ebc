import warnings
from pathlib import Path

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

from mipmapgs.camera import Camera  # noqa: E402
from mipmapgs.gaussians import Scene, rgb_to_sh_dc  # noqa: E402
from mipmapgs.io import load_scene  # noqa: E402
from mipmapgs.scenegen import TeacherSpec, generate_teacher, split_views  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
BASE_SCENE = FIXTURES / "base_scene.json"


def random_scene(rng, k, degree=1, extent=1.0, scale=(0.05, 0.3), logit=(-1.5, 2.0)):
    sh = rng.normal(scale=0.3, size=(k, (degree + 1) ** 2, 3))
    sh[:, 0] = rgb_to_sh_dc(rng.uniform(0.1, 0.9, (k, 3)))
    return Scene(
        rng.uniform(-extent, extent, (k, 3)),
        rng.normal(size=(k, 4)),
        np.log(rng.uniform(*scale, (k, 3))),
        rng.uniform(*logit, k),
        sh,
    )


def front_camera(width=32, height=32, fov_deg=50.0, eye=(0.0, -4.0, 0.5)):
    return Camera.look_at(eye, [0.0, 0.0, 0.0], width, height, np.deg2rad(fov_deg))


@pytest.fixture(scope="session")
def teacher_rig():
    teacher, cams = generate_teacher(TeacherSpec())
    train, test = split_views(cams)
    return teacher, cams, train, test


@pytest.fixture(scope="session")
def base_scene():
    """Scene fitted at x1 to the default teacher (regenerate with scripts/make_fixture.py)."""
    return load_scene(BASE_SCENE)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {title} ({detail})"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
