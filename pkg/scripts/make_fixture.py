"""Regenerate tests/fixtures/base_scene.json (default teacher, default fit, seed 0).

Takes about three minutes on one core.  The slow CLI test checks that a fresh
fit reproduces the committed file byte for byte.
"""
import os
import sys
from pathlib import Path

from mipmapgs.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    os.environ.pop("MIPMAPGS_SEED", None)
    out = ROOT / "tests" / "fixtures" / "base_scene.json"
    sys.exit(main(["fit", "--out", str(out), "-v", *sys.argv[1:]]))
