"""``mipmapgs`` command line: fit | adapt | render | eval | pseudo-gt | toy1d."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io
from .adapt import adapt, select_views
from .camera import Camera, as_zoom, scale_camera
from .config import RunConfig, thread_count
from .exceptions import DimensionMismatch, EmptyViewSet, InvalidConfig, MipmapGSError
from .fit import fit
from .gaussians import Scene
from .metrics import MetricReport, evaluate
from .mipmap import ResampleSpec, make_pseudo_gt
from .rasterizer import RenderConfig, render
from .scenegen import generate_teacher, split_views, teacher_image, toy1d, toy1d_csv

log = logging.getLogger("mipmapgs")


# ---------------------------------------------------------------------------
# pipeline helpers (importable; the CLI handlers below are thin wrappers)


def teacher_rig(cfg: RunConfig) -> tuple[Scene, list[Camera], list[Camera], list[Camera]]:
    teacher, cams = generate_teacher(cfg.teacher_spec())
    train, test = split_views(cams)
    return teacher, cams, train, test


def pick_views(name: str, cams, train, test) -> list[Camera]:
    views = {"test": test, "train": train, "all": cams}.get(name)
    if views is None:
        raise InvalidConfig(f"views must be one of test, train, all; got {name!r}")
    if not views:
        raise EmptyViewSet(f"no {name} views")
    return list(views)


def evaluate_scene(scene: Scene, views: Sequence[Camera], zoom, references: Sequence[np.ndarray],
                   render_cfg: RenderConfig) -> MetricReport:
    if not views:
        raise EmptyViewSet("evaluation needs at least one view")
    z = as_zoom(zoom)
    rendered = [render(scene, scale_camera(c, z), render_cfg) for c in views]
    for r, t in zip(rendered, references):
        if r.shape != np.shape(t):
            raise DimensionMismatch(f"render {r.shape} does not match reference {np.shape(t)}")
    return evaluate(rendered, list(references))


def teacher_references(teacher: Scene, views: Sequence[Camera], zoom) -> list[np.ndarray]:
    return [teacher_image(teacher, c, zoom) for c in views]


def cmd_fit(cfg: RunConfig) -> tuple[Scene, dict]:
    teacher, cams, train, test = teacher_rig(cfg)
    targets = [(c, teacher_image(teacher, c)) for c in train]
    scene, rep = fit(targets, cfg.fit_config(), cfg.render_config())
    metrics = evaluate_scene(scene, test, 1, teacher_references(teacher, test, 1), cfg.render_config())
    report = {
        "command": "fit",
        "k_initial": rep.k_initial,
        "k_final": rep.k_final,
        "loss_first": rep.loss_trace[0] if rep.loss_trace else None,
        "loss_last": rep.loss_trace[-1] if rep.loss_trace else None,
        "test_metrics_x1": metrics.to_dict(),
        "config": cfg.to_dict(),
    }
    log.info("fit: K=%d, test PSNR %.2f dB (%.1f s)", len(scene), metrics.psnr, rep.wall_time)
    return scene, report


def cmd_adapt(cfg: RunConfig, base: Scene) -> tuple[Scene, dict]:
    teacher, cams, train, test = teacher_rig(cfg)
    acfg = cfg.adapt_config()
    views = select_views(test, train, acfg.view_source, cfg.seed,
                         radius_jitter=cfg.data["adapt"]["radius_jitter"])
    rcfg = cfg.render_config()
    adapted, rep = adapt(base, views, acfg, rcfg)
    refs = teacher_references(teacher, test, acfg.scale_N)
    before = evaluate_scene(base, test, acfg.scale_N, refs, rcfg)
    after = evaluate_scene(adapted, test, acfg.scale_N, refs, rcfg)
    body = rep.to_dict()
    body.pop("wall_time_s")  # keeps reports byte-reproducible; timing goes to the log
    report = {
        "command": "adapt",
        **body,
        "teacher_eval": {
            "views": "test",
            "before": before.to_dict(),
            "after": after.to_dict(),
            "delta_psnr": after.psnr - before.psnr,
        },
        "config": cfg.to_dict(),
    }
    log.info("adapt x%s: K %d -> %d, PSNR %.2f -> %.2f dB (%.1f s)", acfg.scale_N, rep.k_before,
             rep.k_after, before.psnr, after.psnr, rep.wall_time)
    return adapted, report


def cmd_eval(cfg: RunConfig, scene: Scene, zoom, views: str = "test",
             images_dir: Optional[Path] = None) -> dict:
    teacher, cams, train, test = teacher_rig(cfg)
    chosen = pick_views(views, cams, train, test)
    if images_dir is None:
        refs = teacher_references(teacher, chosen, zoom)
        reference = "teacher"
    else:
        refs = [io.read_ppm(Path(images_dir) / f"view_{i:03d}.ppm") for i in range(len(chosen))]
        reference = str(images_dir)
    metrics = evaluate_scene(scene, chosen, zoom, refs, cfg.render_config())
    return {"command": "eval", "zoom": str(as_zoom(zoom)), "views": views, "reference": reference,
            "metrics": metrics.to_dict(), "config": cfg.to_dict()}


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="overrides the config seed and MIPMAPGS_SEED")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mipmapgs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a scene to teacher renders at x1")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True, help="output scene file")
    p.add_argument("--report", type=Path, help="JSON report path")
    p.add_argument("--iterations", type=int)
    p.add_argument("--init-count", type=int)

    p = sub.add_parser("adapt", help="adapt a fitted scene to a zoom factor")
    _add_common(p)
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--scale", required=True, help="zoom factor, e.g. 1/4 or 4")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--report", type=Path)
    p.add_argument("--iterations", type=int)
    p.add_argument("--loss", choices=["l2", "l1", "l1_dssim", "ssim"])
    p.add_argument("--views", help="test | train | synthetic:N")

    p = sub.add_parser("render", help="render one view to a PPM file")
    _add_common(p)
    p.add_argument("--scene", type=Path, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--view", type=int, help="index into the teacher camera ring")
    group.add_argument("--camera", type=Path, help="camera JSON file")
    p.add_argument("--zoom", default="1")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="PSNR/SSIM against teacher renders or an image folder")
    _add_common(p)
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--zoom", default="1")
    p.add_argument("--views", default="test", choices=["test", "train", "all"])
    p.add_argument("--images", type=Path, help="folder of view_NNN.ppm references")
    p.add_argument("--report", type=Path)

    p = sub.add_parser("pseudo-gt", help="write mipmap pseudo ground truth images")
    _add_common(p)
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--zoom", required=True)
    p.add_argument("--views", default="test", choices=["test", "train", "all"])
    p.add_argument("--kernel", help="resampling kernel (bilinear, lanczos3, bicubic, nearest)")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("toy1d", help="1D sampling-rate toy as CSV")
    _add_common(p)
    p.add_argument("--zooms", help="comma-separated zoom factors, e.g. 1/4,1,4")
    p.add_argument("--out", type=Path, required=True)
    return parser


def _overrides(args) -> dict:
    o = {"seed": args.seed}
    cmd = args.command
    if cmd == "fit":
        o.update({"fit.iterations": args.iterations, "fit.init_count": args.init_count})
    elif cmd == "adapt":
        o.update({"adapt.scale": args.scale, "adapt.iterations": args.iterations,
                  "adapt.loss": args.loss, "adapt.view_source": args.views})
    elif cmd == "toy1d" and args.zooms:
        o["toy1d.zooms"] = [z.strip() for z in args.zooms.split(",") if z.strip()]
    return o


def _configure_threads() -> None:
    n = thread_count()
    if n is None:
        return
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    _configure_threads()
    cfg = RunConfig.load(args.config, _overrides(args))

    if args.command == "fit":
        scene, report = cmd_fit(cfg)
        io.save_scene(args.out, scene)
        if args.report:
            io.write_report(args.report, report)
    elif args.command == "adapt":
        base = io.load_scene(args.scene)
        scene, report = cmd_adapt(cfg, base)
        io.save_scene(args.out, scene)
        if args.report:
            io.write_report(args.report, report)
    elif args.command == "render":
        scene = io.load_scene(args.scene)
        if args.camera is not None:
            cams = io.load_cameras(args.camera)
            cam = cams[0]
        else:
            _, cams, _, _ = teacher_rig(cfg)
            if not 0 <= args.view < len(cams):
                raise InvalidConfig(f"view index {args.view} outside 0..{len(cams) - 1}")
            cam = cams[args.view]
        io.write_image(args.out, render(scene, scale_camera(cam, args.zoom), cfg.render_config()))
    elif args.command == "eval":
        scene = io.load_scene(args.scene)
        report = cmd_eval(cfg, scene, args.zoom, args.views, args.images)
        text = io.report_to_text(report)
        if args.report:
            io.atomic_write(args.report, text)
        else:
            sys.stdout.write(text)
    elif args.command == "pseudo-gt":
        scene = io.load_scene(args.scene)
        _, cams, train, test = teacher_rig(cfg)
        views = pick_views(args.views, cams, train, test)
        z = as_zoom(args.zoom)
        a = cfg.data["adapt"]
        kernel = args.kernel or (a["down_kernel"] if z < 1 else a["up_kernel"])
        spec = None if z == 1 else ResampleSpec.for_zoom(z, kernel, kernel)
        pairs = make_pseudo_gt(scene, views, z, cfg.render_config(), spec)
        for i, (_, img) in enumerate(pairs):
            io.write_image(args.out_dir / f"view_{i:03d}.ppm", img)
        io.atomic_write(args.out_dir / "cameras.json", io.cameras_to_text([c for c, _ in pairs]))
    elif args.command == "toy1d":
        io.atomic_write(args.out, toy1d_csv(toy1d(cfg.toy1d_spec())))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        return run(argv)
    except MipmapGSError as exc:
        print(f"mipmapgs: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"mipmapgs: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
