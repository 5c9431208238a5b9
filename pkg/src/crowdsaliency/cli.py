"""Command-line interface: analyze, synth, eval, inspect.

Flags mirror the pipeline configuration one-to-one in kebab-case; a JSON
config file can supply any subset, with precedence CLI > file > defaults.
On failure the process exits nonzero after printing a one-line
"<error-category>: <message>" to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateGraphError,
    FloFormatError,
    IntegrationError,
    NumericalError,
    PipelineStageError,
    SceneValidationError,
)
from .evaluation import (
    f_measure,
    load_ground_truth,
    match_detections,
    report_to_dict,
    save_ground_truth,
    summary_table,
)
from .flowfield import downsample_to_grid, mean_flow, save_flo, save_sequence
from .advection import flow_map
from .phase import compute_static_mask
from .pipeline import (
    PipelineConfig,
    load_input,
    load_regions,
    run_pipeline,
    subseed,
    write_pgm16,
)
from .scenes import NoiseSpec, load_scene, scene_ground_truth, synth_scene
from .stability import ftle_field

_CONFIG_FLAGS = (
    ("tau", int),
    ("dt", float),
    ("alpha", float),
    ("k", int),
    ("m", int),
    ("seed", int),
    ("high-pct", float),
    ("low-pct", float),
    ("epsilon-static", float),
    ("min-region", int),
    ("fps", float),
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with pipeline parameters")
    parser.add_argument("--grid", help="particle grid as COLSxROWS (default 64x48)")
    for name, typ in _CONFIG_FLAGS:
        parser.add_argument(f"--{name}", type=typ, default=None)


def _build_config(args: argparse.Namespace, input_path=None, out_dir=None) -> PipelineConfig:
    values: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        values.update(json.loads(path.read_text()))
    for name, _ in _CONFIG_FLAGS:
        attr = name.replace("-", "_")
        flag = getattr(args, attr, None)
        if flag is not None:
            values[attr] = flag
    grid = getattr(args, "grid", None) or values.pop("grid", None)
    if grid:
        if isinstance(grid, str):
            cols, _, rows = grid.partition("x")
            values["grid_cols"], values["grid_rows"] = int(cols), int(rows)
        else:
            values["grid_cols"], values["grid_rows"] = int(grid[0]), int(grid[1])
    if input_path is not None:
        values["input"] = input_path
    if out_dir is not None:
        values["out_dir"] = out_dir
    return PipelineConfig(**values)


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _build_config(args, input_path=args.input, out_dir=args.out)
    result = run_pipeline(config)
    for w, win in enumerate(result.windows):
        tag = f"window {w} (frames {win.start}..{win.start + config.tau})"
        if not len(win.regions):
            print(f"{tag}: no salient regions")
        for r in win.regions:
            b = r.bbox
            print(
                f"{tag}: {r.polarity} region x={b.x:.0f} y={b.y:.0f} w={b.w:.0f} h={b.h:.0f}"
                f" score={r.score:.6g} particles={r.particles}"
            )
    if config.out_dir is not None:
        print(f"artifacts written to {config.out_dir}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = load_scene(args.scene)
    if args.seed is not None and spec.noise is not None:
        # Re-key scene noise from the run seed so one seed drives everything.
        spec.noise = NoiseSpec(
            region=spec.noise.region,
            amplitude=spec.noise.amplitude,
            seed=subseed(args.seed, "noise"),
        )
    seq = synth_scene(spec)
    paths = save_sequence(seq, args.out)
    print(f"wrote {len(paths)} frames to {args.out}")
    if args.ground_truth:
        gt = scene_ground_truth(spec)
        save_ground_truth(gt, args.ground_truth)
        print(f"wrote ground truth ({len(gt.entries)} regions) to {args.ground_truth}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    regions = load_regions(args.regions)
    gt = load_ground_truth(args.ground_truth)
    report = match_detections(regions.regions, gt, thresh=args.thresh)
    print(summary_table(report), end="")
    print(f"F-measure: {f_measure(report):.3f}")
    if args.out:
        Path(args.out).write_text(
            json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
        )
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    config = _build_config(args, input_path=args.input)
    seq = load_input(config)
    mean = mean_flow(seq, args.start, config.tau)
    grid = config.grid()
    out = Path(args.out)
    if args.stage == "mean":
        save_flo(mean, out)
    elif args.stage == "grid":
        save_flo(downsample_to_grid(mean, grid), out)
    elif args.stage == "displacement":
        disp = flow_map(mean, grid, config.steps(), config.dt)
        from .flowfield import FlowField

        save_flo(FlowField(u=disp.dx, v=disp.dy), out)
    elif args.stage == "ftle":
        disp = flow_map(mean, grid, config.steps(), config.dt)
        stab = ftle_field(disp)
        write_pgm16(stab.phi, out, out.with_suffix(".txt"))
    elif args.stage == "static":
        gf = downsample_to_grid(mean, grid)
        mask = compute_static_mask(gf, config.epsilon_static)
        pix = np.where(mask, 65535, 0).astype(">u2")
        out.write_bytes(f"P5\n{mask.shape[1]} {mask.shape[0]}\n65535\n".encode() + pix.tobytes())
    else:
        raise ValueError(f"unknown stage {args.stage!r}")
    print(f"wrote {args.stage} dump to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowd-saliency",
        description="Detect salient regions in crowd motion flow fields",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run the full saliency pipeline")
    p.add_argument("--input", required=True, help=".flo directory or scene .json")
    p.add_argument("--out", default=None, help="artifact output directory")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("synth", help="synthesize a scene into a .flo directory")
    p.add_argument("--scene", required=True, help="scene .json")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="re-key scene noise from this seed")
    p.add_argument("--ground-truth", default=None, help="also write scene ground truth JSON")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("eval", help="match detected regions against ground truth")
    p.add_argument("--regions", required=True, help="regions.json from analyze")
    p.add_argument("--ground-truth", required=True, help="ground truth JSON")
    p.add_argument("--thresh", type=float, default=0.5, help="IoU threshold (default 0.5)")
    p.add_argument("--out", default=None, help="write machine-readable report JSON")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("inspect", help="dump an intermediate pipeline stage")
    p.add_argument("--input", required=True)
    p.add_argument(
        "--stage", required=True, choices=["mean", "grid", "displacement", "ftle", "static"]
    )
    p.add_argument("--out", required=True)
    p.add_argument("--start", type=int, default=0)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_inspect)
    return parser


_ERROR_CATEGORIES = (
    (FloFormatError, "format-error"),
    (SceneValidationError, "scene-error"),
    (IntegrationError, "integration-error"),
    (NumericalError, "numerical-error"),
    (DegenerateGraphError, "degenerate-graph"),
    (FileNotFoundError, "input-error"),
    (ValueError, "param-error"),
    (OSError, "io-error"),
)


def _categorize(exc: BaseException) -> str:
    if isinstance(exc, PipelineStageError):
        return f"stage-{exc.stage}:{_categorize(exc.cause)}"
    for etype, cat in _ERROR_CATEGORIES:
        if isinstance(exc, etype):
            return cat
    return "internal-error"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.fn(args)
    except Exception as exc:  # single reporting point for the documented categories
        print(f"{_categorize(exc)}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
