"""End-to-end saliency pipeline: configuration, orchestration, artifacts.

A run is a pure function of (config, input files). All randomness flows from
the single config seed through named sub-seeds, and artifact bytes are fully
determined by the run, so identical configs reproduce identical outputs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import ranking
from .errors import PipelineStageError
from .evaluation import GroundTruth
from .flowfield import (
    FlowSequence,
    GridSpec,
    block_edges,
    downsample_to_grid,
    load_sequence,
    mean_flow,
)
from .advection import flow_map
from .phase import EPSILON_STATIC, compute_static_mask, phase_structure
from .ranking import (
    ExtremaResult,
    RegionSet,
    ScoreVector,
    aggregate_ranks,
    assemble_features,
    build_affinity,
    extract_extrema,
    knn_graph,
    normalized_operator,
    regions_from_mask,
    sample_queries,
)
from .scenes import SceneSpec, load_scene, scene_to_dict, synth_scene
from .stability import ftle_field, stability_structure

logger = logging.getLogger(__name__)

# Sub-seed tags: every random consumer derives its own stream from the config
# seed so subsystems stay independently reproducible.
_SUBSEED_TAGS = {"queries": 1, "noise": 2}

# Feature spread below which the scene counts as degenerate (nothing salient).
FEATURE_DEGENERACY_TOL = 1e-12


def subseed(seed: int, tag: str) -> int:
    """Deterministic named sub-seed derived from the config seed."""
    ss = np.random.SeedSequence([int(seed), _SUBSEED_TAGS[tag]])
    return int(ss.generate_state(1)[0])


@dataclass
class PipelineConfig:
    input: str | Path | SceneSpec | None = None
    tau: int = 50
    grid_cols: int = 64
    grid_rows: int = 48
    dt: float = 1.0
    alpha: float = 0.99
    k: int = 7
    m: int = 100
    seed: int = 0
    high_pct: float = 5.0
    low_pct: float = 5.0
    epsilon_static: float = EPSILON_STATIC
    min_region: int = ranking.MIN_REGION_PARTICLES
    fps: float = 25.0
    out_dir: str | Path | None = None

    def grid(self) -> GridSpec:
        return GridSpec(cols=self.grid_cols, rows=self.grid_rows)

    def steps(self) -> int:
        steps = int(round(self.tau / self.dt))
        if steps < 1 or abs(steps * self.dt - self.tau) > 1e-9:
            raise ValueError(f"tau={self.tau} is not an integer number of dt={self.dt} steps")
        return steps

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.input, SceneSpec):
            d["input"] = scene_to_dict(self.input)
        elif self.input is not None:
            d["input"] = str(self.input)
        if self.out_dir is not None:
            d["out_dir"] = str(self.out_dir)
        d["subseeds"] = {tag: subseed(self.seed, tag) for tag in _SUBSEED_TAGS}
        return d


@dataclass
class WindowResult:
    start: int
    extrema: ExtremaResult
    regions: RegionSet
    scores: ScoreVector
    index_map: np.ndarray
    phi: np.ndarray
    diagnostics: dict = field(default_factory=dict)


@dataclass
class PipelineResult:
    config: PipelineConfig
    windows: list[WindowResult]
    artifacts: dict[str, Path] = field(default_factory=dict)

    @property
    def extrema(self) -> ExtremaResult:
        return self.windows[0].extrema

    @property
    def regions(self) -> RegionSet:
        return self.windows[0].regions


def load_input(config: PipelineConfig) -> FlowSequence:
    """Resolve the configured input into a flow sequence."""
    src = config.input
    if isinstance(src, SceneSpec):
        return synth_scene(src)
    if src is None:
        raise ValueError("pipeline config has no input")
    path = Path(src)
    if path.is_dir():
        return load_sequence(path, fps=config.fps)
    if path.is_file() and path.suffix == ".json":
        return synth_scene(load_scene(path))
    raise FileNotFoundError(f"input not found (expected .flo directory or scene .json): {path}")


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError(name, exc) from exc


def run_window(seq: FlowSequence, config: PipelineConfig, start: int) -> WindowResult:
    """Run the full analysis chain on frames [start, start+tau)."""
    grid = config.grid()
    diagnostics: dict = {"start": start}

    mean = _stage("mean-flow", mean_flow, seq, start, config.tau)
    grid_field = _stage("downsample", downsample_to_grid, mean, grid)
    disp = _stage("flow-map", flow_map, mean, grid, config.steps(), config.dt)
    stab = _stage("stability", ftle_field, disp)
    s_map = _stage("stability", stability_structure, stab)
    static = _stage("phase", compute_static_mask, grid_field, config.epsilon_static)
    t_map = _stage("phase", phase_structure, grid_field, static)
    feats = _stage("features", assemble_features, s_map, t_map, static)
    diagnostics["n_active"] = feats.n
    diagnostics["n_static"] = int(static.sum())

    spread = feats.spread()
    if feats.n == 0 or spread < FEATURE_DEGENERACY_TOL:
        # Degenerate-scene guard: homogeneous dynamics carry nothing salient.
        logger.warning("degenerate scene (feature spread %.3g); skipping ranking", spread)
        diagnostics["degenerate"] = True
        shape = (grid.rows, grid.cols)
        extrema = ExtremaResult(
            high_mask=np.zeros(shape, dtype=bool),
            low_mask=np.zeros(shape, dtype=bool),
            thresholds={
                "high_pct": config.high_pct,
                "low_pct": config.low_pct,
                "high_score": 0.0,
                "low_score": 0.0,
                "degenerate": True,
            },
            scores=np.zeros(shape),
        )
        regions = RegionSet(
            regions=[], frame_width=seq.width, frame_height=seq.height, grid=grid
        )
        scores = ScoreVector(c=np.zeros(feats.n), alpha=config.alpha, m=0)
        return WindowResult(
            start=start,
            extrema=extrema,
            regions=regions,
            scores=scores,
            index_map=feats.index_map,
            phi=stab.phi,
            diagnostics=diagnostics,
        )

    sq_dists = _stage("graph", ranking._pairwise_sq_dists, feats.rows)
    neighbors = _stage("graph", knn_graph, feats, config.k, sq_dists)
    graph = _stage("graph", build_affinity, feats, neighbors, config.k, sq_dists)
    del sq_dists
    L, kept = _stage("graph", normalized_operator, graph.W)
    index_map = feats.index_map[kept]
    diagnostics["sigma_patched"] = graph.sigma_patched
    diagnostics["n_ranked"] = int(kept.size)

    queries = _stage(
        "ranking", sample_queries, kept.size, min(config.m, kept.size), subseed(config.seed, "queries")
    )
    scores = _stage("ranking", aggregate_ranks, L, queries, config.alpha)
    extrema = _stage(
        "extrema", extract_extrema, scores, grid, index_map, config.high_pct, config.low_pct
    )
    high = _stage(
        "regions",
        regions_from_mask,
        extrema.high_mask,
        grid,
        seq.width,
        seq.height,
        "high",
        extrema.scores,
        config.min_region,
    )
    low = _stage(
        "regions",
        regions_from_mask,
        extrema.low_mask,
        grid,
        seq.width,
        seq.height,
        "low",
        extrema.scores,
        config.min_region,
    )
    regions = RegionSet(
        regions=high + low, frame_width=seq.width, frame_height=seq.height, grid=grid
    )
    return WindowResult(
        start=start,
        extrema=extrema,
        regions=regions,
        scores=scores,
        index_map=index_map,
        phi=stab.phi,
        diagnostics=diagnostics,
    )


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Analyze every full tau-window of the input (stride tau) and write artifacts."""
    seq = _stage("input", load_input, config)
    if len(seq) < config.tau:
        raise PipelineStageError(
            "input", ValueError(f"sequence has {len(seq)} frames, needs at least tau={config.tau}")
        )
    starts = list(range(0, len(seq) - config.tau + 1, config.tau))
    windows = [run_window(seq, config, start) for start in starts]
    result = PipelineResult(config=config, windows=windows)

    if config.out_dir is not None:
        out_dir = Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []
        try:
            for i, win in enumerate(windows):
                sub = out_dir if len(windows) == 1 else out_dir / f"window_{i:03d}"
                sub.mkdir(parents=True, exist_ok=True)
                written += write_artifacts(win, seq, config, sub)
            lock = out_dir / "config.lock"
            lock.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
            written.append(lock)
        except Exception:
            for p in written:
                p.unlink(missing_ok=True)
            raise
        result.artifacts = {p.name: p for p in written}
    return result


# --- artifact formats -------------------------------------------------------


def write_pgm16(values: np.ndarray, path, sidecar: Path | None = None) -> None:
    """16-bit binary portable graymap, min-max normalized (16-bit PGM samples
    are big-endian per the format); normalization bounds go to the sidecar."""
    vmin = float(values.min())
    vmax = float(values.max())
    if vmax > vmin:
        norm = (values - vmin) / (vmax - vmin)
    else:
        norm = np.zeros_like(values)
    pix = np.round(norm * 65535.0).astype(">u2")
    h, w = values.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode() + pix.tobytes())
    if sidecar is not None:
        Path(sidecar).write_text(f"min {vmin!r}\nmax {vmax!r}\n")


def _heatmap_lut() -> np.ndarray:
    """Fixed 256-entry lookup: index 0 blue, 128 mid-gray, 255 red."""
    lut = np.empty((256, 3), dtype=np.float64)
    blue = np.array([0.0, 0.0, 255.0])
    gray = np.array([128.0, 128.0, 128.0])
    red = np.array([255.0, 0.0, 0.0])
    for i in range(256):
        if i <= 128:
            t = i / 128.0
            lut[i] = blue + t * (gray - blue)
        else:
            t = (i - 128) / 127.0
            lut[i] = gray + t * (red - gray)
    return np.round(lut).astype(np.uint8)


HEATMAP_LUT = _heatmap_lut()


def render_heatmap(
    scores: np.ndarray, grid: GridSpec, frame_width: int, frame_height: int, path
) -> None:
    """Write a P6 pixmap of the particle scores upsampled to pixels.

    Each pixel takes its block's score (nearest-block upsampling); scores map
    through ``HEATMAP_LUT`` with the minimum at blue, the median at mid-gray
    and the maximum at red. Constant scores give a uniform mid-gray image.
    """
    scores = np.asarray(scores, dtype=np.float64)
    smin = float(scores.min())
    smax = float(scores.max())
    smed = float(np.median(scores))
    idx = np.full(scores.shape, 128, dtype=np.intp)
    if smax > smin:
        lowside = scores <= smed
        if smed > smin:
            idx = np.where(
                lowside,
                np.round(128.0 * (scores - smin) / (smed - smin)).astype(np.intp),
                idx,
            )
        if smax > smed:
            idx = np.where(
                ~lowside,
                128 + np.round(127.0 * (scores - smed) / (smax - smed)).astype(np.intp),
                idx,
            )
    rgb_blocks = HEATMAP_LUT[np.clip(idx, 0, 255)]

    ex = block_edges(frame_width, grid.cols)
    ey = block_edges(frame_height, grid.rows)
    col_of = np.searchsorted(ex, np.arange(frame_width), side="right") - 1
    row_of = np.searchsorted(ey, np.arange(frame_height), side="right") - 1
    rgb = rgb_blocks[row_of[:, None], col_of[None, :]]
    Path(path).write_bytes(
        f"P6\n{frame_width} {frame_height}\n255\n".encode() + rgb.tobytes()
    )


def write_scores(win: WindowResult, config: PipelineConfig, path, sidecar) -> None:
    """Grid-mapped scores as little-endian float64 plus a JSON sidecar."""
    data = win.extrema.scores.astype("<f8").tobytes()
    Path(path).write_bytes(data)
    doc = {
        "n": int(win.extrema.scores.size),
        "n_ranked": int(win.scores.n),
        "grid": [config.grid_cols, config.grid_rows],
        "alpha": config.alpha,
        "k": config.k,
        "m": config.m,
        "seed": config.seed,
        "high_pct": config.high_pct,
        "low_pct": config.low_pct,
        "start": win.start,
    }
    Path(sidecar).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def regions_to_dict(regions: RegionSet) -> dict:
    return {
        "frame": [regions.frame_width, regions.frame_height],
        "grid": [regions.grid.cols, regions.grid.rows] if regions.grid else None,
        "regions": [
            {
                "bbox": r.bbox.to_list(),
                "polarity": r.polarity,
                "score": r.score,
                "particles": r.particles,
            }
            for r in regions.regions
        ],
    }


def regions_from_dict(doc: dict) -> RegionSet:
    from .geometry import Rect

    grid = None
    if doc.get("grid"):
        grid = GridSpec(cols=int(doc["grid"][0]), rows=int(doc["grid"][1]))
    regions = [
        ranking.Region(
            bbox=Rect.from_any(r["bbox"]),
            polarity=r["polarity"],
            score=float(r["score"]),
            particles=int(r["particles"]),
        )
        for r in doc["regions"]
    ]
    w, h = doc["frame"]
    return RegionSet(regions=regions, frame_width=int(w), frame_height=int(h), grid=grid)


def save_regions(regions: RegionSet, path) -> None:
    Path(path).write_text(json.dumps(regions_to_dict(regions), indent=2, sort_keys=True) + "\n")


def load_regions(path) -> RegionSet:
    return regions_from_dict(json.loads(Path(path).read_text()))


def write_artifacts(
    win: WindowResult, seq: FlowSequence, config: PipelineConfig, out_dir: Path
) -> list[Path]:
    """Write the standard artifact set for one window; returns created paths."""
    out_dir = Path(out_dir)
    grid = config.grid()
    paths = {
        "heatmap": out_dir / "saliency.ppm",
        "phi": out_dir / "phi.pgm",
        "phi_sidecar": out_dir / "phi.txt",
        "scores": out_dir / "scores.bin",
        "scores_sidecar": out_dir / "scores.json",
        "regions": out_dir / "regions.json",
    }
    render_heatmap(win.extrema.scores, grid, seq.width, seq.height, paths["heatmap"])
    write_pgm16(win.phi, paths["phi"], paths["phi_sidecar"])
    write_scores(win, config, paths["scores"], paths["scores_sidecar"])
    save_regions(win.regions, paths["regions"])
    return list(paths.values())


def ground_truth_vs_regions(regions: RegionSet, gt: GroundTruth, thresh: float = 0.5):
    from .evaluation import match_detections

    return match_detections(regions.regions, gt, thresh=thresh)
