"""Synthetic crowd-flow scenes: primitive flow elements, noise injection, ground truth.

Element velocities superpose additively wherever their supports overlap.
Generation is a pure function of (scene, seeds): identical inputs give
bit-identical sequences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SceneValidationError
from .evaluation import GroundTruth, GroundTruthEntry
from .flowfield import FlowField, FlowSequence
from .geometry import Rect


@dataclass(frozen=True)
class UniformLane:
    """Constant flow of `speed` along `direction` inside `region` (None = whole frame)."""

    direction: tuple[float, float]
    speed: float
    region: Rect | None = None


@dataclass(frozen=True)
class Source:
    """Radial outflow; speed is `strength`/r, clipped at radius 1 from the center."""

    center: tuple[float, float]
    strength: float
    gt_halfwidth: float | None = None


@dataclass(frozen=True)
class Sink:
    """Radial inflow; the negation of a Source of equal strength."""

    center: tuple[float, float]
    strength: float
    gt_halfwidth: float | None = None


@dataclass(frozen=True)
class Saddle:
    """Linear strain field u = rate*(x-cx), v = -rate*(y-cy)."""

    center: tuple[float, float]
    rate: float
    gt_halfwidth: float | None = None


@dataclass(frozen=True)
class Agent:
    """Disc of `radius` moving along `path` waypoints at `speed` px/frame.

    Inside the disc the agent adds speed*tangent to the field; it stops
    contributing once it reaches the end of its path.
    """

    path: tuple[tuple[float, float], ...]
    speed: float
    radius: float


@dataclass(frozen=True)
class NoiseSpec:
    region: Rect
    amplitude: float
    seed: int


Element = UniformLane | Source | Sink | Saddle | Agent


@dataclass
class SceneSpec:
    width: int
    height: int
    duration: int
    elements: list[Element] = field(default_factory=list)
    noise: NoiseSpec | None = None
    fps: float = 25.0


def validate_scene(spec: SceneSpec) -> list[str]:
    """Collect every violation; empty list means the scene is valid."""
    problems = []
    if spec.width < 1 or spec.height < 1:
        problems.append(f"frame dimensions must be positive, got {spec.width}x{spec.height}")
    if spec.duration < 1:
        problems.append(f"duration must be at least 1 frame, got {spec.duration}")
    frame = Rect(0, 0, spec.width, spec.height)
    for i, el in enumerate(spec.elements):
        if isinstance(el, UniformLane):
            if el.region is not None and not frame.contains_rect(el.region):
                problems.append(f"element {i}: lane region {el.region} outside frame")
            if math.hypot(*el.direction) == 0:
                problems.append(f"element {i}: lane direction must be nonzero")
            if el.speed < 0:
                problems.append(f"element {i}: lane speed must be nonnegative")
        elif isinstance(el, (Source, Sink)):
            cx, cy = el.center
            if not (0 <= cx < spec.width and 0 <= cy < spec.height):
                problems.append(f"element {i}: center {el.center} outside frame")
        elif isinstance(el, Saddle):
            cx, cy = el.center
            if not (0 <= cx < spec.width and 0 <= cy < spec.height):
                problems.append(f"element {i}: center {el.center} outside frame")
        elif isinstance(el, Agent):
            if len(el.path) < 2:
                problems.append(f"element {i}: agent path needs at least 2 waypoints")
            if el.speed <= 0 or el.radius <= 0:
                problems.append(f"element {i}: agent speed and radius must be positive")
            for px, py in el.path:
                if not (0 <= px < spec.width and 0 <= py < spec.height):
                    problems.append(f"element {i}: waypoint ({px}, {py}) outside frame")
        else:
            problems.append(f"element {i}: unknown element type {type(el).__name__}")
    if spec.noise is not None:
        if not frame.contains_rect(spec.noise.region):
            problems.append(f"noise region {spec.noise.region} outside frame")
        if spec.noise.amplitude < 0:
            problems.append("noise amplitude must be nonnegative")
    return problems


def _steady_field(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sum of all time-independent elements on the pixel grid."""
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width]
    xs = xs.astype(np.float64)
    ys = ys.astype(np.float64)
    u = np.zeros_like(xs)
    v = np.zeros_like(xs)
    for el in spec.elements:
        if isinstance(el, UniformLane):
            norm = math.hypot(*el.direction)
            du = el.speed * el.direction[0] / norm
            dv = el.speed * el.direction[1] / norm
            if el.region is None:
                u += du
                v += dv
            else:
                m = _region_mask(el.region, xs, ys)
                u[m] += du
                v[m] += dv
        elif isinstance(el, (Source, Sink)):
            sign = 1.0 if isinstance(el, Source) else -1.0
            cx, cy = el.center
            dx = xs - cx
            dy = ys - cy
            r = np.hypot(dx, dy)
            rc = np.maximum(r, 1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(r > 0, sign * el.strength / (r * rc), 0.0)
            u += scale * dx
            v += scale * dy
        elif isinstance(el, Saddle):
            cx, cy = el.center
            u += el.rate * (xs - cx)
            v += -el.rate * (ys - cy)
    return u, v


def _region_mask(region: Rect, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    return (xs >= region.x) & (xs < region.x1) & (ys >= region.y) & (ys < region.y1)


def _agent_state(agent: Agent, t: int) -> tuple[float, float, float, float] | None:
    """Position and unit tangent of the agent at frame t, or None once parked."""
    pts = [np.asarray(p, dtype=np.float64) for p in agent.path]
    seg_len = [float(np.hypot(*(b - a))) for a, b in zip(pts[:-1], pts[1:])]
    total = sum(seg_len)
    s = agent.speed * t
    if s >= total:
        return None
    for (a, b), length in zip(zip(pts[:-1], pts[1:]), seg_len):
        if length == 0:
            continue
        if s <= length:
            frac = s / length
            pos = a + frac * (b - a)
            tangent = (b - a) / length
            return float(pos[0]), float(pos[1]), float(tangent[0]), float(tangent[1])
        s -= length
    return None


def agent_positions(agent: Agent, frames: range) -> list[tuple[float, float]]:
    """Agent center per frame over `frames`, holding the last point once parked."""
    out = []
    last = agent.path[-1]
    for t in frames:
        state = _agent_state(agent, t)
        if state is None:
            out.append((float(last[0]), float(last[1])))
        else:
            out.append((state[0], state[1]))
    return out


def synth_scene(spec: SceneSpec) -> FlowSequence:
    """Generate the frame sequence for a scene; deterministic given the noise seed."""
    problems = validate_scene(spec)
    if problems:
        raise SceneValidationError("; ".join(problems))

    base_u, base_v = _steady_field(spec)
    agents = [el for el in spec.elements if isinstance(el, Agent)]
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width]
    xs = xs.astype(np.float64)
    ys = ys.astype(np.float64)

    rng = np.random.default_rng(spec.noise.seed) if spec.noise is not None else None

    frames = []
    for t in range(spec.duration):
        u = base_u.copy()
        v = base_v.copy()
        for agent in agents:
            state = _agent_state(agent, t)
            if state is None:
                continue
            px, py, tx, ty = state
            inside = (xs - px) ** 2 + (ys - py) ** 2 <= agent.radius**2
            u[inside] += agent.speed * tx
            v[inside] += agent.speed * ty
        if rng is not None and spec.noise.amplitude > 0:
            u, v = _add_noise(u, v, spec.noise.region, spec.noise.amplitude, rng)
        frames.append(FlowField(u=u, v=v))
    return FlowSequence(frames=frames, fps=spec.fps)


def _noise_bounds(region: Rect, width: int, height: int) -> tuple[int, int, int, int]:
    x0 = int(math.floor(region.x))
    y0 = int(math.floor(region.y))
    x1 = int(math.ceil(region.x1))
    y1 = int(math.ceil(region.y1))
    if x0 < 0 or y0 < 0 or x1 > width or y1 > height or x1 <= x0 or y1 <= y0:
        raise ValueError(f"noise region {region} out of bounds for {width}x{height} frame")
    return x0, y0, x1, y1


def _add_noise(u, v, region: Rect, amplitude: float, rng) -> tuple[np.ndarray, np.ndarray]:
    x0, y0, x1, y1 = _noise_bounds(region, u.shape[1], u.shape[0])
    shape = (y1 - y0, x1 - x0)
    u[y0:y1, x0:x1] += rng.uniform(-amplitude, amplitude, shape)
    v[y0:y1, x0:x1] += rng.uniform(-amplitude, amplitude, shape)
    return u, v


def inject_noise(seq: FlowSequence, region, amplitude: float, seed: int) -> FlowSequence:
    """Add i.i.d. uniform[-amplitude, amplitude] noise to u and v inside `region`.

    Returns a new sequence; the draw order is fixed (per frame: u block then v
    block), so the result is a pure function of (seq, region, amplitude, seed).
    """
    region = Rect.from_any(region)
    _noise_bounds(region, seq.width, seq.height)
    if amplitude < 0:
        raise ValueError(f"amplitude must be nonnegative, got {amplitude}")
    if amplitude == 0:
        return FlowSequence(frames=list(seq.frames), fps=seq.fps)
    rng = np.random.default_rng(seed)
    frames = []
    for frame in seq.frames:
        u, v = _add_noise(frame.u.copy(), frame.v.copy(), region, amplitude, rng)
        frames.append(FlowField(u=u, v=v))
    return FlowSequence(frames=frames, fps=seq.fps)


def scene_ground_truth(
    spec: SceneSpec,
    start: int = 0,
    tau: int | None = None,
    speed_floor: float = 0.5,
) -> GroundTruth:
    """Ground-truth boxes implied by the scene geometry for one analysis window.

    Noise regions and agent path envelopes are local irregularities; sources
    and sinks get a square reaching to where their induced speed falls to
    `speed_floor` (unless `gt_halfwidth` overrides it); saddles are marked as
    crowding only when `gt_halfwidth` is set.
    """
    if tau is None:
        tau = spec.duration - start
    frame = Rect(0, 0, spec.width, spec.height)
    entries = []

    def clipped(rect: Rect) -> Rect:
        return frame.intersection(rect)

    for el in spec.elements:
        if isinstance(el, (Source, Sink)):
            half = el.gt_halfwidth if el.gt_halfwidth is not None else el.strength / speed_floor
            cx, cy = el.center
            entries.append(
                GroundTruthEntry(
                    bbox=clipped(Rect(cx - half, cy - half, 2 * half, 2 * half)),
                    category="source_sink",
                )
            )
        elif isinstance(el, Saddle) and el.gt_halfwidth is not None:
            cx, cy = el.center
            half = el.gt_halfwidth
            entries.append(
                GroundTruthEntry(
                    bbox=clipped(Rect(cx - half, cy - half, 2 * half, 2 * half)),
                    category="crowding",
                )
            )
        elif isinstance(el, Agent):
            pos = agent_positions(el, range(start, start + tau))
            px = [p[0] for p in pos]
            py = [p[1] for p in pos]
            r = el.radius
            x0, x1 = min(px) - r, max(px) + r
            y0, y1 = min(py) - r, max(py) + r
            entries.append(
                GroundTruthEntry(
                    bbox=clipped(Rect(x0, y0, x1 - x0, y1 - y0)),
                    category="local_irregularity",
                )
            )
    if spec.noise is not None:
        entries.append(
            GroundTruthEntry(bbox=clipped(spec.noise.region), category="local_irregularity")
        )
    return GroundTruth(entries=entries, frame_width=spec.width, frame_height=spec.height)


# --- scene file format -----------------------------------------------------
#
# A scene document is JSON:
# {
#   "width": 320, "height": 240, "duration": 50, "fps": 25,
#   "elements": [
#     {"type": "lane", "direction": [1, 0], "speed": 2.0, "region": [x, y, w, h]},
#     {"type": "source", "center": [x, y], "strength": 40.0},
#     {"type": "sink", "center": [x, y], "strength": 40.0},
#     {"type": "saddle", "center": [x, y], "rate": 0.1},
#     {"type": "agent", "path": [[x0, y0], [x1, y1]], "speed": 2.0, "radius": 8.0}
#   ],
#   "noise": {"region": [x, y, w, h], "amplitude": 2.0, "seed": 7}
# }
# "region" on a lane and "gt_halfwidth" on source/sink/saddle are optional.


def scene_to_dict(spec: SceneSpec) -> dict:
    elements = []
    for el in spec.elements:
        if isinstance(el, UniformLane):
            d = {"type": "lane", "direction": list(el.direction), "speed": el.speed}
            if el.region is not None:
                d["region"] = el.region.to_list()
        elif isinstance(el, (Source, Sink)):
            d = {
                "type": "source" if isinstance(el, Source) else "sink",
                "center": list(el.center),
                "strength": el.strength,
            }
            if el.gt_halfwidth is not None:
                d["gt_halfwidth"] = el.gt_halfwidth
        elif isinstance(el, Saddle):
            d = {"type": "saddle", "center": list(el.center), "rate": el.rate}
            if el.gt_halfwidth is not None:
                d["gt_halfwidth"] = el.gt_halfwidth
        elif isinstance(el, Agent):
            d = {
                "type": "agent",
                "path": [list(p) for p in el.path],
                "speed": el.speed,
                "radius": el.radius,
            }
        else:
            raise SceneValidationError(f"unknown element type {type(el).__name__}")
        elements.append(d)
    doc = {
        "width": spec.width,
        "height": spec.height,
        "duration": spec.duration,
        "fps": spec.fps,
        "elements": elements,
    }
    if spec.noise is not None:
        doc["noise"] = {
            "region": spec.noise.region.to_list(),
            "amplitude": spec.noise.amplitude,
            "seed": spec.noise.seed,
        }
    return doc


def scene_from_dict(doc: dict) -> SceneSpec:
    elements: list[Element] = []
    for i, d in enumerate(doc.get("elements", [])):
        kind = d.get("type")
        try:
            if kind == "lane":
                region = Rect.from_any(d["region"]) if "region" in d else None
                elements.append(
                    UniformLane(direction=tuple(d["direction"]), speed=float(d["speed"]), region=region)
                )
            elif kind in ("source", "sink"):
                cls = Source if kind == "source" else Sink
                elements.append(
                    cls(
                        center=tuple(d["center"]),
                        strength=float(d["strength"]),
                        gt_halfwidth=d.get("gt_halfwidth"),
                    )
                )
            elif kind == "saddle":
                elements.append(
                    Saddle(
                        center=tuple(d["center"]),
                        rate=float(d["rate"]),
                        gt_halfwidth=d.get("gt_halfwidth"),
                    )
                )
            elif kind == "agent":
                elements.append(
                    Agent(
                        path=tuple(tuple(p) for p in d["path"]),
                        speed=float(d["speed"]),
                        radius=float(d["radius"]),
                    )
                )
            else:
                raise SceneValidationError(f"element {i}: unknown type {kind!r}")
        except KeyError as exc:
            raise SceneValidationError(f"element {i}: missing field {exc}") from exc
    noise = None
    if "noise" in doc and doc["noise"] is not None:
        nd = doc["noise"]
        noise = NoiseSpec(
            region=Rect.from_any(nd["region"]),
            amplitude=float(nd["amplitude"]),
            seed=int(nd["seed"]),
        )
    try:
        return SceneSpec(
            width=int(doc["width"]),
            height=int(doc["height"]),
            duration=int(doc["duration"]),
            elements=elements,
            noise=noise,
            fps=float(doc.get("fps", 25.0)),
        )
    except KeyError as exc:
        raise SceneValidationError(f"scene document missing field {exc}") from exc


def save_scene(spec: SceneSpec, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(spec), indent=2, sort_keys=True) + "\n")


def load_scene(path) -> SceneSpec:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scene file not found: {path}")
    return scene_from_dict(json.loads(path.read_text()))
