"""Particle advection through a steady mean flow: pathlines and flow maps.

The mean field is treated as steady over the analysis interval; trajectories
solve dx/dt = u(x, y), dy/dt = v(x, y) with fixed-step RK4. Velocities at
fractional positions come from Catmull-Rom bicubic interpolation, which
reproduces affine fields exactly; positions are clamped to the frame before
sampling and after every step, so particles stick to the boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IntegrationError
from .flowfield import FlowField, GridSpec, block_centers


@dataclass(frozen=True)
class Pathline:
    """Trace of one particle; samples[0] is the seed, one row per step after."""

    seed: tuple[float, float]
    samples: np.ndarray  # (steps+1, 2)

    @property
    def steps(self) -> int:
        return self.samples.shape[0] - 1


@dataclass(frozen=True)
class DisplacementField:
    """Net flow-map displacement per grid particle after advecting for tau frames."""

    grid: GridSpec
    x0: np.ndarray  # (rows, cols) seed coordinates
    y0: np.ndarray
    dx: np.ndarray  # (rows, cols) final minus initial position
    dy: np.ndarray
    tau: float
    dt: float


def _cr_weights(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom weights for samples at offsets -1, 0, 1, 2; t in [0, 1)."""
    t2 = t * t
    t3 = t2 * t
    w = np.empty(t.shape + (4,))
    w[..., 0] = 0.5 * (-t + 2.0 * t2 - t3)
    w[..., 1] = 0.5 * (2.0 - 5.0 * t2 + 3.0 * t3)
    w[..., 2] = 0.5 * (t + 4.0 * t2 - 3.0 * t3)
    w[..., 3] = 0.5 * (-t2 + t3)
    return w


def _sample_channel(a: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = a.shape
    x = np.clip(xs, 0.0, w - 1.0)
    y = np.clip(ys, 0.0, h - 1.0)
    ix = np.floor(x)
    iy = np.floor(y)
    tx = x - ix
    ty = y - iy
    cols = np.clip(ix.astype(np.intp)[:, None] + np.arange(-1, 3), 0, w - 1)
    rows = np.clip(iy.astype(np.intp)[:, None] + np.arange(-1, 3), 0, h - 1)
    patch = a[rows[:, :, None], cols[:, None, :]]  # (n, 4 rows, 4 cols)
    wx = _cr_weights(tx)
    wy = _cr_weights(ty)
    return np.einsum("nij,ni,nj->n", patch, wy, wx)


def sample_velocity(field: FlowField, pos) -> tuple[float, float]:
    """Bicubic (Catmull-Rom) velocity at a continuous position.

    Positions outside the frame are clamped to the boundary; edge neighborhoods
    replicate the border row/column.
    """
    xs = np.atleast_1d(np.asarray(pos[0], dtype=np.float64))
    ys = np.atleast_1d(np.asarray(pos[1], dtype=np.float64))
    u = _sample_channel(field.u, xs, ys)
    v = _sample_channel(field.v, xs, ys)
    return float(u[0]), float(v[0])


def _advect_positions(
    mean: FlowField,
    xs: np.ndarray,
    ys: np.ndarray,
    steps: int,
    dt: float,
    record: bool = False,
):
    """RK4-integrate all seeds simultaneously; optionally record every step."""
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    w, h = mean.width, mean.height
    u, v = mean.u, mean.v
    x = np.array(xs, dtype=np.float64)
    y = np.array(ys, dtype=np.float64)
    trail = None
    if record:
        trail = np.empty((steps + 1, x.size, 2))
        trail[0, :, 0] = x
        trail[0, :, 1] = y
    for step in range(steps):
        k1x = _sample_channel(u, x, y)
        k1y = _sample_channel(v, x, y)
        k2x = _sample_channel(u, x + 0.5 * dt * k1x, y + 0.5 * dt * k1y)
        k2y = _sample_channel(v, x + 0.5 * dt * k1x, y + 0.5 * dt * k1y)
        k3x = _sample_channel(u, x + 0.5 * dt * k2x, y + 0.5 * dt * k2y)
        k3y = _sample_channel(v, x + 0.5 * dt * k2x, y + 0.5 * dt * k2y)
        k4x = _sample_channel(u, x + dt * k3x, y + dt * k3y)
        k4y = _sample_channel(v, x + dt * k3x, y + dt * k3y)
        x = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + (dt / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        bad = ~(np.isfinite(x) & np.isfinite(y))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise IntegrationError(
                f"non-finite position at step {step + 1} for seed "
                f"({float(np.ravel(xs)[i])}, {float(np.ravel(ys)[i])})"
            )
        np.clip(x, 0.0, w - 1.0, out=x)
        np.clip(y, 0.0, h - 1.0, out=y)
        if record:
            trail[step + 1, :, 0] = x
            trail[step + 1, :, 1] = y
    return (x, y, trail) if record else (x, y, None)


def advect(mean: FlowField, seeds, steps: int, dt: float = 1.0) -> list[Pathline]:
    """Integrate one pathline per seed through the steady mean field."""
    seeds = [(float(sx), float(sy)) for sx, sy in seeds]
    xs = np.array([s[0] for s in seeds])
    ys = np.array([s[1] for s in seeds])
    _, _, trail = _advect_positions(mean, xs, ys, steps, dt, record=True)
    return [
        Pathline(seed=seeds[i], samples=trail[:, i, :].copy()) for i in range(len(seeds))
    ]


def flow_map(mean: FlowField, grid: GridSpec, steps: int, dt: float = 1.0) -> DisplacementField:
    """Seed one particle at each grid-cell center and record its net displacement."""
    grid.validate_against(mean.width, mean.height)
    cx = block_centers(mean.width, grid.cols)
    cy = block_centers(mean.height, grid.rows)
    x0, y0 = np.meshgrid(cx, cy)
    xf, yf, _ = _advect_positions(mean, x0.ravel(), y0.ravel(), steps, dt)
    return DisplacementField(
        grid=grid,
        x0=x0,
        y0=y0,
        dx=xf.reshape(x0.shape) - x0,
        dy=yf.reshape(y0.shape) - y0,
        tau=steps * dt,
        dt=dt,
    )


def dump_pathlines_csv(pathlines: list[Pathline], path) -> None:
    """Debug dump: one row per (seed, step) with columns seed_x, seed_y, step, x, y."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed_x", "seed_y", "step", "x", "y"])
        for pl in pathlines:
            for step, (x, y) in enumerate(pl.samples):
                writer.writerow([pl.seed[0], pl.seed[1], step, x, y])
