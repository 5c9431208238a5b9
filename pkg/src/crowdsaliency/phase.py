"""Pairwise phase-shift structure from mean-flow directions.

The phase shift between two particles is the angle between their mean
velocities, arccos of the normalized dot product, in [0, pi]. Particles whose
mean speed falls below ``EPSILON_STATIC`` are undefined under this measure;
they are marked static, their rows and columns carry the sentinel -1.0, and
they are excluded from feature assembly and ranking downstream.
"""

from __future__ import annotations

import numpy as np

from .flowfield import FlowField
from .stability import PairwiseMap

EPSILON_STATIC = 1e-6
PHASE_SENTINEL = -1.0


def phase_shift(vi, vj, eps_static: float = EPSILON_STATIC) -> float:
    """Angle in [0, pi] between two velocity vectors; sentinel for static input."""
    vi = np.asarray(vi, dtype=np.float64)
    vj = np.asarray(vj, dtype=np.float64)
    ni = float(np.hypot(vi[0], vi[1]))
    nj = float(np.hypot(vj[0], vj[1]))
    if ni < eps_static or nj < eps_static:
        return PHASE_SENTINEL
    cos = float(np.dot(vi, vj) / (ni * nj))
    return float(np.arccos(min(1.0, max(-1.0, cos))))


def compute_static_mask(grid_field: FlowField, eps_static: float = EPSILON_STATIC) -> np.ndarray:
    """Boolean (rows, cols) mask of particles with mean speed below eps_static."""
    return np.hypot(grid_field.u, grid_field.v) < eps_static


def phase_structure(grid_field: FlowField, static_mask: np.ndarray) -> PairwiseMap:
    """Pairwise phase shifts over all particle pairs of the grid-resolution field.

    Rows and columns of masked particles are filled with the sentinel; the
    diagonal of active particles is exactly zero.
    """
    u = grid_field.u.ravel().astype(np.float64)
    v = grid_field.v.ravel().astype(np.float64)
    mask = np.asarray(static_mask, dtype=bool).ravel()
    if mask.shape != u.shape:
        raise ValueError(f"static mask has {mask.size} entries, field has {u.size}")
    n = u.size

    speed = np.hypot(u, v)
    safe = np.where(mask, 1.0, speed)
    unit = np.empty((n, 2))
    unit[:, 0] = np.where(mask, 0.0, u / safe)
    unit[:, 1] = np.where(mask, 0.0, v / safe)

    # Mirror the upper triangle so the cosine matrix is exactly symmetric.
    cos = unit @ unit.T
    iu = np.triu_indices(n, 1)
    cos.T[iu] = cos[iu]
    np.clip(cos, -1.0, 1.0, out=cos)
    values = np.arccos(cos)
    np.fill_diagonal(values, 0.0)
    values[mask, :] = PHASE_SENTINEL
    values[:, mask] = PHASE_SENTINEL
    return PairwiseMap("phase", n, values)
