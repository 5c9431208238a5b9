"""Flow-map Jacobians, stability coefficients, and the pairwise stability structure.

The stability coefficient of a particle is log(sqrt(lambda_max))/tau, where
lambda_max is the largest eigenvalue of J^T J and J is the Jacobian of the
total flow map F(p) = p + displacement with respect to the seed position.
Differentiating F (rather than the displacement alone) makes any uniform
translation score exactly zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .advection import DisplacementField
from .flowfield import GridSpec

logger = logging.getLogger(__name__)

# Numerical floor for the Cauchy-Green eigenvalue; flagged when applied.
EIG_FLOOR = 1e-12

# Pairwise maps at most this large are materialized as dense matrices.
MATERIALIZE_LIMIT = 4096


@dataclass(frozen=True)
class StabilityField:
    """Per-particle stability coefficient (1/frame) on the analysis grid."""

    grid: GridSpec
    phi: np.ndarray  # (rows, cols)
    tau: float
    floored: np.ndarray | None = None  # where the eigenvalue floor kicked in


class PairwiseMap:
    """n x n similarity structure over flattened row-major particle indices.

    kind "stability" holds signed coefficient differences (antisymmetric,
    zero diagonal); kind "phase" holds angles in [0, pi] (symmetric, zero
    diagonal, with -1.0 sentinels on static rows/columns).

    Large stability maps are kept lazy: rows are reconstructed from the
    generating vector via row(i) = phi[i] - phi.
    """

    KINDS = ("stability", "phase")

    def __init__(self, kind: str, n: int, values: np.ndarray | None, generator: np.ndarray | None = None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown pairwise-map kind {kind!r}")
        if values is None and generator is None:
            raise ValueError("need dense values or a generating vector")
        if values is not None and values.shape != (n, n):
            raise ValueError(f"values must be {n}x{n}, got {values.shape}")
        self.kind = kind
        self.n = n
        self.values = values
        self.generator = generator

    @property
    def materialized(self) -> bool:
        return self.values is not None

    def row(self, i: int) -> np.ndarray:
        if self.values is not None:
            return self.values[i]
        return self.generator[i] - self.generator

    def dense(self) -> np.ndarray:
        if self.values is not None:
            return self.values
        return self.generator[:, None] - self.generator[None, :]


def jacobian_field(disp: DisplacementField) -> np.ndarray:
    """Flow-map Jacobian at every particle, shape (rows, cols, 2, 2).

    Central differences of F(p) = p + displacement with respect to the seed
    coordinates (pixels), one-sided at grid edges.
    """
    rows, cols = disp.dx.shape
    if rows < 3 or cols < 3:
        raise ValueError(f"grid must be at least 3x3 for central differences, got {cols}x{rows}")
    fx = disp.x0 + disp.dx
    fy = disp.y0 + disp.dy
    xs = disp.x0[0, :]
    ys = disp.y0[:, 0]
    dfx_dy, dfx_dx = np.gradient(fx, ys, xs)
    dfy_dy, dfy_dx = np.gradient(fy, ys, xs)
    out = np.empty((rows, cols, 2, 2))
    out[..., 0, 0] = dfx_dx
    out[..., 0, 1] = dfx_dy
    out[..., 1, 0] = dfy_dx
    out[..., 1, 1] = dfy_dy
    return out


def jacobian(disp: DisplacementField, i: int) -> np.ndarray:
    """Jacobian of the flow map at flattened row-major particle index i."""
    field = jacobian_field(disp)
    rows, cols = disp.dx.shape
    if not 0 <= i < rows * cols:
        raise ValueError(f"particle index {i} out of range for {cols}x{rows} grid")
    return field.reshape(rows * cols, 2, 2)[i]


def _lambda_max(c11, c12, c22):
    """Largest eigenvalue of the symmetric 2x2 tensor [[c11, c12], [c12, c22]]."""
    half_tr = 0.5 * (c11 + c22)
    disc = np.sqrt(np.maximum(0.25 * (c11 - c22) ** 2 + c12**2, 0.0))
    return half_tr + disc


def ftle(J: np.ndarray, tau: float) -> float:
    """Stability coefficient log(sqrt(lambda_max(J^T J)))/tau for one Jacobian."""
    if tau < 1:
        raise ValueError(f"tau must be at least 1 frame, got {tau}")
    J = np.asarray(J, dtype=np.float64)
    c11 = J[0, 0] ** 2 + J[1, 0] ** 2
    c12 = J[0, 0] * J[0, 1] + J[1, 0] * J[1, 1]
    c22 = J[0, 1] ** 2 + J[1, 1] ** 2
    lam = float(_lambda_max(c11, c12, c22))
    if lam <= EIG_FLOOR:
        logger.warning("Cauchy-Green eigenvalue %.3g floored at %.0e", lam, EIG_FLOOR)
        return float(np.log(EIG_FLOOR) / tau)
    return float(np.log(lam) / (2.0 * tau))


def ftle_field(disp: DisplacementField) -> StabilityField:
    """Stability coefficient at every particle of the displacement grid."""
    if disp.tau < 1:
        raise ValueError(f"tau must be at least 1 frame, got {disp.tau}")
    J = jacobian_field(disp)
    c11 = J[..., 0, 0] ** 2 + J[..., 1, 0] ** 2
    c12 = J[..., 0, 0] * J[..., 0, 1] + J[..., 1, 0] * J[..., 1, 1]
    c22 = J[..., 0, 1] ** 2 + J[..., 1, 1] ** 2
    lam = _lambda_max(c11, c12, c22)
    floored = lam <= EIG_FLOOR
    if floored.any():
        logger.warning("eigenvalue floor applied at %d particles", int(floored.sum()))
    phi = np.where(
        floored,
        np.log(EIG_FLOOR) / disp.tau,
        np.log(np.maximum(lam, EIG_FLOOR)) / (2.0 * disp.tau),
    )
    return StabilityField(
        grid=disp.grid, phi=phi, tau=disp.tau, floored=floored if floored.any() else None
    )


def stability_structure(stab: StabilityField, materialize_limit: int = MATERIALIZE_LIMIT) -> PairwiseMap:
    """Pairwise coefficient differences values[i][j] = phi_i - phi_j.

    Above `materialize_limit` particles the matrix stays lazy and rows are
    reconstructed on demand (row i equals phi[i] - phi).
    """
    p = stab.phi.ravel().astype(np.float64)
    n = p.size
    if n <= materialize_limit:
        return PairwiseMap("stability", n, p[:, None] - p[None, :], generator=p)
    return PairwiseMap("stability", n, None, generator=p)
