"""Graph ranking over the pairwise similarity structures.

Each active particle's feature row concatenates its scaled stability-structure
row and its scaled phase-structure row. A self-tuned kNN affinity graph over
those rows feeds the normalized operator L = D^{-1/2} W D^{-1/2}; rank scores
against a query indicator y solve (I - alpha*L) c = y, and averaging over a
random query set gives the final per-particle score whose extrema mark salient
regions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import ndimage

from .errors import DegenerateGraphError, NumericalError
from .flowfield import GridSpec, block_edges
from .geometry import Rect
from .stability import PairwiseMap

logger = logging.getLogger(__name__)

# Residual bound for the (I - alpha L) solve, relative to ||y||.
SOLVE_RTOL = 1e-8

# Score spread below which a scene is treated as degenerate (nothing salient).
DEGENERATE_SPREAD = 1e-9

# Connected components smaller than this many particles are discarded.
MIN_REGION_PARTICLES = 3

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class FeatureSet:
    """Per-particle feature rows over active (non-static) particles.

    rows is (n_active, 2*n_active); index_map sends each active row to its
    flattened row-major grid index.
    """

    rows: np.ndarray
    index_map: np.ndarray

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def spread(self) -> float:
        """Largest per-dimension span; zero means all rows identical."""
        if self.rows.size == 0:
            return 0.0
        return float((self.rows.max(axis=0) - self.rows.min(axis=0)).max())


@dataclass(frozen=True)
class AffinityGraph:
    W: np.ndarray  # symmetric, nonnegative, zero diagonal
    sigma: np.ndarray  # per-node local scale
    k: int
    sigma_patched: int = 0

    @property
    def n(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class ScoreVector:
    c: np.ndarray
    alpha: float
    m: int

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class ExtremaResult:
    high_mask: np.ndarray  # (rows, cols) bool
    low_mask: np.ndarray
    thresholds: dict
    scores: np.ndarray  # (rows, cols), masked particles carry the median score


@dataclass(frozen=True)
class Region:
    bbox: Rect
    polarity: str  # "high" | "low"
    score: float
    particles: int


@dataclass
class RegionSet:
    regions: list[Region] = field(default_factory=list)
    frame_width: int = 0
    frame_height: int = 0
    grid: GridSpec | None = None

    def __iter__(self):
        return iter(self.regions)

    def __len__(self):
        return len(self.regions)

    def by_polarity(self, polarity: str) -> list[Region]:
        return [r for r in self.regions if r.polarity == polarity]


def assemble_features(
    stability: PairwiseMap, phase: PairwiseMap, static_mask=None
) -> FeatureSet:
    """Scale both structures to [0, 1] and concatenate their active rows.

    The stability structure is min-max scaled over the whole matrix; the phase
    structure is divided by pi. Rows and columns of static particles are
    dropped from both halves, so the feature length is twice the active count.
    """
    if stability.n != phase.n:
        raise ValueError(f"structure sizes differ: {stability.n} vs {phase.n}")
    n = stability.n
    if static_mask is None:
        active = np.ones(n, dtype=bool)
    else:
        active = ~np.asarray(static_mask, dtype=bool).ravel()
        if active.size != n:
            raise ValueError(f"static mask has {active.size} entries for n={n}")

    s = stability.dense()
    smin = float(s.min())
    smax = float(s.max())
    degenerate = smax - smin < np.finfo(np.float64).tiny
    if degenerate:
        logger.warning("degenerate scene: stability structure is constant")

    idx = np.flatnonzero(active)
    na = idx.size
    rows = np.empty((na, 2 * na))
    if degenerate:
        rows[:, :na] = 0.5
    else:
        rows[:, :na] = s[np.ix_(idx, idx)]
        rows[:, :na] -= smin
        rows[:, :na] /= smax - smin
    rows[:, na:] = phase.dense()[np.ix_(idx, idx)]
    rows[:, na:] /= np.pi
    return FeatureSet(rows=rows, index_map=idx)


def _pairwise_sq_dists(rows: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances via the Gram expansion.

    Values below the cancellation noise of the expansion (O(eps * squared
    norms)) are indistinguishable from zero at double precision and are
    floored to exactly zero, so coincident rows tie deterministically.
    """
    sq = np.einsum("ij,ij->i", rows, rows)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (rows @ rows.T)
    noise = (64.0 * np.finfo(np.float64).eps) * (sq[:, None] + sq[None, :])
    d2[d2 <= noise] = 0.0
    return d2


def knn_graph(features: FeatureSet, k: int, sq_dists: np.ndarray | None = None) -> np.ndarray:
    """Indices of the k nearest neighbors per node, shape (n, k).

    Brute-force Euclidean distances; ties broken by lower node index; a node
    is never its own neighbor. `sq_dists` lets callers reuse a precomputed
    squared-distance matrix.
    """
    n = features.n
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    d2 = _pairwise_sq_dists(features.rows) if sq_dists is None else sq_dists.copy()
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def build_affinity(
    features: FeatureSet,
    neighbors: np.ndarray,
    k: int,
    sq_dists: np.ndarray | None = None,
) -> AffinityGraph:
    """Self-tuned Gaussian affinities W_ij = exp(-d_ij^2 / (sigma_i sigma_j)).

    sigma_i is the distance to i's k-th nearest neighbor; zero sigmas are
    patched with the smallest nonzero distance from that node, or the
    graph-wide mean sigma when the node coincides with everything. Edges are
    the symmetrized union of the kNN lists; W is zero elsewhere and on the
    diagonal.
    """
    n = features.n
    if neighbors.shape[0] != n or neighbors.shape[1] < k:
        raise ValueError(f"neighbor list shape {neighbors.shape} unusable for k={k}")
    d2 = _pairwise_sq_dists(features.rows) if sq_dists is None else sq_dists

    kth = neighbors[:, k - 1]
    sigma = np.sqrt(d2[np.arange(n), kth])

    patched = 0
    zero_nodes = np.flatnonzero(sigma == 0.0)
    if zero_nodes.size:
        patched = int(zero_nodes.size)
        d2z = d2[zero_nodes].copy()
        d2z[d2z <= 0.0] = np.inf
        row_min = d2z.min(axis=1)
        has_positive = np.isfinite(row_min)
        sigma[zero_nodes[has_positive]] = np.sqrt(row_min[has_positive])
        needs_mean = zero_nodes[~has_positive]
        if needs_mean.size:
            positive_sigma = sigma[sigma > 0.0]
            sigma[needs_mean] = float(positive_sigma.mean()) if positive_sigma.size else 1.0
        logger.info("patched %d zero local scales", patched)

    adj = np.zeros((n, n), dtype=bool)
    np.put_along_axis(adj, neighbors[:, :k], True, axis=1)
    adj |= adj.T
    np.fill_diagonal(adj, False)

    ii, jj = np.nonzero(np.triu(adj, 1))
    w = np.exp(-d2[ii, jj] / (sigma[ii] * sigma[jj]))

    W = np.zeros((n, n))
    W[ii, jj] = w
    W[jj, ii] = w
    return AffinityGraph(W=W, sigma=sigma, k=k, sigma_patched=patched)


def normalized_operator(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrically normalized operator L = D^{-1/2} W D^{-1/2}.

    Isolated nodes (zero degree) are removed; returns (L, kept) where `kept`
    holds the surviving node indices so callers can update their index maps.
    """
    W = np.asarray(W, dtype=np.float64)
    d = W.sum(axis=1)
    kept = np.flatnonzero(d > 0.0)
    if kept.size == 0:
        raise DegenerateGraphError("affinity graph has no edges")
    if kept.size < d.size:
        logger.info("removed %d isolated nodes", d.size - kept.size)
        W = W[np.ix_(kept, kept)]
        d = d[kept]
    s = 1.0 / np.sqrt(d)
    L = W * s[:, None] * s[None, :]
    return L, kept


def _factorized_system(L: np.ndarray, alpha: float):
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    A = -alpha * L
    idx = np.arange(A.shape[0])
    A[idx, idx] += 1.0
    try:
        # Cholesky doubles as the positive-pivot check for I - alpha L.
        factor = scipy.linalg.cho_factor(A, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"(I - alpha L) is not positive definite: {exc}") from exc
    return A, factor


def _checked_solve(A, factor, Y: np.ndarray) -> np.ndarray:
    C = scipy.linalg.cho_solve(factor, Y)
    residual = np.linalg.norm(A @ C - Y, axis=0)
    bound = SOLVE_RTOL * np.linalg.norm(Y, axis=0)
    if np.any(residual > bound):
        raise NumericalError(
            f"solve residual {residual.max():.3g} exceeds {SOLVE_RTOL:g}·||y||"
        )
    return np.maximum(C, 0.0)


def rank(L: np.ndarray, query: int, alpha: float) -> ScoreVector:
    """Rank scores for a single query: solve (I - alpha L) c = e_query."""
    n = L.shape[0]
    if not 0 <= query < n:
        raise ValueError(f"query index {query} out of range for n={n}")
    A, factor = _factorized_system(L, alpha)
    y = np.zeros(n)
    y[query] = 1.0
    c = _checked_solve(A, factor, y[:, None])[:, 0]
    return ScoreVector(c=c, alpha=alpha, m=1)


def sample_queries(n_active: int, m: int, seed) -> np.ndarray:
    """m distinct uniform node indices, ascending; deterministic given seed."""
    if not 1 <= m <= n_active:
        raise ValueError(f"m must satisfy 1 <= m <= n_active, got m={m}, n={n_active}")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_active, size=m, replace=False))


def aggregate_ranks(L: np.ndarray, queries, alpha: float) -> ScoreVector:
    """Mean of per-query rank vectors, factoring (I - alpha L) once.

    Queries are summed in ascending index order, so the result is exactly
    invariant to the order they are supplied in.
    """
    queries = np.sort(np.asarray(queries, dtype=np.intp))
    n = L.shape[0]
    if queries.size == 0:
        raise ValueError("need at least one query")
    if queries[0] < 0 or queries[-1] >= n:
        raise ValueError(f"query indices out of range for n={n}")
    A, factor = _factorized_system(L, alpha)
    Y = np.zeros((n, queries.size))
    Y[queries, np.arange(queries.size)] = 1.0
    C = _checked_solve(A, factor, Y)
    c = C.sum(axis=1) / queries.size
    return ScoreVector(c=c, alpha=alpha, m=int(queries.size))


def extract_extrema(
    scores: ScoreVector,
    grid: GridSpec,
    index_map: np.ndarray,
    high_pct: float = 5.0,
    low_pct: float = 5.0,
) -> ExtremaResult:
    """Percentile masks of the highest- and lowest-ranked particles.

    Ties at either cut are included. When the score spread is below
    ``DEGENERATE_SPREAD`` (or the cuts cross), nothing is salient and both
    masks come back empty.
    """
    if not 0.0 < high_pct < 50.0 or not 0.0 < low_pct < 50.0:
        raise ValueError(f"percentiles must lie in (0, 50), got {high_pct}, {low_pct}")
    c = scores.c
    if c.size != index_map.size:
        raise ValueError(f"{c.size} scores for {index_map.size} mapped particles")

    shape = (grid.rows, grid.cols)
    high = np.zeros(shape, dtype=bool)
    low = np.zeros(shape, dtype=bool)
    grid_scores = np.full(shape, float(np.median(c)) if c.size else 0.0)
    if c.size:
        grid_scores.ravel()[index_map] = c

    degenerate = c.size == 0 or float(c.max() - c.min()) < DEGENERATE_SPREAD
    hi_thr = lo_thr = float(c[0]) if degenerate and c.size else 0.0
    if not degenerate:
        hi_thr = float(np.percentile(c, 100.0 - high_pct))
        lo_thr = float(np.percentile(c, low_pct))
        if hi_thr <= lo_thr:
            logger.warning("percentile cuts crossed (%.3g <= %.3g); treating as degenerate", hi_thr, lo_thr)
            degenerate = True
    if not degenerate:
        high.ravel()[index_map[c >= hi_thr]] = True
        low.ravel()[index_map[c <= lo_thr]] = True

    return ExtremaResult(
        high_mask=high,
        low_mask=low,
        thresholds={
            "high_pct": high_pct,
            "low_pct": low_pct,
            "high_score": hi_thr,
            "low_score": lo_thr,
            "degenerate": degenerate,
        },
        scores=grid_scores,
    )


def regions_from_mask(
    mask: np.ndarray,
    grid: GridSpec,
    frame_width: int,
    frame_height: int,
    polarity: str,
    scores: np.ndarray | None = None,
    min_region: int = MIN_REGION_PARTICLES,
) -> list[Region]:
    """8-connected mask components as pixel-space regions.

    Components smaller than `min_region` particles are discarded; each kept
    region carries its polarity and mean score over the component.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (grid.rows, grid.cols):
        raise ValueError(f"mask shape {mask.shape} does not match grid {grid.cols}x{grid.rows}")
    ex = block_edges(frame_width, grid.cols)
    ey = block_edges(frame_height, grid.rows)

    labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    regions = []
    for lbl in range(1, count + 1):
        component = labels == lbl
        size = int(component.sum())
        if size < min_region:
            continue
        rows_idx, cols_idx = np.nonzero(component)
        x0 = int(ex[cols_idx.min()])
        x1 = int(ex[cols_idx.max() + 1])
        y0 = int(ey[rows_idx.min()])
        y1 = int(ey[rows_idx.max() + 1])
        score = float(scores[component].mean()) if scores is not None else float("nan")
        regions.append(
            Region(
                bbox=Rect(x0, y0, x1 - x0, y1 - y0),
                polarity=polarity,
                score=score,
                particles=size,
            )
        )
    return regions
