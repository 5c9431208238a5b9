"""Dense flow fields: .flo ingestion, temporal averaging, and particle-grid downsampling.

A flow field stores one 2-D velocity per pixel, in pixels/frame. Positions use
continuous pixel coordinates where integer position (x, y) is the center of
pixel column x, row y; x grows rightward and y grows downward.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FloFormatError

# "PIEH" interpreted as a little-endian float32.
FLO_MAGIC = 202021.25
_FLO_HEADER = struct.Struct("<fii")


@dataclass(frozen=True)
class FlowField:
    """Per-pixel velocity grid; u is the horizontal component, v the vertical."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(
                f"u and v must be 2-D arrays of identical shape, got {u.shape} vs {v.shape}"
            )
        if u.shape[0] < 1 or u.shape[1] < 1:
            raise ValueError(f"field dimensions must be positive, got {u.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]


@dataclass
class FlowSequence:
    """Ordered frames of identical shape; fps is metadata only."""

    frames: list[FlowField]
    fps: float = 25.0

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ValueError("a flow sequence needs at least one frame")
        w, h = self.frames[0].width, self.frames[0].height
        for i, f in enumerate(self.frames):
            if f.width != w or f.height != h:
                raise ValueError(
                    f"frame {i} has shape {f.height}x{f.width}, expected {h}x{w}"
                )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height


@dataclass(frozen=True)
class GridSpec:
    """Particle grid: cols along x, rows along y; n = cols*rows particles."""

    cols: int
    rows: int

    def __post_init__(self):
        if self.cols < 2 or self.rows < 2:
            raise ValueError(f"grid needs at least 2x2 particles, got {self.cols}x{self.rows}")

    @property
    def n(self) -> int:
        return self.cols * self.rows

    def validate_against(self, width: int, height: int) -> None:
        if self.cols > width or self.rows > height:
            raise ValueError(
                f"grid {self.cols}x{self.rows} exceeds frame {width}x{height}"
            )


def block_edges(n_pixels: int, n_blocks: int) -> np.ndarray:
    """Pixel boundaries of the block partition (n_blocks+1 edges).

    Blocks are as even as possible; remainder pixels join the last block.
    """
    if not 1 <= n_blocks <= n_pixels:
        raise ValueError(f"cannot split {n_pixels} pixels into {n_blocks} blocks")
    base = n_pixels // n_blocks
    edges = np.arange(n_blocks + 1, dtype=np.int64) * base
    edges[-1] = n_pixels
    return edges


def block_centers(n_pixels: int, n_blocks: int) -> np.ndarray:
    """Center coordinate of each block, in pixel-center coordinates."""
    e = block_edges(n_pixels, n_blocks)
    return (e[:-1] + e[1:] - 1) / 2.0


def load_flo(path) -> FlowField:
    """Read a Middlebury-layout .flo file.

    Layout: float32 magic 202021.25, int32 width, int32 height (all
    little-endian), then height*width interleaved (u, v) float32 pairs in
    row-major order.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _FLO_HEADER.size:
        raise FloFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, width, height = _FLO_HEADER.unpack_from(data)
    if magic != FLO_MAGIC:
        raise FloFormatError(f"{path}: bad magic tag {magic!r}, expected {FLO_MAGIC!r}")
    if width <= 0:
        raise FloFormatError(f"{path}: width must be positive, got {width}")
    if height <= 0:
        raise FloFormatError(f"{path}: height must be positive, got {height}")
    expected = _FLO_HEADER.size + width * height * 8
    if len(data) != expected:
        raise FloFormatError(
            f"{path}: payload is {len(data) - _FLO_HEADER.size} bytes, "
            f"expected {expected - _FLO_HEADER.size} for {width}x{height}"
        )
    uv = np.frombuffer(data, dtype="<f4", offset=_FLO_HEADER.size).reshape(height, width, 2)
    if not np.isfinite(uv).all():
        raise FloFormatError(f"{path}: non-finite values in u/v payload")
    return FlowField(u=uv[..., 0].astype(np.float64), v=uv[..., 1].astype(np.float64))


def save_flo(field: FlowField, path) -> None:
    """Write a field in the .flo layout read by :func:`load_flo`.

    Values are stored as float32; fields whose components are exactly
    representable in float32 round-trip bit-identically.
    """
    path = Path(path)
    uv = np.empty((field.height, field.width, 2), dtype="<f4")
    uv[..., 0] = field.u
    uv[..., 1] = field.v
    if not np.isfinite(uv).all():
        raise ValueError("refusing to write non-finite flow values")
    header = _FLO_HEADER.pack(FLO_MAGIC, field.width, field.height)
    path.write_bytes(header + uv.tobytes())


def load_sequence(directory, fps: float = 25.0) -> FlowSequence:
    """Load every *.flo file in a directory, sorted lexicographically."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"flow directory not found: {directory}")
    files = sorted(directory.glob("*.flo"))
    if not files:
        raise FileNotFoundError(f"no .flo files in {directory}")
    return FlowSequence(frames=[load_flo(f) for f in files], fps=fps)


def save_sequence(seq: FlowSequence, directory, pattern: str = "{:05d}.flo") -> list[Path]:
    """Write one zero-padded .flo file per frame; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(seq.frames):
        p = directory / pattern.format(i)
        save_flo(frame, p)
        paths.append(p)
    return paths


def mean_flow(seq: FlowSequence, start: int, tau: int) -> FlowField:
    """Arithmetic per-pixel mean of u and v over frames [start, start+tau).

    Accumulation is frame-ordered in float64; this single-threaded path
    defines the reference output.
    """
    if tau < 1:
        raise ValueError(f"tau must be at least 1, got {tau}")
    if start < 0 or start + tau > len(seq):
        raise ValueError(
            f"window [{start}, {start + tau}) exceeds sequence of length {len(seq)}"
        )
    acc_u = np.zeros((seq.height, seq.width))
    acc_v = np.zeros_like(acc_u)
    for frame in seq.frames[start : start + tau]:
        acc_u += frame.u
        acc_v += frame.v
    return FlowField(u=acc_u / tau, v=acc_v / tau)


def downsample_to_grid(field: FlowField, grid: GridSpec) -> FlowField:
    """Block-mean the field onto the particle grid (one velocity per particle).

    Returns a cols x rows field; each particle's velocity is the mean of its
    pixel block. Blocks partition the frame per :func:`block_edges`.
    """
    grid.validate_against(field.width, field.height)
    ex = block_edges(field.width, grid.cols)
    ey = block_edges(field.height, grid.rows)
    counts = np.outer(np.diff(ey), np.diff(ex)).astype(np.float64)

    def block_mean(a: np.ndarray) -> np.ndarray:
        rows = np.add.reduceat(a, ey[:-1], axis=0)
        return np.add.reduceat(rows, ex[:-1], axis=1) / counts

    return FlowField(u=block_mean(field.u), v=block_mean(field.v))
