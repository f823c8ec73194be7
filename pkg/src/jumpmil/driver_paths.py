"""Coupled Wiener/Poisson driving-path primitives on dyadic grids.

A path is sampled once on the finest grid: Wiener increments, Poisson counts,
jump times inside each cell and the Wiener values at those jump times. Coarser
grids are obtained by exact aggregation, so that the same noise drives every
level. All randomness is keyed by ``(master_seed, path_index)`` through a Philox
counter-based generator, which makes results independent of evaluation order.
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import BinaryIO

import numpy as np

from .errors import DataCorruptionError, InvalidArgumentError

MASK64 = (1 << 64) - 1
DEFAULT_MAX_JUMPS = 10**6

# Philox counter word 3 selects the stream, word 2 the sub-stream.
STREAM_PATH = 0
STREAM_COINS = 1

DUMP_MAGIC = b"JMPD"
DUMP_VERSION = 1


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    path_index: int = 0

    def __post_init__(self):
        if self.path_index < 0:
            raise InvalidArgumentError("path_index must be non-negative")

    def generator(self, stream: int = STREAM_PATH, substream: int = 0) -> np.random.Generator:
        key = np.array([self.master_seed & MASK64, self.path_index & MASK64], dtype=np.uint64)
        counter = np.array([0, 0, substream, stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(counter=counter, key=key))


@dataclass(frozen=True)
class Grid:
    horizon_T: float
    level_k: int

    @property
    def n(self) -> int:
        return 1 << self.level_k

    @property
    def delta(self) -> float:
        return self.horizon_T / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = self.horizon_T * (np.arange(self.n + 1) / self.n)
        nodes.setflags(write=False)
        return nodes


def build_grid(horizon_T: float, level_k: int) -> Grid:
    if not (horizon_T > 0 and math.isfinite(horizon_T)):
        raise InvalidArgumentError(f"horizon must be positive and finite, got {horizon_T!r}")
    if int(level_k) != level_k or level_k < 0:
        raise InvalidArgumentError(f"level must be a non-negative integer, got {level_k!r}")
    return Grid(float(horizon_T), int(level_k))


@dataclass(frozen=True)
class CellNoise:
    """Driving noise on one cell; bridge values are relative to the cell start."""

    dW: float
    dN: int
    jump_times: tuple = ()
    w_at_jumps: tuple = ()

    def validate(self, t_left: float | None = None, t_right: float | None = None) -> None:
        if self.dN < 0:
            raise DataCorruptionError("negative jump count")
        if len(self.jump_times) != self.dN or len(self.w_at_jumps) != self.dN:
            raise DataCorruptionError(
                f"cell has dN={self.dN} but {len(self.jump_times)} jump times "
                f"and {len(self.w_at_jumps)} bridge values"
            )
        times = np.asarray(self.jump_times, dtype=float)
        if times.size > 1 and np.any(np.diff(times) < 0):
            raise DataCorruptionError("jump times are not sorted")
        if t_left is not None and times.size and (times[0] <= t_left or times[-1] > t_right):
            raise DataCorruptionError("jump time outside its cell")


@dataclass(frozen=True)
class IteratedIntegrals:
    """The four double integrals over a cell. Fields may be floats or arrays."""

    i_ww: float | np.ndarray
    i_nn: float | np.ndarray
    i_nw: float | np.ndarray
    i_wn: float | np.ndarray


@dataclass(frozen=True, eq=False)
class PathPrimitive:
    """One driving path on one grid, stored as flat arrays.

    Jumps of all cells live in ``jump_times`` / ``w_at_jumps`` in time order;
    cell ``i`` owns the slice ``offsets[i]:offsets[i + 1]``.
    """

    grid: Grid
    dW: np.ndarray
    dN: np.ndarray
    jump_times: np.ndarray
    w_at_jumps: np.ndarray
    xi: np.ndarray
    intensity_lambda: float = 0.0
    seed: SeedSpec | None = None

    def __post_init__(self):
        n = self.grid.n
        if self.dW.shape != (n,) or self.dN.shape != (n,) or self.xi.shape != (n,):
            raise DataCorruptionError("per-cell arrays do not match the grid")
        m = int(self.dN.sum())
        if self.jump_times.shape != (m,) or self.w_at_jumps.shape != (m,):
            raise DataCorruptionError("jump arrays do not match the total jump count")
        for arr in (self.dW, self.dN, self.jump_times, self.w_at_jumps, self.xi):
            arr.setflags(write=False)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.dN)))

    @cached_property
    def jump_cells(self) -> np.ndarray:
        return np.repeat(np.arange(self.grid.n), self.dN)

    def cell(self, i: int) -> CellNoise:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return CellNoise(
            float(self.dW[i]),
            int(self.dN[i]),
            tuple(self.jump_times[lo:hi].tolist()),
            tuple(self.w_at_jumps[lo:hi].tolist()),
        )

    @property
    def cells(self) -> list[CellNoise]:
        return [self.cell(i) for i in range(self.grid.n)]

    def wiener_nodes(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.dW)))

    def count_nodes(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.dN)))


def _bridge_values(rng, offsets_in_cell, cells, dN, dW, delta):
    """Brownian-bridge values at the jump offsets, pinned to each cell's dW.

    A free Brownian path is drawn at the jump offsets and the cell end, then
    pinned linearly to the cell increment; this has the exact bridge law.
    """
    m = offsets_in_cell.size
    if m == 0:
        return np.empty(0)
    s = offsets_in_cell
    first = np.ones(m, dtype=bool)
    first[1:] = cells[1:] != cells[:-1]
    prev_s = np.empty(m)
    prev_s[0] = 0.0
    prev_s[1:] = s[:-1]
    prev_s[first] = 0.0
    starts = np.flatnonzero(first)
    lasts = np.append(starts[1:], m) - 1
    z = rng.standard_normal(m + starts.size)

    free = np.cumsum(np.sqrt(np.maximum(s - prev_s, 0.0)) * z[:m])
    segment = np.cumsum(first) - 1
    before = np.concatenate(([0.0], free))[starts]
    free = free - before[segment]
    free_end = free[lasts] + np.sqrt(np.maximum(delta - s[lasts], 0.0)) * z[m:]
    pin = free_end - dW[cells[starts]]
    return free - (s / delta) * pin[segment]


def sample_fine_path(
    seed: SeedSpec,
    grid: Grid,
    intensity_lambda: float,
    *,
    max_jumps: int = DEFAULT_MAX_JUMPS,
) -> PathPrimitive:
    if not (intensity_lambda >= 0 and math.isfinite(intensity_lambda)):
        raise InvalidArgumentError(f"intensity must be non-negative, got {intensity_lambda!r}")
    rng = seed.generator(STREAM_PATH)
    n, delta, nodes = grid.n, grid.delta, grid.nodes

    dW = rng.standard_normal(n) * math.sqrt(delta)
    if intensity_lambda > 0:
        dN = rng.poisson(intensity_lambda * delta, n).astype(np.int64)
    else:
        dN = np.zeros(n, dtype=np.int64)
    m = int(dN.sum())
    if m > max_jumps:
        raise InvalidArgumentError(f"path has {m} jumps, above the cap of {max_jumps}")

    cells = np.repeat(np.arange(n), dN)
    # (0, 1]: a jump at the right node belongs to the left cell (t_i, t_{i+1}].
    u = 1.0 - rng.random(m)
    u = u[np.lexsort((u, cells))]
    s = delta * u
    jump_times = np.minimum(nodes[cells] + s, nodes[cells + 1])
    w_at_jumps = _bridge_values(rng, s, cells, dN, dW, delta)
    xi = np.minimum(nodes[:-1] + delta * rng.random(n), nodes[1:])
    return PathPrimitive(grid, dW, dN, jump_times, w_at_jumps, xi, float(intensity_lambda), seed)


def cell_iterated_integrals(cell: CellNoise, delta: float) -> IteratedIntegrals:
    cell.validate()
    dW, m = cell.dW, cell.dN
    w = list(cell.w_at_jumps) + [dW]
    i_nw = 0.0
    for j in range(1, m + 1):
        i_nw += j * (w[j] - w[j - 1])
    i_wn = math.fsum(cell.w_at_jumps)
    return IteratedIntegrals(
        i_ww=(dW * dW - delta) / 2.0,
        i_nn=m * (m - 1) / 2.0,
        i_nw=i_nw,
        i_wn=i_wn,
    )


def _jump_integrals(dW, dN, w_at_jumps):
    n = dW.size
    m = w_at_jumps.size
    if m == 0:
        return np.zeros(n), np.zeros(n)
    cells = np.repeat(np.arange(n), dN)
    offsets = np.concatenate(([0], np.cumsum(dN)))
    rank = np.arange(m) - offsets[cells] + 1
    last = rank == dN[cells]
    nxt = np.empty(m)
    nxt[:-1] = w_at_jumps[1:]
    nxt[last] = dW[cells[last]]
    i_nw = np.bincount(cells, weights=rank * (nxt - w_at_jumps), minlength=n)
    i_wn = np.bincount(cells, weights=w_at_jumps, minlength=n)
    return i_nw, i_wn


def path_iterated_integrals(path: PathPrimitive) -> IteratedIntegrals:
    """Vectorised ``cell_iterated_integrals`` over every cell of a path."""
    i_nw, i_wn = _jump_integrals(path.dW, path.dN, path.w_at_jumps)
    dN = path.dN.astype(float)
    return IteratedIntegrals(
        i_ww=(path.dW * path.dW - path.grid.delta) / 2.0,
        i_nn=dN * (dN - 1.0) / 2.0,
        i_nw=i_nw,
        i_wn=i_wn,
    )


def compose_integrals(dW, dN, integrals: IteratedIntegrals) -> IteratedIntegrals:
    """Merge adjacent cell pairs along the last axis.

    Uses I_{a,c}(Y,Z) = I_{a,b}(Y,Z) + I_{b,c}(Y,Z) + dY_{[a,b]} dZ_{[b,c]}.
    """
    dW = np.asarray(dW, dtype=float)
    dN = np.asarray(dN, dtype=float)
    w1, w2 = dW[..., 0::2], dW[..., 1::2]
    n1, n2 = dN[..., 0::2], dN[..., 1::2]

    def merge(a, dy1, dz2):
        a = np.asarray(a, dtype=float)
        return a[..., 0::2] + a[..., 1::2] + dy1 * dz2

    return IteratedIntegrals(
        i_ww=merge(integrals.i_ww, w1, w2),
        i_nn=merge(integrals.i_nn, n1, n2),
        i_nw=merge(integrals.i_nw, n1, w2),
        i_wn=merge(integrals.i_wn, w1, n2),
    )


def _coins(seed: SeedSpec, fine_level: int, n_coarse: int) -> np.ndarray:
    return seed.generator(STREAM_COINS, fine_level).integers(0, 2, n_coarse)


def coarsen(fine: PathPrimitive, coin_stream: SeedSpec | None = None) -> PathPrimitive:
    """Merge cell pairs of ``fine`` into the next coarser level.

    ``coin_stream`` keys the fair coins that pick which fine randomization point
    survives; it defaults to the path's own seed.
    """
    k = fine.grid.level_k
    if k < 1:
        raise InvalidArgumentError("cannot coarsen a level-0 path")
    coin_stream = coin_stream or fine.seed
    if coin_stream is None:
        raise InvalidArgumentError("coarsening requires a coin stream seed")
    grid = Grid(fine.grid.horizon_T, k - 1)
    n = grid.n

    pairs = fine.dW.reshape(n, 2)
    dW = pairs[:, 0] + pairs[:, 1]
    dN = fine.dN.reshape(n, 2).sum(axis=1)
    cells = fine.jump_cells
    odd = cells % 2 == 1
    w_at_jumps = fine.w_at_jumps.copy()
    w_at_jumps[odd] += fine.dW[cells[odd] - 1]
    coins = _coins(coin_stream, k, n)
    xi = fine.xi.reshape(n, 2)[np.arange(n), coins]
    return PathPrimitive(
        grid, dW, dN, fine.jump_times.copy(), w_at_jumps, xi, fine.intensity_lambda, fine.seed
    )


@dataclass(eq=False)
class PathBatch:
    """Many coupled paths on one grid, one row per path.

    Only what the schemes and estimators need is kept: increments, the two
    jump-dependent integrals and the randomization points. Coarsening uses the
    composition law and the same per-path coins as :func:`coarsen`.
    """

    grid: Grid
    intensity_lambda: float
    master_seed: int
    path_indices: np.ndarray
    dW: np.ndarray
    dN: np.ndarray
    i_nw: np.ndarray
    i_wn: np.ndarray
    xi: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]

    @property
    def i_ww(self) -> np.ndarray:
        return (self.dW * self.dW - self.grid.delta) / 2.0

    @property
    def i_nn(self) -> np.ndarray:
        dN = self.dN.astype(float)
        return dN * (dN - 1.0) / 2.0

    def integrals(self) -> IteratedIntegrals:
        return IteratedIntegrals(self.i_ww, self.i_nn, self.i_nw, self.i_wn)

    def wiener_nodes(self) -> np.ndarray:
        out = np.zeros((self.n_paths, self.grid.n + 1))
        np.cumsum(self.dW, axis=1, out=out[:, 1:])
        return out

    def count_nodes(self) -> np.ndarray:
        out = np.zeros((self.n_paths, self.grid.n + 1), dtype=np.int64)
        np.cumsum(self.dN, axis=1, out=out[:, 1:])
        return out

    def coarsen(self) -> PathBatch:
        k = self.grid.level_k
        if k < 1:
            raise InvalidArgumentError("cannot coarsen a level-0 batch")
        grid = Grid(self.grid.horizon_T, k - 1)
        n = grid.n
        zeros = np.zeros_like(self.i_nw)
        composed = compose_integrals(
            self.dW, self.dN, IteratedIntegrals(zeros, zeros, self.i_nw, self.i_wn)
        )
        dW = self.dW[:, 0::2] + self.dW[:, 1::2]
        dN = self.dN[:, 0::2] + self.dN[:, 1::2]
        xi = None
        if self.xi is not None:
            xi = np.empty((self.n_paths, n))
            rows = self.xi.reshape(self.n_paths, n, 2)
            cols = np.arange(n)
            for r, idx in enumerate(self.path_indices):
                coins = _coins(SeedSpec(self.master_seed, int(idx)), k, n)
                xi[r] = rows[r, cols, coins]
        return PathBatch(
            grid, self.intensity_lambda, self.master_seed, self.path_indices,
            dW, dN, composed.i_nw, composed.i_wn, xi, dict(self.extras),
        )


def sample_batch(
    grid: Grid,
    intensity_lambda: float,
    n_paths: int,
    master_seed: int,
    *,
    start_index: int = 0,
    threads: int = 1,
    keep_xi: bool = True,
    max_jumps: int = DEFAULT_MAX_JUMPS,
) -> PathBatch:
    """Sample paths ``start_index .. start_index + n_paths - 1`` into a batch.

    Each row depends only on its own ``SeedSpec``, so the result is identical
    for any ``threads``.
    """
    if n_paths < 1:
        raise InvalidArgumentError("need at least one path")
    n = grid.n
    indices = np.arange(start_index, start_index + n_paths, dtype=np.int64)
    dW = np.empty((n_paths, n))
    dN = np.empty((n_paths, n), dtype=np.int64)
    i_nw = np.empty((n_paths, n))
    i_wn = np.empty((n_paths, n))
    xi = np.empty((n_paths, n)) if keep_xi else None

    def fill(rows):
        for r in rows:
            path = sample_fine_path(
                SeedSpec(master_seed, int(indices[r])), grid, intensity_lambda, max_jumps=max_jumps
            )
            dW[r] = path.dW
            dN[r] = path.dN
            i_nw[r], i_wn[r] = _jump_integrals(path.dW, path.dN, path.w_at_jumps)
            if xi is not None:
                xi[r] = path.xi

    threads = max(1, int(threads))
    if threads == 1:
        fill(range(n_paths))
    else:
        chunks = np.array_split(np.arange(n_paths), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, chunks))
    return PathBatch(grid, float(intensity_lambda), master_seed, indices, dW, dN, i_nw, i_wn, xi)


_HEADER = struct.Struct("<4sIIQdd")


def dump_path(path: PathPrimitive, out: BinaryIO) -> None:
    """Write the little-endian debugging dump of a path."""
    out.write(_HEADER.pack(
        DUMP_MAGIC, DUMP_VERSION, path.grid.level_k, path.grid.n,
        path.intensity_lambda, path.grid.horizon_T,
    ))
    offsets = path.offsets
    for i in range(path.grid.n):
        lo, hi = offsets[i], offsets[i + 1]
        out.write(struct.pack("<dI", path.dW[i], int(path.dN[i])))
        for tau, w in zip(path.jump_times[lo:hi], path.w_at_jumps[lo:hi]):
            out.write(struct.pack("<dd", tau, w))
        out.write(struct.pack("<d", path.xi[i]))


def load_path(src: BinaryIO) -> PathPrimitive:
    def read(size):
        buf = src.read(size)
        if len(buf) != size:
            raise DataCorruptionError("truncated path dump")
        return buf

    magic, version, level_k, n, lam, horizon = _HEADER.unpack(read(_HEADER.size))
    if magic != DUMP_MAGIC:
        raise DataCorruptionError(f"bad magic {magic!r}")
    if version != DUMP_VERSION:
        raise DataCorruptionError(f"unsupported dump version {version}")
    grid = build_grid(horizon, level_k)
    if grid.n != n:
        raise DataCorruptionError("cell count does not match level")
    dW = np.empty(n)
    dN = np.empty(n, dtype=np.int64)
    xi = np.empty(n)
    times, values = [], []
    for i in range(n):
        dW[i], dN[i] = struct.unpack("<dI", read(12))
        for _ in range(dN[i]):
            tau, w = struct.unpack("<dd", read(16))
            times.append(tau)
            values.append(w)
        (xi[i],) = struct.unpack("<d", read(8))
    return PathPrimitive(grid, dW, dN, np.array(times, dtype=float), np.array(values, dtype=float), xi, lam)
