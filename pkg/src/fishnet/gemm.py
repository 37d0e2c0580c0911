"""Matrix-multiplication kernels and the naive-vs-tiled benchmark harness.

Three interchangeable kernels share one arithmetic contract:

* ``matmul_naive``    -- textbook triple loop; each output element is a row of
  A times a column of B, accumulated left-to-right in k.
* ``matmul_tiled``    -- the same sums restructured into square cache blocks so
  a block of B stays hot in cache while it is reused; k-blocks are processed
  in ascending order, so every element still accumulates in ascending k.
* ``matmul_parallel`` -- the tiled kernel with row-tile bands handed to a
  thread pool.  Workers own disjoint output rows, and the per-element
  summation order is fixed by the tile walk, not the worker count, so results
  are bitwise identical for any number of threads.

All kernels compute in float64.  ``matmul`` is the dispatch the neural-network
layers call; it routes through the parallel tiled kernel with the module-level
default configuration.
"""

from __future__ import annotations

import math
import os
import statistics
import time
from dataclasses import dataclass, field

import numpy as np
from numba import config as _numba_config

# tbb/omp availability varies by host; the portable layer keeps behaviour
# identical everywhere and supports runtime thread-count changes.
if _numba_config.THREADING_LAYER == "default":
    _numba_config.THREADING_LAYER = "workqueue"

from numba import get_num_threads, njit, prange, set_num_threads


@dataclass(frozen=True)
class MatrixDims:
    """Dimensions of a product: A is m*n, B is n*w, C is m*w."""

    m: int
    n: int
    w: int

    def __post_init__(self) -> None:
        if min(self.m, self.n, self.w) < 1:
            raise ValueError(f"matrix dims must be strictly positive, got {self}")


@dataclass(frozen=True)
class TileConfig:
    """Square block edge and worker count for the blocked kernels.

    ``threads=None`` means one worker per detected CPU core.  Requests above
    the process thread-pool size are capped; results do not depend on the
    worker count, so the cap never changes numerics.
    """

    tile: int = 32
    threads: int | None = None

    def __post_init__(self) -> None:
        if self.tile < 1:
            raise ValueError(f"tile must be >= 1, got {self.tile}")
        if self.threads is not None and self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")


def max_threads() -> int:
    """Size of the worker pool this process can use."""
    return int(_numba_config.NUMBA_NUM_THREADS)


_DETECTED_CORES = os.cpu_count() or 1


def detect_threads() -> int:
    """Default worker count: one per detected CPU core, capped by the pool."""
    return min(_DETECTED_CORES, max_threads())


def _resolve_threads(threads: int | None) -> int:
    return min(threads, max_threads()) if threads is not None else detect_threads()


@njit(cache=True)
def _naive_kernel(a, b, out):  # pragma: no cover - exercised via wrapper
    m, n = a.shape
    w = b.shape[1]
    for i in range(m):
        for j in range(w):
            acc = 0.0
            for k in range(n):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc


@njit(cache=True)
def _tiled_kernel(a, b, out, tile):  # pragma: no cover - exercised via wrapper
    m, n = a.shape
    w = b.shape[1]
    for ii in range(0, m, tile):
        i_end = min(ii + tile, m)
        for kk in range(0, n, tile):
            k_end = min(kk + tile, n)
            for jj in range(0, w, tile):
                j_end = min(jj + tile, w)
                for i in range(ii, i_end):
                    for k in range(kk, k_end):
                        a_ik = a[i, k]
                        for j in range(jj, j_end):
                            out[i, j] += a_ik * b[k, j]


@njit(cache=True, parallel=True)
def _parallel_kernel(a, b, out, tile):  # pragma: no cover - exercised via wrapper
    m, n = a.shape
    w = b.shape[1]
    row_tiles = (m + tile - 1) // tile
    for t in prange(row_tiles):
        ii = t * tile
        i_end = min(ii + tile, m)
        for kk in range(0, n, tile):
            k_end = min(kk + tile, n)
            for jj in range(0, w, tile):
                j_end = min(jj + tile, w)
                for i in range(ii, i_end):
                    for k in range(kk, k_end):
                        a_ik = a[i, k]
                        for j in range(jj, j_end):
                            out[i, j] += a_ik * b[k, j]


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    return arr


def _check_pair(a: np.ndarray, b: np.ndarray) -> MatrixDims:
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"inner dimensions disagree: A is {a.shape[0]}x{a.shape[1]}, "
            f"B is {b.shape[0]}x{b.shape[1]}"
        )
    return MatrixDims(a.shape[0], a.shape[1], b.shape[1])


def matmul_naive(a, b) -> np.ndarray:
    """C[i,j] = sum_k A[i,k]*B[k,j], accumulated left-to-right in k."""
    a = _as_matrix(a, "A")
    b = _as_matrix(b, "B")
    dims = _check_pair(a, b)
    out = np.zeros((dims.m, dims.w))
    _naive_kernel(a, b, out)
    return out


def matmul_tiled(a, b, cfg: TileConfig = TileConfig()) -> np.ndarray:
    """Blocked multiply; equal to naive (k-blocks keep ascending k order)."""
    a = _as_matrix(a, "A")
    b = _as_matrix(b, "B")
    dims = _check_pair(a, b)
    out = np.zeros((dims.m, dims.w))
    _tiled_kernel(a, b, out, cfg.tile)
    return out


def matmul_parallel(a, b, cfg: TileConfig = TileConfig()) -> np.ndarray:
    """Blocked multiply over a worker pool; thread-count invariant."""
    a = _as_matrix(a, "A")
    b = _as_matrix(b, "B")
    dims = _check_pair(a, b)
    out = np.zeros((dims.m, dims.w))
    row_tiles = -(-dims.m // cfg.tile)
    workers = min(_resolve_threads(cfg.threads), row_tiles)
    if workers == 1:
        # one worker owns every row tile: identical loop walk, no pool sync
        _tiled_kernel(a, b, out, cfg.tile)
        return out
    previous = get_num_threads()
    set_num_threads(workers)
    try:
        _parallel_kernel(a, b, out, cfg.tile)
    finally:
        set_num_threads(previous)
    return out


_default_config = TileConfig()


def set_default_config(cfg: TileConfig) -> None:
    """Set the tile/thread configuration used by the `matmul` dispatch."""
    global _default_config
    _default_config = cfg


def get_default_config() -> TileConfig:
    return _default_config


def matmul(a, b) -> np.ndarray:
    """The framework's compute core: parallel tiled GEMM, default config."""
    return matmul_parallel(a, b, _default_config)


@dataclass(frozen=True)
class BenchRow:
    size: int
    method: str
    seconds: float
    reps: int


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["size,method,seconds,reps"]
        lines.extend(
            f"{r.size},{r.method},{r.seconds!r},{r.reps}" for r in self.rows
        )
        return "\n".join(lines) + "\n"


_METHODS = ("naive", "tiled", "parallel")


def _run_method(name: str, a, b, cfg: TileConfig) -> np.ndarray:
    if name == "naive":
        return matmul_naive(a, b)
    if name == "tiled":
        return matmul_tiled(a, b, cfg)
    return matmul_parallel(a, b, cfg)


def bench_gemm(
    sizes, reps: int = 5, cfg: TileConfig = TileConfig(), seed: int = 0
) -> BenchReport:
    """Median wall time per (size, method) on square random matrices.

    One untimed warm-up run per method doubles as a correctness gate: its
    output is cross-checked against the naive kernel before any timing.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("sizes must be nonempty")
    if any(s < 1 for s in sizes):
        raise ValueError(f"sizes must be positive, got {sizes}")
    if reps < 3:
        raise ValueError(f"reps must be >= 3, got {reps}")

    rng = np.random.default_rng(seed)
    report = BenchReport()
    for size in sizes:
        a = rng.standard_normal((size, size))
        b = rng.standard_normal((size, size))
        reference = matmul_naive(a, b)
        for method in _METHODS:
            warm = _run_method(method, a, b, cfg)
            if not _within_rel_tol(warm, reference, 1e-12):
                raise ArithmeticError(
                    f"{method} kernel disagrees with naive at size {size}"
                )
            times = []
            for _ in range(reps):
                start = time.perf_counter()
                _run_method(method, a, b, cfg)
                times.append(time.perf_counter() - start)
            report.rows.append(
                BenchRow(size, method, statistics.median(times), reps)
            )
    return report


def _within_rel_tol(x: np.ndarray, ref: np.ndarray, tol: float) -> bool:
    return max_relative_error(x, ref) <= tol


def max_relative_error(x: np.ndarray, ref: np.ndarray) -> float:
    """Max elementwise |x-ref|/|ref|, counting 0/0 as 0."""
    diff = np.abs(x - ref)
    denom = np.abs(ref)
    mask = denom == 0.0
    if np.any(diff[mask] != 0.0):
        return math.inf
    denom = np.where(mask, 1.0, denom)
    return float(np.max(diff / denom)) if diff.size else 0.0
