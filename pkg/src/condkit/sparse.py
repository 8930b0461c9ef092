"""Sparse condition vectors and sparse-dense matvec kernels with a benchmark.

A pruned condition vector is mostly zeros, so the modulation projections can
skip the zeroed columns. Correctness is always asserted against the dense
path; speed is only ever reported, never asserted, because timings are
hardware-specific.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import BadParams, DimMismatch, NonPositiveTau

_WARMUP_ITERS = 10


@dataclass
class SparseVec:
    """Coordinate-format vector: strictly ascending indices, no stored zeros."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).ravel()
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.indices.size != self.values.size:
            raise DimMismatch("indices and values lengths differ")
        if self.indices.size:
            if np.any(np.diff(self.indices) <= 0):
                raise DimMismatch("indices must be strictly ascending")
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise DimMismatch(f"indices outside [0, {self.dim})")
        if np.any(self.values == 0.0):
            raise DimMismatch("stored values must be nonzero")

    @property
    def nnz(self) -> int:
        return int(self.indices.size)


def sparsify(c, tau: float) -> SparseVec:
    """Sparse view of tail pruning: keeps entries with |c_i| >= tau."""
    if tau <= 0:
        raise NonPositiveTau(f"tau must be > 0, got {tau}")
    arr = np.asarray(c, dtype=np.float64).ravel()
    keep = np.flatnonzero(np.abs(arr) >= tau)
    return SparseVec(dim=arr.size, indices=keep, values=arr[keep])


def densify(s: SparseVec) -> np.ndarray:
    out = np.zeros(s.dim, dtype=np.float64)
    out[s.indices] = s.values
    return out


def spmv(W, s: SparseVec) -> np.ndarray:
    """W @ densify(s) computed from the stored columns only."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] != s.dim:
        raise DimMismatch(f"matrix is {W.shape}, sparse vector dim is {s.dim}")
    if s.nnz == 0:
        return np.zeros(W.shape[0], dtype=np.float64)
    return W[:, s.indices] @ s.values


@dataclass
class BenchReport:
    d: int
    out_dim: int
    sparsity: float
    dense_ns_per_op: float
    sparse_ns_per_op: float
    speedup: float
    iters: int
    nnz: int
    checksum_dense: str
    checksum_sparse: str
    single_thread: bool = True

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "out_dim": self.out_dim,
            "sparsity": self.sparsity,
            "dense_ns_per_op": self.dense_ns_per_op,
            "sparse_ns_per_op": self.sparse_ns_per_op,
            "speedup": self.speedup,
            "iters": self.iters,
            "nnz": self.nnz,
            "checksum_dense": self.checksum_dense,
            "checksum_sparse": self.checksum_sparse,
            "single_thread": self.single_thread,
        }


def _checksum(out: np.ndarray) -> str:
    # Quantized to 1e-6 of the vector's max magnitude so dense and sparse
    # paths (which sum in different orders) hash identically when they agree.
    scale = float(np.max(np.abs(out))) if out.size else 0.0
    if scale == 0.0:
        q = np.zeros(out.shape, dtype=np.int64)
    else:
        q = np.round(out * (1e6 / scale)).astype(np.int64)
    return hashlib.sha256(q.tobytes()).hexdigest()[:16]


def bench(d: int, out_dim: int, sparsity: float, iters: int, seed: int = 0) -> BenchReport:
    """Time dense matvec vs sparse matvec on identical data, single-threaded."""
    if d < 1 or out_dim < 1:
        raise BadParams(f"dimensions must be >= 1, got d={d}, out_dim={out_dim}")
    if not (0.0 <= sparsity < 1.0):
        raise BadParams(f"sparsity must be in [0, 1), got {sparsity}")
    if iters < 100:
        raise BadParams(f"iters must be >= 100, got {iters}")

    rng = np.random.default_rng(seed)
    W = rng.standard_normal((out_dim, d))
    c = rng.standard_normal(d)
    n_zero = int(round(sparsity * d))
    zero_at = rng.choice(d, size=n_zero, replace=False)
    c[zero_at] = 0.0
    keep = np.flatnonzero(c != 0.0)
    s = SparseVec(dim=d, indices=keep, values=c[keep])

    dense_out = W @ c
    sparse_out = spmv(W, s)
    if not np.allclose(dense_out, sparse_out, rtol=1e-6, atol=1e-9 * max(1.0, float(np.max(np.abs(dense_out))))):
        raise RuntimeError("dense and sparse kernels disagree beyond tolerance")

    with threadpool_limits(limits=1):
        for _ in range(_WARMUP_ITERS):
            W @ c
            spmv(W, s)
        t0 = time.perf_counter_ns()
        for _ in range(iters):
            W @ c
        t1 = time.perf_counter_ns()
        for _ in range(iters):
            spmv(W, s)
        t2 = time.perf_counter_ns()

    dense_ns = (t1 - t0) / iters
    sparse_ns = (t2 - t1) / iters
    return BenchReport(
        d=d,
        out_dim=out_dim,
        sparsity=sparsity,
        dense_ns_per_op=dense_ns,
        sparse_ns_per_op=sparse_ns,
        speedup=dense_ns / sparse_ns,
        iters=iters,
        nnz=s.nnz,
        checksum_dense=_checksum(dense_out),
        checksum_sparse=_checksum(sparse_out),
    )
