"""Measurement suite for conditional embeddings.

Cosine-similarity matrices and off-diagonal summaries, participation ratio on
absolute magnitudes with its normalized form, sparsity ratio at a magnitude
threshold, head/tail index splits, per-dimension variance, and magnitude
histograms. ``analyze_embedding_set`` bundles everything into one JSON-ready
report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllZeroVector,
    BadEdges,
    NonPositiveTau,
    OutOfRange,
    TooSmall,
    ZeroNormRow,
)
from .tensorio import EmbeddingSet

DEFAULT_HISTOGRAM_EDGES = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
DEFAULT_TAUS = (0.01, 0.02, 0.05)


@dataclass
class CosineSummary:
    """Statistics over the strictly off-diagonal entries of a cosine matrix."""

    matrix_shape: tuple[int, int]
    mean_offdiag: float
    min_offdiag: float
    max_offdiag: float


@dataclass
class HeadTailSplit:
    """Index partition at threshold tau: strict > goes to head, strict < to tail."""

    tau: float
    head_indices: np.ndarray
    tail_indices: np.ndarray
    boundary_indices: np.ndarray


@dataclass
class SparsityReport:
    d: int
    pr: float
    npr: float
    tail_fraction_at: dict[float, float] = field(default_factory=dict)
    head_count_at: dict[float, int] = field(default_factory=dict)


@dataclass
class HistogramResult:
    edges: tuple[float, ...]
    counts: np.ndarray
    underflow: int
    overflow: int


def _as_matrix(E) -> np.ndarray:
    M = np.asarray(getattr(E, "matrix", E), dtype=np.float64)
    if M.ndim != 2:
        raise TooSmall(f"expected a rank-2 matrix, got shape {M.shape}")
    return M


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).ravel()
    if arr.size == 0:
        raise AllZeroVector("empty vector")
    return arr


def cosine_matrix(E) -> np.ndarray:
    """Pairwise cosine similarity of the rows of an N x d matrix.

    The diagonal is set to exactly 1 after normalization; raises ZeroNormRow
    (with the offending row index) if any row cannot be normalized.
    """
    M = _as_matrix(E)
    norms = np.linalg.norm(M, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroNormRow(int(zero[0]))
    R = M / norms[:, None]
    C = R @ R.T
    np.fill_diagonal(C, 1.0)
    return C


def cosine_summary(C) -> CosineSummary:
    """Mean/min/max over strictly off-diagonal entries of a square matrix."""
    C = _as_matrix(C)
    n = C.shape[0]
    if C.shape[1] != n or n < 2:
        raise TooSmall(f"need a square matrix with N >= 2, got shape {C.shape}")
    off = C[~np.eye(n, dtype=bool)]
    return CosineSummary(
        matrix_shape=(n, n),
        mean_offdiag=float(off.mean()),
        min_offdiag=float(off.min()),
        max_offdiag=float(off.max()),
    )


def participation_ratio(v) -> float:
    """Effective number of contributing coordinates, (sum |v_i|)^2 / sum v_i^2."""
    mags = np.abs(_as_vector(v))
    denom = float(np.sum(mags * mags))
    if denom == 0.0:
        raise AllZeroVector("participation ratio undefined for the zero vector")
    total = float(np.sum(mags))
    return total * total / denom


def npr(alpha: float, d: int) -> float:
    """Normalized participation ratio alpha/d, in (0, 1]."""
    if d < 1:
        raise OutOfRange(f"dimension {d} < 1")
    if not (1.0 - 1e-9 <= alpha <= d * (1.0 + 1e-9)):
        raise OutOfRange(f"alpha {alpha} outside [1, {d}]")
    return alpha / d


def truncate_pct(fraction: float, decimals: int = 2) -> str:
    """Percentage display truncated (not rounded) to ``decimals`` places.

    Truncation is what makes the reference table arithmetic self-consistent:
    0.104765... prints as 10.47%, never 10.48%.
    """
    scale = 10**decimals
    value = math.floor(fraction * 100.0 * scale) / scale
    return f"{value:.{decimals}f}%"


def sparsity_tail(v, tau: float) -> float:
    """Fraction of coordinates with |v_i| strictly below tau."""
    if tau <= 0:
        raise NonPositiveTau(f"tau must be > 0, got {tau}")
    mags = np.abs(_as_vector(v))
    return float(np.count_nonzero(mags < tau)) / mags.size


def head_tail_split(v, tau: float) -> HeadTailSplit:
    """Partition indices into head (|v| > tau), tail (|v| < tau), boundary (==)."""
    if tau <= 0:
        raise NonPositiveTau(f"tau must be > 0, got {tau}")
    mags = np.abs(_as_vector(v))
    return HeadTailSplit(
        tau=float(tau),
        head_indices=np.flatnonzero(mags > tau),
        tail_indices=np.flatnonzero(mags < tau),
        boundary_indices=np.flatnonzero(mags == tau),
    )


def variance_per_dim(E) -> tuple[np.ndarray, np.ndarray]:
    """Population variance per column, plus the same values sorted descending."""
    M = _as_matrix(E)
    if M.shape[0] < 2:
        raise TooSmall(f"variance needs N >= 2 rows, got {M.shape[0]}")
    var = M.var(axis=0)
    return var, np.sort(var)[::-1].copy()


def magnitude_histogram(v, edges=DEFAULT_HISTOGRAM_EDGES) -> HistogramResult:
    """Counts of |v_i| per half-open bin [e_k, e_{k+1}), plus under/overflow."""
    edges_arr = np.asarray(edges, dtype=np.float64)
    if edges_arr.ndim != 1 or edges_arr.size < 2 or np.any(np.diff(edges_arr) <= 0):
        raise BadEdges(f"edges must be strictly ascending with length >= 2, got {edges}")
    mags = np.abs(_as_vector(v))
    idx = np.searchsorted(edges_arr, mags, side="right") - 1
    underflow = int(np.count_nonzero(idx < 0))
    overflow = int(np.count_nonzero(idx >= edges_arr.size - 1))
    valid = idx[(idx >= 0) & (idx < edges_arr.size - 1)]
    counts = np.bincount(valid, minlength=edges_arr.size - 1)
    return HistogramResult(
        edges=tuple(float(e) for e in edges_arr),
        counts=counts,
        underflow=underflow,
        overflow=overflow,
    )


_KIND_LABEL = {"class_table": "y", "timestep_grid": "t", "condition": "y+t"}


def analyze_embedding_set(
    E: EmbeddingSet | np.ndarray,
    taus=DEFAULT_TAUS,
    kind_label: str | None = None,
    per_row: bool = False,
) -> dict:
    """Composite metrics report for an N x d embedding set.

    PR/nPR and the threshold statistics are computed on the mean absolute
    vector across rows (one number per set); ``per_row`` additionally reports
    a participation ratio per row. With a single row the cosine summary and
    variance profile are omitted and flagged.
    """
    M = _as_matrix(E)
    n_rows, d = M.shape
    mean_abs = np.abs(M).mean(axis=0)
    alpha = participation_ratio(mean_abs)

    flags: list[str] = []
    if n_rows >= 2:
        summary = cosine_summary(cosine_matrix(M))
        cosine = {
            "mean": summary.mean_offdiag,
            "min": summary.min_offdiag,
            "max": summary.max_offdiag,
        }
        _, var_sorted = variance_per_dim(M)
        variance_top20 = [float(x) for x in var_sorted[:20]]
    else:
        cosine = None
        variance_top20 = None
        flags.append("single_row_no_cosine_no_variance")

    taus = [float(t) for t in taus]
    report = {
        "kind": kind_label or _KIND_LABEL.get(getattr(E, "kind", ""), "y"),
        "d": d,
        "n_rows": n_rows,
        "pr": alpha,
        "npr": npr(alpha, d),
        "cosine": cosine,
        "tail_fraction": {str(t): sparsity_tail(mean_abs, t) for t in taus},
        "head_count": {str(t): int(np.count_nonzero(np.abs(mean_abs) > t)) for t in taus},
        "variance_top20": variance_top20,
        "flags": flags,
    }
    if per_row:
        report["pr_per_row"] = [participation_ratio(row) for row in M]
    return report
