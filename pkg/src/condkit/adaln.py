"""Adaptive layer normalization conditioning primitives.

The condition vector (class embedding plus timestep embedding) is linearly
projected to per-feature scale gamma and shift beta, which modulate the
normalized hidden state. Projections are zero-bias by default, so the
modulation is exactly linear in the condition vector and decomposes exactly
over any head/tail split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, OddDim, ShapeMismatch, WidthMismatch

LAYERNORM_EPS = 1e-5
FREQ_BASE = 10000.0


@dataclass
class ConditionVector:
    values: np.ndarray
    class_id: int | None = None
    timestep: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.values)):
            raise ShapeMismatch("condition vector entries must be finite")


@dataclass
class ModulationParams:
    gamma: np.ndarray
    beta: np.ndarray
    gate: np.ndarray | None = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64).ravel()
        self.beta = np.asarray(self.beta, dtype=np.float64).ravel()
        if self.gate is not None:
            self.gate = np.asarray(self.gate, dtype=np.float64).ravel()
        widths = {self.gamma.size, self.beta.size} | ({self.gate.size} if self.gate is not None else set())
        if len(widths) != 1:
            raise WidthMismatch(f"gamma/beta/gate widths disagree: {sorted(widths)}")


def timestep_frequencies(dim: int) -> np.ndarray:
    """omega_i = base^(-i/(dim/2)) for i in 0..dim/2-1; omega_0 is always 1."""
    if dim < 2 or dim % 2 != 0:
        raise OddDim(f"embedding width must be even and >= 2, got {dim}")
    half = dim // 2
    return np.exp(-math.log(FREQ_BASE) * np.arange(half, dtype=np.float64) / half)


def embed_timestep(t: float, dim: int) -> np.ndarray:
    """Sinusoidal embedding: sin(t*omega) in the first half, cos in the second."""
    omega = timestep_frequencies(dim)
    args = float(t) * omega
    return np.concatenate([np.sin(args), np.cos(args)])


def condition_vector(y_emb, t_emb, class_id: int | None = None, timestep: float = 0.0) -> ConditionVector:
    """Elementwise sum of class and timestep embeddings."""
    y = np.asarray(y_emb, dtype=np.float64).ravel()
    t = np.asarray(t_emb, dtype=np.float64).ravel()
    if y.size != t.size:
        raise LengthMismatch(f"y has {y.size} entries, t has {t.size}")
    return ConditionVector(values=y + t, class_id=class_id, timestep=timestep)


def _cond_values(c) -> np.ndarray:
    if isinstance(c, ConditionVector):
        return c.values
    return np.asarray(c, dtype=np.float64).ravel()


def modulation(c, W_gamma, W_beta, b_gamma=None, b_beta=None) -> ModulationParams:
    """gamma = W_gamma @ c, beta = W_beta @ c (optional bias for zero-init variants)."""
    vec = _cond_values(c)
    Wg = np.asarray(W_gamma, dtype=np.float64)
    Wb = np.asarray(W_beta, dtype=np.float64)
    if Wg.ndim != 2 or Wb.ndim != 2 or Wg.shape[1] != vec.size or Wb.shape[1] != vec.size:
        raise ShapeMismatch(
            f"projections must be (w x {vec.size}); got {Wg.shape} and {Wb.shape}"
        )
    if Wg.shape[0] != Wb.shape[0]:
        raise ShapeMismatch(f"gamma width {Wg.shape[0]} != beta width {Wb.shape[0]}")
    gamma = Wg @ vec
    beta = Wb @ vec
    if b_gamma is not None:
        gamma = gamma + np.asarray(b_gamma, dtype=np.float64).ravel()
    if b_beta is not None:
        beta = beta + np.asarray(b_beta, dtype=np.float64).ravel()
    return ModulationParams(gamma=gamma, beta=beta)


def adaln_forward(h, m: ModulationParams) -> np.ndarray:
    """gamma * (h - mean) / (population std + eps) + beta over the feature axis."""
    vec = np.asarray(h, dtype=np.float64).ravel()
    if vec.size != m.gamma.size:
        raise WidthMismatch(f"hidden width {vec.size} != modulation width {m.gamma.size}")
    mu = vec.mean()
    sigma = math.sqrt(float(np.mean((vec - mu) ** 2)))
    return m.gamma * ((vec - mu) / (sigma + LAYERNORM_EPS)) + m.beta
