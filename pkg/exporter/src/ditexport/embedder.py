"""Timestep embeddings computed with the checkpoint's own embedder weights.

The DiT lineage uses a sinusoidal frequency embedding (cos half first, base
10000) followed by a Linear/SiLU/Linear MLP; the weights come straight from
the loaded state dict, so the output matches what the model itself would feed
into the conditioning sum.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeUnexpected


def sinusoidal_frequency_embedding(timesteps, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """cos/sin frequency features in the DiT lineage's ordering (cos first)."""
    if dim < 2 or dim % 2:
        raise ShapeUnexpected(f"frequency embedding width must be even >= 2, got {dim}")
    t = np.asarray(timesteps, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half, dtype=np.float64) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.cos(args), np.sin(args)], axis=1)


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


class TimestepMlp:
    """Two affine layers with SiLU between, built from exported weights."""

    def __init__(self, w1, b1, w2, b2):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w2.ndim != 2 or self.w2.shape[1] != self.w1.shape[0]:
            raise ShapeUnexpected(
                f"inconsistent t-embedder shapes: {self.w1.shape} -> {self.w2.shape}"
            )

    @property
    def freq_dim(self) -> int:
        return int(self.w1.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.w2.shape[0])

    def __call__(self, timesteps) -> np.ndarray:
        f = sinusoidal_frequency_embedding(timesteps, self.freq_dim)
        h = _silu(f @ self.w1.T + self.b1)
        return h @ self.w2.T + self.b2
