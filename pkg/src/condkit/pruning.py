"""Magnitude pruning of condition vectors and its trajectory schedules.

The operator zeroes a designated subset of coordinates (low-magnitude tail,
high-magnitude head, or a top-k complement) and never rescales survivors;
untouched coordinates are bit-identical to the input. Schedules decide at
which reverse-diffusion steps the operator fires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, KTooLarge, NonPositiveTau, OutOfRange

PRUNE_MODES = ("tail", "head", "keep_top_k", "zero_top_k")
SCHEDULE_POLICIES = ("every_step", "initial_only", "last_k_steps")


@dataclass(frozen=True)
class PruneConfig:
    """Which coordinates to zero: threshold modes take tau, top-k modes take k."""

    mode: str
    tau: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.mode not in PRUNE_MODES:
            raise BadConfig(f"mode {self.mode!r} not in {PRUNE_MODES}")
        if self.mode in ("tail", "head"):
            if self.tau is None or self.k is not None:
                raise BadConfig(f"mode {self.mode!r} takes tau only")
            if self.tau <= 0:
                raise NonPositiveTau(f"tau must be > 0, got {self.tau}")
        else:
            if self.k is None or self.tau is not None:
                raise BadConfig(f"mode {self.mode!r} takes k only")
            if not isinstance(self.k, int) or self.k < 1:
                raise BadConfig(f"k must be a positive integer, got {self.k!r}")

    def to_json(self) -> dict:
        out: dict = {"mode": self.mode}
        if self.tau is not None:
            out["tau"] = self.tau
        if self.k is not None:
            out["k"] = self.k
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PruneConfig":
        return cls(mode=obj["mode"], tau=obj.get("tau"), k=obj.get("k"))


@dataclass(frozen=True)
class PruneSchedule:
    """When along the reverse trajectory to apply the operator."""

    policy: str
    k_steps: int | None = None

    def __post_init__(self):
        if self.policy not in SCHEDULE_POLICIES:
            raise BadConfig(f"policy {self.policy!r} not in {SCHEDULE_POLICIES}")
        if self.policy == "last_k_steps":
            if self.k_steps is None or not isinstance(self.k_steps, int) or self.k_steps < 1:
                raise BadConfig("last_k_steps requires a positive integer k_steps")
        elif self.k_steps is not None:
            raise BadConfig(f"policy {self.policy!r} does not take k_steps")

    def to_json(self) -> dict:
        out: dict = {"policy": self.policy}
        if self.k_steps is not None:
            out["k_steps"] = self.k_steps
        return out


def default_last_k(n_steps: int) -> int:
    """Default window for last-k pruning: 10% of the trajectory, rounded up."""
    return max(1, math.ceil(0.1 * n_steps))


def _top_k_indices(mags: np.ndarray, k: int) -> np.ndarray:
    # Descending magnitude; equal magnitudes resolved by lower index first.
    order = np.lexsort((np.arange(mags.size), -mags))
    return order[:k]


def prune(c, cfg: PruneConfig) -> np.ndarray:
    """Apply the pruning operator; survivors keep their exact input bits."""
    arr = np.asarray(c)
    if arr.ndim != 1 or arr.size == 0:
        raise BadConfig(f"prune expects a nonempty vector, got shape {arr.shape}")
    mags = np.abs(arr)
    if cfg.mode == "tail":
        out = arr.copy()
        out[mags < cfg.tau] = 0
        return out
    if cfg.mode == "head":
        out = arr.copy()
        out[mags > cfg.tau] = 0
        return out
    if cfg.k > arr.size:
        raise KTooLarge(f"k={cfg.k} exceeds dimension {arr.size}")
    top = _top_k_indices(mags, cfg.k)
    if cfg.mode == "keep_top_k":
        out = np.zeros_like(arr)
        out[top] = arr[top]
        return out
    out = arr.copy()
    out[top] = 0
    return out


def should_prune(schedule: PruneSchedule, step_index: int, n_steps: int) -> bool:
    """Whether the operator fires at 0-based ``step_index`` of ``n_steps``."""
    if n_steps < 1 or not (0 <= step_index < n_steps):
        raise OutOfRange(f"step_index {step_index} not in [0, {n_steps})")
    if schedule.policy == "every_step":
        return True
    if schedule.policy == "initial_only":
        return step_index == 0
    if schedule.k_steps > n_steps:
        raise BadConfig(f"k_steps={schedule.k_steps} exceeds total steps {n_steps}")
    return step_index >= n_steps - schedule.k_steps


def removed_count(c, cfg: PruneConfig) -> tuple[int, float]:
    """How many entries the operator changed from nonzero to zero."""
    arr = np.asarray(c)
    pruned = prune(arr, cfg)
    removed = int(np.count_nonzero((arr != 0) & (pruned == 0)))
    return removed, removed / arr.size


def format_removed(count: int, total: int) -> str:
    """Removal summary in the reference table layout, e.g. ``448/1152 (38.89%)``."""
    return f"{count}/{total} ({100.0 * count / total:.2f}%)"
