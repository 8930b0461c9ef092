"""DDPM ancestral sampling with pruning hooks, plus mixture-quality metrics.

The reverse trajectory runs t = T..1 with no noise added at the final step.
A prune config plus schedule decides, per step, whether the condition vector
is replaced by its pruned version before modulation. Generation quality is
scored against the known ring mixture: per-class mean/covariance errors and
nearest-mean class accuracy stand in for large-scale perceptual metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CountMismatch, EmptyClass, UntrainedParams
from .pruning import PruneConfig, PruneSchedule, prune, should_prune
from .toydit import ModelParams, Schedule, forward_eps


def _check_trained(params: ModelParams) -> None:
    gates = [params.tensors[f"blk{i}_wgate"] for i in range(params.n_blocks)]
    if all(not g.any() for g in gates):
        raise UntrainedParams("all residual gates are zero; model looks untrained")


def _prune_rows(c: np.ndarray, cfg: PruneConfig) -> np.ndarray:
    # Per-class batches share one condition row: prune once, then materialize
    # a contiguous copy so the downstream matmuls take the same BLAS path
    # (and give the same bits) as the unhooked condition matrix.
    if np.all(c == c[0]):
        row = prune(c[0], cfg)
        return np.ascontiguousarray(np.broadcast_to(row, c.shape))
    return np.stack([prune(row, cfg) for row in c])


def ddpm_sample(
    params: ModelParams,
    schedule: Schedule,
    label: int,
    n: int,
    prune_cfg: PruneConfig | None = None,
    prune_schedule: PruneSchedule | None = None,
    seed=0,
    cond_spy=None,
) -> np.ndarray:
    """Draw ``n`` samples for one class; deterministic given ``seed``.

    ``cond_spy(step_index, c_row)`` observes the condition vector actually
    used at each reverse step (instrumentation for schedule tests).
    """
    _check_trained(params)
    if prune_cfg is not None and prune_schedule is None:
        prune_schedule = PruneSchedule(policy="every_step")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(label)]))
    T = schedule.T
    x = rng.standard_normal((n, 2))
    labels = np.full(n, label, dtype=np.int64)

    for step_index, t in enumerate(range(T, 0, -1)):
        hook = None
        if prune_cfg is not None and should_prune(prune_schedule, step_index, T):
            hook = lambda c: _prune_rows(c, prune_cfg)
        if cond_spy is not None:
            inner = hook

            def hook(c, _inner=inner, _step=step_index):
                out = _inner(c) if _inner is not None else c
                cond_spy(_step, np.array(out[0]))
                return out

        eps_hat = forward_eps(params, x, t, labels, cond_transform=hook)
        beta = schedule.betas[t - 1]
        alpha = schedule.alphas[t - 1]
        abar = schedule.alpha_bars[t - 1]
        mean = (x - beta / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(alpha)
        if t > 1:
            x = mean + np.sqrt(beta) * rng.standard_normal((n, 2))
        else:
            x = mean
    return x


@dataclass
class SampleRun:
    samples: np.ndarray
    labels: np.ndarray
    prune_cfg: PruneConfig | None = None
    schedule: PruneSchedule | None = None
    seed: int = 0

    def __post_init__(self):
        if self.labels.shape[0] != self.samples.shape[0]:
            raise CountMismatch("labels length must match sample count")


def sample_all_classes(
    params: ModelParams,
    schedule: Schedule,
    per_class: int,
    prune_cfg: PruneConfig | None = None,
    prune_schedule: PruneSchedule | None = None,
    seed: int = 0,
) -> SampleRun:
    """One chain per class, each with its own (seed, class) RNG stream."""
    chunks = []
    labels = []
    for k in range(params.n_classes):
        chunks.append(ddpm_sample(params, schedule, k, per_class, prune_cfg, prune_schedule, seed))
        labels.append(np.full(per_class, k, dtype=np.int64))
    return SampleRun(
        samples=np.concatenate(chunks, axis=0),
        labels=np.concatenate(labels),
        prune_cfg=prune_cfg,
        schedule=prune_schedule,
        seed=seed,
    )


@dataclass
class MixtureEval:
    per_class_mean_error: np.ndarray
    per_class_cov_error: np.ndarray
    class_accuracy: float
    n_per_class: np.ndarray

    @property
    def mean_error(self) -> float:
        return float(self.per_class_mean_error.mean())

    @property
    def cov_error(self) -> float:
        return float(self.per_class_cov_error.mean())

    @property
    def n_total(self) -> int:
        return int(self.n_per_class.sum())

    def to_json(self) -> dict:
        return {
            "class_accuracy": self.class_accuracy,
            "mean_error": self.mean_error,
            "cov_error": self.cov_error,
            "per_class_mean_error": [float(x) for x in self.per_class_mean_error],
            "per_class_cov_error": [float(x) for x in self.per_class_cov_error],
            "n_per_class": [int(x) for x in self.n_per_class],
        }


def eval_mixture(samples, labels, true_means, true_sigma: float) -> MixtureEval:
    """Empirical per-class moments vs ground truth plus nearest-mean accuracy."""
    samples = np.asarray(samples, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    true_means = np.asarray(true_means, dtype=np.float64)
    n_classes = true_means.shape[0]

    mean_err = np.zeros(n_classes)
    cov_err = np.zeros(n_classes)
    counts = np.zeros(n_classes, dtype=np.int64)
    target_cov = true_sigma**2 * np.eye(2)
    for k in range(n_classes):
        pts = samples[labels == k]
        counts[k] = pts.shape[0]
        if pts.shape[0] < 2:
            raise EmptyClass(f"class {k} has {pts.shape[0]} samples; need >= 2")
        emp_mean = pts.mean(axis=0)
        dev = pts - emp_mean
        emp_cov = dev.T @ dev / pts.shape[0]
        mean_err[k] = float(np.linalg.norm(emp_mean - true_means[k]))
        cov_err[k] = float(np.linalg.norm(emp_cov - target_cov, ord="fro"))

    d2 = np.sum((samples[:, None, :] - true_means[None, :, :]) ** 2, axis=2)
    nearest = np.argmin(d2, axis=1)  # argmin takes the lowest index on ties
    accuracy = float(np.mean(nearest == labels))
    return MixtureEval(
        per_class_mean_error=mean_err,
        per_class_cov_error=cov_err,
        class_accuracy=accuracy,
        n_per_class=counts,
    )


def compare_runs(baseline: MixtureEval, variants: list[tuple[str, MixtureEval]]) -> dict:
    """Deltas of each pruned variant against the unpruned baseline."""
    out: dict = {"baseline": baseline.to_json(), "variants": {}}
    for name, ev in variants:
        if ev.n_total != baseline.n_total:
            raise CountMismatch(
                f"variant {name!r} evaluated {ev.n_total} samples, baseline {baseline.n_total}"
            )
        entry = ev.to_json()
        entry["accuracy_delta_points"] = 100.0 * (ev.class_accuracy - baseline.class_accuracy)
        entry["mean_error_delta"] = ev.mean_error - baseline.mean_error
        entry["mean_error_ratio"] = (
            ev.mean_error / baseline.mean_error if baseline.mean_error > 0 else None
        )
        entry["cov_error_ratio"] = (
            ev.cov_error / baseline.cov_error if baseline.cov_error > 0 else None
        )
        out["variants"][name] = entry
    return out
