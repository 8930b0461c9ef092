"""Command-line surface.

Exit codes: 0 success, 1 usage error (bad flags, missing files, invalid
config values), 2 data/contract error from the library, 3 reserved for
acceptance-run failures. stdout carries exactly one machine-parsable summary
line per invocation; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import metrics, pruning, sampling, sparse, tensorio, toydit
from .errors import CondkitError
from .metrics import truncate_pct


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); remap to our contract
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="condkit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="metrics report for an embedding file")
    a.add_argument("emb", help="NPY file of embeddings (N x d or a single vector)")
    a.add_argument("--timestep-emb", help="NPY file of timestep embeddings")
    a.add_argument("--mode", choices=["y", "t", "y+t"], default="y")
    a.add_argument("--tau", default="0.01,0.02,0.05", help="comma-separated thresholds")
    a.add_argument("--t-row", type=int, default=0, help="row of the timestep grid to use")
    a.add_argument("--exclude-row", type=int, help="drop one row (e.g. a null-class entry)")
    a.add_argument("--per-row", action="store_true", help="also report per-row PR")
    a.add_argument("--out", required=True, help="report JSON path")

    pr = sub.add_parser("prune", help="apply the pruning operator to a vector/matrix")
    pr.add_argument("emb")
    pr.add_argument("--mode", required=True, choices=["tail", "head", "keep-top-k", "zero-top-k"])
    pr.add_argument("--tau", type=float)
    pr.add_argument("--k", type=int)
    pr.add_argument("--out")
    pr.add_argument("--count-only", action="store_true")

    tr = sub.add_parser("train-toy", help="train the desk-scale model")
    tr.add_argument("--config", help="JSON config; defaults used when omitted")
    tr.add_argument("--seed", type=int, help="override the config seed")
    tr.add_argument("--trace", required=True, help="CSV trace output")
    tr.add_argument("--ckpt", required=True, help="checkpoint directory")

    sa = sub.add_parser("sample", help="DDPM sampling with optional pruning")
    sa.add_argument("--ckpt", required=True)
    sa.add_argument("--per-class", type=int, default=500)
    sa.add_argument("--prune", help="mode:value, e.g. tail:0.01, zero-top-k:6, tail:AUTO40")
    sa.add_argument("--schedule", help="every | initial | lastk[:K]")
    sa.add_argument("--seed", type=int, default=0)
    sa.add_argument("--out", required=True, help="samples NPY path")
    sa.add_argument("--eval", dest="eval_out", required=True, help="evaluation JSON path")

    be = sub.add_parser("bench-sparse", help="dense vs sparse matvec benchmark")
    be.add_argument("--d", type=int, default=1152)
    be.add_argument("--out-dim", type=int, default=2304)
    be.add_argument("--sparsity", default="0.9", help="one value, or comma list for a CSV sweep")
    be.add_argument("--iters", type=int, default=1000)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--out", required=True)
    return p


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _load_matrix(path: str) -> np.ndarray:
    arr = tensorio.read_npy(_require_file(path))
    return arr[None, :] if arr.ndim == 1 else arr


def _cmd_analyze(args) -> int:
    taus = [float(t) for t in args.tau.split(",") if t]
    if not taus or any(t <= 0 for t in taus):
        raise UsageError(f"--tau needs positive thresholds, got {args.tau!r}")

    if args.mode == "y+t":
        if not args.timestep_emb:
            raise UsageError("--mode y+t requires --timestep-emb")
        y = _load_matrix(args.emb)
        tgrid = _load_matrix(args.timestep_emb)
        if not (0 <= args.t_row < tgrid.shape[0]):
            raise UsageError(f"--t-row {args.t_row} outside 0..{tgrid.shape[0] - 1}")
        if tgrid.shape[1] != y.shape[1]:
            raise UsageError(f"dimension mismatch: y is d={y.shape[1]}, t is d={tgrid.shape[1]}")
        M = y + tgrid[args.t_row][None, :]
    elif args.mode == "t":
        M = _load_matrix(args.timestep_emb if args.timestep_emb else args.emb)
    else:
        M = _load_matrix(args.emb)

    if args.exclude_row is not None:
        if not (0 <= args.exclude_row < M.shape[0]):
            raise UsageError(f"--exclude-row {args.exclude_row} outside 0..{M.shape[0] - 1}")
        M = np.delete(M, args.exclude_row, axis=0)

    report = metrics.analyze_embedding_set(M, taus=taus, kind_label=args.mode, per_row=args.per_row)
    tensorio.write_report(report, args.out)
    cos = report["cosine"]
    cos_text = f"{cos['mean']:.6f}" if cos else "n/a"
    print(
        f"kind={report['kind']} n={report['n_rows']} d={report['d']} "
        f"cosine_mean={cos_text} pr={report['pr']:.4f} npr={truncate_pct(report['npr'])}"
    )
    return 0


def _cmd_prune(args) -> int:
    if (args.tau is None) == (args.k is None):
        raise UsageError("exactly one of --tau / --k must be given")
    if not args.count_only and not args.out:
        raise UsageError("--out is required unless --count-only")
    mode = args.mode.replace("-", "_")
    cfg = pruning.PruneConfig(mode=mode, tau=args.tau, k=args.k)

    arr = tensorio.read_npy(_require_file(args.emb))
    if args.count_only:
        vec = arr if arr.ndim == 1 else np.abs(arr).mean(axis=0)
        count, _ = pruning.removed_count(vec, cfg)
        print(pruning.format_removed(count, vec.size))
        return 0

    if arr.ndim == 1:
        out = pruning.prune(arr, cfg)
        count = int(np.count_nonzero((arr != 0) & (out == 0)))
        total = arr.size
    else:
        out = np.stack([pruning.prune(row, cfg) for row in arr])
        count = int(np.count_nonzero((arr != 0) & (out == 0)))
        total = arr.size
    tensorio.write_npy(out, args.out)
    print(pruning.format_removed(count, total))
    return 0


def _cmd_train_toy(args) -> int:
    if args.config:
        cfg_json = tensorio.read_report(_require_file(args.config))
        try:
            config = toydit.ToyConfig.from_json(cfg_json)
        except CondkitError as exc:
            raise UsageError(str(exc)) from exc
    else:
        config = toydit.ToyConfig()
    if args.seed is not None:
        cfg_json = config.to_json()
        cfg_json["seed"] = args.seed
        config = toydit.ToyConfig.from_json(cfg_json)

    params, trace = toydit.train(config)
    with open(args.trace, "wb") as fh:
        fh.write(trace.to_csv_bytes())
    toydit.save_checkpoint(params, config, args.ckpt)
    last = trace.rows[-1]
    print(
        f"trained steps={config.train_steps} seed={config.seed} loss={last.loss:.6f} "
        f"cosine={last.cosine:.4f} npr={truncate_pct(last.npr)}"
    )
    return 0


def _parse_prune_flag(spec_text: str, ref_abs: np.ndarray) -> tuple[pruning.PruneConfig, float | None]:
    if ":" not in spec_text:
        raise UsageError(f"--prune must look like mode:value, got {spec_text!r}")
    mode_text, value = spec_text.split(":", 1)
    mode = mode_text.replace("-", "_")
    if mode in ("tail", "head"):
        if value.upper().startswith("AUTO"):
            pct = float(value[4:])
            if not (0 < pct < 100):
                raise UsageError(f"AUTO percentile must be in (0, 100), got {value!r}")
            tau = float(np.quantile(ref_abs, pct / 100.0))
            if tau <= 0:
                raise UsageError("AUTO threshold came out non-positive; vector too sparse")
            return pruning.PruneConfig(mode=mode, tau=tau), tau
        return pruning.PruneConfig(mode=mode, tau=float(value)), None
    if mode in ("keep_top_k", "zero_top_k"):
        return pruning.PruneConfig(mode=mode, k=int(value)), None
    raise UsageError(f"unknown prune mode {mode_text!r}")


def _parse_schedule_flag(spec_text: str, n_steps: int) -> pruning.PruneSchedule:
    if spec_text in ("every", "every_step"):
        return pruning.PruneSchedule(policy="every_step")
    if spec_text in ("initial", "initial_only"):
        return pruning.PruneSchedule(policy="initial_only")
    if spec_text == "lastk":
        return pruning.PruneSchedule(policy="last_k_steps", k_steps=pruning.default_last_k(n_steps))
    if spec_text.startswith("lastk:"):
        k = int(spec_text.split(":", 1)[1])
        if k < 1:
            raise UsageError(f"lastk window must be >= 1, got {k}")
        return pruning.PruneSchedule(policy="last_k_steps", k_steps=k)
    raise UsageError(f"unknown schedule {spec_text!r}")


def _cmd_sample(args) -> int:
    if not Path(args.ckpt).is_dir():
        raise UsageError(f"no such checkpoint directory: {args.ckpt}")
    if args.per_class < 2:
        raise UsageError("--per-class must be >= 2")
    params, config = toydit.load_checkpoint(args.ckpt)
    schedule = toydit.diffusion_schedule(config.n_timesteps, config.beta_min, config.beta_max)

    prune_cfg = None
    prune_sched = None
    auto_tau = None
    if args.prune:
        ref_abs = np.abs(toydit.condition_vectors(params, float(schedule.T))).mean(axis=0)
        prune_cfg, auto_tau = _parse_prune_flag(args.prune, ref_abs)
        prune_sched = (
            _parse_schedule_flag(args.schedule, schedule.T)
            if args.schedule
            else pruning.PruneSchedule(policy="every_step")
        )
    elif args.schedule:
        raise UsageError("--schedule requires --prune")

    run = sampling.sample_all_classes(
        params, schedule, args.per_class, prune_cfg, prune_sched, seed=args.seed
    )
    tensorio.write_npy(run.samples, args.out)
    labels_path = Path(args.out).with_suffix(".labels.npy")
    tensorio.write_npy(run.labels.astype(np.float64), labels_path)

    ev = sampling.eval_mixture(
        run.samples, run.labels, toydit.class_means(config.n_classes), toydit.RING_SIGMA
    )
    report = ev.to_json()
    report["seed"] = args.seed
    report["per_class"] = args.per_class
    report["prune"] = prune_cfg.to_json() if prune_cfg else None
    report["schedule"] = prune_sched.to_json() if prune_sched else None
    if auto_tau is not None:
        ref_abs = np.abs(toydit.condition_vectors(params, float(schedule.T))).mean(axis=0)
        report["auto_tau"] = auto_tau
        report["auto_removed_fraction"] = float(np.mean(ref_abs < auto_tau))
    tensorio.write_report(report, args.eval_out)
    print(
        f"sampled n={run.samples.shape[0]} accuracy={ev.class_accuracy:.4f} "
        f"mean_error={ev.mean_error:.4f}"
    )
    return 0


def _cmd_bench_sparse(args) -> int:
    sparsities = [float(s) for s in args.sparsity.split(",") if s]
    if not sparsities:
        raise UsageError("--sparsity needs at least one value")
    for s in sparsities:
        if not (0.0 <= s < 1.0):
            raise UsageError(f"sparsity must be in [0, 1), got {s}")
    if args.iters < 100:
        raise UsageError(f"--iters must be >= 100, got {args.iters}")

    reports = [sparse.bench(args.d, args.out_dim, s, args.iters, seed=args.seed) for s in sparsities]
    if len(reports) == 1:
        r = reports[0]
        tensorio.write_report(r.to_json(), args.out)
        ok = r.checksum_dense == r.checksum_sparse
        print(f"bench d={r.d} out={r.out_dim} sparsity={r.sparsity} speedup={r.speedup:.3f} checksums_equal={ok}")
        return 0

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["d", "out_dim", "sparsity", "dense_ns_per_op", "sparse_ns_per_op", "speedup", "checksums_equal"])
    for r in reports:
        writer.writerow([r.d, r.out_dim, r.sparsity, r.dense_ns_per_op, r.sparse_ns_per_op,
                         r.speedup, r.checksum_dense == r.checksum_sparse])
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    print(f"bench sweep rows={len(reports)} out={args.out}")
    return 0


_DISPATCH = {
    "analyze": _cmd_analyze,
    "prune": _cmd_prune,
    "train-toy": _cmd_train_toy,
    "sample": _cmd_sample,
    "bench-sparse": _cmd_bench_sparse,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _DISPATCH[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError,) as exc:  # malformed numbers in flag values
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except CondkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
