"""Dev-only weight-decay sweep (not part of the package)."""
import sys
import time

import numpy as np

from condkit import sampling, toydit


def run(name, s_y, wd, cond_wd, seed=7, steps=20000):
    toydit.CLASS_EMB_INIT_STD = s_y
    cfg = toydit.ToyConfig(train_steps=steps, seed=seed, weight_decay=wd,
                           cond_weight_decay=(None if cond_wd < 0 else cond_wd))
    t0 = time.time()
    params, trace = toydit.train(cfg)
    dt = time.time() - t0
    first, last = trace.rows[0], trace.rows[-1]
    c = toydit.condition_vectors(params, float(cfg.n_timesteps))
    mean_c = c.mean(axis=0)
    spread = np.linalg.norm(c - mean_c, axis=1).mean()
    absbar = np.abs(c).mean(axis=0)
    top = np.sort(absbar)[::-1]

    sched = toydit.diffusion_schedule(cfg.n_timesteps, cfg.beta_min, cfg.beta_max)
    run_s = sampling.sample_all_classes(params, sched, 100, seed=99)
    ev = sampling.eval_mixture(run_s.samples, run_s.labels,
                               toydit.class_means(cfg.n_classes), toydit.RING_SIGMA)
    print(
        f"{name} s_y={s_y} wd={wd} cwd={cond_wd} seed={seed}: "
        f"cos {first.cosine:.3f}->{last.cosine:.3f} "
        f"npr {first.npr:.3f}->{last.npr:.3f} (ratio {last.npr / first.npr:.2f}) "
        f"loss {last.loss:.3f} acc={ev.class_accuracy:.3f} merr={ev.mean_error:.3f} "
        f"shared={np.linalg.norm(mean_c):.2f} spread={spread:.2f} "
        f"top4={top[:4].round(2)} med={np.median(absbar):.3f} [{dt:.0f}s]",
        flush=True,
    )


if __name__ == "__main__":
    for spec in sys.argv[1:]:
        parts = spec.split(",")
        run(parts[0], float(parts[1]), float(parts[2]), float(parts[3]), int(parts[4]))
