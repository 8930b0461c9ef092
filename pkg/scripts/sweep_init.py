"""Dev-only sweep of conditioning init scales (not part of the package)."""
import sys
import time

import numpy as np

from condkit import toydit


def run(name, s_y, t_gain, seed=7, steps=20000):
    toydit.CLASS_EMB_INIT_STD = s_y
    toydit.T_MLP_INIT_GAIN = t_gain
    cfg = toydit.ToyConfig(train_steps=steps, seed=seed)
    t0 = time.time()
    params, trace = toydit.train(cfg)
    dt = time.time() - t0
    first, last = trace.rows[0], trace.rows[-1]
    c = toydit.condition_vectors(params, float(cfg.n_timesteps))
    mean_c = c.mean(axis=0)
    spread = np.linalg.norm(c - mean_c, axis=1).mean()
    print(
        f"{name} s_y={s_y} gain={t_gain} seed={seed}: "
        f"cos {first.cosine:.3f}->{last.cosine:.3f} (rise {last.cosine-first.cosine:+.3f}) "
        f"npr {first.npr:.3f}->{last.npr:.3f} (ratio {last.npr/first.npr:.2f}) "
        f"loss {last.loss:.3f} shared={np.linalg.norm(mean_c):.2f} spread={spread:.2f} [{dt:.0f}s]",
        flush=True,
    )


if __name__ == "__main__":
    for spec in sys.argv[1:]:
        name, s_y, gain, seed = spec.split(",")
        run(name, float(s_y), float(gain), int(seed))
