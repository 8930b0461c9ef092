"""Regenerate fixtures/sparse1152.npy.

A synthetic 1152-dim condition vector shaped like the pretrained-model ones:
2 dominant head entries above 5, a handful between 1 and 5, a mid-range band,
and exactly 448 nonzero entries of magnitude strictly below 0.01.
"""
from pathlib import Path

import numpy as np

from condkit import tensorio

HEAD_LARGE = 2      # |c| in (5, 8)
HEAD_MID = 8        # |c| in (1, 4)
HEAD_SMALL = 14     # |c| in (0.1, 1)
TAIL_BELOW_001 = 448
DIM = 1152


def build() -> np.ndarray:
    rng = np.random.default_rng(1152)
    n_band = DIM - HEAD_LARGE - HEAD_MID - HEAD_SMALL - TAIL_BELOW_001
    parts = [
        rng.uniform(5.2, 7.8, HEAD_LARGE),
        rng.uniform(1.1, 3.9, HEAD_MID),
        rng.uniform(0.12, 0.95, HEAD_SMALL),
        rng.uniform(0.011, 0.095, n_band),
        rng.uniform(0.0008, 0.0095, TAIL_BELOW_001),
    ]
    signs = rng.choice([-1.0, 1.0], DIM)
    vec = (np.concatenate(parts) * signs).astype(np.float32)
    rng.shuffle(vec)

    mags = np.abs(vec)
    assert vec.size == DIM
    assert np.count_nonzero(mags < 0.01) == TAIL_BELOW_001
    assert np.count_nonzero(mags > 5.0) == HEAD_LARGE
    assert np.all(mags > 0)
    return vec


if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "fixtures" / "sparse1152.npy"
    out.parent.mkdir(exist_ok=True)
    tensorio.write_npy(build(), out)
    print(f"wrote {out}")
