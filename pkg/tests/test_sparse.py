import numpy as np
import pytest

from condkit import sparse
from condkit.errors import BadParams, DimMismatch, NonPositiveTau
from condkit.pruning import PruneConfig, prune
from condkit.sparse import SparseVec, bench, densify, sparsify, spmv


def test_sparsify_zero_vector():
    s = sparsify(np.zeros(8), 0.01)
    assert s.nnz == 0
    np.testing.assert_array_equal(densify(s), np.zeros(8))


def test_sparsify_hand_selection():
    s = sparsify(np.array([0.005, 5.0, 0.0, -7.1]), 0.01)
    assert list(s.indices) == [1, 3]
    assert list(s.values) == [5.0, -7.1]


def test_sparsify_nonpositive_tau():
    with pytest.raises(NonPositiveTau):
        sparsify(np.ones(3), 0.0)


def test_sparsify_densify_equals_tail_prune_exactly():
    rng = np.random.default_rng(0)
    for _ in range(100):
        d = int(rng.integers(2, 200))
        c = rng.standard_normal(d) * 10.0 ** rng.integers(-3, 2)
        tau = float(10.0 ** rng.uniform(-3, 0))
        back = densify(sparsify(c, tau))
        pruned = prune(c, PruneConfig("tail", tau=tau))
        assert back.tobytes() == pruned.tobytes()


def test_sparsevec_validation():
    with pytest.raises(DimMismatch):
        SparseVec(dim=4, indices=[2, 1], values=[1.0, 2.0])
    with pytest.raises(DimMismatch):
        SparseVec(dim=4, indices=[0, 5], values=[1.0, 2.0])
    with pytest.raises(DimMismatch):
        SparseVec(dim=4, indices=[0], values=[0.0])


def test_spmv_empty_and_single_column():
    W = np.arange(12, dtype=np.float64).reshape(3, 4)
    assert np.all(spmv(W, SparseVec(dim=4, indices=[], values=[])) == 0.0)
    out = spmv(W, SparseVec(dim=4, indices=[2], values=[3.0]))
    np.testing.assert_array_equal(out, 3.0 * W[:, 2])


def test_spmv_dim_mismatch():
    with pytest.raises(DimMismatch):
        spmv(np.ones((2, 3)), SparseVec(dim=4, indices=[0], values=[1.0]))


@pytest.mark.parametrize("d", [64, 1152])
@pytest.mark.parametrize("sparsity", [0.0, 0.5, 0.9, 0.99])
def test_spmv_matches_dense_oracle(d, sparsity):
    rng = np.random.default_rng(d + int(sparsity * 100))
    for _ in range(8):
        m = 2 * d
        W = rng.standard_normal((m, d))
        c = rng.standard_normal(d)
        c[rng.random(d) < sparsity] = 0.0
        keep = np.flatnonzero(c != 0.0)
        if keep.size == 0:
            continue
        s = SparseVec(dim=d, indices=keep, values=c[keep])
        got = spmv(W, s)
        want = W @ c
        scale = max(float(np.max(np.abs(want))), 1e-300)
        assert np.max(np.abs(got - want)) <= 1e-6 * scale


def test_bench_contract_checks():
    with pytest.raises(BadParams):
        bench(64, 128, 0.9, iters=50)
    with pytest.raises(BadParams):
        bench(64, 128, 1.0, iters=100)
    with pytest.raises(BadParams):
        bench(64, 128, -0.1, iters=100)


def test_bench_zero_sparsity_checksums_equal():
    r = bench(96, 192, 0.0, iters=100, seed=1)
    assert r.checksum_dense == r.checksum_sparse
    assert r.dense_ns_per_op > 0 and r.sparse_ns_per_op > 0
    assert r.speedup > 0
    assert r.nnz == 96


def test_bench_high_sparsity_report_fields():
    r = bench(256, 512, 0.9, iters=120, seed=2)
    assert r.checksum_dense == r.checksum_sparse
    assert r.nnz == 256 - round(0.9 * 256)
    j = r.to_json()
    assert j["single_thread"] is True
    assert set(j) >= {"d", "out_dim", "sparsity", "dense_ns_per_op", "sparse_ns_per_op", "speedup", "iters"}
