import math

import numpy as np
import pytest

from condkit import adaln
from condkit.errors import LengthMismatch, OddDim, ShapeMismatch, WidthMismatch
from condkit.pruning import PruneConfig, prune


def test_embed_t0_is_zeros_and_ones():
    e = adaln.embed_timestep(0.0, 10)
    np.testing.assert_array_equal(e[:5], np.zeros(5))
    np.testing.assert_array_equal(e[5:], np.ones(5))


def test_first_frequency_is_one():
    for dim in (2, 8, 64):
        assert adaln.timestep_frequencies(dim)[0] == 1.0


def test_embed_dim4_hand_value():
    e = adaln.embed_timestep(1.0, 4)
    w1 = 10000.0 ** (-1 / 2)
    np.testing.assert_allclose(e, [math.sin(1), math.sin(w1), math.cos(1), math.cos(w1)], rtol=1e-15)


def test_embed_odd_dim_rejected():
    with pytest.raises(OddDim):
        adaln.embed_timestep(1.0, 5)
    with pytest.raises(OddDim):
        adaln.embed_timestep(1.0, 0)


def test_condition_vector_sums():
    c = adaln.condition_vector([1.0, 2.0], [0.5, -2.0])
    np.testing.assert_array_equal(c.values, [1.5, 0.0])
    y = np.array([0.3, -0.4])
    np.testing.assert_array_equal(adaln.condition_vector(np.zeros(2), y).values, y)
    np.testing.assert_array_equal(adaln.condition_vector(y, np.zeros(2)).values, y)


def test_condition_vector_length_mismatch():
    with pytest.raises(LengthMismatch):
        adaln.condition_vector([1.0], [1.0, 2.0])


def test_modulation_zero_and_identity():
    W = np.random.default_rng(0).standard_normal((3, 3))
    m = adaln.modulation(np.zeros(3), W, W)
    np.testing.assert_array_equal(m.gamma, np.zeros(3))
    np.testing.assert_array_equal(m.beta, np.zeros(3))
    c = np.array([0.1, -2.0, 5.0])
    m2 = adaln.modulation(c, np.eye(3), W)
    np.testing.assert_array_equal(m2.gamma, c)


def test_modulation_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adaln.modulation(np.ones(3), np.ones((2, 4)), np.ones((2, 3)))


def test_modulation_linearity_under_tail_split():
    rng = np.random.default_rng(1)
    for _ in range(50):
        d, w = 24, 16
        c = rng.standard_normal(d) * 10.0 ** rng.integers(-2, 2)
        Wg, Wb = rng.standard_normal((w, d)), rng.standard_normal((w, d))
        tau = float(np.quantile(np.abs(c), 0.5))
        if tau <= 0:
            continue
        tail_part = prune(c, PruneConfig("tail", tau=tau))
        rest = c - tail_part
        whole = adaln.modulation(c, Wg, Wb)
        a = adaln.modulation(tail_part, Wg, Wb)
        b = adaln.modulation(rest, Wg, Wb)
        scale = max(np.max(np.abs(whole.gamma)), 1e-300)
        assert np.max(np.abs(whole.gamma - (a.gamma + b.gamma))) <= 1e-12 * scale
        scale_b = max(np.max(np.abs(whole.beta)), 1e-300)
        assert np.max(np.abs(whole.beta - (a.beta + b.beta))) <= 1e-12 * scale_b


def test_adaln_forward_normalizes():
    rng = np.random.default_rng(2)
    h = rng.standard_normal(64) * 3 + 1.7
    m = adaln.ModulationParams(gamma=np.ones(64), beta=np.zeros(64))
    out = adaln.adaln_forward(h, m)
    assert abs(out.mean()) < 1e-10
    assert abs(out.var() - 1.0) < 1e-4


def test_adaln_forward_constant_input_returns_beta():
    m = adaln.ModulationParams(gamma=np.full(4, 2.0), beta=np.array([1.0, 2.0, 3.0, 4.0]))
    out = adaln.adaln_forward(np.full(4, 7.0), m)
    np.testing.assert_allclose(out, m.beta)


def test_adaln_forward_hand_value():
    m = adaln.ModulationParams(gamma=np.array([2.0, 2.0]), beta=np.array([1.0, 1.0]))
    out = adaln.adaln_forward(np.array([1.0, 3.0]), m)
    shrink = 1.0 / (1.0 + adaln.LAYERNORM_EPS)
    np.testing.assert_allclose(out, [1 - 2 * shrink, 1 + 2 * shrink], rtol=1e-12)
    np.testing.assert_allclose(out, [-1.0, 3.0], atol=1e-4)


def test_adaln_forward_shift_invariant():
    rng = np.random.default_rng(3)
    h = rng.standard_normal(32)
    m = adaln.ModulationParams(gamma=rng.standard_normal(32), beta=rng.standard_normal(32))
    out1 = adaln.adaln_forward(h, m)
    out2 = adaln.adaln_forward(h + 123.456, m)
    assert np.max(np.abs(out1 - out2)) < 1e-10


def test_adaln_forward_width_mismatch():
    m = adaln.ModulationParams(gamma=np.ones(3), beta=np.ones(3))
    with pytest.raises(WidthMismatch):
        adaln.adaln_forward(np.ones(4), m)


def test_modulation_params_width_check():
    with pytest.raises(WidthMismatch):
        adaln.ModulationParams(gamma=np.ones(3), beta=np.ones(2))
