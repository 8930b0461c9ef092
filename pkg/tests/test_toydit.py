import math

import numpy as np
import pytest

from condkit import adaln, toydit
from condkit.errors import BadClassCount, BadConfig, BadSchedule, BadTimestep
from condkit.toydit import (
    ModelParams,
    ToyConfig,
    diffusion_schedule,
    forward_eps,
    init_params,
    loss_and_grads,
    make_dataset,
    q_sample,
    train,
)


def tiny_config(**overrides):
    base = dict(
        n_classes=4,
        cond_dim=8,
        hidden_width=8,
        n_blocks=2,
        n_timesteps=50,
        train_steps=0,
        batch=4,
        seed=3,
        precision="float64",  # finite-difference checks need full precision
    )
    base.update(overrides)
    return ToyConfig(**base)


def params_with_live_gates(cfg, seed=5):
    params = init_params(cfg, seed=11)
    rng = np.random.default_rng(seed)
    for i in range(cfg.n_blocks):
        params.tensors[f"blk{i}_wgate"] = rng.normal(0, 0.2, params.tensors[f"blk{i}_wgate"].shape)
    return params


def random_batch(cfg, schedule, seed=9):
    rng = np.random.default_rng(seed)
    ds = make_dataset(cfg.n_classes, seed + 1)
    x0, labels = ds.sample(cfg.batch)
    t = rng.integers(1, schedule.T + 1, size=cfg.batch)
    eps = rng.standard_normal((cfg.batch, 2))
    return (x0, labels, t, eps)


# --- config -------------------------------------------------------------------

def test_config_defaults_valid():
    cfg = ToyConfig()
    assert cfg.n_classes == 8 and cfg.cond_dim == 64 and cfg.n_timesteps == 200


def test_config_rejects_bad_T():
    with pytest.raises(BadConfig):
        ToyConfig(n_timesteps=123)


def test_config_rejects_bad_schedule_endpoints():
    with pytest.raises(BadSchedule):
        ToyConfig(beta_min=0.5, beta_max=0.1)


def test_config_json_roundtrip():
    cfg = tiny_config(seed=42)
    assert ToyConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(BadConfig):
        ToyConfig.from_json({"bogus_field": 1})


# --- dataset ------------------------------------------------------------------

def test_class_means_on_circle():
    means = toydit.class_means(8)
    np.testing.assert_allclose(means[0], [5.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(means[4], [-5.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(means, axis=1), 5.0)


def test_dataset_deterministic_and_distribution():
    a = make_dataset(4, seed=0).sample(100)
    b = make_dataset(4, seed=0).sample(100)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])

    ds = make_dataset(8, seed=1)
    xs, labels = ds.sample(200_000)
    class0 = xs[labels == 0]
    np.testing.assert_allclose(class0.mean(axis=0), [5.0, 0.0], atol=0.01)


def test_dataset_bad_class_count():
    with pytest.raises(BadClassCount):
        make_dataset(1, seed=0)


# --- schedule ------------------------------------------------------------------

def test_schedule_endpoints_and_monotonicity():
    s = diffusion_schedule(200, 1e-4, 0.02)
    assert s.betas[0] == 1e-4 and s.betas[-1] == 0.02
    assert np.all(np.diff(s.alpha_bars) < 0)


def test_schedule_matches_brute_force_product():
    s = diffusion_schedule(200, 1e-4, 0.02)
    prod = 1.0
    for beta in s.betas:
        prod *= 1.0 - beta
    assert abs(s.alpha_bars[-1] - prod) < 1e-12


def test_schedule_bad_endpoints():
    with pytest.raises(BadSchedule):
        diffusion_schedule(10, 0.0, 0.02)
    with pytest.raises(BadSchedule):
        diffusion_schedule(0, 1e-4, 0.02)


def test_q_sample_limits_and_hand_value():
    s = diffusion_schedule(50, 1e-4, 0.02)
    x0 = np.array([[1.0, -2.0]])
    eps = np.zeros((1, 2))
    np.testing.assert_allclose(
        q_sample(s, x0, np.array([7]), eps), math.sqrt(s.alpha_bars[6]) * x0, rtol=1e-15
    )
    eps = np.array([[0.5, 0.25]])
    t = np.array([13])
    expected = math.sqrt(s.alpha_bars[12]) * x0 + math.sqrt(1 - s.alpha_bars[12]) * eps
    np.testing.assert_allclose(q_sample(s, x0, t, eps), expected, rtol=1e-15)
    with pytest.raises(BadTimestep):
        q_sample(s, x0, np.array([51]), eps)


# --- forward -------------------------------------------------------------------

def test_zero_gate_init_output_label_independent():
    cfg = tiny_config()
    params = init_params(cfg)
    x = np.random.default_rng(0).standard_normal((6, 2))
    t = np.full(6, 10)
    outs = [forward_eps(params, x, t, np.full(6, k)) for k in range(cfg.n_classes)]
    for o in outs[1:]:
        np.testing.assert_array_equal(o, outs[0])
    # equals the pure input/output affine path
    p = params.tensors
    direct = (x @ p["in_w"].T + p["in_b"]) @ p["out_w"].T + p["out_b"]
    np.testing.assert_allclose(outs[0], direct, rtol=1e-12)


def test_identical_class_rows_identical_outputs():
    cfg = tiny_config()
    params = params_with_live_gates(cfg)
    params.tensors["class_table"][2] = params.tensors["class_table"][1]
    x = np.random.default_rng(1).standard_normal((5, 2))
    t = np.full(5, 20)
    o1 = forward_eps(params, x, t, np.full(5, 1))
    o2 = forward_eps(params, x, t, np.full(5, 2))
    np.testing.assert_array_equal(o1, o2)


def oracle_forward_per_sample(params, x_t, t_scalar, label):
    """Independent re-evaluation built from the adaln-module primitives."""
    p = params.tensors
    f = adaln.embed_timestep(float(t_scalar), params.freq_dim)
    u1 = p["t_w1"] @ f + p["t_b1"]
    z1 = u1 / (1.0 + np.exp(-u1))  # silu
    temb = p["t_w2"] @ z1 + p["t_b2"]
    c = adaln.condition_vector(p["class_table"][label], temb)
    h = p["in_w"] @ np.asarray(x_t) + p["in_b"]
    for i in range(params.n_blocks):
        mod = adaln.modulation(c, p[f"blk{i}_wg"], p[f"blk{i}_wb"])
        gate = p[f"blk{i}_wgate"] @ c.values
        a = adaln.adaln_forward(h, mod)
        m1 = p[f"blk{i}_m1w"] @ a + p[f"blk{i}_m1b"]
        z = m1 / (1.0 + np.exp(-m1))
        m2 = p[f"blk{i}_m2w"] @ z + p[f"blk{i}_m2b"]
        h = h + gate * m2
    return p["out_w"] @ h + p["out_b"]


def test_forward_matches_independent_oracle():
    cfg = tiny_config()
    params = params_with_live_gates(cfg)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((8, 2))
    t = rng.integers(1, cfg.n_timesteps + 1, size=8)
    labels = rng.integers(0, cfg.n_classes, size=8)
    got = forward_eps(params, x, t, labels)
    for b in range(8):
        want = oracle_forward_per_sample(params, x[b], t[b], labels[b])
        assert np.max(np.abs(got[b] - want)) < 1e-10


def test_cond_transform_hook_sees_condition():
    cfg = tiny_config()
    params = params_with_live_gates(cfg)
    x = np.zeros((3, 2))
    seen = {}

    def spy(c):
        seen["c"] = np.array(c)
        return c

    forward_eps(params, x, np.full(3, 5), np.array([0, 1, 2]), cond_transform=spy)
    expected = toydit.condition_vectors(params, 5.0)
    np.testing.assert_allclose(seen["c"], expected[[0, 1, 2]], rtol=1e-12)


# --- loss / gradients -----------------------------------------------------------

def test_loss_zero_at_exact_prediction():
    cfg = tiny_config()
    params = init_params(cfg)
    sched = diffusion_schedule(cfg.n_timesteps, cfg.beta_min, cfg.beta_max)
    x0 = np.zeros((4, 2))
    labels = np.zeros(4, dtype=int)
    t = np.full(4, 10)
    # with zero init biases and zero input, the affine path output is out_b
    params.tensors["out_w"][:] = 0.0
    eps = np.zeros((4, 2))
    loss, grads = loss_and_grads(params, (x0, labels, t, eps), sched)
    assert loss == 0.0
    assert np.all(grads["out_w"] == 0.0) and np.all(grads["out_b"] == 0.0)


def test_duplicated_batch_leaves_loss_and_grads_unchanged():
    cfg = tiny_config()
    params = params_with_live_gates(cfg)
    sched = diffusion_schedule(cfg.n_timesteps, cfg.beta_min, cfg.beta_max)
    x0, labels, t, eps = random_batch(cfg, sched)
    loss1, grads1 = loss_and_grads(params, (x0, labels, t, eps), sched)
    doubled = (np.tile(x0, (2, 1)), np.tile(labels, 2), np.tile(t, 2), np.tile(eps, (2, 1)))
    loss2, grads2 = loss_and_grads(params, doubled, sched)
    assert abs(loss1 - loss2) < 1e-12
    for k in grads1:
        np.testing.assert_allclose(grads1[k], grads2[k], rtol=1e-10, atol=1e-14)


def finite_difference_grads(params, batch, schedule, step=1e-5):
    """Central-difference oracle over every parameter entry."""
    out = {}
    for key, arr in params.tensors.items():
        num = np.zeros_like(arr)
        flat, nflat = arr.ravel(), num.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp, _ = loss_and_grads(params, batch, schedule)
            flat[i] = orig - step
            lm, _ = loss_and_grads(params, batch, schedule)
            flat[i] = orig
            nflat[i] = (lp - lm) / (2 * step)
        out[key] = num
    return out


def test_gradients_match_finite_differences():
    cfg = tiny_config()
    params = params_with_live_gates(cfg)
    sched = diffusion_schedule(cfg.n_timesteps, cfg.beta_min, cfg.beta_max)
    batch = random_batch(cfg, sched)
    _, grads = loss_and_grads(params, batch, sched)
    numeric = finite_difference_grads(params, batch, sched)
    for key in params.tensors:
        denom = np.maximum(np.maximum(np.abs(grads[key]), np.abs(numeric[key])), 1e-8)
        rel = np.abs(grads[key] - numeric[key]) / denom
        assert rel.max() < 1e-4, f"{key}: {rel.max():.2e}"


# --- training -------------------------------------------------------------------

def test_train_zero_steps_single_trace_row():
    params, trace = train(tiny_config())
    assert len(trace.rows) == 1
    assert trace.rows[0].step == 0
    assert -1.0 <= trace.rows[0].cosine <= 1.0
    assert 0.0 < trace.rows[0].npr <= 1.0


def test_train_deterministic_bitwise():
    cfg = tiny_config(train_steps=60, monitor_every=20, seed=123)
    p1, t1 = train(cfg)
    p2, t2 = train(cfg)
    assert t1.to_csv_bytes() == t2.to_csv_bytes()
    for k in p1.tensors:
        assert p1.tensors[k].tobytes() == p2.tensors[k].tobytes()


def test_train_trace_row_cadence_and_fields():
    cfg = tiny_config(train_steps=50, monitor_every=20)
    _, trace = train(cfg)
    assert [r.step for r in trace.rows] == [0, 20, 40]
    for r in trace.rows:
        assert -1.0 <= r.cosine <= 1.0
        assert 0.0 < r.npr <= 1.0
        assert math.isfinite(r.loss)


def test_trace_csv_header_and_determinism():
    cfg = tiny_config(train_steps=20, monitor_every=10)
    _, trace = train(cfg)
    text = trace.to_csv_bytes().decode()
    lines = text.strip().split("\n")
    assert lines[0] == "step,loss,cosine,npr"
    assert len(lines) == 1 + 3


def test_training_reduces_loss():
    cfg = tiny_config(train_steps=400, monitor_every=100, batch=64, seed=0)
    _, trace = train(cfg)
    assert trace.rows[-1].loss < trace.rows[0].loss


# --- checkpointing ---------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    cfg = tiny_config(train_steps=10, monitor_every=5)
    params, _ = train(cfg)
    toydit.save_checkpoint(params, cfg, tmp_path / "ckpt")
    loaded, cfg2 = toydit.load_checkpoint(tmp_path / "ckpt")
    assert cfg2 == cfg
    assert loaded.freq_dim == params.freq_dim
    for k in params.tensors:
        assert loaded.tensors[k].tobytes() == params.tensors[k].tobytes()


def test_checkpoint_bytes_deterministic(tmp_path):
    cfg = tiny_config(train_steps=10, monitor_every=5)
    params, _ = train(cfg)
    toydit.save_checkpoint(params, cfg, tmp_path / "a")
    toydit.save_checkpoint(params, cfg, tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
