"""Desk-scale class-conditional diffusion model with AdaLN conditioning.

Single 2-D points stand in for images: each class is an isotropic Gaussian on
a ring, the denoiser is a stack of per-sample MLP blocks modulated through
adaptive layer normalization by c = class_embedding + timestep_embedding, and
training is plain epsilon-prediction DDPM. The backward pass is hand-derived
for this fixed architecture (finite differences guard it in the tests), so
alignment and sparsification of c can be reproduced in minutes without any
autodiff dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensorio
from .adaln import LAYERNORM_EPS, timestep_frequencies
from .errors import (
    BadClassCount,
    BadConfig,
    BadSchedule,
    BadTimestep,
    NonFiniteLoss,
    ShapeMismatch,
)
from .metrics import cosine_matrix, npr, participation_ratio

ALLOWED_TIMESTEPS = (50, 100, 200, 500)
RING_RADIUS = 5.0
RING_SIGMA = 0.3

# init scales for the conditioning pathway; the class table starts moderate
# (real DiT-family tables start near zero) and the timestep MLP at Xavier gain
CLASS_EMB_INIT_STD = 0.5
T_MLP_INIT_GAIN = 1.0

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class ToyConfig:
    n_classes: int = 8
    cond_dim: int = 64
    hidden_width: int = 64
    n_blocks: int = 3
    n_timesteps: int = 200
    beta_min: float = 1e-4
    beta_max: float = 0.02
    train_steps: int = 20000
    batch: int = 256
    lr: float = 1e-3
    lr_final: float | None = None  # linear decay target; None keeps lr constant
    weight_decay: float = 0.05
    cond_weight_decay: float | None = None  # class table + t-MLP weights; defaults to weight_decay
    precision: str = "float32"
    seed: int = 0
    monitor_every: int = 500

    def __post_init__(self):
        for name in ("n_classes", "cond_dim", "hidden_width", "n_blocks", "train_steps", "batch", "monitor_every"):
            v = getattr(self, name)
            if not isinstance(v, int) or (v < 0 if name == "train_steps" else v < 1):
                raise BadConfig(f"{name} must be a positive integer, got {v!r}")
        if self.n_classes < 2:
            raise BadClassCount(f"need at least 2 classes, got {self.n_classes}")
        if self.cond_dim % 2 != 0:
            raise BadConfig(f"cond_dim must be even, got {self.cond_dim}")
        if self.n_timesteps not in ALLOWED_TIMESTEPS:
            raise BadConfig(f"n_timesteps must be one of {ALLOWED_TIMESTEPS}, got {self.n_timesteps}")
        if not (0 < self.beta_min < self.beta_max < 1):
            raise BadSchedule(f"need 0 < beta_min < beta_max < 1, got {self.beta_min}, {self.beta_max}")
        if self.lr <= 0:
            raise BadConfig(f"lr must be > 0, got {self.lr}")
        if self.lr_final is not None and not (0 < self.lr_final <= self.lr):
            raise BadConfig(f"lr_final must be in (0, lr], got {self.lr_final}")
        if self.weight_decay < 0:
            raise BadConfig(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.cond_weight_decay is not None and self.cond_weight_decay < 0:
            raise BadConfig(f"cond_weight_decay must be >= 0, got {self.cond_weight_decay}")
        if self.precision not in ("float32", "float64"):
            raise BadConfig(f"precision must be float32 or float64, got {self.precision!r}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ToyConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise BadConfig(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)


# --- data ---------------------------------------------------------------------

@dataclass
class RingMixture:
    """Isotropic Gaussians with means equally spaced on a circle."""

    n_classes: int
    means: np.ndarray
    sigma: float
    _rng: np.random.Generator

    def sample(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        labels = self._rng.integers(0, self.n_classes, size=n)
        x0 = self.means[labels] + self.sigma * self._rng.standard_normal((n, 2))
        return x0, labels


def class_means(n_classes: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    return RING_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def make_dataset(n_classes: int, seed) -> RingMixture:
    if n_classes < 2:
        raise BadClassCount(f"need at least 2 classes, got {n_classes}")
    return RingMixture(
        n_classes=n_classes,
        means=class_means(n_classes),
        sigma=RING_SIGMA,
        _rng=np.random.default_rng(seed),
    )


# --- diffusion schedule --------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Linear-beta DDPM schedule; arrays are indexed by t-1 for t in 1..T."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray


def diffusion_schedule(T: int, beta_min: float, beta_max: float) -> Schedule:
    if T < 1:
        raise BadSchedule(f"T must be >= 1, got {T}")
    if not (0 < beta_min < beta_max < 1):
        raise BadSchedule(f"need 0 < beta_min < beta_max < 1, got {beta_min}, {beta_max}")
    betas = np.linspace(beta_min, beta_max, T)
    alphas = 1.0 - betas
    return Schedule(T=T, betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas))


def q_sample(schedule: Schedule, x0: np.ndarray, t, eps: np.ndarray) -> np.ndarray:
    """Forward corruption x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > schedule.T):
        raise BadTimestep(f"t outside 1..{schedule.T}")
    abar = schedule.alpha_bars[t - 1]
    if np.ndim(t):
        abar = abar[:, None]
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


# --- parameters -----------------------------------------------------------------

@dataclass
class ModelParams:
    n_classes: int
    cond_dim: int
    hidden: int
    n_blocks: int
    freq_dim: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams(
            n_classes=self.n_classes,
            cond_dim=self.cond_dim,
            hidden=self.hidden,
            n_blocks=self.n_blocks,
            freq_dim=self.freq_dim,
            tensors={k: v.copy() for k, v in self.tensors.items()},
        )


def init_params(config: ToyConfig, seed=None) -> ModelParams:
    """Xavier-normal weights, zero biases; residual gate projections start at zero."""
    d, w = config.cond_dim, config.hidden_width
    freq_dim = d
    rng = np.random.default_rng(config.seed if seed is None else seed)

    def xavier(shape):
        fan_out, fan_in = shape
        return rng.normal(0.0, math.sqrt(2.0 / (fan_in + fan_out)), size=shape)

    tensors: dict[str, np.ndarray] = {}
    tensors["class_table"] = rng.normal(0.0, CLASS_EMB_INIT_STD, size=(config.n_classes, d))
    tensors["t_w1"] = T_MLP_INIT_GAIN * xavier((d, freq_dim))
    tensors["t_b1"] = np.zeros(d)
    tensors["t_w2"] = T_MLP_INIT_GAIN * xavier((d, d))
    tensors["t_b2"] = np.zeros(d)
    tensors["in_w"] = xavier((w, 2))
    tensors["in_b"] = np.zeros(w)
    tensors["out_w"] = xavier((2, w))
    tensors["out_b"] = np.zeros(2)
    for i in range(config.n_blocks):
        tensors[f"blk{i}_wg"] = xavier((w, d))
        tensors[f"blk{i}_wb"] = xavier((w, d))
        tensors[f"blk{i}_wgate"] = np.zeros((w, d))
        tensors[f"blk{i}_m1w"] = xavier((4 * w, w))
        tensors[f"blk{i}_m1b"] = np.zeros(4 * w)
        tensors[f"blk{i}_m2w"] = xavier((w, 4 * w))
        tensors[f"blk{i}_m2b"] = np.zeros(w)
    dtype = np.float32 if config.precision == "float32" else np.float64
    return ModelParams(
        n_classes=config.n_classes,
        cond_dim=d,
        hidden=w,
        n_blocks=config.n_blocks,
        freq_dim=freq_dim,
        tensors={k: v.astype(dtype) for k, v in tensors.items()},
    )


# --- forward / backward ----------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))  # never overflows
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def _silu(x: np.ndarray) -> np.ndarray:
    return x * _sigmoid(x)


def _dsilu_from_sig(x: np.ndarray, sig: np.ndarray) -> np.ndarray:
    return sig * (1.0 + x * (1.0 - sig))


def embed_timesteps(t, freq_dim: int) -> np.ndarray:
    """Batched sinusoidal embedding, sin half then cos half."""
    omega = timestep_frequencies(freq_dim)
    args = np.atleast_1d(np.asarray(t, dtype=np.float64))[:, None] * omega[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def condition_vectors(params: ModelParams, t_value: float) -> np.ndarray:
    """c = class_table + t_mlp(embed(t)) for every class, at one timestep."""
    p = params.tensors
    f = embed_timesteps([t_value], params.freq_dim)
    z1 = _silu(f @ p["t_w1"].T + p["t_b1"])
    temb = z1 @ p["t_w2"].T + p["t_b2"]
    return p["class_table"] + temb


def _forward(params: ModelParams, x_t: np.ndarray, t, labels, cond_transform=None):
    p = params.tensors
    dtype = p["in_w"].dtype
    x_t = np.asarray(x_t, dtype=dtype)
    labels = np.asarray(labels, dtype=np.int64)
    if x_t.ndim != 2 or x_t.shape[1] != 2 or labels.shape[0] != x_t.shape[0]:
        raise ShapeMismatch(f"x_t {x_t.shape} / labels {labels.shape} inconsistent")

    cache: dict = {"x": x_t, "labels": labels}
    f = embed_timesteps(t, params.freq_dim).astype(dtype)
    if f.shape[0] == 1 and x_t.shape[0] > 1:
        f = np.broadcast_to(f, (x_t.shape[0], f.shape[1]))
    u1 = f @ p["t_w1"].T + p["t_b1"]
    sig_u1 = _sigmoid(u1)
    z1 = u1 * sig_u1
    temb = z1 @ p["t_w2"].T + p["t_b2"]
    y = p["class_table"][labels]
    c = y + temb
    if cond_transform is not None:
        c = np.asarray(cond_transform(c), dtype=dtype)
        if c.shape != temb.shape:
            raise ShapeMismatch(f"condition transform changed shape to {c.shape}")
    cache.update(f=f, u1=u1, sig_u1=sig_u1, z1=z1, c=c)

    h = x_t @ p["in_w"].T + p["in_b"]
    blocks = []
    for i in range(params.n_blocks):
        gam = c @ p[f"blk{i}_wg"].T
        bet = c @ p[f"blk{i}_wb"].T
        gate = c @ p[f"blk{i}_wgate"].T
        mu = h.mean(axis=1, keepdims=True)
        dev = h - mu
        sigma = np.sqrt(np.mean(dev * dev, axis=1, keepdims=True))
        s = sigma + LAYERNORM_EPS
        n = dev / s
        a = gam * n + bet
        m1 = a @ p[f"blk{i}_m1w"].T + p[f"blk{i}_m1b"]
        sig_m1 = _sigmoid(m1)
        z = m1 * sig_m1
        m2 = z @ p[f"blk{i}_m2w"].T + p[f"blk{i}_m2b"]
        blocks.append(dict(h_in=h, gam=gam, gate=gate, dev=dev, sigma=sigma, s=s, n=n,
                           a=a, m1=m1, sig_m1=sig_m1, z=z, m2=m2))
        h = h + gate * m2
    cache["blocks"] = blocks
    cache["h_out"] = h
    out = h @ p["out_w"].T + p["out_b"]
    cache["out"] = out
    return out, cache


def forward_eps(params: ModelParams, x_t, t, labels, cond_transform=None) -> np.ndarray:
    """Predicted noise for a batch; ``cond_transform`` may rewrite the (B, d)
    condition matrix before any modulation (the pruning hook)."""
    out, _ = _forward(params, x_t, t, labels, cond_transform)
    return out


def _backward(params: ModelParams, cache: dict, eps: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    p = params.tensors
    B = cache["x"].shape[0]
    w = params.hidden

    diff = cache["out"] - np.asarray(eps, dtype=cache["out"].dtype)
    loss = float(np.sum(diff * diff)) / B
    grads = {k: np.zeros_like(v) for k, v in p.items()}

    dout = 2.0 * diff / B
    grads["out_w"] += dout.T @ cache["h_out"]
    grads["out_b"] += dout.sum(axis=0)
    dh = dout @ p["out_w"]
    dc = np.zeros_like(cache["c"])

    for i in reversed(range(params.n_blocks)):
        blk = cache["blocks"][i]
        dgate = dh * blk["m2"]
        dm2 = dh * blk["gate"]
        grads[f"blk{i}_m2w"] += dm2.T @ blk["z"]
        grads[f"blk{i}_m2b"] += dm2.sum(axis=0)
        dz = dm2 @ p[f"blk{i}_m2w"]
        dm1 = dz * _dsilu_from_sig(blk["m1"], blk["sig_m1"])
        grads[f"blk{i}_m1w"] += dm1.T @ blk["a"]
        grads[f"blk{i}_m1b"] += dm1.sum(axis=0)
        da = dm1 @ p[f"blk{i}_m1w"]
        dgam = da * blk["n"]
        dbet = da
        dn = da * blk["gam"]

        # layer-norm backward; sigma is the population std over features
        inner = np.sum(dn * blk["dev"], axis=1, keepdims=True)
        coef = np.zeros_like(inner)
        np.divide(inner, w * blk["sigma"] * blk["s"] ** 2, out=coef, where=blk["sigma"] > 0)
        dh_branch = (dn - dn.mean(axis=1, keepdims=True)) / blk["s"] - blk["dev"] * coef

        grads[f"blk{i}_wg"] += dgam.T @ cache["c"]
        grads[f"blk{i}_wb"] += dbet.T @ cache["c"]
        grads[f"blk{i}_wgate"] += dgate.T @ cache["c"]
        dc += dgam @ p[f"blk{i}_wg"] + dbet @ p[f"blk{i}_wb"] + dgate @ p[f"blk{i}_wgate"]
        dh = dh + dh_branch

    grads["in_w"] += dh.T @ cache["x"]
    grads["in_b"] += dh.sum(axis=0)

    np.add.at(grads["class_table"], cache["labels"], dc)
    dtemb = dc
    grads["t_w2"] += dtemb.T @ cache["z1"]
    grads["t_b2"] += dtemb.sum(axis=0)
    dz1 = dtemb @ p["t_w2"]
    du1 = dz1 * _dsilu_from_sig(cache["u1"], cache["sig_u1"])
    grads["t_w1"] += du1.T @ cache["f"]
    grads["t_b1"] += du1.sum(axis=0)
    return loss, grads


def loss_and_grads(params: ModelParams, batch, schedule: Schedule) -> tuple[float, dict[str, np.ndarray]]:
    """MSE between predicted and true noise plus analytic gradients.

    ``batch`` is (x0, labels, t, eps) with t uniform in 1..T. All arithmetic
    runs in the dtype of ``params`` (float32 for trained models, float64 in
    the finite-difference tests).
    """
    x0, labels, t, eps = batch
    x_t = q_sample(schedule, np.asarray(x0, dtype=np.float64), t, np.asarray(eps, dtype=np.float64))
    _, cache = _forward(params, x_t, t, labels)
    return _backward(params, cache, eps)


# --- training ---------------------------------------------------------------------

@dataclass
class TraceRow:
    step: int
    loss: float
    cosine: float
    npr: float


@dataclass
class TrainingTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        if self.rows and row.step <= self.rows[-1].step:
            raise BadConfig("trace steps must be strictly increasing")
        self.rows.append(row)

    def to_csv_bytes(self) -> bytes:
        lines = ["step,loss,cosine,npr"]
        for r in self.rows:
            lines.append(f"{r.step},{r.loss!r},{r.cosine!r},{r.npr!r}")
        return ("\n".join(lines) + "\n").encode("ascii")


def _monitor_row(params: ModelParams, schedule: Schedule, step: int, loss: float) -> TraceRow:
    # Reference timestep: the first (largest-noise) sampling step, t = T.
    c = condition_vectors(params, float(schedule.T))
    C = cosine_matrix(c)
    off = C[~np.eye(C.shape[0], dtype=bool)]
    alpha = participation_ratio(np.abs(c).mean(axis=0))
    return TraceRow(step=step, loss=loss, cosine=float(off.mean()), npr=npr(alpha, c.shape[1]))


def _is_bias(key: str) -> bool:
    return key.rsplit("_", 1)[-1] in ("b", "b1", "b2", "m1b", "m2b")


_COND_KEYS = ("class_table", "t_w1", "t_w2")


def _decay_for(key: str, weight_decay: float, cond_weight_decay: float) -> float:
    if _is_bias(key):
        return 0.0
    return cond_weight_decay if key in _COND_KEYS else weight_decay


def _adam_step(params, grads, state, lr, weight_decay=0.0, cond_weight_decay=None):
    if cond_weight_decay is None:
        cond_weight_decay = weight_decay
    state["t"] += 1
    t = state["t"]
    bias1 = 1.0 - ADAM_BETA1**t
    bias2 = 1.0 - ADAM_BETA2**t
    for key in sorted(params.tensors):
        g = grads[key]
        m = state["m"][key]
        v = state["v"][key]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p = params.tensors[key]
        decay = _decay_for(key, weight_decay, cond_weight_decay)
        if decay:
            p -= lr * decay * p  # decoupled decay, biases exempt
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)


def _eval_loss(params: ModelParams, batch, schedule: Schedule) -> float:
    x0, labels, t, eps = batch
    x_t = q_sample(schedule, x0, t, eps)
    out, _ = _forward(params, x_t, t, labels)
    diff = out - np.asarray(eps, dtype=out.dtype)
    return float(np.sum(diff * diff)) / x0.shape[0]


def train(config: ToyConfig) -> tuple[ModelParams, TrainingTrace]:
    """Adam training loop with periodic (cosine, nPR) monitoring of c.

    Deterministic given the config seed: data, init, and the fixed monitoring
    batch each draw from their own child stream.
    """
    ss = np.random.SeedSequence(config.seed)
    init_ss, data_ss, draw_ss, mon_ss = ss.spawn(4)

    schedule = diffusion_schedule(config.n_timesteps, config.beta_min, config.beta_max)
    params = init_params(config, seed=init_ss)
    dataset = make_dataset(config.n_classes, data_ss)
    draw_rng = np.random.default_rng(draw_ss)

    mon_rng = np.random.default_rng(mon_ss)
    mon_dataset = make_dataset(config.n_classes, mon_rng)
    mx0, mlabels = mon_dataset.sample(config.batch)
    mt = mon_rng.integers(1, schedule.T + 1, size=config.batch)
    meps = mon_rng.standard_normal((config.batch, 2))
    monitor_batch = (mx0, mlabels, mt, meps)

    trace = TrainingTrace()
    trace.append(_monitor_row(params, schedule, 0, _eval_loss(params, monitor_batch, schedule)))

    adam = {"t": 0, "m": {k: np.zeros_like(v) for k, v in params.tensors.items()},
            "v": {k: np.zeros_like(v) for k, v in params.tensors.items()}}

    for step in range(1, config.train_steps + 1):
        x0, labels = dataset.sample(config.batch)
        t = draw_rng.integers(1, schedule.T + 1, size=config.batch)
        eps = draw_rng.standard_normal((config.batch, 2))
        loss, grads = loss_and_grads(params, (x0, labels, t, eps), schedule)
        if not math.isfinite(loss):
            raise NonFiniteLoss(step, trace)
        _adam_step(params, grads, adam, config.lr, config.weight_decay, config.cond_weight_decay)
        if step % config.monitor_every == 0:
            trace.append(_monitor_row(params, schedule, step, _eval_loss(params, monitor_batch, schedule)))
    return params, trace


# --- checkpointing -----------------------------------------------------------------

CKPT_FORMAT = "condkit-toydit-v1"


def save_checkpoint(params: ModelParams, config: ToyConfig, directory) -> None:
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(params.tensors):
        fname = f"{name}.npy"
        tensorio.write_npy(params.tensors[name], d / fname)
        entries.append({"name": name, "file": fname, "shape": list(params.tensors[name].shape)})
    manifest = {
        "format": CKPT_FORMAT,
        "config": config.to_json(),
        "freq_dim": params.freq_dim,
        "tensors": entries,
    }
    tensorio.write_report(manifest, d / "manifest.json")


def load_checkpoint(directory) -> tuple[ModelParams, ToyConfig]:
    from pathlib import Path

    d = Path(directory)
    manifest = tensorio.read_report(d / "manifest.json")
    if manifest.get("format") != CKPT_FORMAT:
        raise BadConfig(f"{directory}: not a toy-model checkpoint")
    config = ToyConfig.from_json(manifest["config"])
    tensors = {e["name"]: tensorio.read_npy(d / e["file"]) for e in manifest["tensors"]}
    params = ModelParams(
        n_classes=config.n_classes,
        cond_dim=config.cond_dim,
        hidden=config.hidden_width,
        n_blocks=config.n_blocks,
        freq_dim=manifest["freq_dim"],
        tensors=tensors,
    )
    return params, config
