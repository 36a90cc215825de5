"""Monotonic recurrent network for sorting with temporal criteria.

Every criterion runs its own small tanh RNN over its encoded series, so
criteria never share state. Input and output weights pass through ReLU
before use, which keeps each sub-marginal value non-decreasing in its
input. A per-criterion gate network turns the previous hidden state into a
discount in (0, 1), and marginal values accumulate as

    u^t = f^t + tau^{t-1} * u^{t-1},   u^1 = f^1,   U = sum_j u_j^T.

Classes come from ordered thresholds on U with a sigmoid cumulative link.

Two variants are supported. ``"strict"`` (the default) also passes the
recurrent and gate weights through ReLU and measures the hidden state from
its floor (``f = relu(W_f) (h + 1)``), which makes U non-decreasing in every
input at every timestamp. ``"relaxed"`` leaves recurrent and gate weights
unconstrained and uses ``f = relu(W_f) h``; only same-timestamp effects are
then guaranteed monotone.

Gradients are hand-written reverse mode through time (no autodiff
dependency) and are checked against finite differences in the test suite.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import ClassStructure, Grid, assign_many, build_grid, encode_array
from .errors import Diverged, ShapeMismatch

log = logging.getLogger(__name__)

THRESHOLD_GAP = 1e-4
PROB_FLOOR = 1e-12
MODES = ("strict", "relaxed")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def relu(x):
    return np.maximum(x, 0.0)


def recurrence_step(f, tau, u_prev):
    """One marginal-value update: u^t = f^t + tau^{t-1} u^{t-1}."""
    return f + tau * u_prev


@dataclass(frozen=True)
class MrnnConfig:
    m: int
    T: int
    gamma: int = 4
    hidden_size: int = 16
    class_count: int = 2
    q_hidden: int = 8
    epochs: int = 200
    learning_rate: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 32
    seed: int = 0
    validation_patience: int = 20
    grad_clip: float = 10.0
    mode: str = "strict"

    def __post_init__(self):
        for name in ("m", "T", "gamma", "hidden_size", "q_hidden", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.validation_patience < 1:
            raise ValueError("validation_patience must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


PARAM_NAMES = ("w_v", "w_h", "b", "w_f", "q_w1", "q_b1", "q_w2", "q_b2", "thr_base", "thr_inc")


@dataclass(eq=False)
class MrnnParams:
    """Raw (unconstrained) parameter storage; constraints apply at use."""

    w_v: np.ndarray  # (m, s, gamma)
    w_h: np.ndarray  # (m, s, s)
    b: np.ndarray  # (m, s)
    w_f: np.ndarray  # (T, m, s)
    q_w1: np.ndarray  # (m, q, s)
    q_b1: np.ndarray  # (m, q)
    q_w2: np.ndarray  # (m, q)
    q_b2: np.ndarray  # (m,)
    thr_base: np.ndarray  # (1,)
    thr_inc: np.ndarray  # (H - 2,)

    def items(self):
        return [(n, getattr(self, n)) for n in PARAM_NAMES]

    def copy(self) -> "MrnnParams":
        return MrnnParams(**{n: a.copy() for n, a in self.items()})

    def zeros_like(self) -> "MrnnParams":
        return MrnnParams(**{n: np.zeros_like(a) for n, a in self.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.items()])

    def size(self) -> int:
        return sum(a.size for _, a in self.items())

    def thresholds(self) -> np.ndarray:
        """Materialized thresholds theta_1 < ... < theta_{H-1}."""
        steps = softplus(self.thr_inc) + THRESHOLD_GAP
        return float(self.thr_base[0]) + np.concatenate([[0.0], np.cumsum(steps)])

    def classes(self) -> ClassStructure:
        return ClassStructure(tuple(self.thresholds().tolist()))


def init_params(config: MrnnConfig, rng: Optional[np.random.Generator] = None) -> MrnnParams:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    m, T, g, s, q = config.m, config.T, config.gamma, config.hidden_size, config.q_hidden
    bound = 1.0 / math.sqrt(s)
    qbound = 1.0 / math.sqrt(q)
    strict = config.mode == "strict"
    return MrnnParams(
        w_v=rng.uniform(0.0, bound, (m, s, g)),
        w_h=rng.uniform(-bound, bound, (m, s, s)),
        b=np.zeros((m, s)),
        w_f=rng.uniform(0.0, bound, (T, m, s)),
        q_w1=rng.uniform(0.0 if strict else -bound, bound, (m, q, s)),
        q_b1=np.zeros((m, q)),
        q_w2=rng.uniform(0.0 if strict else -qbound, qbound, (m, q)),
        q_b2=np.zeros(m),
        thr_base=np.zeros(1),
        # softplus(0.5413) = 1: thresholds start one unit apart
        thr_inc=np.full(config.class_count - 2, 0.5413248546129181),
    )


def _effective(params: MrnnParams, mode: str):
    strict = mode == "strict"
    return {
        "Wv": relu(params.w_v),
        "Wh": relu(params.w_h) if strict else params.w_h,
        "Wf": relu(params.w_f),
        "Q1": relu(params.q_w1) if strict else params.q_w1,
        "Q2": relu(params.q_w2) if strict else params.q_w2,
        "shift": 1.0 if strict else 0.0,
    }


@dataclass(eq=False)
class ForwardTrace:
    hidden: np.ndarray  # (B, T, m, s)
    sub_marginal: np.ndarray  # (B, T, m)
    discount: np.ndarray  # (B, T - 1, m)
    marginal: np.ndarray  # (B, T, m)
    comprehensive: np.ndarray  # (B,)
    gate_hidden: np.ndarray = None  # (B, T - 1, m, q), kept for backprop

    def single(self, i: int = 0) -> "ForwardTrace":
        return ForwardTrace(
            self.hidden[i], self.sub_marginal[i], self.discount[i], self.marginal[i],
            float(self.comprehensive[i]), None if self.gate_hidden is None else self.gate_hidden[i],
        )


def _as_batch(v: np.ndarray, config: MrnnConfig) -> np.ndarray:
    """Accept (m, T, gamma) or (B, m, T, gamma); return (B, T, m, gamma)."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 3:
        v = v[None]
    if v.ndim != 4 or v.shape[1:] != (config.m, config.T, config.gamma):
        raise ShapeMismatch(
            f"encoded input shape {v.shape} does not match (B, {config.m}, {config.T}, {config.gamma})"
        )
    return np.ascontiguousarray(v.transpose(0, 2, 1, 3))


def forward(params: MrnnParams, config: MrnnConfig, encoded) -> ForwardTrace:
    """Run the network on encoded inputs of shape (m, T, gamma) or (B, m, T, gamma)."""
    V = _as_batch(getattr(encoded, "v", encoded), config)
    E = _effective(params, config.mode)
    B, T = V.shape[0], config.T
    m, s, q = config.m, config.hidden_size, config.q_hidden
    H = np.empty((B, T, m, s))
    F = np.empty((B, T, m))
    U = np.empty((B, T, m))
    tau = np.empty((B, T - 1, m))
    R = np.empty((B, T - 1, m, q))
    h = np.zeros((B, m, s))
    for t in range(T):
        a = (
            np.einsum("msg,bmg->bms", E["Wv"], V[:, t])
            + np.einsum("msr,bmr->bms", E["Wh"], h)
            + params.b
        )
        h = np.tanh(a)
        H[:, t] = h
        F[:, t] = np.einsum("ms,bms->bm", E["Wf"][t], h + E["shift"])
        if t == 0:
            U[:, 0] = F[:, 0]
        else:
            U[:, t] = recurrence_step(F[:, t], tau[:, t - 1], U[:, t - 1])
        if t < T - 1:
            r = np.tanh(np.einsum("mqs,bms->bmq", E["Q1"], h) + params.q_b1)
            R[:, t] = r
            tau[:, t] = sigmoid(np.einsum("mq,bmq->bm", E["Q2"], r) + params.q_b2)
    return ForwardTrace(H, F, tau, U, U[:, -1].sum(axis=1), R)


def _link_terms(u_values, labels, thresholds):
    """Per-sample probability of the true class and the link pieces around it."""
    u_values = np.asarray(u_values, dtype=float)
    labels = np.asarray(labels, dtype=int)
    th = np.asarray(thresholds, dtype=float)
    H = len(th) + 1
    hi_idx = labels - 1  # index of theta_y in th, valid when y < H
    lo_idx = labels - 2  # index of theta_{y-1}, valid when y > 1
    has_hi = labels < H
    has_lo = labels > 1
    s_hi = np.where(has_hi, sigmoid(th[np.clip(hi_idx, 0, H - 2)] - u_values), 1.0)
    s_lo = np.where(has_lo, sigmoid(th[np.clip(lo_idx, 0, H - 2)] - u_values), 0.0)
    # edge classes avoid the subtraction: 1 - sigmoid(x) == sigmoid(-x)
    top = sigmoid(u_values - th[np.clip(lo_idx, 0, H - 2)])
    p = np.where(~has_lo, s_hi, np.where(~has_hi, top, s_hi - s_lo))
    return p, s_hi, s_lo, has_hi, has_lo, hi_idx, lo_idx


def class_probabilities(u_value, thresholds) -> np.ndarray:
    """P(class h) = sigmoid(theta_h - U) - sigmoid(theta_{h-1} - U), h = 1..H."""
    th = np.asarray(thresholds, dtype=float)
    cdf = np.concatenate([[0.0], sigmoid(th - float(u_value)), [1.0]])
    return np.diff(cdf)


def ordinal_loss(u_values, labels, thresholds):
    """Negative log-likelihood of the true classes; returns (per_sample, mean)."""
    u_values = np.asarray(u_values, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if u_values.shape != labels.shape:
        raise ShapeMismatch("u_values and labels must have the same length")
    H = len(thresholds) + 1
    if labels.size and (labels.min() < 1 or labels.max() > H):
        raise ValueError(f"labels must lie in 1..{H}")
    p = _link_terms(u_values, labels, thresholds)[0]
    per = -np.log(np.maximum(p, PROB_FLOOR))
    return per, float(per.mean())


def loss(params: MrnnParams, config: MrnnConfig, encoded, labels) -> float:
    trace = forward(params, config, encoded)
    return ordinal_loss(trace.comprehensive, labels, params.thresholds())[1]


def gradients(params: MrnnParams, config: MrnnConfig, encoded, labels):
    """Mean ordinal loss and its exact gradient with respect to the raw parameters.

    Returns ``(loss, grads)`` where ``grads`` is an :class:`MrnnParams` of
    gradients. ReLU masks use subgradient 0 at 0; probabilities clamped at
    the floor contribute no gradient.
    """
    V = _as_batch(getattr(encoded, "v", encoded), config)
    labels = np.asarray(labels, dtype=int)
    B, T = V.shape[0], config.T
    if labels.shape != (B,):
        raise ShapeMismatch("one label per encoded alternative is required")
    E = _effective(params, config.mode)
    tr = forward(params, config, V.transpose(0, 2, 1, 3))
    th = params.thresholds()
    p, s_hi, s_lo, has_hi, has_lo, hi_idx, lo_idx = _link_terms(tr.comprehensive, labels, th)
    per = -np.log(np.maximum(p, PROB_FLOOR))
    mean_loss = float(per.mean())

    dL_dp = np.where(p > PROB_FLOOR, -1.0 / (B * np.maximum(p, PROB_FLOOR)), 0.0)
    d_hi = np.where(has_hi, s_hi * (1.0 - s_hi), 0.0)
    d_lo = np.where(has_lo, s_lo * (1.0 - s_lo), 0.0)
    dU = dL_dp * (d_lo - d_hi)
    d_theta = np.zeros(len(th))
    np.add.at(d_theta, hi_idx[has_hi], (dL_dp * d_hi)[has_hi])
    np.add.at(d_theta, lo_idx[has_lo], -(dL_dp * d_lo)[has_lo])

    g = params.zeros_like()
    dWv = np.zeros_like(params.w_v)
    dWh = np.zeros_like(params.w_h)
    dWf = np.zeros_like(params.w_f)
    dQ1 = np.zeros_like(params.q_w1)
    dQ2 = np.zeros_like(params.q_w2)

    du = np.repeat(dU[:, None], config.m, axis=1)
    dh_next = np.zeros((B, config.m, config.hidden_size))
    dtau_t = None  # gradient w.r.t. tau at the current step, filled one step late
    for t in range(T - 1, -1, -1):
        h_t = tr.hidden[:, t]
        df = du
        if t >= 1:
            dtau_prev = du * tr.marginal[:, t - 1]
            du_prev = du * tr.discount[:, t - 1]
        dWf[t] += np.einsum("bm,bms->ms", df, h_t + E["shift"])
        dh = dh_next + df[..., None] * E["Wf"][t][None]
        if t <= T - 2:
            tau_t = tr.discount[:, t]
            r_t = tr.gate_hidden[:, t]
            dz2 = dtau_t * tau_t * (1.0 - tau_t)
            dQ2 += np.einsum("bm,bmq->mq", dz2, r_t)
            g.q_b2 += dz2.sum(axis=0)
            dz1 = dz2[..., None] * E["Q2"][None] * (1.0 - r_t * r_t)
            dQ1 += np.einsum("bmq,bms->mqs", dz1, h_t)
            g.q_b1 += dz1.sum(axis=0)
            dh += np.einsum("bmq,mqs->bms", dz1, E["Q1"])
        da = dh * (1.0 - h_t * h_t)
        dWv += np.einsum("bms,bmg->msg", da, V[:, t])
        g.b += da.sum(axis=0)
        if t >= 1:
            dWh += np.einsum("bms,bmr->msr", da, tr.hidden[:, t - 1])
            dh_next = np.einsum("bms,msr->bmr", da, E["Wh"])
            dtau_t = dtau_prev
            du = du_prev

    strict = config.mode == "strict"
    g.w_v = dWv * (params.w_v > 0)
    g.w_f = dWf * (params.w_f > 0)
    g.w_h = dWh * (params.w_h > 0) if strict else dWh
    g.q_w1 = dQ1 * (params.q_w1 > 0) if strict else dQ1
    g.q_w2 = dQ2 * (params.q_w2 > 0) if strict else dQ2
    g.thr_base = np.array([d_theta.sum()])
    if len(params.thr_inc):
        tail = np.cumsum(d_theta[::-1])[::-1][1:]  # sum over k > i of d_theta[k]
        g.thr_inc = sigmoid(params.thr_inc) * tail
    return mean_loss, g


# -- training ----------------------------------------------------------------


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    validation_loss: list = field(default_factory=list)
    best_epoch: int = -1
    epochs_run: int = 0
    thresholds: list = field(default_factory=list)
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _clip(grads: MrnnParams, limit: float):
    norm = float(np.sqrt(sum(float((a * a).sum()) for _, a in grads.items())))
    if norm > limit:
        scale = limit / norm
        for n, a in grads.items():
            setattr(grads, n, a * scale)
    return norm


def _init_thresholds(params, config, v_train, labels):
    """Centre the thresholds on the initial value distribution.

    Starting thresholds at quantiles of the untrained U (matched to the class
    frequencies) keeps every class probability away from the clamp floor.
    """
    U = forward(params, config, v_train).comprehensive
    H = config.class_count
    freq = np.array([(labels == h).mean() for h in range(1, H)])
    qs = np.clip(np.cumsum(freq), 0.05, 0.95)
    cuts = np.quantile(U, qs)
    params.thr_base = np.array([cuts[0]])
    if H > 2:
        gaps = np.maximum(np.diff(cuts), 1e-2)
        # inverse softplus
        params.thr_inc = np.log(np.expm1(np.maximum(gaps - THRESHOLD_GAP, 1e-6)))


def train_arrays(v_train, y_train, v_val, y_val, config: MrnnConfig):
    """Momentum SGD with early stopping on validation loss.

    Inputs are encoded arrays of shape (n, m, T, gamma) with 1-based labels.
    An empty validation set disables early stopping. Returns
    ``(best_params, TrainReport)``.
    """
    rng = np.random.default_rng(config.seed)
    params = init_params(config, rng)
    y_train = np.asarray(y_train, dtype=int)
    y_val = np.asarray(y_val, dtype=int)
    _init_thresholds(params, config, v_train, y_train)
    velocity = params.zeros_like()
    report = TrainReport()
    best = params.copy()
    best_val = loss(params, config, v_val, y_val) if len(y_val) else np.inf
    report.best_epoch = 0
    since_best = 0
    n = len(y_train)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_loss, grads = gradients(params, config, v_train[idx], y_train[idx])
            if not np.isfinite(batch_loss):
                report.epochs_run = epoch
                raise Diverged(f"loss became {batch_loss} in epoch {epoch}")
            total += batch_loss * len(idx)
            _clip(grads, config.grad_clip)
            for name, a in params.items():
                vel = config.momentum * getattr(velocity, name) - config.learning_rate * getattr(grads, name)
                setattr(velocity, name, vel)
                setattr(params, name, a + vel)
        report.train_loss.append(total / n)
        report.epochs_run = epoch
        if len(y_val):
            val = loss(params, config, v_val, y_val)
            report.validation_loss.append(val)
            if not np.isfinite(val):
                raise Diverged(f"validation loss became {val} in epoch {epoch}")
            if val < best_val:
                best_val, best, since_best = val, params.copy(), 0
                report.best_epoch = epoch
            else:
                since_best += 1
                if since_best >= config.validation_patience:
                    report.stopped_early = True
                    break
        else:
            best = params.copy()
            report.best_epoch = epoch
    report.thresholds = best.thresholds().tolist()
    return best, report


@dataclass(eq=False)
class MrnnModel:
    grid: Grid
    config: MrnnConfig
    params: MrnnParams
    info: dict = field(default_factory=dict)

    kind = "mrnn"

    def trace(self, series: np.ndarray) -> ForwardTrace:
        return forward(self.params, self.config, encode_array(series, self.grid))

    def comprehensive(self, series: np.ndarray) -> np.ndarray:
        return self.trace(series).comprehensive

    def predict_many(self, series: np.ndarray) -> np.ndarray:
        return assign_many(self.comprehensive(series), self.params.classes())


def predict(params: MrnnParams, config: MrnnConfig, grid: Grid, alt) -> int:
    """Interval rule on U (not the probability argmax)."""
    if alt.series.shape != grid.alpha.shape:
        raise ShapeMismatch(f"alternative shape {alt.series.shape} != grid {grid.alpha.shape}")
    U = forward(params, config, encode_array(alt.series, grid)).comprehensive
    return int(assign_many(U, params.classes())[0])


def train(dataset, grid: Grid, config: MrnnConfig, validation=None):
    """Train on a labeled dataset.

    Without an explicit ``validation`` set, a seeded 20% of ``dataset`` is
    held out for early stopping.
    """
    if validation is None:
        n = len(dataset)
        perm = np.random.default_rng([config.seed, 1]).permutation(n)
        n_val = n // 5
        validation = dataset.subset(sorted(perm[:n_val].tolist()))
        dataset = dataset.subset(sorted(perm[n_val:].tolist()))
    v_tr = encode_array(dataset.series, grid)
    if len(validation):
        v_va = encode_array(validation.series, grid)
    else:
        v_va = np.zeros((0,) + v_tr.shape[1:])
    return train_arrays(v_tr, dataset.labels, v_va, validation.labels, config)


def fit(train_ds, val_ds, config: MrnnConfig, grid: Optional[Grid] = None) -> MrnnModel:
    """Encode, train and wrap into a model; the grid comes from the training set."""
    grid = build_grid(train_ds, config.gamma) if grid is None else grid
    params, report = train(train_ds, grid, config, validation=val_ds)
    return MrnnModel(grid, config, params, {"train": report.to_dict()})


def export_marginals(params: MrnnParams, config: MrnnConfig, grid: Grid, encoded_sample):
    """Probe sub-marginal curves and per-sample discount traces.

    Returns ``(curves, discounts)``: ``curves`` has shape (m, T, gamma + 1)
    with the sub-marginal at every characteristic point when only that
    timestamp's input varies and all others sit at the sample mean;
    ``discounts`` is the (n, T - 1, m) gate output for the sample.
    """
    v = np.asarray(getattr(encoded_sample, "v", encoded_sample), dtype=float)
    if v.ndim == 3:
        v = v[None]
    mean_v = v.mean(axis=0)  # (m, T, gamma)
    g = config.gamma
    stairs = np.tril(np.ones((g + 1, g)), -1)  # row k: k ones then zeros
    T = config.T
    probes = np.repeat(mean_v[None], T * (g + 1), axis=0).reshape(T, g + 1, *mean_v.shape)
    for t in range(T):
        probes[t, :, :, t, :] = stairs[:, None, :]
    tr = forward(params, config, probes.reshape(-1, *mean_v.shape))
    f = tr.sub_marginal.reshape(T, g + 1, T, config.m)
    curves = np.stack([f[t, :, t, :] for t in range(T)])  # (T, gamma+1, m)
    curves = curves.transpose(2, 0, 1)
    discounts = forward(params, config, v).discount
    return curves, discounts


def clone_config(config: MrnnConfig, **changes) -> MrnnConfig:
    data = config.to_dict()
    data.update(changes)
    return MrnnConfig(**data)
