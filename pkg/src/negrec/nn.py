"""From-scratch LSTM + hybrid-feature + dense-softmax classifier.

A single LSTM layer (standard gates, no peepholes) reads the per-round step
features; its hidden state at the last mask-valid step is concatenated with
the trace-level overall features and mapped through one dense layer to class
logits.  Cross-entropy loss, backpropagation through time, and Adam live here
too, all in double precision numpy.

Padding rows are invisible: the recurrence freezes h and c wherever the mask
is zero, so a padded input gives bit-identical output to the truncated one.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .features import Scenario, n_overall_features, n_step_features, schema_hash

HIDDEN_SIZE = 64
PARAM_FIELDS = ("w_x", "w_h", "b", "w_d", "b_d")


class TrainingError(RuntimeError):
    pass


class SchemaMismatchError(ValueError):
    pass


@dataclass
class ModelParams:
    """All learnable arrays plus the metadata that fixes their meaning."""

    w_x: np.ndarray  # (F_t, 4H) input projection, gate order i|f|g|o
    w_h: np.ndarray  # (H, 4H) recurrent projection
    b: np.ndarray  # (4H,) gate biases
    w_d: np.ndarray  # (H + F_o, C) dense layer
    b_d: np.ndarray  # (C,)
    hidden: int
    checkpoint_round: int
    scenario: Scenario
    labels: tuple[str, ...]

    @property
    def n_step_features(self) -> int:
        return self.w_x.shape[0]

    @property
    def n_overall_features(self) -> int:
        return self.w_d.shape[0] - self.hidden

    @property
    def n_classes(self) -> int:
        return self.w_d.shape[1]

    def validate(self) -> None:
        h = self.hidden
        if self.w_x.shape[1] != 4 * h or self.w_h.shape != (h, 4 * h):
            raise ValueError("gate projection shapes inconsistent with hidden size")
        if self.b.shape != (4 * h,):
            raise ValueError("gate bias shape inconsistent with hidden size")
        if self.w_d.shape[0] <= h or self.w_d.shape[1] != len(self.labels):
            raise ValueError("dense shape inconsistent with hidden size and labels")
        if self.b_d.shape != (len(self.labels),):
            raise ValueError("dense bias shape inconsistent with labels")
        for name in PARAM_FIELDS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")

    def copy(self) -> "ModelParams":
        return ModelParams(
            w_x=self.w_x.copy(),
            w_h=self.w_h.copy(),
            b=self.b.copy(),
            w_d=self.w_d.copy(),
            b_d=self.b_d.copy(),
            hidden=self.hidden,
            checkpoint_round=self.checkpoint_round,
            scenario=self.scenario,
            labels=self.labels,
        )


def init_params(
    scenario: Scenario,
    checkpoint_round: int,
    labels: Sequence[str],
    seed: int,
    hidden: int = HIDDEN_SIZE,
    n_step: int | None = None,
    n_overall: int | None = None,
) -> ModelParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases except forget gate at 1."""
    if n_step is None:
        n_step = n_step_features(scenario)
    if n_overall is None:
        n_overall = n_overall_features(scenario)
    n_classes = len(labels)
    if n_classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x11717)))
    bound_x = 1.0 / np.sqrt(n_step)
    bound_h = 1.0 / np.sqrt(hidden)
    bound_d = 1.0 / np.sqrt(hidden + n_overall)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget gate
    params = ModelParams(
        w_x=rng.uniform(-bound_x, bound_x, size=(n_step, 4 * hidden)),
        w_h=rng.uniform(-bound_h, bound_h, size=(hidden, 4 * hidden)),
        b=b,
        w_d=rng.uniform(-bound_d, bound_d, size=(hidden + n_overall, n_classes)),
        b_d=np.zeros(n_classes),
        hidden=hidden,
        checkpoint_round=checkpoint_round,
        scenario=scenario,
        labels=tuple(labels),
    )
    params.validate()
    return params


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits))


@dataclass
class _ForwardCache:
    x: np.ndarray
    mask: np.ndarray
    overall: np.ndarray
    gates: list  # per step: (i, f, g, o, c_prev, h_prev, c_new, tanh_c)
    h_last: np.ndarray
    dense_in: np.ndarray
    probs: np.ndarray


def _check_batch(params: ModelParams, x: np.ndarray, mask: np.ndarray, overall: np.ndarray):
    if x.ndim != 3 or x.shape[2] != params.n_step_features:
        raise ValueError(
            f"step input shape {x.shape} incompatible with F_t={params.n_step_features}"
        )
    if mask.shape != x.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} incompatible with steps {x.shape}")
    if overall.ndim != 2 or overall.shape != (x.shape[0], params.n_overall_features):
        raise ValueError(
            f"overall shape {overall.shape} incompatible with F_o={params.n_overall_features}"
        )
    if np.any(mask.sum(axis=1) < 1):
        raise ValueError("every example needs at least one mask-valid step")


def _lstm_batch(params: ModelParams, x, mask, keep_cache: bool):
    n, T, _ = x.shape
    h_size = params.hidden
    proj = x.reshape(n * T, -1) @ params.w_x
    proj = proj.reshape(n, T, 4 * h_size)
    h = np.zeros((n, h_size))
    c = np.zeros((n, h_size))
    gates = [] if keep_cache else None
    for t in range(T):
        z = proj[:, t] + h @ params.w_h + params.b
        i = _sigmoid(z[:, :h_size])
        f = _sigmoid(z[:, h_size:2 * h_size])
        g = np.tanh(z[:, 2 * h_size:3 * h_size])
        o = _sigmoid(z[:, 3 * h_size:])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        m = mask[:, t:t + 1]
        if keep_cache:
            gates.append((i, f, g, o, c, h, c_new, tanh_c))
        c = m * c_new + (1.0 - m) * c
        h = m * h_new + (1.0 - m) * h
    return h, gates


def forward_batch(params: ModelParams, x, mask, overall) -> _ForwardCache:
    x = np.asarray(x, dtype=float)
    mask = np.asarray(mask, dtype=float)
    overall = np.asarray(overall, dtype=float)
    _check_batch(params, x, mask, overall)
    h_last, gates = _lstm_batch(params, x, mask, keep_cache=True)
    dense_in = np.concatenate([h_last, overall], axis=1)
    logits = dense_in @ params.w_d + params.b_d
    probs = softmax(logits)
    return _ForwardCache(x, mask, overall, gates, h_last, dense_in, probs)


def lstm_forward(params: ModelParams, steps, mask) -> np.ndarray:
    """Hidden state (length H) at the last mask-valid step of one example."""
    x = np.asarray(steps, dtype=float)[None, :, :]
    m = np.asarray(mask, dtype=float)[None, :]
    if x.shape[2] != params.n_step_features:
        raise ValueError(f"step width {x.shape[2]} != F_t={params.n_step_features}")
    if m.shape[1] != x.shape[1]:
        raise ValueError("mask length differs from step count")
    if m.sum() < 1:
        raise ValueError("mask selects no steps")
    h, _ = _lstm_batch(params, x, m, keep_cache=False)
    return h[0]


def model_forward(params: ModelParams, steps, mask, overall) -> np.ndarray:
    """Class probability vector for one example."""
    cache = forward_batch(
        params,
        np.asarray(steps, dtype=float)[None, :, :],
        np.asarray(mask, dtype=float)[None, :],
        np.asarray(overall, dtype=float)[None, :],
    )
    return cache.probs[0]


def cross_entropy(probs_or_logits: np.ndarray, y: np.ndarray, logits: bool = False) -> float:
    if logits:
        logp = _log_softmax(probs_or_logits)
    else:
        logp = np.log(probs_or_logits)
    return float(-logp[np.arange(len(y)), y].mean())


def loss_and_grads(params: ModelParams, x, mask, overall, y):
    """Mean cross-entropy and its gradients for one batch."""
    cache = forward_batch(params, x, mask, overall)
    n = cache.x.shape[0]
    y = np.asarray(y, dtype=np.int64)
    logp = np.log(cache.probs)
    loss = float(-logp[np.arange(n), y].mean())

    dlogits = cache.probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grads = {
        "w_d": cache.dense_in.T @ dlogits,
        "b_d": dlogits.sum(axis=0),
    }
    ddense_in = dlogits @ params.w_d.T
    h_size = params.hidden
    dh = ddense_in[:, :h_size]
    dc = np.zeros_like(dh)
    dw_x = np.zeros_like(params.w_x)
    dw_h = np.zeros_like(params.w_h)
    db = np.zeros_like(params.b)
    T = cache.x.shape[1]
    for t in range(T - 1, -1, -1):
        i, f, g, o, c_prev, h_prev, c_new, tanh_c = cache.gates[t]
        m = cache.mask[:, t:t + 1]
        dh_new = m * dh
        dh_carry = (1.0 - m) * dh
        dc_new = m * dc + dh_new * o * (1.0 - tanh_c ** 2)
        do = dh_new * tanh_c
        dz = np.empty((cache.x.shape[0], 4 * h_size))
        dz[:, :h_size] = dc_new * g * i * (1.0 - i)
        dz[:, h_size:2 * h_size] = dc_new * c_prev * f * (1.0 - f)
        dz[:, 2 * h_size:3 * h_size] = dc_new * i * (1.0 - g ** 2)
        dz[:, 3 * h_size:] = do * o * (1.0 - o)
        dw_x += cache.x[:, t].T @ dz
        dw_h += h_prev.T @ dz
        db += dz.sum(axis=0)
        dh = dh_carry + dz @ params.w_h.T
        dc = (1.0 - m) * dc + dc_new * f
    grads["w_x"] = dw_x
    grads["w_h"] = dw_h
    grads["b"] = db
    return loss, grads, cache.probs


def predict_probs(params: ModelParams, x, mask, overall, chunk: int = 256) -> np.ndarray:
    """Probabilities for many examples, evaluated in memory-bounded chunks."""
    x = np.asarray(x, dtype=float)
    out = np.empty((x.shape[0], params.n_classes))
    for start in range(0, x.shape[0], chunk):
        stop = start + chunk
        cache = forward_batch(params, x[start:stop], mask[start:stop], overall[start:stop])
        out[start:stop] = cache.probs
    return out


def predict(params: ModelParams, x, mask, overall, chunk: int = 256) -> np.ndarray:
    """Predicted class indices (ties break to the lowest index)."""
    return np.argmax(predict_probs(params, x, mask, overall, chunk), axis=1)


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    epochs: int = 80
    early_stop_patience: int | None = None  # off by default
    min_improvement: float = 1e-5
    grad_clip: float | None = None  # off by default
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("rates must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        state = cls()
        for name in PARAM_FIELDS:
            state.m[name] = np.zeros_like(getattr(params, name))
            state.v[name] = np.zeros_like(getattr(params, name))
        return state


def adam_step(
    params: ModelParams, grads: Mapping[str, np.ndarray], state: AdamState, config: TrainConfig
) -> None:
    """One in-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    for name in PARAM_FIELDS:
        g = grads[name]
        state.m[name] = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        state.v[name] = config.beta2 * state.v[name] + (1.0 - config.beta2) * g * g
        m_hat = state.m[name] / (1.0 - config.beta1 ** t)
        v_hat = state.v[name] / (1.0 - config.beta2 ** t)
        getattr(params, name)[...] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)


def _clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def train(
    params: ModelParams,
    x: np.ndarray,
    mask: np.ndarray,
    overall: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
) -> list[tuple[int, float, float]]:
    """Train in place; returns history rows (epoch, mean_loss, train_acc).

    mean_loss averages per-example cross-entropy over the epoch; train_acc is
    measured on the pre-update predictions collected while iterating batches.
    Deterministic in config.seed (per-epoch shuffles come from one stream).
    """
    x = np.asarray(x, dtype=float)
    mask = np.asarray(mask, dtype=float)
    overall = np.asarray(overall, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if y.min() < 0 or y.max() >= params.n_classes:
        raise ValueError("labels outside model class range")
    state = AdamState.for_params(params)
    rng = np.random.default_rng(np.random.SeedSequence((int(config.seed), 0x7E41)))
    history: list[tuple[int, float, float]] = []
    best_loss = np.inf
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        hits = 0
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss, grads, probs = loss_and_grads(params, x[idx], mask[idx], overall[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {batch_index}")
            if config.grad_clip is not None:
                _clip_grads(grads, config.grad_clip)
            adam_step(params, grads, state, config)
            loss_sum += loss * len(idx)
            hits += int((np.argmax(probs, axis=1) == y[idx]).sum())
        mean_loss = loss_sum / n
        history.append((epoch, mean_loss, hits / n))
        if config.early_stop_patience is not None:
            if best_loss - mean_loss < config.min_improvement:
                stale += 1
                if stale >= config.early_stop_patience:
                    break
            else:
                stale = 0
            best_loss = min(best_loss, mean_loss)
    return history


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(
    params: ModelParams,
    steps: np.ndarray,
    mask: np.ndarray,
    overall: np.ndarray,
    y: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks every scalar parameter; the relative error uses denominator
    max(|analytic|, |numeric|, 1e-12).  Intended for small models.
    """
    x = np.asarray(steps, dtype=float)
    if x.ndim == 2:
        x = x[None, :, :]
        mask = np.asarray(mask, dtype=float)[None, :]
        overall = np.asarray(overall, dtype=float)[None, :]
        y = np.asarray([y], dtype=np.int64) if np.ndim(y) == 0 else np.asarray(y, dtype=np.int64)
    _, grads, _ = loss_and_grads(params, x, mask, overall, y)
    worst = 0.0
    for name in PARAM_FIELDS:
        array = getattr(params, name)
        flat = array.ravel()
        analytic = grads[name].ravel()
        for k in range(flat.size):
            saved = flat[k]
            flat[k] = saved + eps
            up, _, _ = loss_and_grads(params, x, mask, overall, y)
            flat[k] = saved - eps
            down, _, _ = loss_and_grads(params, x, mask, overall, y)
            flat[k] = saved
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(analytic[k]), abs(numeric), 1e-12)
            worst = max(worst, abs(analytic[k] - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# Checkpointing and history files
# ---------------------------------------------------------------------------

def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    params.validate()
    doc = {
        "checkpoint_round": params.checkpoint_round,
        "scenario": params.scenario.value,
        "hidden": params.hidden,
        "n_step_features": params.n_step_features,
        "n_overall_features": params.n_overall_features,
        "labels": list(params.labels),
        "schema_hash": schema_hash(params.scenario),
        "params": {
            name: {
                "shape": list(getattr(params, name).shape),
                "data": [float(v) for v in getattr(params, name).ravel()],
            }
            for name in PARAM_FIELDS
        },
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, sort_keys=True)
        handle.write("\n")


def load_checkpoint(path: str | Path, expected_schema_hash: str | None = None) -> ModelParams:
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    scenario = Scenario(doc["scenario"])
    stored = doc["schema_hash"]
    current = schema_hash(scenario)
    if stored != current:
        raise SchemaMismatchError(
            f"checkpoint {path} was written against schema {stored[:12]}..., "
            f"current {scenario.value} schema is {current[:12]}..."
        )
    if expected_schema_hash is not None and stored != expected_schema_hash:
        raise SchemaMismatchError(
            f"checkpoint {path} holds a {scenario.value} model (schema {stored[:12]}...), "
            f"expected schema {expected_schema_hash[:12]}..."
        )
    arrays = {}
    for name in PARAM_FIELDS:
        entry = doc["params"][name]
        arrays[name] = np.asarray(entry["data"], dtype=float).reshape(entry["shape"])
    params = ModelParams(
        hidden=doc["hidden"],
        checkpoint_round=doc["checkpoint_round"],
        scenario=scenario,
        labels=tuple(doc["labels"]),
        **arrays,
    )
    params.validate()
    return params


def save_history(history: Sequence[tuple[int, float, float]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "mean_loss", "train_acc"])
        for epoch, mean_loss, train_acc in history:
            writer.writerow([epoch, repr(float(mean_loss)), repr(float(train_acc))])


def load_history(path: str | Path) -> list[tuple[int, float, float]]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        next(reader)
        return [(int(row[0]), float(row[1]), float(row[2])) for row in reader]
