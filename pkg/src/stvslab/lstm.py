"""
Single-layer LSTM classifier written directly in numpy.

Forward pass per step, with ``z = [h_{t-1}, x_t]``::

    f = sigmoid(W_f z + b_f)      i = sigmoid(W_i z + b_i)
    o = sigmoid(W_o z + b_o)      g = tanh(W_c z + b_c)
    c = f * c_prev + i * g        h = o * tanh(c)

The final hidden state goes through inverted dropout, a 2-unit linear
head, dropout again on the head output, and a softmax. Index 0 of the
probability pair is Stable, index 1 is Unstable. The training loss is the
squared Euclidean distance between the softmax output and the one-hot
target, averaged over the batch.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import Dataset, Label, NormStats, TimeSeriesInstance, normalize_array
from .errors import (CheckpointError, EmptyInputError, MissingLabelError, NumericError,
                     RangeError, ShapeError)

GATES = ("f", "i", "o", "c")
PARAM_NAMES = ("W_f", "W_i", "W_o", "W_c", "b_f", "b_i", "b_o", "b_c", "W_s", "b_s")
CHECKPOINT_VERSION = 1


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class LstmModel:
    input_dim: int
    hidden_dim: int
    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray
    W_s: np.ndarray
    b_s: np.ndarray

    def __post_init__(self):
        H, D = self.hidden_dim, self.input_dim
        expected = {f"W_{g}": (H, H + D) for g in GATES}
        expected.update({f"b_{g}": (H,) for g in GATES})
        expected.update({"W_s": (2, H), "b_s": (2,)})
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"{name} contains non-finite values")
            setattr(self, name, arr)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmModel":
        H, D = hidden_dim, input_dim
        kw = {f"W_{g}": np.zeros((H, H + D)) for g in GATES}
        kw.update({f"b_{g}": np.zeros(H) for g in GATES})
        return cls(input_dim, hidden_dim, W_s=np.zeros((2, H)), b_s=np.zeros(2), **kw)

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator,
                   forget_bias: float = 1.0) -> "LstmModel":
        """Uniform weights in +-1/sqrt(H + D), zero biases except the forget gate."""
        H, D = hidden_dim, input_dim
        bound = 1.0 / math.sqrt(H + D)
        model = cls.zeros(D, H)
        for g in GATES:
            setattr(model, f"W_{g}", rng.uniform(-bound, bound, size=(H, H + D)))
        model.W_s = rng.uniform(-bound, bound, size=(2, H))
        model.b_f = np.full(H, float(forget_bias))
        return model

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "LstmModel":
        return LstmModel(self.input_dim, self.hidden_dim,
                         **{k: v.copy() for k, v in self.params().items()})


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray


@dataclass
class GateCache:
    z: np.ndarray
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def _step(x, h, c, model: LstmModel):
    z = np.concatenate([h, x], axis=-1)
    f = sigmoid(z @ model.W_f.T + model.b_f)
    i = sigmoid(z @ model.W_i.T + model.b_i)
    o = sigmoid(z @ model.W_o.T + model.b_o)
    g = np.tanh(z @ model.W_c.T + model.b_c)
    c_new = f * c + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    return h_new, c_new, GateCache(z, f, i, o, g, c, c_new, tanh_c)


def cell_forward(x_t, prev: CellState, model: LstmModel) -> tuple[CellState, GateCache]:
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape[-1] != model.input_dim:
        raise ShapeError(f"input has {x_t.shape[-1]} features, model expects {model.input_dim}")
    if prev.h.shape[-1] != model.hidden_dim or prev.c.shape[-1] != model.hidden_dim:
        raise ShapeError("previous state does not match hidden_dim")
    h, c, cache = _step(x_t, prev.h, prev.c, model)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise NumericError("non-finite LSTM state")
    return CellState(h, c), cache


@dataclass
class ForwardCache:
    X: np.ndarray
    steps: list
    h_last: np.ndarray
    h_drop: np.ndarray
    logits_drop: np.ndarray
    probs: np.ndarray
    mask_h: np.ndarray | None = None
    mask_s: np.ndarray | None = None
    keep_scale: float = 1.0


def dropout_masks(rng: np.random.Generator, batch: int, hidden: int, rate: float,
                  head: bool = True):
    """Keep-masks for the hidden readout and (optionally) the head output."""
    mask_h = (rng.random((batch, hidden)) >= rate).astype(np.float64)
    mask_s = (rng.random((batch, 2)) >= rate).astype(np.float64) if head else None
    return mask_h, mask_s


def forward_batch(X, model: LstmModel, dropout_rate: float = 0.0, train: bool = False,
                  rng: np.random.Generator | None = None, masks=None,
                  head_dropout: bool = True):
    """Run ``X`` of shape ``(B, m, D)``; returns ``(probs (B, 2), cache)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ShapeError(f"batch must be (B, m, D), got {X.shape}")
    B, m, D = X.shape
    if m < 1:
        raise EmptyInputError("sequence has no time steps")
    if D != model.input_dim:
        raise ShapeError(f"input has {D} features, model expects {model.input_dim}")
    if not 0.0 <= dropout_rate < 1.0:
        raise RangeError(f"dropout_rate must lie in [0, 1), got {dropout_rate}")
    H = model.hidden_dim
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(m):
        h, c, gc = _step(X[:, t], h, c, model)
        steps.append(gc)

    mask_h = mask_s = None
    scale = 1.0
    if train and dropout_rate > 0:
        if masks is None:
            if rng is None:
                raise ValueError("train mode with dropout needs an rng or explicit masks")
            masks = dropout_masks(rng, B, H, dropout_rate, head=head_dropout)
        mask_h, mask_s = masks
        scale = 1.0 / (1.0 - dropout_rate)
    h_drop = h if mask_h is None else h * mask_h * scale
    logits = h_drop @ model.W_s.T + model.b_s
    logits_drop = logits if mask_s is None else logits * mask_s * scale
    probs = softmax(logits_drop)
    if not np.all(np.isfinite(probs)):
        raise NumericError("non-finite output probabilities")
    return probs, ForwardCache(X, steps, h, h_drop, logits_drop, probs, mask_h, mask_s, scale)


def forward(seq, model: LstmModel, dropout_rate: float = 0.0, train: bool = False,
            rng: np.random.Generator | None = None):
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise ShapeError(f"sequence must be (m, D), got {seq.shape}")
    if seq.shape[0] == 0:
        raise EmptyInputError("sequence has no time steps")
    probs, cache = forward_batch(seq[None], model, dropout_rate, train, rng)
    return probs[0], cache


def one_hot(idx) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros(idx.shape + (2,))
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def loss(y_hat, y, kind: str = "l2") -> float:
    """Squared L2 distance (default) or cross-entropy, averaged over a batch."""
    y_hat = np.atleast_2d(np.asarray(y_hat, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if kind == "l2":
        per = np.sum((y_hat - y) ** 2, axis=-1)
    elif kind == "cross_entropy":
        per = -np.sum(y * np.log(np.clip(y_hat, 1e-300, None)), axis=-1)
    else:
        raise ValueError(f"unknown loss {kind!r}")
    return float(per.mean())


def backward(Y, model: LstmModel, cache: ForwardCache, loss_kind: str = "l2") -> dict[str, np.ndarray]:
    """Exact gradients of the mean batch loss through every time step."""
    Y = np.asarray(Y, dtype=np.float64)
    probs = cache.probs
    if Y.shape != probs.shape:
        raise ValueError(f"targets {Y.shape} do not match cached outputs {probs.shape}")
    B = probs.shape[0]
    H = model.hidden_dim
    grads = {name: np.zeros_like(p) for name, p in model.params().items()}

    if loss_kind == "l2":
        dp = 2.0 * (probs - Y) / B
        d_logits_drop = probs * (dp - np.sum(dp * probs, axis=1, keepdims=True))
    elif loss_kind == "cross_entropy":
        d_logits_drop = (probs - Y) / B
    else:
        raise ValueError(f"unknown loss {loss_kind!r}")

    d_logits = d_logits_drop if cache.mask_s is None else d_logits_drop * cache.mask_s * cache.keep_scale
    grads["W_s"] = d_logits.T @ cache.h_drop
    grads["b_s"] = d_logits.sum(axis=0)
    dh = d_logits @ model.W_s
    if cache.mask_h is not None:
        dh = dh * cache.mask_h * cache.keep_scale

    dc = np.zeros((B, H))
    W_all = {g: getattr(model, f"W_{g}") for g in GATES}
    for gc in reversed(cache.steps):
        do = dh * gc.tanh_c
        dc = dc + dh * gc.o * (1.0 - gc.tanh_c ** 2)
        df = dc * gc.c_prev
        di = dc * gc.g
        dg = dc * gc.i
        dc = dc * gc.f
        pre = {
            "f": df * gc.f * (1.0 - gc.f),
            "i": di * gc.i * (1.0 - gc.i),
            "o": do * gc.o * (1.0 - gc.o),
            "c": dg * (1.0 - gc.g ** 2),
        }
        dz = np.zeros_like(gc.z)
        for g in GATES:
            grads[f"W_{g}"] += pre[g].T @ gc.z
            grads[f"b_{g}"] += pre[g].sum(axis=0)
            dz += pre[g] @ W_all[g]
        dh = dz[:, :H]
    return grads


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    dropout_rate: float = 0.25
    hidden_dim: int = 256
    batch_size: int = 64
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: str = "l2"
    head_dropout: bool = True
    forget_bias: float = 1.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise RangeError("learning_rate must be > 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise RangeError("dropout_rate must lie in [0, 1)")
        for name in ("hidden_dim", "batch_size"):
            if getattr(self, name) < 1:
                raise RangeError(f"{name} must be a positive integer")
        if self.epochs < 0:
            raise RangeError("epochs must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and self.eps > 0):
            raise RangeError("invalid Adam constants")
        if self.loss not in ("l2", "cross_entropy"):
            raise ValueError(f"unknown loss {self.loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(model: LstmModel, grads: dict, state: AdamState, cfg: TrainConfig) -> tuple[LstmModel, AdamState]:
    """In-place bias-corrected Adam update; returns the same model and state."""
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    for name, p in model.params().items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return model, state


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def append(self, epoch, loss_value, accuracy):
        self.records.append(EpochRecord(int(epoch), float(loss_value), float(accuracy)))

    def __len__(self):
        return len(self.records)

    def to_rows(self):
        return [(r.epoch, r.loss, r.accuracy) for r in self.records]


def _require_labels(ds: Dataset, role: str) -> np.ndarray:
    try:
        return ds.label_indices()
    except MissingLabelError as exc:
        raise MissingLabelError(f"{role} set: {exc}") from None


def predict_proba(model: LstmModel, X) -> np.ndarray:
    probs, _ = forward_batch(X, model)
    return probs


def accuracy_of(model: LstmModel, X, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(classify(predict_proba(model, X)) == y))


def classify(probs) -> np.ndarray:
    """Class index per row; a tie at exactly 0.5 resolves to Unstable."""
    return np.where(np.asarray(probs)[..., 0] > 0.5, 0, 1)


def train(train_set: Dataset, eval_set: Dataset | None, cfg: TrainConfig,
          log=None) -> tuple[LstmModel, TrainHistory]:
    y_train = _require_labels(train_set, "training")
    if len(train_set) == 0:
        raise EmptyInputError("empty training set")
    X = train_set.series_array()
    if eval_set is not None and len(eval_set):
        y_eval = _require_labels(eval_set, "evaluation")
        X_eval = eval_set.series_array()
        if X_eval.shape[1:] != X.shape[1:]:
            raise ShapeError(f"eval shape {X_eval.shape[1:]} != train shape {X.shape[1:]}")
    else:
        X_eval, y_eval = X[:0], y_train[:0]

    root = np.random.SeedSequence(cfg.seed)
    init_seq, shuffle_seq, drop_seq = root.spawn(3)
    model = LstmModel.initialize(X.shape[2], cfg.hidden_dim, np.random.default_rng(init_seq),
                                 forget_bias=cfg.forget_bias)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    drop_rng = np.random.default_rng(drop_seq)
    Y = one_hot(y_train)
    state = AdamState()
    history = TrainHistory()
    n = len(y_train)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            probs, cache = forward_batch(X[idx], model, cfg.dropout_rate, train=True,
                                         rng=drop_rng, head_dropout=cfg.head_dropout)
            total += loss(probs, Y[idx], cfg.loss) * len(idx)
            grads = backward(Y[idx], model, cache, cfg.loss)
            adam_step(model, grads, state, cfg)
        acc = accuracy_of(model, X_eval, y_eval)
        history.append(epoch, total / n, acc)
        if log is not None:
            log(f"epoch {epoch:4d}  loss {total / n:.6f}  eval_acc {acc:.4f}")
    return model, history


def predict(model: LstmModel, instance: TimeSeriesInstance | np.ndarray,
            norm: NormStats | None = None) -> tuple[Label, float]:
    """Infer-mode class and P(Stable) for one raw (un-normalized) instance."""
    series = instance.series if isinstance(instance, TimeSeriesInstance) else np.asarray(instance)
    if series.ndim != 2 or series.shape[1] != model.input_dim:
        raise ShapeError(f"series shape {series.shape} does not match input_dim {model.input_dim}")
    if norm is not None:
        series = normalize_array(series, norm)
    probs, _ = forward(series, model)
    return Label.from_index(int(classify(probs))), float(probs[0])


# ---------------------------------------------------------------------------
# checkpoints


def encode_array(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def decode_array(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])


def model_to_dict(model: LstmModel) -> dict:
    return {
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "params": {k: encode_array(v) for k, v in model.params().items()},
    }


def model_from_dict(d: dict) -> LstmModel:
    params = {k: decode_array(v) for k, v in d["params"].items()}
    missing = set(PARAM_NAMES) - set(params)
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters {sorted(missing)}")
    return LstmModel(int(d["input_dim"]), int(d["hidden_dim"]), **params)


def dumps_checkpoint(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def save_checkpoint(path: str | Path, kind: str, model_payload: dict, *, otw_steps: int,
                    norm_stats: NormStats | None, config: dict | None = None,
                    extra: dict | None = None) -> None:
    """Write a self-contained JSON checkpoint for any model kind."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "kind": kind,
        "otw_steps": int(otw_steps),
        "norm_stats": norm_stats.to_dict() if norm_stats is not None else None,
        "config": config or {},
        "model": model_payload,
    }
    if extra:
        payload.update(extra)
    Path(path).write_text(dumps_checkpoint(payload), encoding="utf-8")


def load_checkpoint(path: str | Path) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a valid checkpoint ({exc})") from None
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('format_version')}")
    for key in ("kind", "otw_steps", "model"):
        if key not in payload:
            raise CheckpointError(f"{path}: checkpoint missing {key!r}")
    return payload
