"""Kernel network: per-kernel projections, dense layers and a softmax output.

For an input ``x`` with kernel rows ``k_j = [k_j(x, x_1), ..., k_j(x, x_n)]``
over the training anchors, the network computes

    z1_j   = phi0(gamma_j^T k_j)                 j = 1..S
    h_1    = phi1(W_1 z1),  h_l = phi1(W_l h_{l-1})
    logits = W_out h_L

and is trained with softmax cross-entropy by minibatch SGD with weight decay.
With linear activations, a shared ``gamma`` and a single hidden unit, the
logit difference is the classical MKL decision ``sum_j beta_j gamma^T k_j``.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .kernels import base_kernel_bank, decode_spec, encode_spec, gram_bank

TANH_SCALE = 1.7159
TANH_SLOPE = 2.0 / 3.0

SCALED_TANH = "scaled_tanh"
LINEAR = "linear"


def scaled_tanh(x):
    return TANH_SCALE * np.tanh(TANH_SLOPE * np.asarray(x, dtype=np.float64))


def scaled_tanh_prime(x):
    t = np.tanh(TANH_SLOPE * np.asarray(x, dtype=np.float64))
    return TANH_SCALE * TANH_SLOPE * (1.0 - t * t)


_ACTIVATIONS = {
    SCALED_TANH: (scaled_tanh, scaled_tanh_prime),
    LINEAR: (lambda x: np.asarray(x, dtype=np.float64), lambda x: np.ones_like(x, dtype=np.float64)),
}


def activation(kind):
    try:
        return _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logsumexp(logits):
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True)))[..., 0]


def cross_entropy(logits, target):
    """``-z_k + log sum_j exp(z_j)`` for one sample or a batch (per-sample values)."""
    z = np.asarray(logits, dtype=np.float64)
    k = np.asarray(target)
    C = z.shape[-1]
    if np.any(k < 0) or np.any(k >= C):
        raise IndexError(f"target class outside 0..{C - 1}")
    picked = np.take_along_axis(np.atleast_2d(z), np.atleast_1d(k)[:, None], axis=1)[:, 0]
    out = logsumexp(np.atleast_2d(z)) - picked
    return float(out[0]) if z.ndim == 1 else out


# ---------------------------------------------------------------------------
# Model


@dataclass(frozen=True)
class NgmklModel:
    """Trained (or initialised) network parameters.

    ``gammas`` has shape (S, n); ``hidden_weights[0]`` is (n_1, S) and
    ``hidden_weights[l]`` is (n_{l+1}, n_l); ``output_weights`` is (C, n_L).
    ``anchors`` are the (scaled) training rows the kernel rows refer to.
    Kernel row ``j`` is divided by ``kernel_scales[j]`` before projection.
    """

    gammas: np.ndarray
    hidden_weights: tuple
    output_weights: np.ndarray
    kernel_specs: tuple
    selected_kernels: tuple
    anchors: np.ndarray
    kernel_activation: str = SCALED_TANH
    hidden_activation: str = SCALED_TANH
    hidden_biases: tuple | None = None
    output_bias: np.ndarray | None = None
    kernel_scales: np.ndarray | None = None

    def __post_init__(self):
        if self.kernel_scales is None:
            object.__setattr__(self, "kernel_scales", np.ones(self.gammas.shape[0]))

    @property
    def n_kernels(self):
        return self.gammas.shape[0]

    @property
    def n_anchors(self):
        return self.gammas.shape[1]

    @property
    def class_count(self):
        return self.output_weights.shape[0]

    @property
    def has_bias(self):
        return self.output_bias is not None

    def parameters(self):
        """Name -> array mapping of every trainable tensor (in a fixed order)."""
        params = {"gammas": self.gammas}
        for i, W in enumerate(self.hidden_weights):
            params[f"hidden_{i}"] = W
        params["output"] = self.output_weights
        if self.has_bias:
            for i, b in enumerate(self.hidden_biases):
                params[f"hidden_bias_{i}"] = b
            params["output_bias"] = self.output_bias
        return params

    def with_parameters(self, params):
        L = len(self.hidden_weights)
        kw = {
            "gammas": params["gammas"],
            "hidden_weights": tuple(params[f"hidden_{i}"] for i in range(L)),
            "output_weights": params["output"],
        }
        if self.has_bias:
            kw["hidden_biases"] = tuple(params[f"hidden_bias_{i}"] for i in range(L))
            kw["output_bias"] = params["output_bias"]
        return replace(self, **kw)


def init_model(kernel_specs, anchors, class_count, hidden_sizes=(64,), rng=None,
               kernel_activation=SCALED_TANH, hidden_activation=SCALED_TANH,
               use_bias=False, selected_kernels=None, kernel_scales=None):
    """Uniform initialisation in ``+-sqrt(3 / fan_in)`` for every layer; biases start at 0."""
    rng = np.random.default_rng(rng)
    anchors = np.asarray(anchors, dtype=np.float64)
    S, n = len(kernel_specs), anchors.shape[0]
    if S < 1:
        raise ValueError("at least one kernel is required")
    if class_count < 2:
        raise ValueError("need at least two classes")

    def uniform(rows, fan_in):
        limit = np.sqrt(3.0 / fan_in)
        return rng.uniform(-limit, limit, size=(rows, fan_in))

    gammas = uniform(S, n)
    hidden, fan = [], S
    for width in hidden_sizes:
        hidden.append(uniform(width, fan))
        fan = width
    output = uniform(class_count, fan)
    hb = ob = None
    if use_bias:
        hb = tuple(np.zeros(w) for w in hidden_sizes)
        ob = np.zeros(class_count)
    if selected_kernels is None:
        selected_kernels = tuple(range(S))
    return NgmklModel(gammas, tuple(hidden), output, tuple(kernel_specs),
                      tuple(int(s) for s in selected_kernels), anchors,
                      kernel_activation, hidden_activation, hb, ob,
                      None if kernel_scales is None else np.asarray(kernel_scales, dtype=np.float64))


def kernel_scales_from(grams):
    """Largest absolute training Gram entry per kernel (1 for all-zero Grams)."""
    scales = np.array([float(np.max(np.abs(G))) for G in grams])
    return np.where(scales > 0, scales, 1.0)


@dataclass
class ForwardCache:
    kernel_rows: list
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)
    logits: np.ndarray | None = None
    single: bool = False


def _as_rows(model, kernel_rows):
    """Normalise kernel rows to a list of S arrays of shape (m, n)."""
    rows = [np.asarray(r, dtype=np.float64) for r in kernel_rows]
    if len(rows) != model.n_kernels:
        raise ValueError(f"expected {model.n_kernels} kernel row blocks, got {len(rows)}")
    single = rows[0].ndim == 1
    rows = [np.atleast_2d(r) for r in rows]
    m = rows[0].shape[0]
    for r in rows:
        if r.shape != (m, model.n_anchors):
            raise ValueError(f"kernel rows must have shape ({m}, {model.n_anchors}), got {r.shape}")
    return rows, single


def forward(model, kernel_rows):
    """Logits for one input (S rows of length n) or a batch (S blocks of m x n)."""
    rows, single = _as_rows(model, kernel_rows)
    phi0, _ = activation(model.kernel_activation)
    phi1, _ = activation(model.hidden_activation)
    m = rows[0].shape[0]
    a0 = np.empty((m, model.n_kernels))
    for s, K in enumerate(rows):
        a0[:, s] = (K @ model.gammas[s]) / model.kernel_scales[s]
    cache = ForwardCache(rows, single=single)
    cache.pre.append(a0)
    h = phi0(a0)
    cache.post.append(h)
    for i, W in enumerate(model.hidden_weights):
        a = h @ W.T
        if model.has_bias:
            a = a + model.hidden_biases[i]
        cache.pre.append(a)
        h = phi1(a)
        cache.post.append(h)
    logits = h @ model.output_weights.T
    if model.has_bias:
        logits = logits + model.output_bias
    cache.logits = logits
    return (logits[0] if single else logits), cache


def backward(model, cache, targets):
    """Gradients of the mean cross-entropy over the cached batch.

    Returns a dict shaped like :meth:`NgmklModel.parameters`.
    """
    logits = cache.logits
    m, C = logits.shape
    if C != model.class_count or len(cache.kernel_rows) != model.n_kernels:
        raise ValueError("cache does not match model shapes")
    t = np.atleast_1d(np.asarray(targets))
    if t.shape != (m,):
        raise ValueError(f"expected {m} targets, got shape {t.shape}")
    _, dphi0 = activation(model.kernel_activation)
    _, dphi1 = activation(model.hidden_activation)

    delta = softmax(logits)
    delta[np.arange(m), t] -= 1.0
    delta /= m
    grads = {}
    L = len(model.hidden_weights)
    grads["output"] = delta.T @ cache.post[L]
    if model.has_bias:
        grads["output_bias"] = delta.sum(axis=0)
    back = delta @ model.output_weights
    for i in range(L - 1, -1, -1):
        d_pre = back * dphi1(cache.pre[i + 1])
        grads[f"hidden_{i}"] = d_pre.T @ cache.post[i]
        if model.has_bias:
            grads[f"hidden_bias_{i}"] = d_pre.sum(axis=0)
        back = d_pre @ model.hidden_weights[i]
    d0 = back * dphi0(cache.pre[0])
    g = np.empty_like(model.gammas)
    for s, K in enumerate(cache.kernel_rows):
        g[s] = (d0[:, s] @ K) / model.kernel_scales[s]
    grads["gammas"] = g
    return {k: grads[k] for k in model.parameters()}


def loss(model, kernel_rows, targets):
    """Mean cross-entropy of ``model`` on a batch."""
    logits, _ = forward(model, kernel_rows)
    return float(np.mean(cross_entropy(np.atleast_2d(logits), np.atleast_1d(targets))))


def sgd_step(model, grads, lr, weight_decay=0.0):
    """``w <- w - lr * (g + weight_decay * w)`` for every parameter."""
    params = model.parameters()
    if set(grads) != set(params):
        raise ValueError("gradient keys do not match model parameters")
    new = {}
    for k, w in params.items():
        g = grads[k]
        if np.shape(g) != np.shape(w):
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(w)} for {k}")
        new[k] = w - lr * (g + weight_decay * w)
    return model.with_parameters(new)


def numeric_gradients(model, kernel_rows, targets, h=1e-5):
    """Central finite differences of :func:`loss` for every parameter entry."""
    params = {k: v.copy() for k, v in model.parameters().items()}
    out = {}
    for k, w in params.items():
        g = np.empty_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            up = loss(model.with_parameters(params), kernel_rows, targets)
            w[idx] = old - h
            down = loss(model.with_parameters(params), kernel_rows, targets)
            w[idx] = old
            g[idx] = (up - down) / (2 * h)
        out[k] = g
    return out


def gradient_check(model, kernel_rows, targets, h=1e-5, floor=1e-8):
    """Largest relative error between :func:`backward` and finite differences.

    Relative error is ``|a - b| / max(|a|, |b|, floor)`` per entry, so partials
    smaller than ``floor`` are compared in absolute terms.
    """
    _, cache = forward(model, kernel_rows)
    analytic = backward(model, cache, targets)
    numeric = numeric_gradients(model, kernel_rows, targets, h)
    worst = 0.0
    for k in analytic:
        a, b = analytic[k], numeric[k]
        rel = np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        worst = max(worst, float(rel.max(initial=0.0)))
    return worst


def random_instance(rng, n_kernels, n_anchors, hidden_width, class_count, batch=4, dim=3):
    """Random Gaussian-bank network plus kernel rows and targets for checks."""
    from .kernels import Gaussian

    rng = np.random.default_rng(rng)
    specs = [Gaussian(float(2.0 ** rng.integers(-1, 3))) for _ in range(n_kernels)]
    anchors = rng.uniform(-1, 1, size=(n_anchors, dim))
    model = init_model(specs, anchors, class_count, (hidden_width,), rng)
    X = rng.uniform(-1, 1, size=(batch, dim))
    rows = gram_bank(specs, X, anchors)
    targets = rng.integers(0, class_count, size=batch)
    return model, rows, targets


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 40
    learning_rate: float = 0.01
    weight_decay: float = 5e-6
    epochs: int = 1000
    hidden_sizes: tuple = (64,)
    seed: int = 0
    kernel_activation: str = SCALED_TANH
    hidden_activation: str = SCALED_TANH
    use_bias: bool = False

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or not self.learning_rate > 0:
            raise ValueError("batch_size >= 1, epochs >= 0 and learning_rate > 0 required")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("hidden_sizes must be a non-empty tuple of positive widths")
        activation(self.kernel_activation)
        activation(self.hidden_activation)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float


def _evaluate(model, grams, y):
    logits, _ = forward(model, grams)
    return (float(np.mean(cross_entropy(logits, y))),
            float(np.mean(np.argmax(logits, axis=1) == y)))


def train(features, labels, kernel_specs, config=TrainConfig(), class_count=None,
          selected_kernels=None, normalize_kernels=True):
    """Train a network on ``(features, labels)`` with the given input kernels.

    ``labels`` are class indices ``0..C-1``.  With ``normalize_kernels`` each
    kernel's rows are divided by the largest absolute entry of its training
    Gram matrix (a no-op for Gaussians).  Returns ``(model, curve)``
    where ``curve[0]`` is the full-training-set loss/accuracy at
    initialisation and ``curve[e]`` the same after epoch ``e``.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    if y.shape != (n,):
        raise ValueError("labels must have one entry per row")
    if np.unique(y).size < 2:
        raise ValueError("degenerate training data: a single class")
    if n < config.batch_size:
        raise ValueError(f"training set ({n}) smaller than batch size ({config.batch_size})")
    C = int(class_count or y.max() + 1)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    grams = gram_bank(kernel_specs, X, X)
    scales = kernel_scales_from(grams) if normalize_kernels else None
    model = init_model(kernel_specs, X, C, config.hidden_sizes, rng,
                       config.kernel_activation, config.hidden_activation,
                       config.use_bias, selected_kernels, scales)
    curve = [EpochRecord(0, *_evaluate(model, grams, y))]
    B = config.batch_size
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, B):
            idx = perm[start:start + B]
            _, cache = forward(model, [G[idx] for G in grams])
            grads = backward(model, cache, y[idx])
            model = sgd_step(model, grads, config.learning_rate, config.weight_decay)
        curve.append(EpochRecord(epoch, *_evaluate(model, grams, y)))
    return model, curve


def kernel_rows_for(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.anchors.shape[1]:
        raise ValueError(
            f"dimension mismatch: model anchors have d={model.anchors.shape[1]}, got {X.shape[1]}"
        )
    return gram_bank(model.kernel_specs, X, model.anchors)


def predict_logits(model, X):
    logits, _ = forward(model, kernel_rows_for(model, X))
    return logits


def predict(model, X):
    """Class indices by argmax of the logits (ties: lowest class)."""
    return np.argmax(predict_logits(model, X), axis=1)


def curve_csv(curve):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "mean_loss", "train_accuracy"])
    for rec in curve:
        writer.writerow([rec.epoch, repr(rec.loss), repr(rec.accuracy)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Serialization
#
# Little-endian layout: magic b"NGMK", u32 version, then u32 S, n, d, C, L,
# u8 kernel activation, u8 hidden activation, u8 has_bias; S records of
# (u32 bank index, u8 kernel kind, f64 parameter); L u32 layer widths; then
# f64 tensors in order anchors (n x d), gammas (S x n), hidden_0..L-1,
# output (C x n_L), kernel scales (S), and if has_bias hidden biases then
# output bias.

_MODEL_MAGIC = b"NGMK"
_MODEL_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIIBBB")
_KERNEL_REC = struct.Struct("<IBd")
_ACT_CODES = {SCALED_TANH: 0, LINEAR: 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


def model_to_bytes(model):
    S, n = model.gammas.shape
    d = model.anchors.shape[1]
    L = len(model.hidden_weights)
    parts = [_HEADER.pack(_MODEL_MAGIC, _MODEL_VERSION, S, n, d, model.class_count, L,
                          _ACT_CODES[model.kernel_activation],
                          _ACT_CODES[model.hidden_activation], int(model.has_bias))]
    for idx, spec in zip(model.selected_kernels, model.kernel_specs):
        kind, param = encode_spec(spec)
        parts.append(_KERNEL_REC.pack(idx, kind, param))
    parts.append(struct.pack(f"<{L}I", *(W.shape[0] for W in model.hidden_weights)))
    tensors = [model.anchors, model.gammas, *model.hidden_weights, model.output_weights,
               model.kernel_scales]
    if model.has_bias:
        tensors += [*model.hidden_biases, model.output_bias]
    parts += [np.ascontiguousarray(t, dtype="<f8").tobytes() for t in tensors]
    return b"".join(parts)


def model_from_bytes(raw):
    if len(raw) < _HEADER.size:
        raise ValueError("truncated model header")
    magic, version, S, n, d, C, L, ka, ha, has_bias = _HEADER.unpack_from(raw)
    if magic != _MODEL_MAGIC:
        raise ValueError(f"not a model file (magic={magic!r})")
    if version != _MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    off = _HEADER.size
    specs, selected = [], []
    for _ in range(S):
        idx, kind, param = _KERNEL_REC.unpack_from(raw, off)
        off += _KERNEL_REC.size
        selected.append(idx)
        specs.append(decode_spec(kind, param))
    widths = struct.unpack_from(f"<{L}I", raw, off)
    off += 4 * L

    def take(*shape):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        return arr.astype(np.float64)

    anchors = take(n, d)
    gammas = take(S, n)
    hidden, fan = [], S
    for w in widths:
        hidden.append(take(w, fan))
        fan = w
    output = take(C, fan)
    scales = take(S)
    hb = ob = None
    if has_bias:
        hb = tuple(take(w) for w in widths)
        ob = take(C)
    if off != len(raw):
        raise ValueError(f"model file has {len(raw) - off} trailing bytes")
    return NgmklModel(gammas, tuple(hidden), output, tuple(specs), tuple(selected), anchors,
                      _ACT_NAMES[ka], _ACT_NAMES[ha], hb, ob, scales)


def save_model(model, path):
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path):
    return model_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Estimator


class NGMKLClassifier(ClassifierMixin, BaseEstimator):
    """Neural multiple-kernel classifier.

    Parameters
    ----------
    kernels : list of KernelSpec or None
        Candidate kernels; defaults to the 17-kernel bank.
    selection : {"all", "l1", "boost"}, default="all"
        How input kernels are chosen from ``kernels`` on the training data.
    hidden_sizes : tuple of int, default=(64,)
    batch_size, learning_rate, weight_decay, epochs
        SGD settings (defaults 40, 0.01, 5e-6, 1000).
    C : float, default=1.0
        SVM box constraint used by the l1/boost selectors.
    l1_threshold : float, default=1e-3
    boost_rounds : int, default=20
    boost_sample_fraction : float or None, default=0.5
        Resampling fraction for the boosting weak learners; ``None`` uses
        sample-weighted SVMs on the full training set.
    random_state : int, default=0
    """

    def __init__(self, kernels=None, selection="all", hidden_sizes=(64,), batch_size=40,
                 learning_rate=0.01, weight_decay=5e-6, epochs=1000, C=1.0,
                 l1_threshold=1e-3, boost_rounds=20, boost_sample_fraction=0.5,
                 kernel_activation=SCALED_TANH, hidden_activation=SCALED_TANH,
                 use_bias=False, random_state=0):
        self.kernels = kernels
        self.selection = selection
        self.hidden_sizes = hidden_sizes
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.C = C
        self.l1_threshold = l1_threshold
        self.boost_rounds = boost_rounds
        self.boost_sample_fraction = boost_sample_fraction
        self.kernel_activation = kernel_activation
        self.hidden_activation = hidden_activation
        self.use_bias = use_bias
        self.random_state = random_state

    def _config(self):
        return TrainConfig(self.batch_size, self.learning_rate, self.weight_decay, self.epochs,
                           tuple(self.hidden_sizes), int(self.random_state),
                           self.kernel_activation, self.hidden_activation, self.use_bias)

    def _select(self, bank, X, y_idx):
        from . import selection as sel

        if self.selection == sel.ALL:
            return sel.select_all(len(bank))
        if len(self.classes_) != 2:
            raise ValueError(f"selection {self.selection!r} needs binary labels")
        signs = np.where(y_idx == 0, 1.0, -1.0)
        grams = gram_bank(bank, X, X)
        if self.selection == sel.L1_SPARSE:
            return sel.select_l1(grams, signs, self.C, self.l1_threshold, kernel_specs=bank)
        if self.selection == sel.BOOST_D1:
            return sel.select_mkboost_d1(grams, signs, self.boost_rounds, self.C,
                                         self.boost_sample_fraction, int(self.random_state))
        raise ValueError(f"unknown selection {self.selection!r}")

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        if len(self.classes_) < 2:
            raise ValueError("degenerate training data: a single class")
        y_idx = np.searchsorted(self.classes_, y)
        config = self._config()
        bank = list(self.kernels) if self.kernels is not None else base_kernel_bank()
        self.selection_ = self._select(bank, X, y_idx)
        chosen = self.selection_.dedup_selected
        self.model_, self.curve_ = train(X, y_idx, [bank[j] for j in chosen], config,
                                         len(self.classes_), chosen)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return predict_logits(self.model_, check_array(X))

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
