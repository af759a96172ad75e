"""Datasets: LIBSVM text I/O, range scaling, and seeded train/test splits."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


class LibsvmParseError(ValueError):
    """Raised for malformed LIBSVM input; carries the 1-based line number."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense feature matrix with integer class labels in ``0..class_count-1``.

    ``label_names[c]`` is the raw label that was mapped to class ``c``.
    """

    features: np.ndarray
    labels: np.ndarray
    label_names: tuple = ()
    name: str = ""

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, dtype=np.int64, copy=True)
        if X.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n, d = X.shape
        if n < 1 or d < 1:
            raise ValueError(f"dataset must have n >= 1 and d >= 1, got {X.shape}")
        if y.shape != (n,):
            raise ValueError(f"labels must have shape ({n},), got {y.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain NaN or Inf")
        names = tuple(self.label_names)
        if not names:
            names = tuple(range(int(y.max()) + 1 if y.size else 0))
        if y.min() < 0 or y.max() >= len(names):
            raise ValueError("labels must lie in 0..class_count-1")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "label_names", names)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def class_count(self):
        return len(self.label_names)

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.label_names, self.name)

    def with_features(self, features):
        return Dataset(features, self.labels, self.label_names, self.name)

    def binary_labels(self):
        """Labels as +1 (class 0) / -1 (class 1); only valid for two classes."""
        if self.class_count != 2:
            raise ValueError(f"binary labels need 2 classes, dataset has {self.class_count}")
        return np.where(self.labels == 0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# LIBSVM text format


def _parse_number(token, lineno, what):
    try:
        value = float(token)
    except ValueError:
        raise LibsvmParseError(f"malformed {what} {token!r}", lineno) from None
    if not math.isfinite(value):
        raise LibsvmParseError(f"non-finite {what} {token!r}", lineno)
    return value


def _tokenize(text):
    """Yield ``(lineno, raw_label or None, [(index, value), ...])`` per data line."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label = None
        if ":" not in tokens[0]:
            label = _parse_number(tokens[0], lineno, "label")
            tokens = tokens[1:]
        pairs = []
        last = 0
        for tok in tokens:
            idx_s, sep, val_s = tok.partition(":")
            if not sep or not idx_s or not val_s:
                raise LibsvmParseError(f"malformed token {tok!r}", lineno)
            try:
                idx = int(idx_s)
            except ValueError:
                raise LibsvmParseError(f"malformed index {idx_s!r}", lineno) from None
            if idx < 1:
                raise LibsvmParseError(f"index {idx} < 1", lineno)
            if idx <= last:
                raise LibsvmParseError(f"non-increasing index {idx} after {last}", lineno)
            last = idx
            pairs.append((idx, _parse_number(val_s, lineno, "value")))
        yield lineno, label, pairs


def _label_order(raw_labels):
    seen = list(dict.fromkeys(raw_labels))
    # +1 is class 0 for the conventional {+1, -1} encoding.
    if set(seen) == {1.0, -1.0}:
        return [1.0, -1.0]
    return seen


def parse_libsvm_features(text, n_features=None):
    """Parse LIBSVM lines into ``(X, raw_labels)``; unlabeled lines give ``None``."""
    rows, raw = [], []
    for lineno, label, pairs in _tokenize(text):
        rows.append((lineno, pairs))
        raw.append(label)
    if not rows:
        raise LibsvmParseError("empty file")
    d = max((pairs[-1][0] for _, pairs in rows if pairs), default=0)
    if n_features is not None:
        if d > n_features:
            raise LibsvmParseError(f"index {d} exceeds n_features={n_features}")
        d = n_features
    if d < 1:
        raise LibsvmParseError("no features found")
    X = np.zeros((len(rows), d))
    for r, (_, pairs) in enumerate(rows):
        for idx, val in pairs:
            X[r, idx - 1] = val
    return X, raw


def parse_libsvm(text, n_features=None, name=""):
    """Parse LIBSVM text into a dense :class:`Dataset`.

    Raw labels are mapped to classes in order of first appearance, except
    that a ``{+1, -1}`` label set always maps ``+1 -> 0`` and ``-1 -> 1``.
    ``n_features`` pads the dimension beyond the largest index seen (LIBSVM
    files such as a1a never use their last columns).
    """
    X, raw = parse_libsvm_features(text, n_features)
    for i, lab in enumerate(raw):
        if lab is None:
            raise LibsvmParseError("missing label (use parse_libsvm_features for unlabeled data)")
    order = _label_order(raw)
    lookup = {lab: c for c, lab in enumerate(order)}
    y = np.array([lookup[lab] for lab in raw], dtype=np.int64)
    if len(order) < 2:
        raise LibsvmParseError(f"need at least 2 classes, found {len(order)}")
    return Dataset(X, y, tuple(order), name)


def _format_number(v):
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def serialize_libsvm(data):
    """Canonical LIBSVM text: nonzero entries only, shortest round-trip floats.

    If no row has a nonzero in the last column, the first row carries an
    explicit ``d:0`` entry so the dimension survives a round trip.
    """
    X = data.features
    d = data.d
    pad_last = not np.any(X[:, -1] != 0)
    out = []
    for r in range(data.n):
        parts = [_format_number(data.label_names[data.labels[r]])]
        nz = np.flatnonzero(X[r])
        parts.extend(f"{j + 1}:{_format_number(X[r, j])}" for j in nz)
        if r == 0 and pad_last:
            parts.append(f"{d}:0")
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def load_libsvm(path, n_features=None, name=None):
    path = Path(path)
    return parse_libsvm(path.read_text(), n_features, name or path.stem)


def save_libsvm(data, path):
    Path(path).write_text(serialize_libsvm(data))


# ---------------------------------------------------------------------------
# Scaling


@dataclass(frozen=True)
class ScalingParams:
    minimum: np.ndarray
    maximum: np.ndarray


def fit_scaling(train):
    X = train.features if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    if X.shape[0] < 1:
        raise ValueError("cannot fit scaling on zero rows")
    return ScalingParams(X.min(axis=0), X.max(axis=0))


def _scale(params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.minimum.shape[0]:
        raise ValueError(
            f"dimension mismatch: scaling fitted on d={params.minimum.shape[0]}, "
            f"got shape {X.shape}"
        )
    span = params.maximum - params.minimum
    const = span == 0
    safe = np.where(const, 1.0, span)
    out = 2.0 * (X - params.minimum) / safe - 1.0
    out[:, const] = 0.0
    return out


def apply_scaling(params, data):
    """Affinely map train-min to -1 and train-max to +1; constant columns to 0."""
    if isinstance(data, Dataset):
        return data.with_features(_scale(params, data.features))
    return _scale(params, data)


class RangeScaler(TransformerMixin, BaseEstimator):
    """Scale each feature to [-1, 1] using the training min/max.

    Unlike :class:`sklearn.preprocessing.MinMaxScaler`, constant features
    map to 0 rather than to the lower end of the range.
    """

    def fit(self, X, y=None):
        X = check_array(X)
        self.params_ = fit_scaling(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return _scale(self.params_, check_array(X))


# ---------------------------------------------------------------------------
# Splits


@dataclass(frozen=True)
class SplitPlan:
    train_size: int
    test_size: int
    repetitions: int = 10
    base_seed: int = 0

    def __post_init__(self):
        if self.train_size < 1 or self.test_size < 0:
            raise ValueError("train_size must be >= 1 and test_size >= 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def split_rng(seed):
    """The split generator: numpy's PCG64, identical on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def make_split(data, plan, rep_index):
    """Return ``(train, test)`` for repetition ``rep_index``.

    Rows are permuted with seed ``base_seed + rep_index``; the first
    ``train_size`` rows form the training set and the next ``test_size``
    the test set.
    """
    if not 0 <= rep_index < plan.repetitions:
        raise ValueError(f"rep_index {rep_index} outside 0..{plan.repetitions - 1}")
    if plan.train_size + plan.test_size > data.n:
        raise ValueError(
            f"split sizes {plan.train_size}+{plan.test_size} exceed n={data.n}"
        )
    perm = split_rng(plan.base_seed + rep_index).permutation(data.n)
    train_idx = perm[: plan.train_size]
    test_idx = perm[plan.train_size : plan.train_size + plan.test_size]
    return data.subset(train_idx), data.subset(test_idx)


# ---------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    path: Path
    train_size: int
    test_size: int
    repetitions: int = 10
    dimensions: int | None = None

    def load(self):
        return load_libsvm(self.path, self.dimensions, self.name)

    def plan(self, repetitions=None, base_seed=0):
        return SplitPlan(self.train_size, self.test_size,
                         repetitions or self.repetitions, base_seed)


@dataclass
class Manifest:
    entries: list = field(default_factory=list)

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(f"dataset {name!r} not in manifest")

    def names(self):
        return [e.name for e in self.entries]


def load_manifest(path):
    """Read a JSON manifest; relative dataset paths resolve against its folder.

    Schema: ``{"datasets": [{"name", "path", "train_size", "test_size",
    "repetitions"?, "dimensions"?}, ...]}``.
    """
    path = Path(path)
    raw = json.loads(path.read_text())
    entries = []
    for item in raw["datasets"]:
        p = Path(os.path.expanduser(item["path"]))
        if not p.is_absolute():
            p = path.parent / p
        entries.append(ManifestEntry(
            name=item["name"],
            path=p,
            train_size=int(item["train_size"]),
            test_size=int(item["test_size"]),
            repetitions=int(item.get("repetitions", 10)),
            dimensions=item.get("dimensions"),
        ))
    return Manifest(entries)
