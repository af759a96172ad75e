"""Input-kernel selection for the three network variants.

* ``select_all``: every kernel of the bank.
* ``select_l1``: kernels whose L1-MKL weight exceeds a threshold.
* ``select_mkboost_d1``: per boosting round, the kernel whose weak SVM has
  the smallest weighted training error (with replacement).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .mkl import mkl_train
from .svm import SingleClassError, SvmProblem, sign_labels, smo_train, svm_decision

ALL = "all"
L1_SPARSE = "l1"
BOOST_D1 = "boost"

EPS_CLAMP = 1e-10


@dataclass(frozen=True)
class SelectionResult:
    variant: str
    selected: tuple
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.selected) == 0:
            raise ValueError("selection must contain at least one kernel")

    @property
    def dedup_selected(self):
        return tuple(dict.fromkeys(self.selected))


@dataclass(frozen=True)
class BoostState:
    sample_weights: np.ndarray
    round: int = 0

    @classmethod
    def uniform(cls, n):
        return cls(np.full(n, 1.0 / n), 0)


def select_all(bank_size):
    if bank_size < 1:
        raise ValueError("kernel bank is empty")
    return SelectionResult(ALL, tuple(range(bank_size)))


def select_from_beta(beta, threshold=1e-3):
    """Indices with ``beta_j > threshold`` by descending weight (ties: lower index)."""
    beta = np.asarray(beta, dtype=np.float64)
    order = np.argsort(-beta, kind="stable")
    chosen = [int(j) for j in order if beta[j] > threshold]
    if not chosen:
        chosen = [int(order[0])]
    return SelectionResult(L1_SPARSE, tuple(chosen),
                           [{"kernel": j, "beta": float(beta[j])} for j in range(beta.size)])


def select_l1(grams, labels, c_reg=1.0, threshold=1e-3, **mkl_options):
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    solution = mkl_train(grams, labels, c_reg, **mkl_options)
    return select_from_beta(solution.beta, threshold)


def learner_weight(error):
    e = min(max(error, EPS_CLAMP), 0.5 - EPS_CLAMP)
    return 0.5 * math.log((1.0 - e) / e)


def _weak_predictions(gram, y, weights, c_reg, subset):
    if subset is None:
        model = smo_train(SvmProblem(gram, y, c_reg, weights))
        return sign_labels(svm_decision(model, gram))
    sub = np.asarray(subset)
    model = smo_train(SvmProblem(gram[np.ix_(sub, sub)], y[sub], c_reg))
    return sign_labels(svm_decision(model, gram[:, sub]))


def boost_round(grams, labels, state, c_reg=1.0, subset=None):
    """Train one weak SVM per kernel and keep the lowest weighted error.

    Without ``subset`` each weak learner is a sample-weighted SVM on the full
    training set (boxes ``c_reg * n * w_i``).  With ``subset`` (indices drawn
    from the current distribution) it is an ordinary SVM on those rows.  In
    both cases the error is weighted by ``state`` over all training rows.

    Returns ``(kernel, predictions, weighted_error, learner_weight, errors)``.
    """
    y = np.asarray(labels, dtype=np.float64)
    if np.all(y == y[0]):
        raise SingleClassError("single-class problem: boosting needs both labels")
    if subset is not None and np.all(y[subset] == y[subset][0]):
        raise SingleClassError("boosting sample holds a single class")
    w = state.sample_weights
    errors = np.empty(len(grams))
    preds = []
    for j, G in enumerate(grams):
        p = _weak_predictions(G, y, w, c_reg, subset)
        preds.append(p)
        errors[j] = float(w[p != y].sum())
    best = int(np.argmin(errors))
    return best, preds[best], float(errors[best]), learner_weight(errors[best]), errors


def boost_update(state, predictions, labels, weight):
    """AdaBoost reweighting ``w_i * exp(-weight * y_i * h_i)``, renormalised."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.shape != state.sample_weights.shape:
        raise ValueError("predictions, labels and weights must have equal length")
    w = state.sample_weights * np.exp(-weight * y * p)
    total = w.sum()
    if not total > 0 or not np.isfinite(total):
        raise ValueError("boosting weights degenerated to zero")
    return BoostState(w / total, state.round + 1)


def _draw_subset(rng, weights, size, y):
    # Redraw until both classes are present; a few tries suffice in practice.
    for _ in range(100):
        idx = np.sort(rng.choice(weights.size, size=size, replace=True, p=weights))
        if np.any(y[idx] > 0) and np.any(y[idx] < 0):
            return idx
    raise SingleClassError("could not draw a two-class boosting sample")


def select_mkboost_d1(grams, labels, rounds=20, c_reg=1.0, sample_fraction=None, seed=0):
    """Boosting-based selection; ``selected`` lists the per-round winners.

    ``sample_fraction=None`` trains sample-weighted SVMs on all rows.  A
    fraction in (0, 1] instead trains each round's weak SVMs on
    ``ceil(fraction * n)`` rows resampled from the boosting distribution
    (seeded, one draw shared by all kernels of a round).
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    y = np.asarray(labels, dtype=np.float64)
    state = BoostState.uniform(y.size)
    rng = np.random.Generator(np.random.PCG64(seed))
    chosen, diagnostics = [], []
    for r in range(rounds):
        subset = None
        if sample_fraction is not None:
            size = max(2, math.ceil(sample_fraction * y.size))
            subset = _draw_subset(rng, state.sample_weights, size, y)
        k, preds, err, alpha, errors = boost_round(grams, y, state, c_reg, subset)
        chosen.append(k)
        diagnostics.append({"round": r, "kernel": k, "weighted_error": err,
                            "learner_weight": alpha, "errors": errors.tolist()})
        state = boost_update(state, preds, y, alpha)
    return SelectionResult(BOOST_D1, tuple(chosen), diagnostics)


def diagnostics_csv(result):
    """Boosting diagnostics as CSV: round, kernel, weighted error, learner weight."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if result.variant == BOOST_D1:
        writer.writerow(["round", "kernel", "weighted_error", "learner_weight"])
        for row in result.diagnostics:
            writer.writerow([row["round"], row["kernel"], repr(row["weighted_error"]),
                             repr(row["learner_weight"])])
    else:
        writer.writerow(["kernel", "beta"])
        for row in result.diagnostics:
            writer.writerow([row["kernel"], repr(row["beta"])])
    return buf.getvalue()
