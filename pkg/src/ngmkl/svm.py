"""Binary soft-margin SVM on a precomputed kernel, trained by SMO.

The dual solved here is

    min_a  1/2 (a*y)^T K (a*y) - 1^T a   s.t.  y^T a = 0,  0 <= a_i <= box_i

with working pairs chosen by the second-order (maximal gain) rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .kernels import Gaussian, gram

SUPPORT_THRESHOLD = 1e-9
_TAU = 1e-12
_MAX_ITER_CAP = 10_000_000


class SingleClassError(ValueError):
    """Raised when the training labels contain only one class."""


@dataclass(frozen=True)
class SvmProblem:
    """Training instance: square Gram matrix, labels in {-1, +1} and box size.

    With ``sample_weights`` (non-negative, summing to one) the per-sample
    box becomes ``c_reg * n * w_i``; uniform weights recover ``c_reg``.
    """

    gram: np.ndarray
    labels: np.ndarray
    c_reg: float = 1.0
    sample_weights: np.ndarray | None = None

    def __post_init__(self):
        K = np.asarray(self.gram, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.float64)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"gram must be square, got shape {K.shape}")
        if y.shape != (K.shape[0],):
            raise ValueError(f"labels must have length {K.shape[0]}, got {y.shape}")
        if not np.all(np.abs(y) == 1):
            raise ValueError("labels must be -1 or +1")
        if not self.c_reg > 0:
            raise ValueError(f"c_reg must be positive, got {self.c_reg}")
        object.__setattr__(self, "gram", K)
        object.__setattr__(self, "labels", y)
        if self.sample_weights is not None:
            w = np.asarray(self.sample_weights, dtype=np.float64)
            if w.shape != y.shape or np.any(w < 0):
                raise ValueError("sample_weights must be non-negative with one entry per sample")
            object.__setattr__(self, "sample_weights", w)

    @property
    def n(self):
        return self.labels.shape[0]

    def boxes(self):
        if self.sample_weights is None:
            return np.full(self.n, float(self.c_reg))
        return self.c_reg * self.n * self.sample_weights


@dataclass(frozen=True)
class SvmModel:
    alpha: np.ndarray
    bias: float
    train_labels: np.ndarray
    box: np.ndarray
    converged: bool = True
    iterations: int = 0

    @property
    def support_indices(self):
        return np.flatnonzero(self.alpha > SUPPORT_THRESHOLD)

    @property
    def dual_coef(self):
        """Expansion coefficients ``alpha * y`` of the decision function."""
        return self.alpha * self.train_labels


def dual_objective(alpha, problem):
    """``1/2 (a*y)^T K (a*y) - sum(a)`` (the minimisation form)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (problem.n,):
        raise ValueError(f"alpha must have length {problem.n}, got {alpha.shape}")
    g = alpha * problem.labels
    return 0.5 * float(g @ problem.gram @ g) - float(alpha.sum())


@numba.njit(cache=True)
def _smo_loop(K, y, C, alpha, G, eps, max_iter):
    n = y.shape[0]
    it = 0
    while it < max_iter:
        # i: most violating index in I_up.
        gmax = -np.inf
        i = -1
        for t in range(n):
            up = (y[t] > 0 and alpha[t] < C[t]) or (y[t] < 0 and alpha[t] > 0)
            if up:
                v = -y[t] * G[t]
                if v > gmax:
                    gmax = v
                    i = t
        # j: second-order gain over I_low; also the minimum of -y G there.
        gmin = np.inf
        j = -1
        best = np.inf
        for t in range(n):
            low = (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C[t])
            if low:
                v = -y[t] * G[t]
                if v < gmin:
                    gmin = v
                if i >= 0:
                    b = gmax - v
                    if b > 0:
                        a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if a <= 0:
                            a = _TAU
                        obj = -(b * b) / a
                        if obj < best:
                            best = obj
                            j = t
        if i < 0 or j < 0 or gmax - gmin < eps:
            return it, True, gmax, gmin

        it += 1
        ai_old = alpha[i]
        aj_old = alpha[j]
        Ci = C[i]
        Cj = C[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = _TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai = ai_old + delta
            aj = aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai = Ci
                    aj = Ci - diff
            else:
                if aj > Cj:
                    aj = Cj
                    ai = Cj + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai = ai_old - delta
            aj = aj_old + delta
            if total > Ci:
                if ai > Ci:
                    ai = Ci
                    aj = total - Ci
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > Cj:
                if aj > Cj:
                    aj = Cj
                    ai = total - Cj
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        dai = (ai - ai_old) * y[i]
        daj = (aj - aj_old) * y[j]
        for t in range(n):
            G[t] += y[t] * (K[i, t] * dai + K[j, t] * daj)

    # Budget exhausted: report the final violation.
    gmax = -np.inf
    gmin = np.inf
    for t in range(n):
        v = -y[t] * G[t]
        if (y[t] > 0 and alpha[t] < C[t]) or (y[t] < 0 and alpha[t] > 0):
            gmax = max(gmax, v)
        if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C[t]):
            gmin = min(gmin, v)
    return it, gmax - gmin < eps, gmax, gmin


def smo_train(problem, tol=1e-3, max_passes=1000):
    """Solve the dual by SMO until the maximal KKT violation is below ``tol``.

    The iteration budget is ``max_passes * n`` (capped at 1e7).  On budget
    exhaustion the current iterate is returned with ``converged=False``.
    """
    y = problem.labels
    if np.all(y == y[0]):
        raise SingleClassError("single-class problem: SVM needs both labels")
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = problem.n
    C = problem.boxes()
    alpha = np.zeros(n)
    G = -np.ones(n)
    max_iter = int(min(max(max_passes, 1) * n, _MAX_ITER_CAP))
    it, converged, gmax, gmin = _smo_loop(
        np.ascontiguousarray(problem.gram), y, C, alpha, G, float(tol), max_iter
    )
    v = -y * G
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        bias = float(v[free].mean())
    else:
        bias = float((gmax + gmin) / 2.0) if np.isfinite(gmax + gmin) else 0.0
    return SvmModel(alpha, bias, y.copy(), C, bool(converged), int(it))


def svm_decision(model, gram_rows):
    """Decision value(s) ``(alpha*y)^T k_x + bias`` for one row or an m x n matrix."""
    rows = np.asarray(gram_rows, dtype=np.float64)
    n = model.alpha.shape[0]
    if rows.shape[-1] != n or rows.ndim > 2:
        raise ValueError(f"gram rows must have length {n}, got shape {rows.shape}")
    out = rows @ model.dual_coef + model.bias
    return float(out) if rows.ndim == 1 else out


def sign_labels(decision):
    """Sign in {-1, +1} with exact zeros mapped to +1."""
    return np.where(np.asarray(decision) >= 0, 1.0, -1.0)


def svm_predict(model, gram_rows):
    return sign_labels(svm_decision(model, gram_rows))


def kkt_violation(model, problem):
    """Largest KKT violation of ``model`` on its training problem."""
    f = problem.gram @ model.dual_coef + model.bias
    margin = problem.labels * f - 1.0
    a, C = model.alpha, model.box
    at_zero = a <= 0
    at_box = a >= C
    free = ~at_zero & ~at_box
    viol = np.zeros_like(margin)
    viol[at_zero] = np.maximum(0.0, -margin[at_zero])
    viol[at_box] = np.maximum(0.0, margin[at_box])
    viol[free] = np.abs(margin[free])
    return float(viol.max(initial=0.0))


class KernelSVC(ClassifierMixin, BaseEstimator):
    """Binary SVM with a single kernel from :mod:`ngmkl.kernels`.

    Parameters
    ----------
    kernel : KernelSpec, default=Gaussian(1.0)
    C : float, default=1.0
        Box constraint.
    tol : float, default=1e-3
        KKT tolerance of the SMO stopping rule.
    """

    def __init__(self, kernel=Gaussian(1.0), C=1.0, tol=1e-3):
        self.kernel = kernel
        self.C = C
        self.tol = tol

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ValueError(f"KernelSVC is binary, got {len(self.classes_)} classes")
        signs = np.where(y == self.classes_[1], 1.0, -1.0)
        if sample_weight is not None:
            sample_weight = np.asarray(sample_weight, dtype=np.float64)
            sample_weight = sample_weight / sample_weight.sum()
        problem = SvmProblem(gram(self.kernel, X, X), signs, self.C, sample_weight)
        self.model_ = smo_train(problem, self.tol)
        self.X_fit_ = X
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        """Positive values favour ``classes_[1]`` (sklearn convention)."""
        check_is_fitted(self, "model_")
        X = check_array(X)
        return svm_decision(self.model_, gram(self.kernel, X, self.X_fit_))

    def predict(self, X):
        d = self.decision_function(X)
        return np.where(d >= 0, self.classes_[1], self.classes_[0])
