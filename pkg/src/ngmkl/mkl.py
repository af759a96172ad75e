"""L1 multiple kernel learning: simplex kernel weights alternated with SVM solves.

For fixed weights ``beta`` the SVM dual on ``sum_j beta_j G_j`` gives
``alpha``; the weights then take a projected (sub)gradient step on

    J(beta) = max_alpha 1^T alpha - 1/2 sum_j beta_j (alpha*y)^T G_j (alpha*y)

whose gradient is ``-1/2 (alpha*y)^T G_j (alpha*y)``.  Minimising ``J`` over
the simplex is the usual max-margin MKL problem.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .kernels import base_kernel_bank, gram_bank
from .svm import SvmProblem, SvmModel, sign_labels, smo_train, svm_decision

log = logging.getLogger(__name__)


def project_simplex(v):
    """Euclidean projection of ``v`` onto ``{b >= 0, sum(b) = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("project_simplex expects a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("project_simplex expects finite entries")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def combined_gram(grams, beta):
    """Entrywise ``sum_j beta_j G_j``; zero weights are skipped exactly."""
    beta = np.asarray(beta, dtype=np.float64)
    if len(grams) == 0 or len(grams) != beta.shape[0]:
        raise ValueError(f"need one weight per Gram matrix ({len(grams)} vs {beta.shape})")
    shape = np.shape(grams[0])
    out = np.zeros(shape)
    for b, G in zip(beta, grams):
        if np.shape(G) != shape:
            raise ValueError(f"Gram shape mismatch: {np.shape(G)} vs {shape}")
        if b != 0.0:
            out += b * G if b != 1.0 else G
    return out


def kernel_quadratic_terms(grams, dual_coef):
    """``(alpha*y)^T G_j (alpha*y)`` for each kernel."""
    return np.array([float(dual_coef @ G @ dual_coef) for G in grams])


@dataclass(frozen=True)
class MklSolution:
    beta: np.ndarray
    svm: SvmModel
    kernel_specs: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    converged: bool = True

    @property
    def objective(self):
        return self.objectives[-1]


def _fit_svm(grams, beta, y, c_reg, tol):
    model = smo_train(SvmProblem(combined_gram(grams, beta), y, c_reg), tol)
    g = model.dual_coef
    q = kernel_quadratic_terms(grams, g)
    objective = float(model.alpha.sum() - 0.5 * beta @ q)
    return model, q, objective


def mkl_train(grams, labels, c_reg=1.0, step=0.1, max_outer=100, beta_tol=1e-4,
              tol=1e-3, kernel_specs=None, min_step=1e-12):
    """Alternate SVM solves and projected gradient steps on the kernel weights.

    ``beta`` starts uniform.  A step that increases ``J`` is rejected and the
    step size halved; iteration stops once ``beta`` moves less than
    ``beta_tol`` in the max-norm, the step size underflows ``min_step``, or
    ``max_outer`` steps were taken.
    """
    if len(grams) == 0:
        raise ValueError("empty kernel list")
    y = np.asarray(labels, dtype=np.float64)
    S = len(grams)
    beta = np.full(S, 1.0 / S)
    model, q, objective = _fit_svm(grams, beta, y, c_reg, tol)
    objectives = [objective]
    converged = False
    for outer in range(max_outer):
        while True:
            candidate = project_simplex(beta + step * 0.5 * q)
            move = float(np.max(np.abs(candidate - beta)))
            if move < beta_tol:
                converged = True
                break
            cand_model, cand_q, cand_obj = _fit_svm(grams, candidate, y, c_reg, tol)
            if cand_obj <= objective:
                break
            step *= 0.5
            if step < min_step:
                converged = True
                break
        if converged:
            break
        beta, model, q, objective = candidate, cand_model, cand_q, cand_obj
        objectives.append(objective)
        log.debug("mkl outer %d: J=%.6g move=%.3g", outer, objective, move)
    return MklSolution(beta, model, list(kernel_specs or []), objectives, converged)


def mkl_decision(solution, test_gram_rows):
    """Decision values for ``m`` queries given S matrices of shape m x n."""
    if len(test_gram_rows) != solution.beta.shape[0]:
        raise ValueError(
            f"expected {solution.beta.shape[0]} kernel row blocks, got {len(test_gram_rows)}"
        )
    n = solution.svm.alpha.shape[0]
    for rows in test_gram_rows:
        if np.shape(rows)[-1] != n:
            raise ValueError(f"kernel rows must have {n} columns, got {np.shape(rows)}")
    return svm_decision(solution.svm, combined_gram(test_gram_rows, solution.beta))


def mkl_predict(solution, test_gram_rows):
    """Labels in {-1, +1}; a decision of exactly zero maps to +1."""
    return sign_labels(mkl_decision(solution, test_gram_rows))


class MKLClassifier(ClassifierMixin, BaseEstimator):
    """Binary L1-MKL SVM over a bank of base kernels.

    Parameters
    ----------
    kernels : list of KernelSpec or None
        Defaults to the 17-kernel bank.
    C : float, default=1.0
    step : float, default=0.1
        Initial step size of the kernel-weight update.
    max_outer : int, default=100
    """

    def __init__(self, kernels=None, C=1.0, step=0.1, max_outer=100, tol=1e-3):
        self.kernels = kernels
        self.C = C
        self.step = step
        self.max_outer = max_outer
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ValueError(f"MKLClassifier is binary only, got {len(self.classes_)} classes")
        specs = list(self.kernels) if self.kernels is not None else base_kernel_bank()
        signs = np.where(y == self.classes_[1], 1.0, -1.0)
        grams = gram_bank(specs, X, X)
        self.solution_ = mkl_train(grams, signs, self.C, self.step, self.max_outer,
                                   tol=self.tol, kernel_specs=specs)
        self.X_fit_ = X
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def beta_(self):
        return self.solution_.beta

    def decision_function(self, X):
        check_is_fitted(self, "solution_")
        X = check_array(X)
        rows = gram_bank(self.solution_.kernel_specs, X, self.X_fit_)
        return mkl_decision(self.solution_, rows)

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, self.classes_[1], self.classes_[0])
