"""Logistic regression and linear discriminant analysis."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .boost import sigmoid

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


@dataclass
class LinearModel:
    kind: str
    coef: np.ndarray = field(default_factory=lambda: np.zeros(0))
    intercept: float = 0.0
    params_: dict = field(default_factory=dict)
    converged: bool = True
    n_iter: int = 0

    def decision_function(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.coef + self.intercept

    def predict_proba(self, x) -> np.ndarray:
        p = sigmoid(self.decision_function(x))
        return np.column_stack([1 - p, p])

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def params(self) -> dict:
        return dict(self.params_)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params(),
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(d["kind"], np.asarray(d["coef"], dtype=np.float64), float(d["intercept"]), dict(d["params"]),
                   bool(d["converged"]), int(d["n_iter"]))


def _logistic_objective(xa, y, beta, l2):
    """Mean cross-entropy plus ``l2/2 * |w|^2`` (intercept unpenalised) and its gradient."""
    z = xa @ beta
    p = sigmoid(z)
    n = len(y)
    penalty = beta.copy()
    penalty[0] = 0.0
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * penalty @ penalty)
    grad = xa.T @ (p - y) / n + l2 * penalty
    return loss, grad, p


def fit_logistic(x, y, l2: float = 1e-4, tol: float = 1e-6, max_iter: int = 10000, solver: str = "gd") -> LinearModel:
    """L2-regularised logistic regression.

    ``solver="gd"`` runs fixed-step gradient descent (step ``1/L`` with
    ``L`` the Lipschitz constant of the gradient) until the gradient norm is
    below ``tol``.  ``solver="newton"`` runs Newton-Raphson and raises
    :class:`ConvergenceError` if it does not converge.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = x.shape
    xa = np.column_stack([np.ones(n), x])
    beta = np.zeros(p + 1)
    converged = False
    it = 0
    if solver == "gd":
        lip = 0.25 * np.linalg.norm(xa, 2) ** 2 / n + l2
        step = 1.0 / lip
        for it in range(1, max_iter + 1):
            _, grad, _ = _logistic_objective(xa, y, beta, l2)
            if np.linalg.norm(grad) < tol:
                converged = True
                break
            beta -= step * grad
        if not converged:
            logger.info("logistic regression stopped after %d iterations without reaching tol", max_iter)
    elif solver == "newton":
        ridge = np.full(p + 1, l2)
        ridge[0] = 0.0
        for it in range(1, min(max_iter, 200) + 1):
            _, grad, prob = _logistic_objective(xa, y, beta, l2)
            if np.linalg.norm(grad) < tol:
                converged = True
                break
            hess = (xa * (prob * (1 - prob))[:, None]).T @ xa / n + np.diag(ridge) + 1e-12 * np.eye(p + 1)
            beta = beta - np.linalg.solve(hess, grad)
        if not converged:
            raise ConvergenceError(f"Newton iterations did not converge (gradient norm {np.linalg.norm(grad):.3g})")
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return LinearModel("logistic_regression", beta[1:].copy(), float(beta[0]),
                       {"l2": l2, "tol": tol, "max_iter": max_iter, "solver": solver}, converged, it)


def fit_lda(x, y, ridge: float = 1e-6) -> LinearModel:
    """Two-class LDA with a pooled covariance and ``ridge`` on its diagonal."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    x0, x1 = x[y == 0], x[y == 1]
    if len(x0) < 2 or len(x1) < 2:
        raise ValueError("LDA needs at least two rows per class")
    mu0, mu1 = x0.mean(axis=0), x1.mean(axis=0)
    centred = np.vstack([x0 - mu0, x1 - mu1])
    cov = centred.T @ centred / (len(x) - 2) + ridge * np.eye(x.shape[1])
    try:
        coef = np.linalg.solve(cov, mu1 - mu0)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("pooled covariance is singular even after ridge") from exc
    prior1 = len(x1) / len(x)
    intercept = float(-0.5 * (mu0 + mu1) @ coef + np.log(prior1 / (1 - prior1)))
    return LinearModel("lda", coef, intercept, {"ridge": ridge})


def fit_linear(x, y, kind: str = "logistic_regression", **params) -> LinearModel:
    if kind == "logistic_regression":
        return fit_logistic(x, y, **params)
    if kind == "lda":
        return fit_lda(x, y, **params)
    raise ValueError(f"unknown linear model {kind!r}")
