"""Lasso sparse autoencoder used to fine-tune feature-window weights."""
from dataclasses import dataclass

import numpy as np

from .errors import DataError, PreconditionError
from .linalg import as_matrix

POWER_ITERATIONS = 50


@dataclass(frozen=True)
class LassoProblem:
    """``argmin_W ||a1 W - x||_F^2 + lam ||W||_1``.

    Attributes
    ----------
    a1 : ndarray, shape (s, N1)
        Projected (and normalized) features.
    x : ndarray, shape (s, f + 1)
        Augmented input to reconstruct.
    lam : float
        L1 weight.
    max_iters : int
    tol : float
        Stop once the max-abs change between iterates drops below this.
    """

    a1: np.ndarray
    x: np.ndarray
    lam: float
    max_iters: int = 50
    tol: float = 1e-5

    def __post_init__(self):
        if self.a1.ndim != 2 or self.x.ndim != 2:
            raise PreconditionError("a1 and x must be 2-D")
        if self.a1.shape[0] != self.x.shape[0]:
            raise PreconditionError(
                f"row mismatch: a1 has {self.a1.shape[0]} rows, x has {self.x.shape[0]}"
            )
        if not self.lam > 0:
            raise PreconditionError(f"lam must be positive, got {self.lam}")
        if not self.tol > 0:
            raise PreconditionError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 0:
            raise PreconditionError("max_iters must be non-negative")

    def objective(self, w):
        r = self.a1 @ w - self.x
        return float(np.sum(r * r) + self.lam * np.sum(np.abs(w)))


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def largest_eigenvalue(gram, rounds=POWER_ITERATIONS):
    """Power-iteration estimate of the top eigenvalue of a PSD matrix."""
    v = np.ones(gram.shape[0])
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(rounds):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        rho = float(v @ w)
        v = w / norm
    return max(rho, float(v @ (gram @ v)))


def lasso_solve(p, return_objective=False):
    """Solve a :class:`LassoProblem` with ISTA.

    Each iteration takes a gradient step of length ``1 / (2L)`` on the
    squared residual (``L`` is the top eigenvalue of ``a1^T a1``) and
    soft-thresholds at ``lam / (2L)``. Iterates start at zero.

    Returns ``W`` of shape (N1, f + 1); with ``return_objective`` also the
    list of objective values, starting with the value at ``W = 0``.
    """
    a1 = as_matrix(p.a1, "a1", finite=False)
    x = as_matrix(p.x, "x", finite=False)
    if not (np.all(np.isfinite(a1)) and np.all(np.isfinite(x))):
        raise DataError("lasso problem contains non-finite entries")

    gram = a1.T @ a1
    corr = a1.T @ x
    w = np.zeros((a1.shape[1], x.shape[1]))
    history = [p.objective(w)] if return_objective else None
    lip = largest_eigenvalue(gram)
    # W = 0 is optimal exactly when lam >= 2 max|a1^T x|; skip the iterations
    # so rounding in the first step cannot leave ulp-sized entries
    if lip > 0.0 and not p.lam >= 2.0 * float(np.max(np.abs(corr), initial=0.0)):
        step = 1.0 / lip
        thresh = p.lam / (2.0 * lip)
        for _ in range(p.max_iters):
            w_next = soft_threshold(w - step * (gram @ w - corr), thresh)
            delta = float(np.max(np.abs(w_next - w))) if w.size else 0.0
            w = w_next
            if history is not None:
                history.append(p.objective(w))
            if delta < p.tol:
                break
    if return_objective:
        return w, history
    return w
