"""Dense linear-algebra primitives: ridge regression, the ridge-limit
pseudoinverse and its column-append (Greville) update.

Matrices are plain 2-D ``float64`` numpy arrays.
"""
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DataError, PreconditionError, SingularMatrixError

DEFAULT_PINV_LAMBDA = 1e-8
# relative threshold below which the Greville residual column counts as zero
C_ZERO_RTOL = 1e-10

_EPS = np.finfo(np.float64).eps


def as_matrix(a, name="matrix", finite=True):
    """Return ``a`` as a C-contiguous 2-D float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise PreconditionError(f"{name} must be 2-D, got shape {m.shape}")
    if finite and not np.all(np.isfinite(m)):
        raise DataError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class PinvState:
    """Network input ``a`` (s x n) together with its pseudoinverse (n x s).

    ``lam`` is the ridge parameter the pseudoinverse was computed with;
    ``lam == 0`` means ``a_pinv`` is an exact Moore-Penrose inverse.
    """

    a: np.ndarray
    a_pinv: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        if self.a_pinv.shape != self.a.shape[::-1]:
            raise PreconditionError(
                f"a_pinv shape {self.a_pinv.shape} is not the transpose of a shape {self.a.shape}"
            )
        if self.lam < 0:
            raise PreconditionError("lam must be non-negative")

    @property
    def n_cols(self):
        return self.a.shape[1]

    def weights(self, y):
        """Output weights ``A+ Y`` for targets ``y``."""
        return self.a_pinv @ as_matrix(y, "y")


def _add_diag(g, lam):
    if lam:
        g[np.diag_indices_from(g)] += lam
    return g


def _solve_spd(g, rhs, check_singular):
    """Solve ``g x = rhs`` for symmetric ``g``.

    Cholesky first; partial-pivot LU if the Cholesky factorization breaks
    down. With ``check_singular`` a negligible pivot raises
    :class:`SingularMatrixError`.
    """
    n = g.shape[0]
    scale = max(float(np.max(np.abs(np.diag(g)))), np.finfo(np.float64).tiny)
    try:
        factor = sla.cho_factor(g, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        factor = None
    if factor is not None:
        pivots = np.diag(factor[0]) ** 2
        j = int(np.argmin(pivots))
        if not check_singular or pivots[j] > n * _EPS * scale:
            return sla.cho_solve(factor, rhs, check_finite=False)

    with warnings.catch_warnings():
        # an exactly zero pivot is reported below with its index
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(g, check_finite=False)
    u_diag = np.abs(np.diag(lu))
    j = int(np.argmin(u_diag))
    if check_singular and u_diag[j] <= n * _EPS * max(float(u_diag.max()), scale):
        raise SingularMatrixError(
            f"normal-equation matrix is numerically singular at pivot {j} "
            f"(|pivot| = {u_diag[j]:.3e})",
            pivot=j,
        )
    return sla.lu_solve((lu, piv), rhs, check_finite=False)


def ridge_solve(a, y, lam):
    """Ridge-regression weights ``W = (lam I + A^T A)^-1 A^T Y``.

    Parameters
    ----------
    a : array_like, shape (s, n)
    y : array_like, shape (s, k)
    lam : float
        Non-negative ridge weight. With ``lam == 0`` the normal equations
        must be nonsingular.

    Returns
    -------
    ndarray, shape (n, k)
        Minimizer of ``||A W - Y||^2 + lam ||W||^2``.

    Notes
    -----
    When ``n > s`` and ``lam > 0`` the equivalent dual form
    ``A^T (lam I + A A^T)^-1 Y`` is used, which only needs an s x s solve.
    """
    a = as_matrix(a, "a")
    y = as_matrix(y, "y")
    if a.shape[0] != y.shape[0]:
        raise PreconditionError(f"row mismatch: a has {a.shape[0]} rows, y has {y.shape[0]}")
    if lam < 0:
        raise PreconditionError(f"lambda must be non-negative, got {lam}")
    s, n = a.shape
    if lam > 0 and n > s:
        g = _add_diag(a @ a.T, lam)
        return a.T @ _solve_spd(g, y, check_singular=False)
    g = _add_diag(a.T @ a, lam)
    return _solve_spd(g, a.T @ y, check_singular=(lam == 0))


def pinv(a, lambda_floor=DEFAULT_PINV_LAMBDA):
    """Ridge-limit pseudoinverse ``(lam I + A^T A)^-1 A^T``.

    The product is evaluated through a Householder QR of the stacked matrix
    ``[A; sqrt(lam) I]`` so that accuracy follows ``cond(A)`` instead of
    ``cond(A)^2``. Wide matrices are handled through the transpose, using
    ``(lam I + A^T A)^-1 A^T = A^T (lam I + A A^T)^-1``.
    """
    a = as_matrix(a, "a")
    if a.size == 0:
        raise PreconditionError("pinv of an empty matrix")
    if not lambda_floor > 0:
        raise PreconditionError(f"lambda_floor must be positive, got {lambda_floor}")
    if a.shape[1] > a.shape[0]:
        # the transposed solve comes back Fortran-ordered, so this is C-ordered
        return _pinv_tall(a.T, lambda_floor).T
    return np.ascontiguousarray(_pinv_tall(a, lambda_floor))


def _pinv_tall(a, lam):
    s, n = a.shape
    # Fortran order lets LAPACK factor and form Q in place
    stacked = np.zeros((s + n, n), order="F")
    stacked[:s] = a
    stacked[np.arange(s, s + n), np.arange(n)] = np.sqrt(lam)
    q, r = sla.qr(stacked, mode="economic", overwrite_a=True, check_finite=False)
    del stacked
    return sla.solve_triangular(r, q[:s].T, check_finite=False)


def pinv_state(a, lambda_floor=DEFAULT_PINV_LAMBDA):
    """Build a :class:`PinvState` for ``a``."""
    a = as_matrix(a, "a")
    return PinvState(a, pinv(a, lambda_floor), lam=float(lambda_floor))


def _append_exact_column(a, a_pinv, col):
    # classic Greville step for a single column, lam == 0
    d = a_pinv @ col
    c = col - a @ d
    c_norm = np.linalg.norm(c)
    if c_norm > C_ZERO_RTOL * np.linalg.norm(col):
        b_t = c / (c_norm * c_norm)
    else:
        b_t = (d @ a_pinv) / (1.0 + d @ d)
    top = a_pinv - np.outer(d, b_t)
    return np.hstack([a, col[:, None]]), np.vstack([top, b_t[None, :]])


def greville_append(state, new_cols):
    """Pseudoinverse of ``[A | new_cols]`` from the pseudoinverse of ``A``.

    With ``d = A+ B`` and ``c = B - A d`` the updated inverse is
    ``[[A+ - d b^T], [b^T]]``.

    For ``state.lam == 0`` columns are appended one at a time with the
    exact Greville choice ``b^T = c+`` (or ``(1 + d^T d)^-1 d^T A+`` when
    ``c`` vanishes). For ``state.lam > 0`` the whole block is appended at
    once with ``b^T = (c^T c + lam (I + d^T d))^-1 c^T``, which reproduces
    ``pinv([A | B], lam)`` exactly and tends to the Greville choice as
    ``lam -> 0``.
    """
    new_cols = as_matrix(new_cols, "new_cols")
    a, a_pinv, lam = state.a, state.a_pinv, state.lam
    if new_cols.shape[0] != a.shape[0]:
        raise PreconditionError(
            f"row mismatch: state has {a.shape[0]} rows, new columns have {new_cols.shape[0]}"
        )
    if new_cols.shape[1] == 0:
        return state

    if lam == 0:
        for j in range(new_cols.shape[1]):
            a, a_pinv = _append_exact_column(a, a_pinv, new_cols[:, j].copy())
        return PinvState(a, a_pinv, lam)

    n, m = a.shape[1], new_cols.shape[1]
    d = a_pinv @ new_cols
    c = new_cols - a @ d
    schur = c.T @ c + lam * (d.T @ d)
    schur[np.diag_indices(m)] += lam
    b_t = sla.cho_solve(sla.cho_factor(schur, lower=True, check_finite=False), c.T, check_finite=False)

    grown = np.empty((a.shape[0], n + m))
    grown[:, :n] = a
    grown[:, n:] = new_cols
    grown_pinv = np.empty((n + m, a.shape[0]))
    grown_pinv[:n] = a_pinv
    grown_pinv[n:] = b_t
    _rank_update(grown_pinv[:n], d, b_t)
    return PinvState(grown, grown_pinv, lam)


def _rank_update(x, d, b_t):
    """``x -= d @ b_t`` in place for a C-contiguous ``x``."""
    # x^T is Fortran-contiguous, so BLAS can overwrite it directly
    out = sla.blas.dgemm(-1.0, b_t, d, beta=1.0, c=x.T, trans_a=True, trans_b=True, overwrite_c=True)
    if not np.shares_memory(out, x):
        x[...] = out.T


def moore_penrose_residuals(a, a_pinv):
    """Max-abs residuals of the four Moore-Penrose identities."""
    ap = a @ a_pinv
    pa = a_pinv @ a
    return (
        float(np.max(np.abs(ap @ a - a))),
        float(np.max(np.abs(pa @ a_pinv - a_pinv))),
        float(np.max(np.abs(ap - ap.T))),
        float(np.max(np.abs(pa - pa.T))),
    )
