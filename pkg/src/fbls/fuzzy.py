"""Takagi-Sugeno fuzzy subsystems used as feature extractors.

Each subsystem holds ``k_rules`` Gaussian rules centred on K-means
centroids. A rule's normalized firing strength weights a linear
consequent of the input; the weighted consequents are the subsystem's
feature nodes.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import PreconditionError
from .linalg import as_matrix
from .seeding import child, seed_sequence

SIGMA_FLOOR = 1e-3
KMEANS_MAX_ITERS = 100
KMEANS_TOL = 1e-6


@dataclass(frozen=True)
class FuzzySubsystem:
    centers: np.ndarray      # (k_rules, f)
    sigmas: np.ndarray       # (k_rules, f)
    consequents: np.ndarray  # (k_rules, f + 1); column 0 is the constant term

    def __post_init__(self):
        k, f = self.centers.shape
        if self.sigmas.shape != (k, f):
            raise PreconditionError(f"sigmas shape {self.sigmas.shape} != centers shape {(k, f)}")
        if self.consequents.shape != (k, f + 1):
            raise PreconditionError(
                f"consequents shape {self.consequents.shape} != {(k, f + 1)}"
            )
        if np.any(self.sigmas <= 0):
            raise PreconditionError("sigmas must be positive")

    @property
    def k_rules(self):
        return self.centers.shape[0]

    @property
    def n_features(self):
        return self.centers.shape[1]


def _sq_dists(x, centers):
    # ||x||^2 - 2 x.c + ||c||^2, clipped at 0 against cancellation
    d = (x * x).sum(axis=1)[:, None] - 2.0 * (x @ centers.T) + (centers * centers).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x, k, rng):
    s = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(s)]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(s, p=closest / total))
        else:
            # every point already coincides with a centre
            idx = int(rng.integers(s))
        centers[j] = x[idx]
        closest = np.minimum(closest, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans(x, k, seed):
    """Lloyd's algorithm with k-means++ seeding.

    Iterates until no centroid moves more than ``1e-6`` (max-abs) or 100
    iterations have run. A cluster that loses all its points is re-seeded
    with the point farthest from its current centroid.

    Returns
    -------
    centers : ndarray, shape (k, f)
    assignment : ndarray of int, shape (s,)
    """
    x = as_matrix(x, "x")
    s = x.shape[0]
    if not 1 <= k <= s:
        raise PreconditionError(f"kmeans needs 1 <= k <= s, got k={k}, s={s}")
    rng = np.random.default_rng(seed_sequence(seed))
    centers = _kmeans_pp(x, k, rng)
    assign = np.argmin(_sq_dists(x, centers), axis=1)
    for _ in range(KMEANS_MAX_ITERS):
        new = np.empty_like(centers)
        for j in range(k):
            members = x[assign == j]
            if len(members):
                new[j] = members.mean(axis=0)
            else:
                gaps = ((x - centers[assign]) ** 2).sum(axis=1)
                far = int(np.argmax(gaps))
                new[j] = x[far]
                assign[far] = j
        shift = float(np.max(np.abs(new - centers)))
        centers = new
        assign = np.argmin(_sq_dists(x, centers), axis=1)
        if shift < KMEANS_TOL:
            break
    return centers, assign


def membership(x_row, c_row, sigma_row):
    """Gaussian memberships ``exp(-(x - c)^2 / sigma^2)``, elementwise."""
    x_row = np.asarray(x_row, dtype=np.float64)
    return np.exp(-((x_row - c_row) ** 2) / sigma_row**2)


def log_firing(x, sub):
    """Unnormalized log firing strengths, shape (s, k_rules)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = np.empty((x.shape[0], sub.k_rules))
    for j in range(sub.k_rules):
        z = (x - sub.centers[j]) / sub.sigmas[j]
        out[:, j] = -(z * z).sum(axis=1)
    return out


def firing_strengths(x_row, sub):
    """Normalized rule firing strengths for one input row.

    The product of memberships is accumulated in log space and normalized
    with log-sum-exp, so it stays well defined when the raw product
    underflows.
    """
    logw = log_firing(x_row, sub)[0]
    return np.exp(logw - logsumexp(logw))


def fuzzy_feature_nodes(x, sub):
    """Feature nodes ``o_j = wbar_j * (p_j0 + sum_i p_ji x_i)`` for every row."""
    x = as_matrix(x, "x")
    if x.shape[1] != sub.n_features:
        raise PreconditionError(
            f"feature mismatch: subsystem expects {sub.n_features} columns, got {x.shape[1]}"
        )
    logw = log_firing(x, sub)
    wbar = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    q = sub.consequents[:, 0][None, :] + x @ sub.consequents[:, 1:].T
    return wbar * q


def build_fuzzy_subsystem(x, n1, seed, sigma_floor=SIGMA_FLOOR):
    """Fit one subsystem of ``n1`` rules to ``x`` (s x f, already normalized).

    Centres come from :func:`kmeans`; widths are the per-dimension standard
    deviations inside each cluster, floored at ``sigma_floor``; consequents
    are drawn uniformly from [-1, 1] and stay fixed.
    """
    x = as_matrix(x, "x")
    if x.shape[0] < n1:
        raise PreconditionError(f"need at least n1={n1} samples, got {x.shape[0]}")
    km_seed, p_seed = child(seed, 0), child(seed, 1)
    centers, assign = kmeans(x, n1, km_seed)
    sigmas = np.full_like(centers, sigma_floor)
    for j in range(n1):
        members = x[assign == j]
        if len(members) > 1:
            sigmas[j] = np.maximum(members.std(axis=0), sigma_floor)
    consequents = np.random.default_rng(p_seed).uniform(-1.0, 1.0, size=(n1, x.shape[1] + 1))
    return FuzzySubsystem(centers, sigmas, consequents)
