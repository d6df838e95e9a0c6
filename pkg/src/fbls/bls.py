"""Broad Learning System: feature windows, enhancement nodes, ridge output
layer and incremental node addition.

The network input ``A`` is a concatenation of column blocks. A network is
described by its *layout*, the ordered list of those blocks, each either
``("feature", n_nodes)`` or ``("enhancement", n_nodes)``. An enhancement
block reads every feature node that precedes it in the layout. Initial
training uses ``N2`` feature blocks of ``N1`` nodes followed by one block of
``N3`` enhancement nodes; each increment appends blocks at the end.
"""
import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .data import MinMaxStats, minmax_fit
from .errors import (
    DataError, DegenerateInputError, PreconditionError, ShapeMismatchError, StateMismatchError,
)
from .fuzzy import FuzzySubsystem, build_fuzzy_subsystem, fuzzy_feature_nodes
from .lasso import LassoProblem, lasso_solve
from .linalg import as_matrix, greville_append, pinv_state, ridge_solve
from .seeding import block_rng, block_seed

FEATURE_MODES = ("random_sparse", "fuzzy_ts")
FEATURE = "feature"
ENHANCEMENT = "enhancement"


@dataclass(frozen=True)
class NetworkConfig:
    """Hyperparameters of a BLS / FBLS-TS network.

    ``n1`` feature nodes per window, ``n2`` windows, ``n3`` enhancement
    nodes. ``zoom`` is the enhancement shrink factor. ``ridge_lambda`` is
    used for the initial output weights, ``pinv_lambda`` for the retained
    pseudoinverse that later increments update; keep them equal if grown
    networks should match from-scratch training.
    """

    n1: int = 20
    n2: int = 10
    n3: int = 2000
    zoom: float = 0.8
    lasso_lambda: float = 1e-3
    ridge_lambda: float = 2.0**-10
    pinv_lambda: float = 2.0**-10
    seed: int = 0
    feature_mode: str = "random_sparse"
    lasso_max_iters: int = 50
    lasso_tol: float = 1e-5

    def __post_init__(self):
        if min(self.n1, self.n2, self.n3) < 1:
            raise PreconditionError("n1, n2 and n3 must all be >= 1")
        if not self.zoom > 0:
            raise PreconditionError("zoom must be positive")
        if not self.lasso_lambda > 0 or not self.pinv_lambda > 0 or self.ridge_lambda < 0:
            raise PreconditionError("lasso_lambda and pinv_lambda must be > 0, ridge_lambda >= 0")
        if self.feature_mode not in FEATURE_MODES:
            raise PreconditionError(f"feature_mode must be one of {FEATURE_MODES}")

    def initial_layout(self):
        return ((FEATURE, self.n1),) * self.n2 + ((ENHANCEMENT, self.n3),)


@dataclass(frozen=True)
class FeatureWindow:
    """Sparse random feature window; ``w_z`` maps the augmented input to
    the window's nodes."""

    w_e: np.ndarray
    w_z: np.ndarray
    node_min: np.ndarray
    node_max: np.ndarray

    @property
    def n_nodes(self):
        return self.w_z.shape[1]

    def nodes(self, x_aug):
        return MinMaxStats(self.node_min, self.node_max).apply(x_aug @ self.w_z)


@dataclass(frozen=True)
class FuzzyWindow:
    """A fuzzy subsystem used in place of a random feature window."""

    subsystem: FuzzySubsystem
    node_min: np.ndarray
    node_max: np.ndarray

    @property
    def n_nodes(self):
        return self.subsystem.k_rules

    def nodes(self, x_aug):
        raw = fuzzy_feature_nodes(x_aug[:, :-1], self.subsystem)
        return MinMaxStats(self.node_min, self.node_max).apply(raw)


@dataclass(frozen=True)
class EnhancementLayer:
    """``w_h`` has one row per input feature node plus a bias row."""

    w_h: np.ndarray
    train_scale: float

    @property
    def n_nodes(self):
        return self.w_h.shape[1]

    @property
    def n_inputs(self):
        return self.w_h.shape[0] - 1

    def nodes(self, z, zoom):
        return _activate(_augment(z[:, : self.n_inputs]) @ self.w_h, self.train_scale, zoom)


@dataclass(frozen=True)
class TrainedModel:
    config: NetworkConfig
    layout: tuple
    feature_blocks: tuple
    enhancement_blocks: tuple
    w_out: np.ndarray
    class_labels: tuple
    input_stats: MinMaxStats
    # sha256 of the training design matrix, used to pair model, data and state files
    train_digest: str = field(default="", compare=False)

    @property
    def n_features(self):
        return self.input_stats.lo.shape[0]

    @property
    def n_feature_nodes(self):
        return sum(b.n_nodes for b in self.feature_blocks)

    @property
    def n_enhancement_nodes(self):
        return sum(b.n_nodes for b in self.enhancement_blocks)

    @property
    def n_cols(self):
        return self.n_feature_nodes + self.n_enhancement_nodes


def tansig(v):
    return 2.0 / (1.0 + np.exp(-2.0 * v)) - 1.0


def _activate(raw, scale, zoom):
    # tansig(raw / scale * zoom), overwriting raw
    raw /= scale
    raw *= -2.0 * zoom
    with np.errstate(over="ignore"):
        np.exp(raw, out=raw)
    raw += 1.0
    np.divide(2.0, raw, out=raw)
    raw -= 1.0
    return raw


def _augment(x):
    return np.hstack([x, np.ones((x.shape[0], 1))])


def orthonormal_random(rows, cols, rng):
    """Gaussian matrix with orthonormal columns (``rows >= cols``) or
    orthonormal rows (``rows < cols``)."""
    if rows >= cols:
        q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
        return np.ascontiguousarray(q * np.where(np.diag(r) < 0, -1.0, 1.0))
    q, r = np.linalg.qr(rng.standard_normal((cols, rows)))
    return np.ascontiguousarray((q * np.where(np.diag(r) < 0, -1.0, 1.0)).T)


def build_feature_window(x_aug, cfg, window_index, n_nodes=None):
    """One sparse random feature window and its nodes on ``x_aug``.

    A Gaussian projection of the input is min-max normalized, a lasso
    autoencoder maps it back to the input, and the transposed lasso weights
    become the window weights. Node outputs are min-max normalized with
    the statistics recorded in the window.
    """
    x_aug = as_matrix(x_aug, "x_aug")
    if not np.all(x_aug[:, -1] == 1.0):
        raise PreconditionError("x_aug must end with a column of ones")
    n_nodes = cfg.n1 if n_nodes is None else n_nodes
    rng = block_rng(cfg.seed, FEATURE, window_index)
    w_e = rng.standard_normal((x_aug.shape[1], n_nodes))
    projected = x_aug @ w_e
    a1 = minmax_fit(projected).apply(projected)
    problem = LassoProblem(a1, x_aug, cfg.lasso_lambda, cfg.lasso_max_iters, cfg.lasso_tol)
    w_z = np.ascontiguousarray(lasso_solve(problem).T)
    stats = minmax_fit(x_aug @ w_z)
    window = FeatureWindow(w_e, w_z, stats.lo, stats.hi)
    return window, window.nodes(x_aug)


def build_fuzzy_window(x_aug, cfg, window_index, n_nodes=None):
    """Fuzzy-subsystem counterpart of :func:`build_feature_window`."""
    x_aug = as_matrix(x_aug, "x_aug")
    n_nodes = cfg.n1 if n_nodes is None else n_nodes
    x = x_aug[:, :-1]
    sub = build_fuzzy_subsystem(x, n_nodes, block_seed(cfg.seed, FEATURE, window_index))
    stats = minmax_fit(fuzzy_feature_nodes(x, sub))
    window = FuzzyWindow(sub, stats.lo, stats.hi)
    return window, window.nodes(x_aug)


def build_enhancement(z, cfg, block_index=0, n_nodes=None):
    """Enhancement block on feature nodes ``z``.

    The pre-activation ``[z, 1] W_h`` is divided by its largest magnitude on
    the training data (frozen as ``train_scale``) and multiplied by
    ``cfg.zoom`` before the tansig activation.
    """
    z = as_matrix(z, "z")
    if z.size == 0:
        raise PreconditionError("enhancement input is empty")
    if not np.any(z):
        raise DegenerateInputError("feature nodes are all zero; enhancement scale is undefined")
    n_nodes = cfg.n3 if n_nodes is None else n_nodes
    h = _augment(z)
    w_h = orthonormal_random(h.shape[1], n_nodes, block_rng(cfg.seed, ENHANCEMENT, block_index))
    raw = h @ w_h
    del h
    scale = float(np.max(np.abs(raw)))
    if scale == 0.0:
        raise DegenerateInputError("enhancement pre-activation is identically zero")
    layer = EnhancementLayer(w_h, scale)
    return layer, _activate(raw, scale, cfg.zoom)


def _build_feature_block(x_aug, cfg, index, n_nodes):
    if cfg.feature_mode == "fuzzy_ts":
        return build_fuzzy_window(x_aug, cfg, index, n_nodes)
    return build_feature_window(x_aug, cfg, index, n_nodes)


def _check_dataset(ds):
    if ds.n_classes < 2:
        raise PreconditionError("training needs at least two classes")
    missing = [c for c, n in zip(ds.class_labels, ds.y_onehot.sum(axis=0)) if n == 0]
    if missing:
        raise PreconditionError(f"classes without training samples: {missing}")


def data_digest(x):
    return hashlib.sha256(np.ascontiguousarray(x, dtype="<f8").tobytes()).hexdigest()


def train(ds, cfg, layout=None, with_state=True):
    """Train a network on ``ds``.

    Parameters
    ----------
    ds : Dataset
    cfg : NetworkConfig
    layout : sequence of (kind, n_nodes), optional
        Block layout; defaults to ``cfg.initial_layout()``. Passing the
        layout of an incrementally grown model rebuilds the same network
        from scratch, drawing the same random blocks.
    with_state : bool
        Also return the :class:`PinvState` needed for increments.

    Returns
    -------
    model : TrainedModel
    state : PinvState or None
    """
    _check_dataset(ds)
    if not np.all(np.isfinite(ds.x)):
        raise DataError("features contain non-finite values")
    layout = tuple((str(k), int(n)) for k, n in (cfg.initial_layout() if layout is None else layout))
    if not layout or layout[0][0] != FEATURE:
        raise PreconditionError("layout must start with a feature block")
    for kind, n in layout:
        if kind not in (FEATURE, ENHANCEMENT) or n < 1:
            raise PreconditionError(f"invalid layout entry {(kind, n)}")

    stats = minmax_fit(ds.x)
    x_aug = _augment(stats.apply(ds.x))
    a = np.empty((ds.n_samples, sum(n for _, n in layout)))
    features, enhancements, z_blocks = [], [], []
    col = 0
    for kind, n in layout:
        if kind == FEATURE:
            block, nodes = _build_feature_block(x_aug, cfg, len(features), n)
            features.append(block)
            z_blocks.append(nodes)
        else:
            block, nodes = build_enhancement(np.hstack(z_blocks), cfg, len(enhancements), n)
            enhancements.append(block)
        a[:, col:col + n] = nodes
        col += n
        del nodes
    del x_aug, z_blocks
    w_out = np.ascontiguousarray(ridge_solve(a, ds.y_onehot, cfg.ridge_lambda))
    model = TrainedModel(
        cfg, layout, tuple(features), tuple(enhancements), w_out,
        ds.class_labels, stats, data_digest(ds.x),
    )
    state = pinv_state(a, cfg.pinv_lambda) if with_state else None
    return model, state


def _feature_nodes(m, x_aug):
    return [b.nodes(x_aug) for b in m.feature_blocks]


def network_input(m, x):
    """The network input ``A`` of model ``m`` for raw samples ``x``."""
    x = as_matrix(x, "x")
    if x.shape[1] != m.n_features:
        raise ShapeMismatchError(
            f"feature mismatch: model expects {m.n_features} features, got {x.shape[1]}"
        )
    x_aug = _augment(m.input_stats.apply(x))
    z_blocks = _feature_nodes(m, x_aug)
    z = np.hstack(z_blocks)
    a = np.empty((x.shape[0], m.n_cols))
    col, fi, ei = 0, 0, 0
    for kind, n in m.layout:
        if kind == FEATURE:
            a[:, col:col + n] = z_blocks[fi]
            fi += 1
        else:
            a[:, col:col + n] = m.enhancement_blocks[ei].nodes(z, m.config.zoom)
            ei += 1
        col += n
    return a


def decide(m, scores):
    """Argmax decision; ties go to the lowest class index."""
    return [m.class_labels[i] for i in np.argmax(scores, axis=1)]


def predict(m, x):
    """Class labels and raw output scores (s x k) for samples ``x``."""
    scores = network_input(m, x) @ m.w_out
    return decide(m, scores), scores


def _check_state(m, st, ds):
    if st.a.shape != (ds.n_samples, m.n_cols):
        raise StateMismatchError(
            f"state input is {st.a.shape}, expected {(ds.n_samples, m.n_cols)} for this model and data"
        )
    if m.train_digest and data_digest(ds.x) != m.train_digest:
        raise StateMismatchError("dataset differs from the one the model was trained on")
    if tuple(ds.class_labels) != tuple(m.class_labels):
        raise StateMismatchError("dataset classes differ from the model's classes")


def _grow(m, st, ds, n_feat, n_enh):
    _check_state(m, st, ds)
    cfg = m.config
    x_aug = _augment(m.input_stats.apply(ds.x))
    z_blocks = _feature_nodes(m, x_aug)
    features, enhancements, layout = list(m.feature_blocks), list(m.enhancement_blocks), list(m.layout)
    new_cols = []
    if n_feat > 0:
        block, nodes = _build_feature_block(x_aug, cfg, len(features), n_feat)
        features.append(block)
        z_blocks.append(nodes)
        new_cols.append(nodes)
        layout.append((FEATURE, n_feat))
    if n_enh > 0:
        block, nodes = build_enhancement(np.hstack(z_blocks), cfg, len(enhancements), n_enh)
        enhancements.append(block)
        new_cols.append(nodes)
        layout.append((ENHANCEMENT, n_enh))
    # one block update for both kinds keeps a single extra copy of the state alive
    st = greville_append(st, np.hstack(new_cols))
    model = replace(
        m,
        layout=tuple(layout),
        feature_blocks=tuple(features),
        enhancement_blocks=tuple(enhancements),
        w_out=st.weights(ds.y_onehot),
    )
    return model, st


def add_enhancement_nodes(m, st, ds, count):
    """Append ``count`` enhancement nodes and update the output weights
    through the pseudoinverse update (no retraining)."""
    if count < 0:
        raise PreconditionError("count must be non-negative")
    if count == 0:
        return m, st
    return _grow(m, st, ds, 0, count)


def add_feature_and_enhancement(m, st, ds, n_feat, n_enh):
    """Append one feature window of ``n_feat`` nodes, then ``n_enh``
    enhancement nodes fed by all feature nodes including the new ones."""
    if n_feat < 0 or n_enh < 0:
        raise PreconditionError("node counts must be non-negative")
    if n_feat == 0:
        return add_enhancement_nodes(m, st, ds, n_enh)
    return _grow(m, st, ds, n_feat, n_enh)
