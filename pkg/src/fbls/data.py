"""Datasets: CSV ingestion, min-max normalization, stratified splitting and
a synthetic NIR-like spectrum generator."""
import csv
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DataError, PreconditionError
from .linalg import as_matrix


def one_hot(labels, class_labels):
    index = {c: i for i, c in enumerate(class_labels)}
    y = np.zeros((len(labels), len(class_labels)))
    try:
        y[np.arange(len(labels)), [index[l] for l in labels]] = 1.0
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]!r} is not among the classes") from None
    return y


@dataclass(frozen=True)
class Dataset:
    """Samples ``x`` (s x f) with string labels.

    ``class_labels`` defaults to the sorted distinct labels; ``y_onehot``
    columns follow that order.
    """

    x: np.ndarray
    labels: tuple
    class_labels: tuple = None
    feature_grid: np.ndarray = None
    y_onehot: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = as_matrix(self.x, "x")
        labels = tuple(str(l) for l in self.labels)
        if len(labels) != x.shape[0]:
            raise DataError(f"{len(labels)} labels for {x.shape[0]} samples")
        classes = tuple(sorted(set(labels))) if self.class_labels is None else tuple(self.class_labels)
        if list(classes) != sorted(set(classes)):
            raise DataError("class_labels must be distinct and sorted")
        grid = None if self.feature_grid is None else np.asarray(self.feature_grid, dtype=np.float64)
        if grid is not None and grid.shape != (x.shape[1],):
            raise DataError(f"feature_grid has {grid.size} entries for {x.shape[1]} features")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_labels", classes)
        object.__setattr__(self, "feature_grid", grid)
        object.__setattr__(self, "y_onehot", one_hot(labels, classes))

    @property
    def n_samples(self):
        return self.x.shape[0]

    @property
    def n_features(self):
        return self.x.shape[1]

    @property
    def n_classes(self):
        return len(self.class_labels)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.x[idx], tuple(self.labels[i] for i in idx), self.class_labels, self.feature_grid)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        grids_equal = (self.feature_grid is None and other.feature_grid is None) or (
            self.feature_grid is not None
            and other.feature_grid is not None
            and np.array_equal(self.feature_grid, other.feature_grid)
        )
        return (
            self.labels == other.labels
            and self.class_labels == other.class_labels
            and np.array_equal(self.x, other.x)
            and grids_equal
        )

    __hash__ = None


# ---------------------------------------------------------------- CSV I/O

def read_table(path, label_column="label", require_label=True):
    """Parse a numeric CSV table.

    Returns ``(x, labels, feature_names)``; ``labels`` is ``None`` when the
    label column is absent and ``require_label`` is false.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column in header:
            label_idx = header.index(label_column)
        elif require_label:
            raise DataError(f"{path}: label column {label_column!r} not found in header")
        else:
            label_idx = None
        feat_idx = [i for i in range(len(header)) if i != label_idx]
        names = [header[i] for i in feat_idx]
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}"
                )
            values = []
            for i in feat_idx:
                cell = row[i].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {header[i]!r}: non-numeric value {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}: row {lineno}, column {header[i]!r}: non-finite value {cell!r}"
                    )
                values.append(v)
            rows.append(values)
            if label_idx is not None:
                labels.append(row[label_idx].strip())
    x = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_idx))
    return x, (labels if label_idx is not None else None), names


def _grid_from_names(names):
    try:
        grid = np.array([float(n) for n in names])
    except ValueError:
        return None
    return grid if np.all(np.isfinite(grid)) else None


def load_csv(path, label_column="label"):
    """Load a labelled dataset. Wavenumber-like numeric headers become the
    ``feature_grid``."""
    x, labels, names = read_table(path, label_column)
    if not labels:
        raise DataError(f"{path}: no data rows")
    return Dataset(x, labels, feature_grid=_grid_from_names(names))


def feature_names(ds):
    if ds.feature_grid is not None:
        return [repr(float(v)) for v in ds.feature_grid]
    return [f"f{i}" for i in range(ds.n_features)]


def write_csv(fh, ds, label_column="label"):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([label_column] + feature_names(ds))
    for label, row in zip(ds.labels, ds.x):
        writer.writerow([label] + [repr(float(v)) for v in row])


def save_csv(ds, path, label_column="label"):
    """Write ``ds`` so that :func:`load_csv` reproduces it exactly."""
    atomic_write(path, lambda fh: write_csv(fh, ds, label_column))


# ---------------------------------------------------------- normalization

@dataclass(frozen=True)
class MinMaxStats:
    lo: np.ndarray
    hi: np.ndarray

    def apply(self, x):
        """Map onto [0, 1] with the fitted ranges; constant features map
        to 0 and out-of-range values are clamped."""
        x = as_matrix(x, "x")
        if x.shape[1] != self.lo.shape[0]:
            raise PreconditionError(f"expected {self.lo.shape[0]} columns, got {x.shape[1]}")
        span = self.hi - self.lo
        live = span > 0
        out = np.zeros_like(x)
        out[:, live] = (x[:, live] - self.lo[live]) / span[live]
        return np.clip(out, 0.0, 1.0)


def minmax_fit(x):
    x = as_matrix(x, "x")
    if x.size == 0:
        raise PreconditionError("cannot fit min-max statistics on an empty matrix")
    return MinMaxStats(x.min(axis=0), x.max(axis=0))


def minmax_fit_apply(x):
    stats = minmax_fit(x)
    return stats.apply(x), stats


# -------------------------------------------------------------- splitting

def split(ds, test_fraction, seed):
    """Seeded stratified train/test split.

    Each class contributes ``round(n_c * test_fraction)`` samples to the
    test set; both sides must keep at least one sample of every class.
    """
    if not 0 < test_fraction < 1:
        raise PreconditionError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(ds.n_samples)
    labels = np.array(ds.labels, dtype=object)[order]
    test_mask = np.zeros(ds.n_samples, dtype=bool)
    for c in ds.class_labels:
        pos = np.flatnonzero(labels == c)
        n_test = int(math.floor(len(pos) * test_fraction + 0.5))
        if n_test < 1 or n_test > len(pos) - 1:
            raise PreconditionError(
                f"class {c!r} has {len(pos)} samples; too few to appear in both splits"
            )
        test_mask[pos[:n_test]] = True
    return ds.subset(order[~test_mask]), ds.subset(order[test_mask])


# ------------------------------------------------------ synthetic spectra

@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic NIR-like absorbance dataset.

    ``samples_per_class`` is either one count for every class or one count
    per class.
    """

    n_classes: int = 8
    samples_per_class: tuple = (500,)
    n_features: int = 256
    wavenumber_range: tuple = (3800.0, 10000.0)
    bands_per_class: int = 3
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        spc = self.samples_per_class
        spc = (int(spc),) if np.isscalar(spc) else tuple(int(v) for v in spc)
        object.__setattr__(self, "samples_per_class", spc)
        object.__setattr__(self, "wavenumber_range", tuple(float(v) for v in self.wavenumber_range))
        if self.n_classes < 2:
            raise PreconditionError("n_classes must be >= 2")
        lo, hi = self.wavenumber_range
        if not lo < hi:
            raise PreconditionError("wavenumber_range must satisfy lo < hi")
        if len(spc) not in (1, self.n_classes) or min(spc) < 1:
            raise PreconditionError("samples_per_class needs one positive count or one per class")
        if self.n_features < 2 or self.bands_per_class < 1 or self.noise_sigma < 0:
            raise PreconditionError("invalid synthetic spectrum parameters")

    def counts(self):
        spc = self.samples_per_class
        return spc * self.n_classes if len(spc) == 1 else spc

    @classmethod
    def from_mapping(cls, values):
        """Build from string values, e.g. a parsed key=value file."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise PreconditionError(f"unknown synthetic-spec key {key!r}")
            raw = str(raw)
            if key == "samples_per_class":
                kwargs[key] = tuple(int(v) for v in raw.split(","))
            elif key == "wavenumber_range":
                kwargs[key] = tuple(float(v) for v in raw.split(","))
            elif key == "noise_sigma":
                kwargs[key] = float(raw)
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs)


def class_names(n_classes):
    width = len(str(n_classes - 1))
    return [f"class_{i:0{width}d}" for i in range(n_classes)]


def gen_synth_spectra(spec):
    """Generate a dataset of smooth absorbance curves.

    All classes share a cubic-spline baseline. Each class adds
    ``bands_per_class`` Gaussian absorption bands at its own seeded
    positions, widths and heights. Every sample rescales each band by up to
    +-10 %, tilts the baseline and adds white noise of ``noise_sigma``.
    """
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.wavenumber_range
    grid = np.linspace(lo, hi, spec.n_features)
    t = (grid - lo) / (hi - lo)

    knots = np.linspace(0.0, 1.0, 7)
    baseline = CubicSpline(knots, 0.3 + 0.25 * rng.random(knots.size))(t)

    centers = rng.uniform(0.05, 0.95, size=(spec.n_classes, spec.bands_per_class))
    widths = rng.uniform(0.01, 0.04, size=(spec.n_classes, spec.bands_per_class))
    heights = rng.uniform(0.05, 0.25, size=(spec.n_classes, spec.bands_per_class))
    bands = np.exp(-0.5 * ((t[None, None, :] - centers[..., None]) / widths[..., None]) ** 2)

    names = class_names(spec.n_classes)
    xs, labels = [], []
    for c, n in enumerate(spec.counts()):
        jitter = rng.uniform(0.9, 1.1, size=(n, spec.bands_per_class))
        tilt = rng.normal(0.0, 0.02, size=(n, 1)) * (t[None, :] - 0.5)
        noise = rng.normal(0.0, 1.0, size=(n, spec.n_features)) * spec.noise_sigma
        xs.append(baseline[None, :] + (jitter * heights[c]) @ bands[c] + tilt + noise)
        labels.extend([names[c]] * n)
    return Dataset(np.vstack(xs), labels, feature_grid=grid)


def read_kv(path):
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}: line {lineno} is not key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def write_kv(fh, values):
    for key, value in values.items():
        fh.write(f"{key}={value}\n")


def atomic_write(path, writer, mode="w"):
    """Write through a temp file in the same directory, then rename."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    kwargs = {"encoding": "utf-8", "newline": ""} if "b" not in mode else {}
    try:
        with open(tmp, mode, **kwargs) as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise

