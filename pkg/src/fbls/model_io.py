"""Binary model and pseudoinverse-state files.

Both files share one layout::

    magic (4 bytes) | version u32 LE | header length u64 LE | header (UTF-8 JSON)
    then each matrix as: rows u64 LE | cols u64 LE | rows*cols float64 LE, row-major

The model file (magic ``FBLS``) stores the input statistics, every block's
parameters and the output weights. The state file (magic ``FBLP``) stores
``A`` and its pseudoinverse. Both headers carry a ``link`` digest computed
from the model, so a state file written for another model is detected.
"""
import hashlib
import json
import os
import struct
from dataclasses import asdict, fields

import numpy as np

from .bls import (
    ENHANCEMENT, FEATURE, EnhancementLayer, FeatureWindow, FuzzyWindow, NetworkConfig, TrainedModel,
)
from .data import MinMaxStats
from .errors import DataError, StateMismatchError
from .fuzzy import FuzzySubsystem
from .linalg import PinvState

MODEL_MAGIC = b"FBLS"
STATE_MAGIC = b"FBLP"
FORMAT_VERSION = 1
STATE_SUFFIX = ".fblp"

_PREFIX = struct.Struct("<4sIQ")
_DIMS = struct.Struct("<QQ")
# rows written per chunk when a matrix needs converting to row-major
_CHUNK_ROWS = 4096


def state_path(model_path):
    """Sibling state path: ``m.fbls`` -> ``m.fblp``."""
    root, _ = os.path.splitext(os.fspath(model_path))
    return root + STATE_SUFFIX


# ------------------------------------------------------------ low level

def _write_matrix(fh, m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    fh.write(_DIMS.pack(*m.shape))
    if m.flags.c_contiguous and m.dtype.byteorder in "=<":
        fh.write(memoryview(m).cast("B"))
        return
    for start in range(0, m.shape[0], _CHUNK_ROWS):
        fh.write(np.ascontiguousarray(m[start:start + _CHUNK_ROWS], dtype="<f8").tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"truncated file while reading {what}")
    return buf


def _read_matrix(fh, what="matrix"):
    rows, cols = _DIMS.unpack(_read_exact(fh, _DIMS.size, what))
    out = np.empty((rows, cols), dtype="<f8")
    view = memoryview(out).cast("B")
    if fh.readinto(view) != view.nbytes:
        raise DataError(f"truncated file while reading {what}")
    return out.astype(np.float64, copy=False)


def _write_header(fh, magic, header):
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    fh.write(_PREFIX.pack(magic, FORMAT_VERSION, len(blob)))
    fh.write(blob)


def _read_header(fh, magic):
    raw = fh.read(_PREFIX.size)
    if len(raw) != _PREFIX.size:
        raise DataError("file too short for a header")
    got, version, length = _PREFIX.unpack(raw)
    if got != magic:
        raise DataError(f"bad magic {got!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported format version {version}")
    try:
        return json.loads(_read_exact(fh, length, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt header: {exc}") from None


def _atomic(path, write):
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


# ------------------------------------------------------------ model

def _model_matrices(m):
    yield m.input_stats.lo
    yield m.input_stats.hi
    for b in m.feature_blocks:
        if isinstance(b, FuzzyWindow):
            yield from (b.subsystem.centers, b.subsystem.sigmas, b.subsystem.consequents)
        else:
            yield from (b.w_e, b.w_z)
        yield from (b.node_min, b.node_max)
    for b in m.enhancement_blocks:
        yield b.w_h
    yield m.w_out


def link_digest(m):
    """Digest tying a model to its state file: layout, data digest and
    output weights."""
    h = hashlib.sha256()
    h.update(json.dumps([list(e) for e in m.layout]).encode())
    h.update(m.train_digest.encode())
    h.update(_DIMS.pack(*m.w_out.shape))
    h.update(np.ascontiguousarray(m.w_out, dtype="<f8").tobytes())
    return h.hexdigest()


def _model_header(m):
    return {
        "config": asdict(m.config),
        "feature_mode": m.config.feature_mode,
        "layout": [list(e) for e in m.layout],
        "class_labels": list(m.class_labels),
        "dims": {
            "n_features": m.n_features,
            "n_feature_nodes": m.n_feature_nodes,
            "n_enhancement_nodes": m.n_enhancement_nodes,
            "n_classes": len(m.class_labels),
        },
        "feature_kinds": ["fuzzy_ts" if isinstance(b, FuzzyWindow) else "random_sparse"
                          for b in m.feature_blocks],
        "train_scales": [b.train_scale for b in m.enhancement_blocks],
        "train_digest": m.train_digest,
        "link": link_digest(m),
    }


def write_model(fh, m):
    _write_header(fh, MODEL_MAGIC, _model_header(m))
    for mat in _model_matrices(m):
        _write_matrix(fh, mat)


def _row(mat):
    return mat.reshape(-1)


def read_model(fh):
    """Read a model; returns ``(model, link)``."""
    h = _read_header(fh, MODEL_MAGIC)
    try:
        known = {f.name for f in fields(NetworkConfig)}
        cfg = NetworkConfig(**{k: v for k, v in h["config"].items() if k in known})
        layout = tuple((str(k), int(n)) for k, n in h["layout"])
        kinds, scales = h["feature_kinds"], h["train_scales"]
        classes = tuple(h["class_labels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"corrupt model header: {exc}") from None
    n_feat_blocks = sum(1 for k, _ in layout if k == FEATURE)
    n_enh_blocks = sum(1 for k, _ in layout if k == ENHANCEMENT)
    if len(kinds) != n_feat_blocks or len(scales) != n_enh_blocks:
        raise DataError("model header block counts disagree with its layout")

    stats = MinMaxStats(_row(_read_matrix(fh, "input minimum")), _row(_read_matrix(fh, "input maximum")))
    features = []
    for kind in kinds:
        if kind == "fuzzy_ts":
            sub = FuzzySubsystem(*(_read_matrix(fh, "fuzzy subsystem") for _ in range(3)))
            features.append(FuzzyWindow(sub, _row(_read_matrix(fh)), _row(_read_matrix(fh))))
        else:
            w_e, w_z = _read_matrix(fh, "w_e"), _read_matrix(fh, "w_z")
            features.append(FeatureWindow(w_e, w_z, _row(_read_matrix(fh)), _row(_read_matrix(fh))))
    enhancements = [EnhancementLayer(_read_matrix(fh, "w_h"), float(s)) for s in scales]
    w_out = _read_matrix(fh, "w_out")
    if fh.read(1):
        raise DataError("trailing bytes after the last matrix")

    model = TrainedModel(cfg, layout, tuple(features), tuple(enhancements), w_out, classes, stats,
                         h.get("train_digest", ""))
    if w_out.shape != (model.n_cols, len(classes)):
        raise DataError(f"w_out is {w_out.shape}, expected {(model.n_cols, len(classes))}")
    if link_digest(model) != h["link"]:
        raise DataError("model checksum does not match its contents")
    return model, h["link"]


# ------------------------------------------------------------ state

def write_state(fh, st, link):
    _write_header(fh, STATE_MAGIC, {"lam": st.lam, "link": link})
    _write_matrix(fh, st.a)
    _write_matrix(fh, st.a_pinv)


def read_state(fh):
    """Read a state file; returns ``(state, link)``."""
    h = _read_header(fh, STATE_MAGIC)
    a = _read_matrix(fh, "A")
    a_pinv = _read_matrix(fh, "A+")
    if fh.read(1):
        raise DataError("trailing bytes after the last matrix")
    if a_pinv.shape != a.shape[::-1]:
        raise DataError(f"state matrices disagree: A is {a.shape}, A+ is {a_pinv.shape}")
    return PinvState(a, a_pinv, float(h["lam"])), h["link"]


# ------------------------------------------------------------ paths

def save_model(m, path, state=None):
    """Write ``path`` and, with ``state``, its sibling state file."""
    link = link_digest(m)
    if state is not None:
        _atomic(state_path(path), lambda fh: write_state(fh, state, link))
    _atomic(path, lambda fh: write_model(fh, m))


def load_model(path):
    with open(path, "rb") as fh:
        return read_model(fh)[0]


def load_model_and_state(path, state_file=None):
    """Load a model plus its state, checking that they belong together."""
    with open(path, "rb") as fh:
        model, link = read_model(fh)
    state_file = state_path(path) if state_file is None else state_file
    with open(state_file, "rb") as fh:
        st, state_link = read_state(fh)
    if state_link != link:
        raise StateMismatchError(f"{state_file} was not written for {path}")
    if st.a.shape[1] != model.n_cols:
        raise StateMismatchError(f"state has {st.a.shape[1]} columns, model has {model.n_cols}")
    return model, st
