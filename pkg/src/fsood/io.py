"""NPY v1.0 matrix files and JSON bundle manifests."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from numpy.lib import format as npformat

from .core import DatasetBundle, OODSet, check_features, check_labels, check_logits, check_scores
from .errors import MatrixFormatError, ValidationError

# kind -> (dtype descr, ndim)
KINDS = {
    "feature": ("<f4", 2),
    "logit": ("<f4", 2),
    "label": ("<i8", 1),
    "score": ("<f8", 1),
    "param": ("<f8", None),
}


def write_npy(path, arr: np.ndarray) -> None:
    """Write ``arr`` as an NPY v1.0 file (C order, little-endian)."""
    arr = np.ascontiguousarray(arr)
    if arr.dtype.itemsize > 1:
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    with open(path, "wb") as fh:
        npformat.write_array(fh, arr, version=(1, 0), allow_pickle=False)


def read_npy(path, descr: str | None = None) -> np.ndarray:
    """Read an NPY v1.0 file, optionally requiring a dtype descriptor such as ``'<f4'``."""
    path = Path(path)
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise MatrixFormatError(f"{path}: cannot open ({e.strerror})") from e
    with fh:
        try:
            version = npformat.read_magic(fh)
        except ValueError as e:
            raise MatrixFormatError(f"{path}: malformed header: {e}") from e
        if version != (1, 0):
            raise MatrixFormatError(f"{path}: unsupported NPY version {version}, expected (1, 0)")
        try:
            shape, fortran, dtype = npformat.read_array_header_1_0(fh)
        except ValueError as e:
            raise MatrixFormatError(f"{path}: malformed header: {e}") from e
        if fortran:
            raise MatrixFormatError(f"{path}: fortran_order must be False")
        if dtype.hasobject:
            raise MatrixFormatError(f"{path}: object arrays are not supported")
        if descr is not None and dtype.str != descr:
            raise MatrixFormatError(f"{path}: dtype mismatch, expected {descr} got {dtype.str}")
        count = int(np.prod(shape, dtype=np.int64))
        payload = fh.read(count * dtype.itemsize)
        if len(payload) != count * dtype.itemsize:
            raise MatrixFormatError(f"{path}: truncated payload ({len(payload)} of {count * dtype.itemsize} bytes)")
        if fh.read(1):
            raise MatrixFormatError(f"{path}: trailing bytes after payload")
    return np.frombuffer(bytearray(payload), dtype=dtype).reshape(shape)


def load_matrix(path, kind: str, n_classes: int | None = None) -> np.ndarray:
    """Load and validate a feature, logit, label, score or parameter file."""
    if kind not in KINDS:
        raise ValueError(f"unknown matrix kind {kind!r}; expected one of {sorted(KINDS)}")
    descr, ndim = KINDS[kind]
    arr = read_npy(path, descr)
    if ndim is not None and arr.ndim != ndim:
        raise MatrixFormatError(f"{path}: expected {ndim}-D {kind} data, got shape {arr.shape}")
    name = str(path)
    if kind == "feature":
        return check_features(arr, name)
    if kind == "logit":
        return check_logits(arr, name, n_classes=n_classes)
    if kind == "label":
        return check_labels(arr, name, n_classes=n_classes)
    if kind == "score":
        return check_scores(arr, name)
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name}: non-finite parameter value")
    return arr


def save_matrix(m, path, kind: str | None = None) -> None:
    """Save a matrix; ``kind`` fixes the on-disk dtype, otherwise it follows ``m``.

    Without a kind, integer data is stored as ``<i8``, float32 as ``<f4`` and
    any other float as ``<f8``.
    """
    m = np.asarray(m)
    if kind is not None:
        if kind not in KINDS:
            raise ValueError(f"unknown matrix kind {kind!r}; expected one of {sorted(KINDS)}")
        descr = KINDS[kind][0]
    elif np.issubdtype(m.dtype, np.integer):
        descr = "<i8"
    elif m.dtype == np.float32:
        descr = "<f4"
    elif np.issubdtype(m.dtype, np.floating):
        descr = "<f8"
    else:
        raise ValidationError(f"unsupported dtype {m.dtype}")
    write_npy(path, m.astype(np.dtype(descr), copy=False))


# -- manifests --------------------------------------------------------------

_TRAIN_FIELDS = (
    ("train_orig", "feature"),
    ("train_ft", "feature"),
    ("train_labels", "label"),
    ("train_logits", "logit"),
    ("id_test_orig", "feature"),
    ("id_test_ft", "feature"),
    ("id_test_labels", "label"),
    ("id_test_logits", "logit"),
)
_OPTIONAL = {"train_logits", "id_test_logits"}


def load_bundle(manifest_path) -> DatasetBundle:
    """Read a JSON manifest mapping bundle fields to NPY files.

    Relative paths are resolved against the manifest's directory. Layout::

        {"n_classes": 10,
         "train_orig": "train_orig.npy", ..., "id_test_labels": "id_test_labels.npy",
         "ood_sets": [{"name": "far", "orig": "...", "ft": "...", "logits": "..."}]}
    """
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except OSError as e:
        raise MatrixFormatError(f"{manifest_path}: cannot read manifest ({e.strerror})") from e
    except json.JSONDecodeError as e:
        raise MatrixFormatError(f"{manifest_path}: invalid JSON: {e}") from e
    base = manifest_path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    missing = [f for f, _ in _TRAIN_FIELDS if f not in _OPTIONAL and f not in doc]
    if "ood_sets" not in doc:
        missing.append("ood_sets")
    if missing:
        raise MatrixFormatError(f"{manifest_path}: manifest missing fields {', '.join(missing)}")

    fields = {}
    for fname, kind in _TRAIN_FIELDS:
        if doc.get(fname) is not None:
            fields[fname] = read_npy(resolve(doc[fname]), KINDS[kind][0])
    ood_sets = []
    for entry in doc["ood_sets"]:
        logits = entry.get("logits")
        ood_sets.append(
            OODSet(
                name=str(entry["name"]),
                orig=read_npy(resolve(entry["orig"]), "<f4"),
                ft=read_npy(resolve(entry["ft"]), "<f4"),
                logits=None if logits is None else read_npy(resolve(logits), "<f4"),
            )
        )
    return DatasetBundle(ood_sets=tuple(ood_sets), n_classes=doc.get("n_classes"), **fields)


def save_bundle(bundle: DatasetBundle, out_dir) -> Path:
    """Write every bundle array plus ``manifest.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    manifest = {"n_classes": bundle.num_classes}
    for fname, kind in _TRAIN_FIELDS:
        arr = getattr(bundle, fname)
        if arr is None:
            continue
        save_matrix(arr, out_dir / f"{fname}.npy", kind)
        manifest[fname] = f"{fname}.npy"
    entries = []
    for s in bundle.ood_sets:
        entry = {"name": s.name}
        for part, arr in (("orig", s.orig), ("ft", s.ft), ("logits", s.logits)):
            if arr is None:
                continue
            fn = f"ood_{s.name}_{part}.npy"
            save_matrix(arr, out_dir / fn, "logit" if part == "logits" else "feature")
            entry[part] = fn
        entries.append(entry)
    manifest["ood_sets"] = entries
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
