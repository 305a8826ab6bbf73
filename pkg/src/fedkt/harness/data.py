"""Dataset ingestion (CSV, LIBSVM), writers, splits and synthetic tasks."""

from __future__ import annotations

import csv
import io
import math
import os
import shutil
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..domain import Dataset
from ..partition import largest_remainder


class DataFormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _as_float(token: str) -> Optional[float]:
    try:
        return float(token)
    except ValueError:
        return None


def _label_mapping(tokens: Sequence[str]) -> dict[str, int]:
    """Integer-valued labels map by numeric order; anything else by first appearance."""
    uniq = list(dict.fromkeys(tokens))
    nums = [_as_float(t) for t in uniq]
    if all(v is not None and float(v).is_integer() for v in nums):
        ordered = [t for _, t in sorted(zip(nums, uniq))]
        return {t: i for i, t in enumerate(ordered)}
    return {t: i for i, t in enumerate(uniq)}


def _label_names(mapping: dict[str, int]) -> tuple[str, ...]:
    return tuple(t for t, _ in sorted(mapping.items(), key=lambda kv: kv[1]))


def load_csv(path, header: Optional[bool] = None, labeled: bool = True) -> Dataset:
    """Last column is the label (unless ``labeled=False``).

    Columns with any non-numeric value are one-hot encoded, categories in
    first-appearance order. ``header=None`` treats the first row as a header
    when it fails to parse in a column that is numeric everywhere else.
    """
    rows: list[tuple[int, list[str]]] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            fields = [f.strip() for f in row]
            if not fields or all(f == "" for f in fields):
                continue
            rows.append((lineno, fields))
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    width = len(rows[0][1])
    for lineno, fields in rows:
        if len(fields) != width:
            raise DataFormatError(f"expected {width} fields, found {len(fields)}", lineno)

    n_feat = width - 1 if labeled else width
    if labeled and n_feat < 1:
        raise DataFormatError("need at least one feature column besides the label", rows[0][0])

    if header is None:
        header = False
        if len(rows) > 1:
            body = rows[1:]
            for c in range(n_feat):
                if all(_as_float(f[c]) is not None for _, f in body) and _as_float(rows[0][1][c]) is None:
                    header = True
                    break
    names = tuple(rows[0][1][:n_feat]) if header else tuple(f"x{c}" for c in range(n_feat))
    if header:
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: header but no data rows")

    blocks, feat_names = [], []
    for c in range(n_feat):
        col = [f[c] for _, f in rows]
        vals = [_as_float(v) for v in col]
        if all(v is not None for v in vals):
            blocks.append(np.array(vals, dtype=np.float64)[:, None])
            feat_names.append(names[c])
        else:
            cats = list(dict.fromkeys(col))
            index = {v: i for i, v in enumerate(cats)}
            onehot = np.zeros((len(col), len(cats)))
            onehot[np.arange(len(col)), [index[v] for v in col]] = 1.0
            blocks.append(onehot)
            feat_names.extend(f"{names[c]}={v}" for v in cats)
    X = np.hstack(blocks)
    if not labeled:
        return Dataset(X, None, 1, (), tuple(feat_names))
    tokens = [f[-1] for _, f in rows]
    for (lineno, _), tok in zip(rows, tokens):
        if tok == "":
            raise DataFormatError("empty label", lineno)
    mapping = _label_mapping(tokens)
    y = np.array([mapping[t] for t in tokens])
    return Dataset(X, y, len(mapping), _label_names(mapping), tuple(feat_names))


def load_libsvm(path, n_features: Optional[int] = None) -> Dataset:
    """``label idx:val ...`` lines with 1-based indices, densified.

    ``n_features`` fixes the dimension; an index beyond it is an error.
    """
    labels: list[str] = []
    entries: list[list[tuple[int, float]]] = []
    max_idx = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            row = []
            for tok in parts[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise DataFormatError(f"malformed feature {tok!r}", lineno)
                try:
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise DataFormatError(f"malformed feature {tok!r}", lineno) from None
                if idx < 1:
                    raise DataFormatError(f"feature index {idx} < 1", lineno)
                if n_features is not None and idx > n_features:
                    raise DataFormatError(f"feature index {idx} exceeds dimension {n_features}", lineno)
                row.append((idx, val))
                max_idx = max(max_idx, idx)
            labels.append(parts[0])
            entries.append(row)
    if not labels:
        raise DataFormatError(f"{path}: no data rows")
    dim = n_features if n_features is not None else max_idx
    X = np.zeros((len(labels), dim))
    for r, row in enumerate(entries):
        for idx, val in row:
            X[r, idx - 1] = val
    mapping = _label_mapping(labels)
    y = np.array([mapping[t] for t in labels])
    return Dataset(X, y, len(mapping), _label_names(mapping))


def load_dataset(path, format: Optional[str] = None, **kw) -> Dataset:
    """Load ``csv`` or ``libsvm`` (inferred from the extension when omitted)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if format is None:
        format = "libsvm" if path.suffix.lower() in (".libsvm", ".svm", ".txt") else "csv"
    if format == "csv":
        return load_csv(path, **kw)
    if format == "libsvm":
        return load_libsvm(path, **kw)
    raise ValueError(f"unknown format {format!r}")


def save_dataset(data: Dataset, path, format: str = "csv") -> None:
    """Write ``data`` so :func:`load_dataset` reads it back unchanged.

    Labels are written as integer ids, features with ``repr`` precision.
    """
    buf = io.StringIO()
    if format == "csv":
        for i in range(len(data)):
            fields = [repr(float(v)) for v in data.X[i]]
            if data.y is not None:
                fields.append(str(int(data.y[i])))
            buf.write(",".join(fields) + "\n")
    elif format == "libsvm":
        if data.y is None:
            raise ValueError("libsvm output needs labels")
        for i in range(len(data)):
            nz = np.flatnonzero(data.X[i])
            feats = " ".join(f"{j + 1}:{float(data.X[i, j])!r}" for j in nz)
            buf.write(f"{int(data.y[i])} {feats}".rstrip() + "\n")
    else:
        raise ValueError(f"unknown format {format!r}")
    atomic_write(path, buf.getvalue())


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def split_train_public_test(data: Dataset, fractions=(0.75, 0.125, 0.125), rng=None):
    """Seeded shuffle, then contiguous train/public/test blocks.

    Sizes use largest-remainder rounding (32561 rows -> 24421/4070/4070). The
    public block keeps its labels here; callers strip them before using it as
    the transfer set.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if len(fr) != 3 or np.any(fr <= 0) or not math.isclose(fr.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("fractions must be three positive numbers summing to 1")
    sizes = largest_remainder(fr, len(data))
    if np.any(sizes == 0):
        raise ValueError(f"split sizes {sizes.tolist()} leave a block empty")
    perm = rng.permutation(len(data))
    a, b = sizes[0], sizes[0] + sizes[1]
    return data.subset(perm[:a]), data.subset(perm[a:b]), data.subset(perm[b:])


# synthetic tasks ---------------------------------------------------------

def make_blobs(n: int = 1000, num_classes: int = 2, dim: int = 2, separation: float = 4.0,
               rng: Optional[np.random.Generator] = None) -> Dataset:
    """Isotropic unit-variance Gaussian blobs with centres ``separation`` apart."""
    rng = rng if rng is not None else np.random.default_rng(0)
    centres = np.zeros((num_classes, dim))
    for k in range(num_classes):
        angle = 2 * np.pi * k / num_classes
        centres[k, 0] = separation / 2 * np.cos(angle)
        if dim > 1:
            centres[k, 1] = separation / 2 * np.sin(angle)
    y = np.arange(n) % num_classes
    y = rng.permutation(y)
    X = centres[y] + rng.normal(size=(n, dim))
    return Dataset(X, y, num_classes)


def make_xor(n: int = 200, noise: float = 0.0, rng: Optional[np.random.Generator] = None) -> Dataset:
    """Uniform points in [-1, 1]^2 labelled by the sign of ``x0 * x1``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    X = rng.uniform(-1.0, 1.0, size=(n, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(np.int64)
    if noise > 0:
        flip = rng.random(n) < noise
        y = np.where(flip, 1 - y, y)
    return Dataset(X, y, 2)


SYNTHETIC_TASKS = {"blobs": make_blobs, "xor": make_xor}


# Adult ---------------------------------------------------------------------

ADULT_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data"
# mirror reachable through a PyPI index when the UCI host is not
ADULT_WHEEL = ("responsibly==0.1.2", "responsibly/dataset/adult/adult.data")


def fetch_adult(dest_dir, timeout: float = 30.0) -> Path:
    """Download UCI ``adult.data`` into ``dest_dir`` (idempotent).

    Tries the UCI URL first, then extracts the copy shipped inside the
    ``responsibly`` wheel via ``pip download``.
    """
    dest = Path(dest_dir) / "adult.data"
    if dest.exists() and dest.stat().st_size > 0:
        return dest
    dest.parent.mkdir(parents=True, exist_ok=True)
    errors = []
    try:
        with urllib.request.urlopen(ADULT_URL, timeout=timeout) as resp:
            atomic_write(dest, resp.read().decode("utf-8"))
        return dest
    except Exception as exc:  # network layouts vary; fall through to the wheel
        errors.append(f"{ADULT_URL}: {exc}")
    with tempfile.TemporaryDirectory() as tmp:
        proc = subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, ADULT_WHEEL[0]],
            capture_output=True, text=True,
        )
        wheels = list(Path(tmp).glob("*.whl"))
        if proc.returncode != 0 or not wheels:
            errors.append(f"pip download {ADULT_WHEEL[0]}: {proc.stderr.strip()[-300:]}")
            raise RuntimeError("could not fetch the Adult dataset:\n" + "\n".join(errors))
        with zipfile.ZipFile(wheels[0]) as zf, zf.open(ADULT_WHEEL[1]) as src:
            with open(str(dest) + ".tmp", "wb") as out:
                shutil.copyfileobj(src, out)
        os.replace(str(dest) + ".tmp", dest)
    return dest
