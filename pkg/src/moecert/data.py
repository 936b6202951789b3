"""Dataset loading, splitting, and standardization for binary tasks.

Every loader produces the same container: a float64 feature matrix and a
label vector in {-1, +1}. Supported sources are delimited text with a
header row, the MNIST IDX binary format restricted to a digit pair, the
headerless UCI heart-disease table, and a small versioned binary cache.
Splitting is a seeded shuffle; standardization uses train-split statistics
only, so the test split never leaks into the preprocessing.
"""

from __future__ import annotations

import csv
import gzip
import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import RandomSource

__all__ = [
    "Dataset",
    "SplitSpec",
    "StandardizeStats",
    "load_csv",
    "load_heart",
    "load_mnist_pair",
    "make_toy_dataset",
    "split",
    "standardize",
    "standardize_within_split",
    "save_dataset",
    "load_dataset",
]

CACHE_MAGIC = b"MOED"
CACHE_VERSION = 1

HEART_COLUMNS = (
    "age", "sex", "cp", "trestbps", "chol", "fbs", "restecg",
    "thalach", "exang", "oldpeak", "slope", "ca", "thal", "num",
)


@dataclass
class Dataset:
    """Feature matrix with {-1, +1} labels; immutable by convention."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] | None = None
    source_tag: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"features must be a nonempty (m, d) matrix, got shape {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError(
                f"labels of shape {self.labels.shape} do not match {self.features.shape[0]} rows"
            )
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must all be -1 or +1")
        if self.feature_names is not None:
            self.feature_names = tuple(self.feature_names)
            if len(self.feature_names) != self.features.shape[1]:
                raise ValueError("feature_names length does not match feature count")

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices, tag_suffix: str = "") -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(
            features=self.features[idx].copy(),
            labels=self.labels[idx].copy(),
            feature_names=self.feature_names,
            source_tag=self.source_tag + tag_suffix,
        )


@dataclass
class SplitSpec:
    """Seeded shuffle split; train gets the first ceil(train_fraction * m) rows."""

    train_fraction: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def _parse_cell(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _assemble_rows(
    rows: list[list[str]],
    names: list[str],
    label_idx: int,
    positive_label: str | None,
    negative_label: str | None,
    path,
) -> Dataset:
    """Shared row-to-matrix logic for the delimited-text loaders.

    A column counts as numeric if at least one row parses; rows with a
    missing or unparsable cell in a numeric column are dropped (counted in
    a warning), never imputed.
    """
    if (positive_label is None) == (negative_label is None):
        raise ValueError("exactly one of positive_label / negative_label must be given")
    width = len(names)
    feature_idx = [j for j in range(width) if j != label_idx]

    parsed: list[list[float | None]] = []
    labels_raw: list[str] = []
    for row in rows:
        if len(row) != width:
            parsed.append([None] * len(feature_idx))
            labels_raw.append("")
            continue
        parsed.append([_parse_cell(row[j].strip()) for j in feature_idx])
        labels_raw.append(row[label_idx].strip())

    numeric_col = [any(r[k] is not None for r in parsed) for k in range(len(feature_idx))]
    kept_cols = [k for k in range(len(feature_idx)) if numeric_col[k]]
    if not kept_cols:
        raise ValueError(f"{path}: no numeric feature columns found")

    features = []
    labels = []
    dropped = 0
    for r, lab in zip(parsed, labels_raw):
        vals = [r[k] for k in kept_cols]
        if any(v is None for v in vals) or lab == "":
            dropped += 1
            continue
        features.append(vals)
        if positive_label is not None:
            labels.append(1.0 if lab == positive_label else -1.0)
        else:
            labels.append(-1.0 if lab == negative_label else 1.0)
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} rows with missing or non-numeric fields")
    if not features:
        raise ValueError(f"{path}: no usable rows after dropping incomplete ones")

    return Dataset(
        features=np.array(features, dtype=np.float64),
        labels=np.array(labels, dtype=np.float64),
        feature_names=tuple(names[feature_idx[k]] for k in kept_cols),
        source_tag=str(path),
    )


def load_csv(
    path,
    label_column: str,
    positive_label: str | None = None,
    negative_label: str | None = None,
    delimiter: str = ",",
) -> Dataset:
    """Load a delimited text file with a header row into a Dataset.

    The label column maps to +1 where it equals positive_label and -1
    otherwise (or the mirror rule when negative_label is given instead).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        names = [c.strip() for c in header]
        if label_column not in names:
            raise ValueError(f"{path}: label column {label_column!r} not in header {names}")
        rows = [row for row in reader if row]
    return _assemble_rows(rows, names, names.index(label_column), positive_label, negative_label, path)


def load_heart(path, delimiter: str = ",") -> Dataset:
    """Load the headerless UCI Cleveland heart-disease table.

    The 14 standard columns are assumed; the multi-valued target in the
    last column is binarized as 0 -> -1 and {1, 2, 3, 4} -> +1. Rows with
    '?' placeholders are dropped by the numeric-cell rule.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh, delimiter=delimiter) if row]
    if not rows:
        raise ValueError(f"{path}: empty file")
    names = list(HEART_COLUMNS)
    label_idx = names.index("num")
    # Targets appear as 0..4 (sometimes as floats); binarize before assembly.
    for row in rows:
        if len(row) == len(names):
            cell = _parse_cell(row[label_idx].strip())
            row[label_idx] = "" if cell is None else ("absent" if cell == 0.0 else "present")
    return _assemble_rows(rows, names, label_idx, "present", None, path)


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic: int) -> np.ndarray:
    """Parse one IDX file: big-endian magic, dims, then unsigned bytes."""
    with _open_maybe_gzip(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic != expected_magic:
        raise ValueError(f"{path}: bad IDX magic {magic:#010x}, expected {expected_magic:#010x}")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise ValueError(f"{path}: truncated IDX dimension fields")
    dims = struct.unpack(f">{ndim}i", raw[4:header_end])
    count = int(np.prod(dims))
    body = np.frombuffer(raw, dtype=np.uint8, offset=header_end)
    if body.size != count:
        raise ValueError(f"{path}: IDX body has {body.size} bytes, header promises {count}")
    return body.reshape(dims)


def load_mnist_pair(images_path, labels_path, digit_a: int, digit_b: int) -> Dataset:
    """Load an MNIST image/label IDX pair restricted to two digits.

    Pixels are scaled to [0, 1]; examples of digit_a map to +1 and of
    digit_b to -1; all other digits are discarded. Gzipped files are
    detected by their magic bytes.
    """
    if digit_a == digit_b:
        raise ValueError("digit_a and digit_b must differ")
    if not (0 <= digit_a <= 9 and 0 <= digit_b <= 9):
        raise ValueError("digits must lie in 0..9")
    images = _read_idx(images_path, 0x00000803)
    labels = _read_idx(labels_path, 0x00000801)
    if images.ndim != 3:
        raise ValueError(f"{images_path}: expected 3-D image tensor, got shape {images.shape}")
    if labels.shape != (images.shape[0],):
        raise ValueError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}"
        )
    keep = (labels == digit_a) | (labels == digit_b)
    if not np.any(keep):
        raise ValueError(f"no examples labeled {digit_a} or {digit_b}")
    X = images[keep].reshape(int(keep.sum()), -1).astype(np.float64) / 255.0
    y = np.where(labels[keep] == digit_a, 1.0, -1.0)
    return Dataset(
        features=X,
        labels=y,
        source_tag=f"mnist:{digit_a}v{digit_b}",
    )


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Deterministic seeded shuffle split into (train, test)."""
    if data.m < 4:
        raise ValueError(f"need at least 4 examples to split, got {data.m}")
    rng = RandomSource(spec.seed)
    perm = rng.permutation(data.m)
    n_train = math.ceil(spec.train_fraction * data.m)
    if n_train >= data.m:
        n_train = data.m - 1
    return (
        data.subset(perm[:n_train], tag_suffix="[train]"),
        data.subset(perm[n_train:], tag_suffix="[test]"),
    )


@dataclass
class StandardizeStats:
    """Train-split feature means and scales; scale is 1 where std was 0."""

    mean: np.ndarray
    scale: np.ndarray


def standardize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset, StandardizeStats]:
    """Center and scale both splits using train-split statistics only."""
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    scale = np.where(std > 0.0, std, 1.0)
    stats = StandardizeStats(mean=mean, scale=scale)

    def apply(ds: Dataset) -> Dataset:
        return Dataset(
            features=(ds.features - mean) / scale,
            labels=ds.labels.copy(),
            feature_names=ds.feature_names,
            source_tag=ds.source_tag + "[std]",
        )

    return apply(train), apply(test), stats


def standardize_within_split(data: Dataset, spec: SplitSpec) -> Dataset:
    """Standardize a whole dataset using statistics of its would-be train split.

    The rows are standardized with mean/scale computed on the train side of
    the seeded split and then placed back at their original positions, so a
    later split with the same spec sees exactly the transformed train and
    test rows with no leakage.
    """
    train_part, test_part = split(data, spec)
    train_part, test_part, _ = standardize(train_part, test_part)
    rng = RandomSource(spec.seed)
    perm = rng.permutation(data.m)
    n_train = train_part.m
    features = np.empty_like(data.features)
    features[perm[:n_train]] = train_part.features
    features[perm[n_train:]] = test_part.features
    return Dataset(features, data.labels.copy(), feature_names=data.feature_names,
                   source_tag=data.source_tag + "[std]")


def make_toy_dataset(m: int = 200, d: int = 2, seed: int = 0, separation: float = 3.0) -> Dataset:
    """Two spherical Gaussians with balanced labels, separable along axis 0."""
    if m < 2 or d < 1:
        raise ValueError("need m >= 2 and d >= 1")
    rng = RandomSource(seed)
    half = m // 2
    labels = np.concatenate([np.ones(m - half), -np.ones(half)])
    center = np.zeros(d)
    center[0] = separation / 2.0
    features = rng.normal(0.0, 1.0, size=(m, d)) + labels[:, None] * center
    return Dataset(features, labels, source_tag=f"toy:m{m}:d{d}:s{seed}")


def save_dataset(data: Dataset, path) -> None:
    """Write the cache container: magic, version, m, d, doubles, label bytes."""
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack(">IQQ", CACHE_VERSION, data.m, data.d))
        fh.write(np.ascontiguousarray(data.features, dtype="<f8").tobytes())
        fh.write(data.labels.astype(np.int8).tobytes())


def load_dataset(path) -> Dataset:
    """Read a cache container written by save_dataset; names and tag are not stored."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            raise ValueError(f"{path}: bad cache magic {magic!r}")
        version, m, d = struct.unpack(">IQQ", fh.read(20))
        if version != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        features = np.frombuffer(fh.read(8 * m * d), dtype="<f8").reshape(m, d).astype(np.float64)
        labels = np.frombuffer(fh.read(m), dtype=np.int8).astype(np.float64)
        rest = fh.read()
    if rest:
        raise ValueError(f"{path}: {len(rest)} trailing bytes after payload")
    return Dataset(features=features, labels=labels, source_tag=str(path))
