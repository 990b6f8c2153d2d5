"""CSV ingestion, normalization with z-clipping, stratified splits, and
synthetic imbalanced datasets for desk-scale verification."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class DataError(Exception):
    pass


@dataclass
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int, values in {0, 1}
    feature_names: list[str]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1 or self.features.shape[1] < 1:
            raise DataError(f"features must be a nonempty 2-d matrix, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError("labels length must match feature rows")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise DataError("labels must be binary {0, 1}")
        if np.isnan(self.features).any():
            raise DataError("features contain NaN")
        if len(self.feature_names) != self.features.shape[1]:
            raise DataError("feature_names length must match feature columns")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], list(self.feature_names))

    def class_counts(self) -> tuple[int, int]:
        """(n_major, n_minor) by frequency; ties count label 1 as minority."""
        n1 = int(self.labels.sum())
        n0 = self.n - n1
        return (max(n0, n1), min(n0, n1)) if n0 != n1 else (n0, n1)

    def minority_label(self) -> int:
        n1 = int(self.labels.sum())
        return 1 if n1 <= self.n - n1 else 0


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    clip_k: float = 5.0
    constant_features: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "mean": [repr(float(v)) for v in self.mean],
            "std": [repr(float(v)) for v in self.std],
            "clip_k": self.clip_k,
            "constant_features": self.constant_features,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "NormStats":
        return cls(
            mean=np.array([float(v) for v in doc["mean"]]),
            std=np.array([float(v) for v in doc["std"]]),
            clip_k=float(doc["clip_k"]),
            constant_features=list(doc.get("constant_features", [])),
        )


@dataclass
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def to_json(self) -> dict:
        return {
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "test": self.test.tolist(),
            "seed": self.seed,
        }


def load_csv(path: str, label_column: str) -> Dataset:
    """Parse a header-bearing numeric CSV with one binary label column."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if not lines:
        raise DataError(f"{path}: empty file")
    header = [c.strip().strip('"') for c in lines[0].split(",")]
    if label_column not in header:
        raise DataError(f"label column {label_column!r} not found; columns: {header}")
    label_idx = header.index(label_column)
    feature_names = [h for i, h in enumerate(header) if i != label_idx]
    rows, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = [c.strip().strip('"') for c in line.split(",")]
        if len(cells) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
        try:
            vals = [float(c) for c in cells]
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: non-numeric cell ({e})") from e
        lab = vals.pop(label_idx)
        if lab not in (0.0, 1.0):
            raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {lab}")
        rows.append(vals)
        labels.append(int(lab))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels), feature_names)


def save_csv(ds: Dataset, path: str, label_column: str = "Class") -> None:
    """Full-precision writer; round-trips through load_csv exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(ds.feature_names + [label_column]) + "\n")
        for i in range(ds.n):
            cells = [repr(float(v)) for v in ds.features[i]] + [str(int(ds.labels[i]))]
            fh.write(",".join(cells) + "\n")


def fit_normalize(ds: Dataset, clip_k: float = 5.0) -> NormStats:
    """Per-feature mean/std from the given (training) rows only.

    Zero-variance features get std 1 and are flagged.
    """
    if ds.n < 1:
        raise DataError("cannot fit normalization on an empty set")
    mean = ds.features.mean(axis=0)
    std = ds.features.std(axis=0, ddof=0)
    constant = [int(j) for j in np.nonzero(std == 0.0)[0]]
    std = np.where(std == 0.0, 1.0, std)
    return NormStats(mean=mean, std=std, clip_k=clip_k, constant_features=constant)


def apply_normalize(ds: Dataset, stats: NormStats) -> Dataset:
    z = (ds.features - stats.mean) / stats.std
    z = np.clip(z, -stats.clip_k, stats.clip_k)
    return Dataset(z, ds.labels.copy(), list(ds.feature_names))


def stratified_split(ds: Dataset, fractions=(0.70, 0.15, 0.15), seed: int = 0) -> SplitIndices:
    """Per-class shuffled 70/15/15 partition, deterministic given seed."""
    if abs(sum(fractions) - 1.0) > 1e-12:
        raise DataError(f"fractions must sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for label in sorted(np.unique(ds.labels)):
        idx = np.nonzero(ds.labels == label)[0]
        if idx.size < 3:
            raise DataError(
                f"class {label} has only {idx.size} members; synthesize more rows before splitting")
        idx = rng.permutation(idx)
        n_train = math.floor(fractions[0] * idx.size + 1e-9)
        n_val = math.floor(fractions[1] * idx.size + 1e-9)
        train.append(idx[:n_train])
        val.append(idx[n_train:n_train + n_val])
        test.append(idx[n_train + n_val:])
    return SplitIndices(
        train=np.sort(np.concatenate(train)),
        val=np.sort(np.concatenate(val)),
        test=np.sort(np.concatenate(test)),
        seed=seed,
    )


def synth_imbalanced(n_major: int, n_minor: int, d: int,
                     mean_separation: float, seed: int = 0) -> Dataset:
    """Two spherical Gaussians: majority at the origin, minority (label 1)
    shifted by mean_separation along the first axis."""
    if n_major < 1 or n_minor < 1 or d < 1:
        raise DataError("n_major, n_minor and d must all be >= 1")
    rng = np.random.default_rng(seed)
    major = rng.standard_normal((n_major, d))
    minor = rng.standard_normal((n_minor, d))
    minor[:, 0] += mean_separation
    features = np.vstack([major, minor])
    labels = np.concatenate([np.zeros(n_major, dtype=np.int64),
                             np.ones(n_minor, dtype=np.int64)])
    names = [f"x{j}" for j in range(d)]
    return Dataset(features, labels, names)


def write_norm_stats(stats: NormStats, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_norm_stats(path: str) -> NormStats:
    with open(path, "r", encoding="utf-8") as fh:
        return NormStats.from_json(json.load(fh))
