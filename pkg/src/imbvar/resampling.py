"""Sampling strategies for imbalanced training sets, plus the class-weight
ratio used by the weighted training objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import DataError, Dataset


@dataclass(frozen=True)
class ClassWeights:
    w_minority: float
    w_majority: float
    n_major: int
    n_minor: int
    minority_label: int


def class_weights(labels: np.ndarray) -> ClassWeights:
    """w_minority = n_major / n_minor, w_majority fixed at 1."""
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise DataError("class_weights needs both classes present")
    n1 = int(np.sum(labels == 1))
    n0 = labels.size - n1
    minority_label = 1 if n1 <= n0 else 0
    n_minor = min(n0, n1)
    n_major = max(n0, n1)
    return ClassWeights(
        w_minority=n_major / n_minor,
        w_majority=1.0,
        n_major=n_major,
        n_minor=n_minor,
        minority_label=minority_label,
    )


def weight_vector(labels: np.ndarray, weights: ClassWeights) -> np.ndarray:
    w = np.where(np.asarray(labels) == weights.minority_label,
                 weights.w_minority, weights.w_majority)
    return w.astype(np.float64)


@dataclass
class NeighborIndex:
    """Sorted k nearest neighbors per point; never includes the point itself.
    Distance ties break toward the lower row index (stable argsort)."""

    k: int
    indices: np.ndarray  # (n, k) int
    distances: np.ndarray  # (n, k) float

    @classmethod
    def build(cls, points: np.ndarray, k: int) -> "NeighborIndex":
        n = points.shape[0]
        if k < 1 or k > n - 1:
            raise DataError(f"k={k} invalid for {n} points")
        d2 = kernels.pairwise_sq_dists(np.ascontiguousarray(points))
        np.fill_diagonal(d2, np.inf)
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        dist = np.sqrt(np.take_along_axis(d2, order, axis=1))
        return cls(k=k, indices=order, distances=dist)


def _split_classes(ds: Dataset):
    minority = ds.minority_label()
    min_idx = np.nonzero(ds.labels == minority)[0]
    maj_idx = np.nonzero(ds.labels != minority)[0]
    if min_idx.size == 0 or maj_idx.size == 0:
        raise DataError("resampling needs both classes present")
    return minority, min_idx, maj_idx


def random_undersample(ds: Dataset, seed: int = 0) -> Dataset:
    """Drop majority rows (without replacement) down to the minority count."""
    minority, min_idx, maj_idx = _split_classes(ds)
    rng = np.random.default_rng(seed)
    keep = rng.choice(maj_idx, size=min_idx.size, replace=False)
    sel = np.sort(np.concatenate([keep, min_idx]))
    return ds.subset(sel)


def random_oversample(ds: Dataset, seed: int = 0) -> Dataset:
    """Duplicate minority rows (with replacement) up to the majority count."""
    minority, min_idx, maj_idx = _split_classes(ds)
    rng = np.random.default_rng(seed)
    extra = rng.choice(min_idx, size=maj_idx.size - min_idx.size, replace=True)
    sel = np.concatenate([np.arange(ds.n), extra])
    return ds.subset(sel)


def _interpolate(features, parents, neighbors, lams):
    a = features[parents]
    b = features[neighbors]
    return a + lams[:, None] * (b - a)


def smote(ds: Dataset, k: int = 5, target_minority_count: int | None = None,
          seed: int = 0) -> Dataset:
    """Synthetic minority oversampling: each new point sits on the segment
    between a minority row and one of its k nearest minority neighbors."""
    minority, min_idx, maj_idx = _split_classes(ds)
    if min_idx.size < 2:
        raise DataError("smote needs at least 2 minority rows")
    if k >= min_idx.size:
        raise DataError(f"k={k} must be < n_minor={min_idx.size}")
    target = maj_idx.size if target_minority_count is None else target_minority_count
    n_new = target - min_idx.size
    if n_new <= 0:
        return ds.subset(np.arange(ds.n))
    rng = np.random.default_rng(seed)
    parents = rng.integers(0, min_idx.size, size=n_new)
    return _synthesize(ds, min_idx, minority, parents, k, rng)


def _synthesize(ds: Dataset, min_idx: np.ndarray, minority_label: int,
                parents: np.ndarray, k: int, rng: np.random.Generator) -> Dataset:
    minor_feats = ds.features[min_idx]
    nn = NeighborIndex.build(minor_feats, k)
    picks = rng.integers(0, k, size=parents.size)
    neighbors = nn.indices[parents, picks]
    lams = rng.uniform(0.0, 1.0, size=parents.size)
    synth = _interpolate(minor_feats, parents, neighbors, lams)
    features = np.vstack([ds.features, synth])
    labels = np.concatenate([ds.labels,
                             np.full(parents.size, minority_label, dtype=np.int64)])
    return Dataset(features, labels, list(ds.feature_names))


def adasyn(ds: Dataset, k: int = 5, target_minority_count: int | None = None,
           seed: int = 0) -> Dataset:
    """SMOTE variant: the synthesis budget per minority row is proportional
    to the majority fraction among its k nearest neighbors over all classes.
    Interpolation itself uses minority-only neighbors, as in smote."""
    minority, min_idx, maj_idx = _split_classes(ds)
    if min_idx.size < 2:
        raise DataError("adasyn needs at least 2 minority rows")
    if k >= min_idx.size:
        raise DataError(f"k={k} must be < n_minor={min_idx.size}")
    target = maj_idx.size if target_minority_count is None else target_minority_count
    n_new = target - min_idx.size
    if n_new <= 0:
        return ds.subset(np.arange(ds.n))

    nn_all = NeighborIndex.build(ds.features, k)
    neighbor_labels = ds.labels[nn_all.indices[min_idx]]
    r = np.sum(neighbor_labels != minority, axis=1) / float(k)
    if r.sum() == 0.0:
        # every minority point is interior; fall back to uniform allocation
        r = np.ones_like(r)
    r = r / r.sum()

    counts = np.floor(r * n_new).astype(np.int64)
    remainder = n_new - int(counts.sum())
    if remainder > 0:
        frac = r * n_new - counts
        order = np.argsort(-frac, kind="stable")
        counts[order[:remainder]] += 1

    parents = np.repeat(np.arange(min_idx.size), counts)
    rng = np.random.default_rng(seed)
    return _synthesize(ds, min_idx, minority, parents, k, rng)
