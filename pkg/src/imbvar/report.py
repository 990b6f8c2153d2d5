"""Diagnostic artifacts: loss-curve CSV, 2-D embeddings (PCA and exact
t-SNE), and a precision/recall/F1 threshold sweep."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .metrics import confusion_at_threshold, precision_recall_f1
from .model import TrainTrace

TSNE_MAX_POINTS = 5000


class ReportError(Exception):
    pass


@dataclass
class Embedding2D:
    coords: np.ndarray  # (n, 2)
    labels: np.ndarray | None
    method: str  # pca | tsne
    params: dict = field(default_factory=dict)
    kl_history: list[float] | None = None
    captured_variance: float | None = None

    def __post_init__(self):
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ReportError("coords must be (n, 2)")
        if not np.all(np.isfinite(self.coords)):
            raise ReportError("coords contain non-finite values")


def export_loss_csv(trace: TrainTrace, path: str) -> None:
    if len(trace) == 0:
        raise ReportError("cannot export an empty trace")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,train_loss,test_loss\n")
        for it, tr, te in zip(trace.iterations, trace.train_losses, trace.test_losses):
            fh.write(f"{it},{tr!r},{te!r}\n")


def read_loss_csv(path: str) -> TrainTrace:
    trace = TrainTrace()
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "iteration,train_loss,test_loss":
            raise ReportError(f"unexpected trace header {header!r}")
        for line in fh:
            it, tr, te = line.strip().split(",")
            trace.record(int(it), float(tr), float(te))
    return trace


def pca2d(points: np.ndarray, labels=None) -> Embedding2D:
    """Projection onto the top-2 eigenvectors of the centered covariance.

    Component signs are fixed (largest-magnitude loading positive) so the
    output is reproducible up to nothing at all.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3 or x.shape[1] < 2:
        raise ReportError(f"pca2d needs an (n>=3, m>=2) matrix, got {x.shape}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    if np.all(eigvals <= 1e-300):
        raise ReportError("pca2d: input has rank 0")
    order = np.argsort(eigvals)[::-1][:2]
    comps = eigvecs[:, order]
    for j in range(2):
        pivot = np.argmax(np.abs(comps[:, j]))
        if comps[pivot, j] < 0:
            comps[:, j] = -comps[:, j]
    coords = centered @ comps
    return Embedding2D(
        coords=coords,
        labels=None if labels is None else np.asarray(labels),
        method="pca",
        captured_variance=float(eigvals[order].sum()),
    )


def tsne_exact(points: np.ndarray, perplexity: float = 30.0, iters: int = 1000,
               seed: int = 0, labels=None, learning_rate: float | None = None,
               exaggeration: float = 4.0, exaggeration_iters: int = 100,
               momentum_switch_iter: int = 250) -> Embedding2D:
    """Exact O(n^2) t-SNE to 2-D.

    Symmetrized affinities from a per-point bandwidth search, Student-t
    low-dimensional kernel, gradient descent with momentum 0.5 -> 0.8 and
    early exaggeration.  Deterministic given the seed.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if n < 3 or n > TSNE_MAX_POINTS:
        raise ReportError(f"tsne_exact needs 3 <= n <= {TSNE_MAX_POINTS}, got {n}")
    if perplexity >= n / 3:
        raise ReportError(f"perplexity {perplexity} must be < n/3 = {n / 3:.1f}")
    if learning_rate is None:
        learning_rate = max(n / exaggeration / 4.0, 50.0)
    rng = np.random.default_rng(seed)
    # seeded jitter keeps duplicate rows from breaking the bandwidth search
    x = x + 1e-12 * rng.standard_normal(x.shape)
    p = tsne_affinities(x, perplexity)

    y = 1e-2 * rng.standard_normal((n, 2))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_history = []
    for it in range(iters):
        p_eff = p * exaggeration if it < exaggeration_iters else p
        grad, kl = kernels.tsne_forces(np.ascontiguousarray(y), np.ascontiguousarray(p_eff))
        momentum = 0.5 if it < momentum_switch_iter else 0.8
        # adaptive per-coordinate gains: grow when the gradient keeps
        # pointing against the velocity, shrink when it agrees
        agree = np.sign(grad) == np.sign(velocity)
        gains = np.where(agree, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        velocity = momentum * velocity - learning_rate * gains * grad
        y = y + velocity
        y = y - y.mean(axis=0)
        kl_history.append(kl)
    return Embedding2D(
        coords=y,
        labels=None if labels is None else np.asarray(labels),
        method="tsne",
        params={"perplexity": perplexity, "iters": iters, "seed": seed,
                "learning_rate": learning_rate},
        kl_history=kl_history,
    )


def tsne_affinities(x: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetric joint affinities: zero diagonal, symmetric, sums to 1."""
    d2 = kernels.pairwise_sq_dists(np.ascontiguousarray(x))
    cond = kernels.cond_affinities(d2, perplexity)
    n = x.shape[0]
    return (cond + cond.T) / (2.0 * n)


def threshold_sweep(scores, labels, grid) -> list[dict]:
    grid = list(grid)
    if not grid:
        raise ReportError("threshold grid must be nonempty")
    rows = []
    for t in grid:
        c = confusion_at_threshold(scores, labels, t)
        precision, recall, f1, _ = precision_recall_f1(c)
        rows.append({"threshold": float(t), "precision": precision,
                     "recall": recall, "f1": f1})
    return rows


def export_sweep_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold,precision,recall,f1\n")
        for r in rows:
            fh.write(f"{r['threshold']!r},{r['precision']!r},{r['recall']!r},{r['f1']!r}\n")


def export_embedding_csv(emb: Embedding2D, path: str) -> None:
    labels = emb.labels if emb.labels is not None else np.zeros(len(emb.coords), dtype=int)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y,label\n")
        for (cx, cy), lab in zip(emb.coords, labels):
            fh.write(f"{float(cx)!r},{float(cy)!r},{int(lab)}\n")


def stratified_subsample(features: np.ndarray, labels: np.ndarray,
                         max_points: int, seed: int = 0):
    """Per-class proportional subsample, minimum one row per class."""
    labels = np.asarray(labels)
    n = len(labels)
    if n <= max_points:
        return features, labels
    rng = np.random.default_rng(seed)
    keep = []
    for lab in sorted(np.unique(labels)):
        idx = np.nonzero(labels == lab)[0]
        take = max(1, int(round(max_points * idx.size / n)))
        keep.append(rng.choice(idx, size=min(take, idx.size), replace=False))
    sel = np.sort(np.concatenate(keep))
    return features[sel], labels[sel]
