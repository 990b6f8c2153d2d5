"""Numeric hot loops, with optional numba acceleration.

The backend is picked once at import time:

* ``IMB_DPGM_BACKEND=numpy`` forces the pure-numpy implementations,
* ``IMB_DPGM_BACKEND=numba`` requires the jitted ones (ImportError if
  numba is missing),
* unset: numba when importable, numpy otherwise.

``IMB_DPGM_THREADS`` caps the numba thread count.  Parallelism is only
ever across independent output rows, so the jitted results do not depend
on the thread count.

Both implementations of every kernel stay importable (``*_np`` / ``*_nb``)
so the benchmark and the cross-backend tests can compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

_MIN_PROB = 1e-12


def _choose_backend() -> str:
    choice = os.environ.get("IMB_DPGM_BACKEND", "").strip().lower()
    if choice not in ("", "numpy", "numba"):
        raise ValueError(f"IMB_DPGM_BACKEND must be 'numpy' or 'numba', got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise ImportError("IMB_DPGM_BACKEND=numba but numba is not installed")
        return "numpy"
    return "numba"


BACKEND = _choose_backend()


# ---------------------------------------------------------------------------
# pure-numpy implementations

def pairwise_sq_dists_np(x: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances, n x n, zero diagonal."""
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _entropy_row(d_row: np.ndarray, beta: float):
    p = np.exp(-(d_row - d_row.min()) * beta)  # shift guards exp underflow
    sum_p = p.sum()
    h = np.log(sum_p) + beta * float((d_row - d_row.min()) @ p) / sum_p
    return h, p / sum_p


def cond_affinities_np(dists: np.ndarray, perplexity: float,
                       tol: float = 1e-5, max_iter: int = 64) -> np.ndarray:
    """Per-row conditional affinities p(j|i) whose entropy matches log(perplexity).

    Bandwidth found by binary search on the precision beta, row by row.
    Diagonal is zero; each row sums to 1.
    """
    n = dists.shape[0]
    log_u = np.log(perplexity)
    p = np.zeros((n, n))
    idx = np.arange(n)
    for i in range(n):
        d_row = dists[i, idx != i]
        beta, beta_lo, beta_hi = 1.0, 0.0, np.inf
        h, row = _entropy_row(d_row, beta)
        for _ in range(max_iter):
            if abs(h - log_u) < tol:
                break
            if h > log_u:
                beta_lo = beta
                beta = beta * 2.0 if beta_hi == np.inf else 0.5 * (beta + beta_hi)
            else:
                beta_hi = beta
                beta = 0.5 * (beta + beta_lo)
            h, row = _entropy_row(d_row, beta)
        p[i, idx != i] = row
    return p


def tsne_forces_np(y: np.ndarray, p: np.ndarray):
    """Gradient of KL(P||Q) w.r.t. the 2-D embedding, plus the KL value."""
    d = pairwise_sq_dists_np(y)
    num = 1.0 / (1.0 + d)
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), _MIN_PROB)
    l = (p - q) * num
    grad = 4.0 * ((np.diag(l.sum(axis=1)) - l) @ y)
    mask = p > 0.0
    kl = float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
    return grad, kl


# ---------------------------------------------------------------------------
# numba implementations (loop forms; prange only over independent rows)

if BACKEND == "numba":
    import numba
    from numba import njit, prange

    _threads = os.environ.get("IMB_DPGM_THREADS", "").strip()
    if _threads:
        numba.set_num_threads(max(1, int(_threads)))

    @njit(cache=True, parallel=True)
    def pairwise_sq_dists_nb(x):
        n, m = x.shape
        out = np.zeros((n, n))
        for i in prange(n):
            for j in range(n):
                if i == j:
                    continue
                acc = 0.0
                for k in range(m):
                    diff = x[i, k] - x[j, k]
                    acc += diff * diff
                out[i, j] = acc
        return out

    @njit(cache=True, parallel=True)
    def cond_affinities_nb(dists, perplexity, tol=1e-5, max_iter=64):
        n = dists.shape[0]
        log_u = np.log(perplexity)
        p = np.zeros((n, n))
        for i in prange(n):
            d_min = np.inf
            for j in range(n):
                if j != i and dists[i, j] < d_min:
                    d_min = dists[i, j]
            beta = 1.0
            beta_lo = 0.0
            beta_hi = np.inf
            for _ in range(max_iter + 1):
                sum_p = 0.0
                sum_dp = 0.0
                for j in range(n):
                    if j == i:
                        continue
                    d = dists[i, j] - d_min  # shift guards exp underflow
                    e = np.exp(-d * beta)
                    sum_p += e
                    sum_dp += d * e
                h = np.log(sum_p) + beta * sum_dp / sum_p
                if abs(h - log_u) < tol:
                    break
                if h > log_u:
                    beta_lo = beta
                    beta = beta * 2.0 if beta_hi == np.inf else 0.5 * (beta + beta_hi)
                else:
                    beta_hi = beta
                    beta = 0.5 * (beta + beta_lo)
            sum_p = 0.0
            for j in range(n):
                if j != i:
                    p[i, j] = np.exp(-(dists[i, j] - d_min) * beta)
                    sum_p += p[i, j]
            for j in range(n):
                p[i, j] /= sum_p
        return p

    @njit(cache=True, parallel=True)
    def tsne_forces_nb(y, p):
        n = y.shape[0]
        num = np.zeros((n, n))
        total = 0.0
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                d0 = y[i, 0] - y[j, 0]
                d1 = y[i, 1] - y[j, 1]
                num[i, j] = 1.0 / (1.0 + d0 * d0 + d1 * d1)
                total += num[i, j]
        grad = np.zeros((n, 2))
        kl_rows = np.zeros(n)
        for i in prange(n):
            kl = 0.0
            for j in range(n):
                if i == j:
                    continue
                q = num[i, j] / total
                if q < _MIN_PROB:
                    q = _MIN_PROB
                w = 4.0 * (p[i, j] - q) * num[i, j]
                grad[i, 0] += w * (y[i, 0] - y[j, 0])
                grad[i, 1] += w * (y[i, 1] - y[j, 1])
                if p[i, j] > 0.0:
                    kl += p[i, j] * np.log(p[i, j] / q)
            kl_rows[i] = kl
        return grad, float(kl_rows.sum())

    pairwise_sq_dists = pairwise_sq_dists_nb
    cond_affinities = cond_affinities_nb
    tsne_forces = tsne_forces_nb
else:
    pairwise_sq_dists_nb = None
    cond_affinities_nb = None
    tsne_forces_nb = None

    pairwise_sq_dists = pairwise_sq_dists_np
    cond_affinities = cond_affinities_np
    tsne_forces = tsne_forces_np
