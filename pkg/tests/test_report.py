import numpy as np
import pytest
from sklearn.metrics import silhouette_score

from imbvar.model import TrainTrace
from imbvar.report import (Embedding2D, ReportError, export_loss_csv,
                           export_sweep_csv, pca2d, read_loss_csv,
                           stratified_subsample, threshold_sweep,
                           tsne_affinities, tsne_exact)
from imbvar.metrics import confusion_at_threshold, precision_recall_f1


def jacobi_eigenvalues(a, sweeps=50):
    """Oracle: cyclic Jacobi rotations on a symmetric matrix."""
    a = a.copy()
    n = a.shape[0]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-15:
                    continue
                off += abs(a[p, q])
                theta = 0.5 * np.arctan2(2 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
        if off < 1e-14:
            break
    return np.sort(np.diag(a))[::-1]


def make_trace():
    trace = TrainTrace()
    trace.record(0, 2.0, 2.1)
    trace.record(10, 1.5, 1.6)
    trace.record(20, 1.2, 1.25)
    return trace


def test_loss_csv_lines(tmp_path):
    path = str(tmp_path / "trace.csv")
    export_loss_csv(make_trace(), path)
    lines = open(path).read().splitlines()
    assert len(lines) == 4
    assert lines[0] == "iteration,train_loss,test_loss"


def test_loss_csv_roundtrip(tmp_path):
    path = str(tmp_path / "trace.csv")
    trace = make_trace()
    export_loss_csv(trace, path)
    back = read_loss_csv(path)
    assert back.iterations == trace.iterations
    assert back.train_losses == trace.train_losses
    assert back.test_losses == trace.test_losses


def test_loss_csv_empty_trace_errors(tmp_path):
    with pytest.raises(ReportError):
        export_loss_csv(TrainTrace(), str(tmp_path / "x.csv"))


def test_pca_collinear_second_component_zero():
    pts = np.outer(np.arange(5.0), np.array([1.0, 2.0, -1.0]))
    emb = pca2d(pts)
    assert np.std(emb.coords[:, 1]) < 1e-10


def test_pca_centering():
    rng = np.random.default_rng(0)
    emb = pca2d(rng.standard_normal((20, 4)))
    np.testing.assert_allclose(emb.coords.mean(axis=0), 0.0, atol=1e-12)


def test_pca_captured_variance_matches_jacobi_oracle():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((10, 5))
    emb = pca2d(x)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigs = jacobi_eigenvalues(cov)
    assert emb.captured_variance == pytest.approx(eigs[0] + eigs[1], abs=1e-9)


def test_pca_permutation_invariant_up_to_sign():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((15, 4))
    perm = rng.permutation(15)
    a = pca2d(x).coords
    b = pca2d(x[perm]).coords
    for j in range(2):
        col_a = a[perm, j]
        col_b = b[:, j]
        assert (np.allclose(col_a, col_b, atol=1e-9)
                or np.allclose(col_a, -col_b, atol=1e-9))


def test_pca_rank_zero_errors():
    with pytest.raises(ReportError):
        pca2d(np.zeros((5, 3)))


def test_pca_too_small_errors():
    with pytest.raises(ReportError):
        pca2d(np.zeros((2, 3)))


def test_tsne_two_point_symmetrization():
    # with n=2 each conditional is 1, so P12 = (1+1)/(2*2) = 0.5
    p = tsne_affinities(np.array([[0.0, 0.0], [1.0, 0.0]]), perplexity=0.5)
    assert p[0, 1] == pytest.approx(0.5, abs=1e-9)
    assert p[1, 0] == pytest.approx(0.5, abs=1e-9)


def test_tsne_affinity_matrix_properties():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((30, 4))
    p = tsne_affinities(x, perplexity=5.0)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(p, p.T, atol=1e-12)
    np.testing.assert_array_equal(np.diag(p), 0.0)


def test_tsne_perplexity_entropy_matched():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((40, 3))
    from imbvar import kernels
    d2 = kernels.pairwise_sq_dists(np.ascontiguousarray(x))
    cond = kernels.cond_affinities(d2, 8.0)
    for i in range(40):
        row = cond[i][cond[i] > 0]
        h = -np.sum(row * np.log(row))
        assert h == pytest.approx(np.log(8.0), abs=1e-4)


def test_tsne_separated_clusters_silhouette():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((10, 4))
    b = rng.standard_normal((10, 4)) + 10.0
    pts = np.vstack([a, b])
    labels = np.array([0] * 10 + [1] * 10)
    emb = tsne_exact(pts, perplexity=5.0, iters=500, seed=0, labels=labels)
    assert silhouette_score(emb.coords, labels) > 0.5


def test_tsne_kl_trend_decreases():
    rng = np.random.default_rng(6)
    pts = np.vstack([rng.standard_normal((12, 3)),
                     rng.standard_normal((12, 3)) + 5.0])
    emb = tsne_exact(pts, perplexity=5.0, iters=400, seed=1,
                     exaggeration_iters=100)
    hist = emb.kl_history
    early = np.mean(hist[100:200])
    late = np.mean(hist[-100:])
    assert late < early


def test_tsne_deterministic():
    rng = np.random.default_rng(7)
    pts = rng.standard_normal((15, 3))
    a = tsne_exact(pts, perplexity=4.0, iters=50, seed=3)
    b = tsne_exact(pts, perplexity=4.0, iters=50, seed=3)
    np.testing.assert_array_equal(a.coords, b.coords)


def test_tsne_duplicate_points_survive():
    pts = np.vstack([np.zeros((5, 3)), np.ones((5, 3))])
    emb = tsne_exact(pts, perplexity=2.0, iters=50, seed=0)
    assert np.all(np.isfinite(emb.coords))


def test_tsne_perplexity_bound_errors():
    with pytest.raises(ReportError):
        tsne_exact(np.random.default_rng(0).standard_normal((9, 3)), perplexity=3.0)


def test_threshold_sweep_boundaries():
    scores = np.array([0.2, 0.6, 0.8, 0.4])
    labels = np.array([0, 1, 1, 0])
    rows = threshold_sweep(scores, labels, [0.0, 1.0])
    assert rows[0]["recall"] == 1.0
    assert rows[1]["recall"] == 0.0  # no score equals 1.0


def test_threshold_sweep_recall_monotone():
    rng = np.random.default_rng(8)
    scores = rng.random(100)
    labels = rng.integers(0, 2, 100)
    labels[0], labels[1] = 0, 1
    rows = threshold_sweep(scores, labels, np.linspace(0, 1, 21))
    recalls = [r["recall"] for r in rows]
    assert all(a >= b - 1e-12 for a, b in zip(recalls, recalls[1:]))


def test_threshold_sweep_matches_direct_confusion():
    rng = np.random.default_rng(9)
    scores = np.round(rng.random(100), 2)
    labels = rng.integers(0, 2, 100)
    labels[0], labels[1] = 0, 1
    grid = np.linspace(0, 1, 11)
    rows = threshold_sweep(scores, labels, grid)
    for t, row in zip(grid, rows):
        c = confusion_at_threshold(scores, labels, t)
        p, r, f1, _ = precision_recall_f1(c)
        assert row["precision"] == p and row["recall"] == r and row["f1"] == f1


def test_sweep_csv_roundtrip(tmp_path):
    rows = [{"threshold": 0.5, "precision": 0.25, "recall": 1.0, "f1": 0.4}]
    path = str(tmp_path / "sweep.csv")
    export_sweep_csv(rows, path)
    lines = open(path).read().splitlines()
    assert lines[0] == "threshold,precision,recall,f1"
    vals = [float(v) for v in lines[1].split(",")]
    assert vals == [0.5, 0.25, 1.0, 0.4]


def test_stratified_subsample_keeps_classes():
    rng = np.random.default_rng(10)
    feats = rng.standard_normal((1000, 2))
    labels = np.array([0] * 990 + [1] * 10)
    sub_f, sub_l = stratified_subsample(feats, labels, 100, seed=0)
    assert len(sub_l) <= 101
    assert (sub_l == 1).sum() >= 1


def test_embedding_validation():
    with pytest.raises(ReportError):
        Embedding2D(coords=np.zeros((3, 3)), labels=None, method="pca")
