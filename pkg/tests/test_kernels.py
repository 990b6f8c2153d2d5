import numpy as np
import pytest

from imbvar import kernels


needs_numba = pytest.mark.skipif(kernels.BACKEND != "numba",
                                 reason="numba backend not active")


def test_pairwise_basic():
    x = np.array([[0.0, 0.0], [3.0, 4.0]])
    d = kernels.pairwise_sq_dists_np(x)
    np.testing.assert_allclose(d, [[0.0, 25.0], [25.0, 0.0]])


def test_pairwise_nonnegative_zero_diagonal():
    rng = np.random.default_rng(0)
    d = kernels.pairwise_sq_dists_np(rng.standard_normal((20, 5)))
    assert np.all(d >= 0.0)
    np.testing.assert_array_equal(np.diag(d), 0.0)


@needs_numba
def test_pairwise_backends_agree():
    rng = np.random.default_rng(1)
    x = np.ascontiguousarray(rng.standard_normal((50, 6)))
    np.testing.assert_allclose(kernels.pairwise_sq_dists_np(x),
                               kernels.pairwise_sq_dists_nb(x), atol=1e-10)


@needs_numba
def test_affinity_backends_agree():
    rng = np.random.default_rng(2)
    x = np.ascontiguousarray(rng.standard_normal((40, 4)))
    d2 = kernels.pairwise_sq_dists_np(x)
    p_np = kernels.cond_affinities_np(d2, 8.0)
    p_nb = kernels.cond_affinities_nb(d2, 8.0)
    np.testing.assert_allclose(p_np, p_nb, atol=1e-8)


@needs_numba
def test_tsne_forces_backends_agree():
    rng = np.random.default_rng(3)
    y = np.ascontiguousarray(rng.standard_normal((30, 2)))
    d2 = kernels.pairwise_sq_dists_np(rng.standard_normal((30, 5)))
    p = kernels.cond_affinities_np(d2, 6.0)
    p = (p + p.T) / (2 * 30)
    g_np, kl_np = kernels.tsne_forces_np(y, p)
    g_nb, kl_nb = kernels.tsne_forces_nb(y, np.ascontiguousarray(p))
    np.testing.assert_allclose(g_np, g_nb, atol=1e-10)
    assert kl_np == pytest.approx(kl_nb, abs=1e-10)


@needs_numba
def test_numba_kernels_deterministic_across_calls():
    rng = np.random.default_rng(4)
    x = np.ascontiguousarray(rng.standard_normal((60, 4)))
    a = kernels.pairwise_sq_dists_nb(x)
    b = kernels.pairwise_sq_dists_nb(x)
    np.testing.assert_array_equal(a, b)
