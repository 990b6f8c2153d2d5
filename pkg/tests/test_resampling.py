import numpy as np
import pytest

from imbvar.data import DataError, Dataset, synth_imbalanced
from imbvar.resampling import (NeighborIndex, adasyn, class_weights,
                               random_oversample, random_undersample, smote,
                               weight_vector)


def make_ds(n_major, n_minor, seed=0, d=2, sep=2.0):
    return synth_imbalanced(n_major, n_minor, d, sep, seed=seed)


def test_class_weights_paper_ratio():
    labels = np.concatenate([np.zeros(284315, dtype=int), np.ones(492, dtype=int)])
    cw = class_weights(labels)
    assert cw.w_minority == pytest.approx(577.88, abs=0.01)
    assert cw.w_majority == 1.0
    assert cw.n_major == 284315 and cw.n_minor == 492


def test_class_weights_balanced():
    cw = class_weights(np.array([0, 0, 1, 1]))
    assert cw.w_minority == 1.0


def test_class_weights_direct_ratio():
    cw = class_weights(np.array([0] * 10 + [1] * 2))
    assert cw.w_minority == 5.0
    assert cw.minority_label == 1


def test_class_weights_single_class_errors():
    with pytest.raises(DataError):
        class_weights(np.zeros(5, dtype=int))


def test_class_weights_permutation_invariant():
    rng = np.random.default_rng(0)
    labels = np.array([0] * 30 + [1] * 7)
    cw1 = class_weights(labels)
    cw2 = class_weights(rng.permutation(labels))
    assert cw1 == cw2


def test_weight_vector_values():
    labels = np.array([0, 1, 0, 1, 0])
    cw = class_weights(labels)
    np.testing.assert_array_equal(weight_vector(labels, cw), [1.0, 1.5, 1.0, 1.5, 1.0])


def test_undersample_balances():
    ds = make_ds(100, 10)
    out = random_undersample(ds, seed=0)
    assert out.class_counts() == (10, 10)


def test_undersample_balanced_input_unchanged():
    ds = make_ds(10, 10)
    out = random_undersample(ds, seed=0)
    assert sorted(map(tuple, out.features)) == sorted(map(tuple, ds.features))


def test_undersample_minority_rows_identical():
    ds = make_ds(100, 10)
    out = random_undersample(ds, seed=1)
    np.testing.assert_array_equal(out.features[out.labels == 1],
                                  ds.features[ds.labels == 1])


def test_oversample_balances():
    ds = make_ds(100, 10)
    out = random_oversample(ds, seed=0)
    assert out.class_counts() == (100, 100)


def test_oversample_rows_are_copies():
    ds = make_ds(100, 10)
    out = random_oversample(ds, seed=0)
    originals = {tuple(row) for row in ds.features[ds.labels == 1]}
    for row in out.features[out.labels == 1]:
        assert tuple(row) in originals


def test_oversample_deterministic():
    ds = make_ds(50, 8)
    a = random_oversample(ds, seed=3)
    b = random_oversample(ds, seed=3)
    np.testing.assert_array_equal(a.features, b.features)


def test_neighbor_index_excludes_self_sorted():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [7.0, 0.0]])
    nn = NeighborIndex.build(pts, k=2)
    for i in range(4):
        assert i not in nn.indices[i]
        assert nn.distances[i, 0] <= nn.distances[i, 1]


def test_neighbor_index_tie_break_lower_index():
    pts = np.array([[0.0], [1.0], [-1.0], [5.0]])
    nn = NeighborIndex.build(pts, k=1)
    # points 1 and 2 are equidistant from 0; the lower row index wins
    assert nn.indices[0, 0] == 1


def test_smote_midpoint():
    feats = np.array([[0.0, 0.0], [1.0, 1.0], [10.0, 10.0], [11.0, 11.0], [12.0, 12.0]])
    labels = np.array([1, 1, 0, 0, 0])
    ds = Dataset(feats, labels, ["a", "b"])
    out = smote(ds, k=1, target_minority_count=3, seed=0)
    synth = out.features[-1]
    # k=1 forces the segment between the two minority points
    lam = synth[0] if synth[0] <= 1 else None
    assert lam is not None
    np.testing.assert_allclose(synth, [lam, lam], atol=1e-12)


def test_smote_counts_and_originals_preserved():
    ds = make_ds(100, 10, seed=1)
    out = smote(ds, k=3, seed=1)
    assert out.class_counts() == (100, 100)
    np.testing.assert_array_equal(out.features[:ds.n], ds.features)


def test_smote_k_too_large_errors():
    ds = make_ds(50, 4)
    with pytest.raises(DataError):
        smote(ds, k=4)


def convexity_residual(ds, out):
    """Max distance from each synthetic point to the segment between its
    best-matching minority parent pair."""
    minority = ds.features[ds.labels == 1]
    worst = 0.0
    for synth in out.features[ds.n:]:
        best = np.inf
        for a in minority:
            for b in minority:
                ab = b - a
                denom = float(ab @ ab)
                if denom == 0.0:
                    continue
                lam = float((synth - a) @ ab) / denom
                if -1e-9 <= lam <= 1 + 1e-9:
                    resid = np.linalg.norm(synth - (a + lam * ab))
                    best = min(best, resid)
        worst = max(worst, best)
    return worst


def test_smote_synthetics_on_segments():
    total = 0
    worst = 0.0
    seed = 0
    while total < 1000:
        ds = make_ds(40, 8, seed=seed, d=3)
        out = smote(ds, k=3, target_minority_count=8 + 25, seed=seed)
        worst = max(worst, convexity_residual(ds, out))
        total += 25
        seed += 1
    assert worst < 1e-9


def test_adasyn_budget_conservation():
    ds = make_ds(100, 10, seed=2)
    out = adasyn(ds, k=3, target_minority_count=60, seed=2)
    assert int((out.labels == 1).sum()) == 60


def test_adasyn_uniform_density_matches_smote_counts():
    # minority far from all majority: every r_i = 0, uniform fallback
    feats = np.vstack([np.random.default_rng(0).standard_normal((20, 2)) + 100.0,
                       np.random.default_rng(1).standard_normal((10, 2))])
    labels = np.array([0] * 20 + [1] * 10)
    ds = Dataset(feats, labels, ["a", "b"])
    out = adasyn(ds, k=3, target_minority_count=20, seed=0)
    assert int((out.labels == 1).sum()) == 20


def test_adasyn_allocates_to_surrounded_point():
    # one minority point inside a tight majority cluster, the rest far away
    rng = np.random.default_rng(4)
    majority = rng.standard_normal((30, 2)) * 0.1
    interior = rng.standard_normal((9, 2)) * 0.1 + 100.0
    surrounded = np.zeros((1, 2))
    feats = np.vstack([majority, interior, surrounded])
    labels = np.array([0] * 30 + [1] * 10)
    ds = Dataset(feats, labels, ["a", "b"])
    out = adasyn(ds, k=5, target_minority_count=10 + 8, seed=0)
    synth = out.features[ds.n:]
    assert synth.shape[0] == 8
    # every synthetic must be anchored at the surrounded point: it lies on a
    # segment from the origin to one of the far minority rows
    for s in synth:
        residuals = []
        for b in interior:
            lam = float(s @ b) / float(b @ b)
            residuals.append(np.linalg.norm(s - np.clip(lam, 0, 1) * b))
        assert min(residuals) < 1e-9


def test_resamplers_preserve_dimensions_and_majority():
    ds = make_ds(60, 12, seed=6, d=4)
    for fn in (lambda d: random_undersample(d, 0), lambda d: random_oversample(d, 0),
               lambda d: smote(d, k=3, seed=0), lambda d: adasyn(d, k=3, seed=0)):
        out = fn(ds)
        assert out.d == ds.d
        assert set(np.unique(out.labels)) <= {0, 1}
        maj_in = {tuple(r) for r in ds.features[ds.labels == 0]}
        maj_out = {tuple(r) for r in out.features[out.labels == 0]}
        assert maj_out <= maj_in
