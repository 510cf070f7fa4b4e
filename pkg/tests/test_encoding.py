import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scatenc.encoding import (CVResult, DegenerateTarget, EncodingError, compare_models,
                              fit_outer_fold, loso_ridge, nested_cv_encode, r2_score, ridge_fit)
from scatenc.scattering import FeatureMatrix, Path, ScatteringConfig
from scatenc.synth import SessionLabels, VoxelResponses, gen_session_labels


def make_data(rng, n=60, p=5, v=3, n_sessions=6, noise=0.0, beta=None):
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal((p, v)) if beta is None else beta
    Y = X @ beta + noise * rng.standard_normal((n, v))
    ids = [f"i{k}" for k in range(n)]
    paths = [Path(0)] + [Path(1, 0, g) for g in range(p - 1)]
    fm = FeatureMatrix(X, paths, ids, ScatteringConfig(M=1, J=1, L=max(1, p - 1)))
    resp = VoxelResponses(Y, ids, [f"v{k}" for k in range(v)])
    return fm, resp, gen_session_labels(n, n_sessions, 2, ids)


def normal_equation_oracle(X, y, lam):
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    w = np.linalg.inv(Xc.T @ Xc + lam * np.eye(X.shape[1])) @ (Xc.T @ yc)
    return w, ym - xm @ w


def test_ridge_interpolation_limit(rng):
    X = rng.standard_normal((20, 4))
    y = X @ np.array([1.0, -2.0, 0.5, 3.0]) + 0.7
    fit = ridge_fit(X, y, 1e-10)
    np.testing.assert_allclose(fit.predict(X), y, atol=1e-6)


def test_ridge_heavy_shrinkage(rng):
    X = rng.standard_normal((20, 4))
    y = rng.standard_normal(20)
    fit = ridge_fit(X, y, 1e12)
    assert np.abs(fit.weights).max() < 1e-9
    np.testing.assert_allclose(fit.predict(X), y.mean(), atol=1e-9)


def test_ridge_fixed_5x3():
    X = np.array([[1.0, 2, 0], [0, 1, 1], [2, 0, 1], [1, 1, 1], [3, 1, 0]])
    y = np.array([1.0, 2, 0, 3, 1])
    fit = ridge_fit(X, y, 1.0)
    w, b = normal_equation_oracle(X, y, 1.0)
    np.testing.assert_allclose(fit.weights, w, atol=1e-12)
    assert fit.intercept == pytest.approx(b, abs=1e-12)


def test_ridge_errors():
    X = np.ones((4, 2))
    with pytest.raises(EncodingError):
        ridge_fit(X, np.ones(4), 0.0)
    with pytest.raises(EncodingError, match="non-finite"):
        ridge_fit(X, np.array([1.0, np.nan, 0, 0]), 1.0)
    with pytest.raises(EncodingError):
        ridge_fit(X[:1], np.ones(1), 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), lam=st.floats(1e-3, 1e3))
def test_ridge_kkt(seed, lam):
    r = np.random.default_rng(seed)
    X = r.standard_normal((12, 4))
    y = r.standard_normal(12)
    fit = ridge_fit(X, y, lam)
    Xc, yc = X - X.mean(axis=0), y - y.mean()
    grad = -2 * Xc.T @ (yc - Xc @ fit.weights) + 2 * lam * fit.weights
    assert np.abs(grad).max() <= 1e-6


def test_r2_examples():
    y = np.array([1.0, 2.0, 3.0])
    assert r2_score(y, y, 2.0) == 1.0
    assert r2_score(y, np.full(3, 2.0), 2.0) == 0.0
    assert r2_score(y, np.array([1.0, 2.0, 5.0]), 2.0) == -1.0
    with pytest.raises(DegenerateTarget, match="degenerate target"):
        r2_score(np.ones(3), np.zeros(3), 1.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), a=st.floats(0.1, 100), c=st.floats(-100, 100))
def test_r2_affine_invariance(seed, a, c):
    r = np.random.default_rng(seed)
    y, p = r.standard_normal(10), r.standard_normal(10)
    base = float(r.standard_normal())
    assert r2_score(a * y + c, a * p + c, a * base + c) == pytest.approx(r2_score(y, p, base),
                                                                        rel=1e-9, abs=1e-9)


def test_nested_cv_noiseless(rng):
    fm, resp, sess = make_data(rng)
    cv = nested_cv_encode(fm, resp, sess)
    assert np.all(cv.mean_r2 >= 0.99)
    assert cv.fold_r2.shape == (6, 3)
    np.testing.assert_array_equal(cv.mean_r2, cv.fold_r2.mean(axis=0))


def test_nested_cv_null(rng):
    fm, _, sess = make_data(rng, n=72, p=5, v=1)
    noise = VoxelResponses(rng.standard_normal((72, 50)), fm.image_ids, [f"n{k}" for k in range(50)])
    cv = nested_cv_encode(fm, noise, sess)
    assert cv.mean_r2.mean() <= 0.05


def test_nested_cv_aligns_by_image_id(rng):
    fm, resp, sess = make_data(rng)
    perm = rng.permutation(len(fm.image_ids))
    shuffled = VoxelResponses(resp.values[perm], [resp.image_ids[i] for i in perm], resp.voxel_ids)
    a = nested_cv_encode(fm, resp, sess)
    b = nested_cv_encode(fm, shuffled, sess)
    np.testing.assert_array_equal(a.fold_r2, b.fold_r2)


def test_nested_cv_errors(rng):
    fm, resp, _ = make_data(rng, n=12)
    with pytest.raises(EncodingError, match=">= 3 sessions"):
        nested_cv_encode(fm, resp, gen_session_labels(12, 2, 1, fm.image_ids))
    with pytest.raises(EncodingError, match="fewer than 2 images"):
        s = SessionLabels(fm.image_ids, np.array([1] * 5 + [2] * 6 + [3]), np.ones(12, dtype=int))
        nested_cv_encode(fm, resp, s)
    with pytest.raises(EncodingError, match="empty"):
        nested_cv_encode(fm, resp, gen_session_labels(12, 3, 1, fm.image_ids), [])


def test_outer_fold_ignores_held_out_rows(rng):
    fm, resp, sess = make_data(rng, noise=0.5)
    x, y, s = fm.values, resp.values, sess.session
    for held in range(1, 7):
        xp, yp = x.copy(), y.copy()
        xp[s == held] = np.nan
        yp[s == held] = np.nan
        a = fit_outer_fold(x, y, s, held, np.logspace(-2, 3, 6))
        b = fit_outer_fold(xp, yp, s, held, np.logspace(-2, 3, 6))
        for u, v in zip(a, b):
            assert u.tobytes() == v.tobytes()


def test_single_lambda_equals_plain_loso(rng):
    fm, resp, sess = make_data(rng, noise=1.0)
    a = nested_cv_encode(fm, resp, sess, [3.0])
    b = loso_ridge(fm, resp, sess, 3.0)
    assert a.fold_r2.tobytes() == b.fold_r2.tobytes()
    assert a.coefs.tobytes() == b.coefs.tobytes()


def test_lambda_tie_prefers_smallest(rng):
    # standardize=False and an all-zero X: every lambda predicts the training mean
    fm, resp, sess = make_data(rng, noise=1.0)
    fm.values[:] = 0.0
    cv = nested_cv_encode(fm, resp, sess, [10.0, 0.1, 1.0])
    assert np.all(cv.fold_lambda == 0.1)


def test_shared_lambda_mode(rng):
    fm, resp, sess = make_data(rng, noise=1.0)
    cv = nested_cv_encode(fm, resp, sess, np.logspace(-3, 5, 10), per_voxel=False)
    assert np.all(cv.fold_lambda == cv.fold_lambda[:, :1])


def test_cv_result_roundtrip(rng):
    fm, resp, sess = make_data(rng, noise=1.0)
    cv = nested_cv_encode(fm, resp, sess, [1.0, 10.0])
    back = CVResult.from_dict(cv.to_dict())
    np.testing.assert_array_equal(back.fold_r2, cv.fold_r2)
    assert back.voxel_ids == cv.voxel_ids
    with pytest.raises(EncodingError, match="malformed"):
        CVResult.from_dict({"voxel_ids": []})


def test_compare_examples():
    s1 = np.array([0.1, 0.2, 0.3, 0.4])
    cmp = compare_models(s1, s1, ["a", "b", "c", "d"])
    assert cmp.labels == ["blue"] * 4
    cmp = compare_models(s1, s1 + np.array([0.051, 0.03, -0.2, 0.0]), ["a", "b", "c", "d"])
    assert cmp.labels == ["red", "unlabeled", "blue", "blue"]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=30),
       st.floats(0.001, 0.5))
def test_compare_labels_partition(pairs, thr):
    s1 = np.array([p[0] for p in pairs])
    s2 = np.array([p[1] for p in pairs])
    cmp = compare_models(s1, s2, [str(i) for i in range(len(pairs))], threshold=thr)
    for d, lab in zip(s2 - s1, cmp.labels):
        assert (lab == "red") == (d > thr)
        assert (lab == "blue") == (d <= 0)
        assert (lab == "unlabeled") == (0 < d <= thr)
    assert sum(cmp.counts().values()) == len(pairs)


def test_compare_top_k_and_misalignment():
    s1 = np.array([0.5, np.nan, 0.9, 0.1])
    cmp = compare_models(s1, s1, ["a", "b", "c", "d"], top_k=3)
    assert cmp.top_k == [2, 0, 3]
    assert len(compare_models(s1, s1, ["a", "b", "c", "d"], top_k=10).top_k) == 4
    with pytest.raises(EncodingError, match="misaligned"):
        compare_models(s1, s1, ["a", "b", "c", "d"], ["a", "b", "d", "c"])
