import functools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.decomposition import PCA

from fatsynth.latent import LatentPCA, decode, encode, fit_pca, flatten_qmaps
from fatsynth.phantom import PhantomConfig, sample_qmaps
from fatsynth.signal import QMaps


def _data(n=60, d=12, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, d)) * np.linspace(3, 0.1, d)
    return rng.standard_normal((n, d)) @ A.T + 5.0


def test_matches_sklearn_whitened_pca_up_to_sign():
    X = _data()
    ours = LatentPCA(n_components=5).fit(X)
    ref = PCA(n_components=5, whiten=True, svd_solver="full").fit(X)
    Z = ours.transform(X)
    Zr = ref.transform(X)
    signs = np.sign(np.sum(Z * Zr, axis=0))
    np.testing.assert_allclose(Z, Zr * signs, atol=1e-9)
    np.testing.assert_allclose(ours.model_.stds, np.sqrt(ref.explained_variance_), rtol=1e-10)


def test_whitened_codes_have_unit_variance():
    X = _data(n=200)
    Z = LatentPCA(n_components=4).fit_transform(X)
    np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-10)
    np.testing.assert_allclose(Z.std(axis=0, ddof=1), 1, rtol=1e-10)
    np.testing.assert_allclose(np.corrcoef(Z.T), np.eye(4), atol=1e-10)


def test_sign_convention():
    m = LatentPCA(n_components=6).fit(_data()).model_
    idx = np.argmax(np.abs(m.components), axis=1)
    assert np.all(m.components[np.arange(6), idx] > 0)
    np.testing.assert_allclose(m.components @ m.components.T, np.eye(6), atol=1e-12)


def test_full_rank_round_trip_exact():
    X = _data(n=30, d=8)
    est = LatentPCA(n_components=8).fit(X)
    np.testing.assert_allclose(est.inverse_transform(est.transform(X)), X, atol=1e-9)


def test_rank_deficient_keeps_fewer_components():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((20, 2)) @ rng.standard_normal((2, 10))
    est = LatentPCA(n_components=6).fit(X)
    assert est.n_components_ == 2
    np.testing.assert_allclose(est.inverse_transform(est.transform(X)), X, atol=1e-9)
    # identical rows leave nothing to embed
    same = LatentPCA(n_components=1).fit(np.ones((5, 3)))
    assert same.n_components_ == 0
    np.testing.assert_allclose(same.inverse_transform(np.zeros((2, 0))), np.ones((2, 3)))


def test_k_validation():
    with pytest.raises(ValueError):
        LatentPCA(n_components=0).fit(_data())
    with pytest.raises(ValueError):
        LatentPCA(n_components=100).fit(_data(n=10))


def test_qmaps_encode_decode():
    cfg = PhantomConfig(grid=(64, 64))
    maps = [sample_qmaps(cfg, s).qmaps for s in range(12)]
    model = fit_pca(maps, k=12)
    assert model.grid == (64, 64)
    assert model.pixel_size == maps[0].pixel_size
    z = encode(model, maps[3])
    q = decode(model, z)
    assert isinstance(q, QMaps)
    # rank of 12 centred samples is 11, so the training maps are reproduced
    np.testing.assert_allclose(q.stack(), maps[3].stack(), atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(z=st.lists(st.floats(-6, 6), min_size=4, max_size=4))
def test_decode_always_valid_qmaps(z):
    model = _small_model()
    q = decode(model, np.array(z))
    assert np.all(q.rho_w >= 0) and np.all(q.rho_f >= 0) and np.all(q.r2star >= 0)
    assert all(np.all(np.isfinite(c)) for c in q.stack())


@functools.lru_cache(maxsize=None)
def _small_model():
    cfg = PhantomConfig(grid=(64, 64))
    return fit_pca([sample_qmaps(cfg, s).qmaps for s in range(8)], k=4)


def test_channel_scaling_balances_channels():
    cfg = PhantomConfig(grid=(64, 64))
    maps = [sample_qmaps(cfg, s).qmaps for s in range(6)]
    X, grid = flatten_qmaps(maps)
    m = LatentPCA(n_components=3).fit(maps).model_
    per = X.reshape(6, 5, -1).std(axis=(0, 2))
    np.testing.assert_allclose(m.channel_scale, per)
    unscaled = LatentPCA(n_components=3, scale_channels=False).fit(maps).model_
    np.testing.assert_array_equal(unscaled.channel_scale, np.ones(5))


def test_grid_mismatch_rejected():
    maps = [sample_qmaps(PhantomConfig(grid=(64, 64)), s).qmaps for s in range(4)]
    model = fit_pca(maps, k=2)
    other = sample_qmaps(PhantomConfig(grid=(72, 72)), 0).qmaps
    with pytest.raises(ValueError):
        encode(model, other)
    with pytest.raises(ValueError):
        decode(model, np.zeros(3))
