"""FrameModel estimator facade: sklearn contract and fitted behavior."""

import numpy as np
import pytest
from sklearn.base import clone

from wframe import FrameModel, gaussian_mixture


def _data_1d(count=24, seed=0):
    comps = [(-2.0, 0.5, 0.5), (2.0, 0.5, 0.5)]
    ds = gaussian_mixture(8, comps, seed=seed, count=count)
    return np.stack(ds.items)


def _small_model(**kw):
    base = dict(bank_kind="random", n_filters=3, kernel_size=3, n_iters=3,
                langevin_steps=4, batch_obs=4, batch_syn=4, random_state=0)
    base.update(kw)
    return FrameModel(**base)


def test_get_set_params_round_trip():
    m = FrameModel(learning_rate=0.01, beta=1e-3)
    params = m.get_params()
    assert params["learning_rate"] == 0.01
    assert params["beta"] == 1e-3
    m.set_params(n_iters=7)
    assert m.n_iters == 7
    with pytest.raises(ValueError):
        m.set_params(not_a_param=1)


def test_clone_preserves_params():
    m = _small_model(mode="frame", clip=(-1.0, 1.0))
    c = clone(m)
    assert c.get_params() == m.get_params()


def test_fit_sets_trailing_underscore_state():
    X = _data_1d()
    m = _small_model().fit(X)
    assert m.bank_.n_filters == 3
    assert m.n_features_in_ == 8
    assert m.signal_shape_ == (8,)
    assert len(m.trace_) == 3
    assert m.diverged_ is False
    assert m.state_.iteration == 3


def test_fit_deterministic_in_random_state():
    X = _data_1d()
    a = _small_model().fit(X)
    b = _small_model().fit(X)
    c = _small_model(random_state=1).fit(X)
    np.testing.assert_array_equal(a.bank_.theta, b.bank_.theta)
    assert not np.array_equal(a.bank_.theta, c.bank_.theta)


def test_transform_and_scores():
    X = _data_1d()
    m = _small_model().fit(X)
    T = m.transform(X[:5])
    assert T.shape == (5, 3)
    s = m.score_samples(X[:5])
    assert s.shape == (5,)
    np.testing.assert_allclose(m.score(X[:5]), s.mean())
    # score_samples must equal the bank's own log density
    np.testing.assert_allclose(
        s, m.bank_.log_density_unnorm_batch(X[:5].reshape(5, 8)))


def test_feature_count_mismatch_rejected():
    m = _small_model().fit(_data_1d())
    with pytest.raises(ValueError):
        m.transform(np.zeros((2, 9)))


def test_unfitted_raises():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        _small_model().transform(np.zeros((1, 8)))


def test_sample_is_repeatable_and_nonmutating():
    m = _small_model().fit(_data_1d())
    theta_before = m.bank_.theta.copy()
    chains_before = m.state_.chains.values.copy()
    s1 = m.sample(n_steps=5)
    s2 = m.sample(n_steps=5)
    assert s1.shape == (4, 8)
    np.testing.assert_array_equal(s1, s2)
    np.testing.assert_array_equal(m.bank_.theta, theta_before)
    np.testing.assert_array_equal(m.state_.chains.values, chains_before)
    # zero steps returns the fitted chains as they stand
    np.testing.assert_array_equal(m.sample(n_steps=0),
                                  chains_before.reshape(4, -1))


def test_signal_shape_validation():
    X = _data_1d()
    with pytest.raises(ValueError):
        _small_model(signal_shape=(3, 3)).fit(X)  # 9 != 8
    with pytest.raises(ValueError):
        _small_model(bank_kind="gabor").fit(X)  # gabor needs 2-D


def test_2d_signals_via_signal_shape():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((12, 16))
    m = _small_model(bank_kind="gabor", signal_shape=(4, 4), n_filters=4).fit(X)
    assert m.signal_shape_ == (4, 4)
    assert m.transform(X[:2]).shape == (2, 4)


def test_divergence_surfaces_as_flag_not_exception():
    X = _data_1d()
    m = _small_model(ref_variance=1e-4, noise_std=0.01, init="gaussian",
                     n_iters=5).fit(X)
    assert m.diverged_ is True
    assert len(m.trace_) >= 1
    assert m.trace_[len(m.trace_) - 1].diverged
