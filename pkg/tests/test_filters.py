"""Filter bank semantics: reference convolution, FFT engine, gradients."""

import numpy as np
import pytest

from wframe import Filter, FilterBank, convolve, gabor_bank, random_bank
from wframe.oracle import finite_diff_grad


def _tiny_bank(seed=0, n_filters=3, kshape=(3, 3), **kw):
    return random_bank(n_filters, kshape, seed=seed, bias_std=0.3, **kw)


# ---------------------------------------------------------------------------
# convolve: the hand-checkable reference the FFT path must reproduce
# ---------------------------------------------------------------------------

def test_convolve_pinned_1d():
    out = convolve([1.0, 2.0, 3.0], Filter(np.array([1.0, 1.0])))
    np.testing.assert_array_equal(out, [3.0, 5.0, 3.0])


def test_convolve_adds_bias_everywhere():
    base = convolve([1.0, 2.0, 3.0], Filter(np.array([1.0, 1.0])))
    shifted = convolve([1.0, 2.0, 3.0], Filter(np.array([1.0, 1.0]), bias=-2.5))
    np.testing.assert_allclose(shifted, base - 2.5)


def test_convolve_pinned_2d():
    # windows anchored at p, zero padded past the high edge
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    k = Filter(np.array([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_array_equal(convolve(x, k), [[5.0, 2.0], [3.0, 4.0]])


def test_convolve_identity_kernel():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 5))
    out = convolve(x, Filter(np.array([[1.0]])))
    np.testing.assert_array_equal(out, x)


def test_convolve_rejects_bad_shapes():
    with pytest.raises(ValueError):
        convolve([1.0, 2.0], Filter(np.ones((3,))))
    with pytest.raises(ValueError):
        convolve([[1.0, 2.0]], Filter(np.ones(2)))


def test_responses_match_direct_convolution():
    rng = np.random.default_rng(11)
    for ndim in (1, 2):
        kshape = (3,) * ndim
        bank = _tiny_bank(seed=ndim, kshape=kshape)
        shape = (7,) * ndim
        x = rng.standard_normal(shape)
        got = bank.responses_batch(x[None])[0]
        want = np.stack([convolve(x, f) for f in bank.filters])
        np.testing.assert_allclose(got, want, atol=1e-12)


# ---------------------------------------------------------------------------
# statistics and energies
# ---------------------------------------------------------------------------

def test_theta_gradient_is_rectified_response_sum():
    bank = _tiny_bank(seed=5)
    x = np.random.default_rng(5).standard_normal((6, 6))
    resp = bank.responses_batch(x[None])[0]
    want = np.maximum(resp, 0.0).sum(axis=(1, 2))
    np.testing.assert_allclose(bank.theta_gradient(x), want, rtol=1e-14)


def test_energy_is_linear_in_theta():
    bank = _tiny_bank(seed=6)
    x = np.random.default_rng(6).standard_normal((5, 5))
    h = bank.theta_gradient(x)
    bank.theta = np.array([0.5, -1.0, 2.0])
    assert bank.energy(x) == pytest.approx(h @ bank.theta, rel=1e-14)


def test_log_density_subtracts_reference_quadratic():
    bank = _tiny_bank(seed=7, ref_variance=2.0)
    bank.theta = np.array([1.0, 0.5, -0.25])
    x = np.random.default_rng(7).standard_normal((4, 4))
    want = bank.energy(x) - (x * x).sum() / 4.0
    assert bank.log_density_unnorm(x) == pytest.approx(want, rel=1e-14)


def test_mean_response_divides_by_grid_size():
    bank = _tiny_bank(seed=8)
    x = np.random.default_rng(8).standard_normal((4, 6))
    np.testing.assert_allclose(bank.mean_response(x),
                               bank.theta_gradient(x) / 24.0, rtol=1e-15)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def test_grad_x_matches_finite_differences():
    rng = np.random.default_rng(21)
    bank = _tiny_bank(seed=21)
    bank.theta = rng.standard_normal(bank.n_filters)
    # keep away from rectifier kinks so the quotient is exact
    for _ in range(50):
        x = rng.standard_normal((5, 5))
        if np.min(np.abs(bank.responses(x))) > 1e-3:
            break
    want = finite_diff_grad(lambda v: bank.energy(v), x, h=1e-6)
    np.testing.assert_allclose(bank.grad_x(x), want, rtol=1e-6, atol=1e-8)


def test_grad_x_zero_theta_shortcut():
    bank = _tiny_bank(seed=22)
    x = np.random.default_rng(22).standard_normal((2, 5, 5))
    out = bank.grad_x_batch(x)
    assert out.shape == x.shape
    assert not out.any()


def test_grad_fields_weighted_sum_equals_grad_x():
    rng = np.random.default_rng(23)
    bank = _tiny_bank(seed=23)
    bank.theta = rng.standard_normal(bank.n_filters)
    x = rng.standard_normal((3, 6, 6))
    fields = bank.grad_fields_batch(x)
    want = np.einsum("k,bk...->b...", bank.theta, fields)
    np.testing.assert_allclose(bank.grad_x_batch(x), want, atol=1e-10)


def test_gram_matches_sq_grad_norm():
    """theta' G theta must equal ||grad_x energy||^2 exactly."""
    rng = np.random.default_rng(24)
    bank = _tiny_bank(seed=24)
    bank.theta = rng.standard_normal(bank.n_filters)
    x = rng.standard_normal((6, 6))
    G = bank.gram(x)
    np.testing.assert_allclose(G, G.T, atol=1e-12)
    quad = bank.theta @ G @ bank.theta
    norm = float((bank.grad_x(x) ** 2).sum())
    assert quad == pytest.approx(norm, rel=1e-10)


def test_grad_theta_sq_grad_norm_is_two_G_theta():
    rng = np.random.default_rng(25)
    bank = _tiny_bank(seed=25)
    bank.theta = rng.standard_normal(bank.n_filters)
    x = rng.standard_normal((5, 5))
    want = 2.0 * bank.gram(x) @ bank.theta
    np.testing.assert_allclose(bank.grad_theta_sq_grad_norm(x), want, rtol=1e-12)


# ---------------------------------------------------------------------------
# activation patterns
# ---------------------------------------------------------------------------

def test_activation_pattern_equality_and_count():
    bank = _tiny_bank(seed=31)
    x = np.random.default_rng(31).standard_normal((5, 5))
    p1 = bank.activation_pattern(x)
    p2 = bank.activation_pattern(x + 1e-12)
    assert p1 == p2
    assert p1.n_filters == bank.n_filters
    assert p1.grid_shape == (5, 5)
    assert 0 <= p1.count_active() <= bank.n_filters * 25


def test_activation_pattern_changes_across_kink():
    bank = FilterBank([Filter(np.array([1.0]))], theta=[1.0])
    below = bank.activation_pattern(np.array([-0.5]))
    above = bank.activation_pattern(np.array([0.5]))
    assert below != above


# ---------------------------------------------------------------------------
# bank construction
# ---------------------------------------------------------------------------

def test_gabor_bank_shapes_and_determinism():
    b1 = gabor_bank(8, kernel_size=5)
    b2 = gabor_bank(8, kernel_size=5)
    assert b1.n_filters == 8
    for f1, f2 in zip(b1.filters, b2.filters):
        assert f1.kernel.shape == (5, 5)
        np.testing.assert_array_equal(f1.kernel, f2.kernel)
    kernels = np.stack([f.kernel for f in b1.filters])
    # oriented kernels must be distinct
    assert len({k.tobytes() for k in kernels}) == 8


def test_random_bank_seeded():
    b1 = random_bank(4, (3, 3), seed=9, bias_std=0.5)
    b2 = random_bank(4, (3, 3), seed=9, bias_std=0.5)
    b3 = random_bank(4, (3, 3), seed=10, bias_std=0.5)
    for f1, f2 in zip(b1.filters, b2.filters):
        np.testing.assert_array_equal(f1.kernel, f2.kernel)
        assert f1.bias == f2.bias
    assert any(not np.array_equal(f1.kernel, f3.kernel)
               for f1, f3 in zip(b1.filters, b3.filters))


def test_random_bank_unit_norm_kernels():
    bank = random_bank(5, (3,), seed=2)
    for f in bank.filters:
        assert np.linalg.norm(f.kernel) == pytest.approx(1.0, rel=1e-12)


def test_theta_setter_validates():
    bank = _tiny_bank(seed=40)
    with pytest.raises(ValueError):
        bank.theta = np.ones(bank.n_filters + 1)
    with pytest.raises(ValueError):
        bank.theta = np.array([np.nan] * bank.n_filters)


def test_copy_is_independent():
    bank = _tiny_bank(seed=41)
    dup = bank.copy()
    dup.theta = np.ones(bank.n_filters)
    assert not bank.theta.any()
    x = np.random.default_rng(41).standard_normal((4, 4))
    np.testing.assert_array_equal(bank.responses(x), dup.responses(x))


def test_ref_variance_must_be_positive():
    with pytest.raises(ValueError):
        FilterBank([Filter(np.ones(2))], ref_variance=0.0)


def test_batch_rejects_non_finite():
    bank = _tiny_bank(seed=42)
    bad = np.full((1, 4, 4), np.nan)
    with pytest.raises(ValueError):
        bank.responses_batch(bad)
