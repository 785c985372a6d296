"""Langevin sampler: step algebra, chain state, divergence handling."""

import numpy as np
import pytest

from wframe import (
    BankEnergy,
    ChainState,
    DivergenceError,
    QuadraticEnergy,
    SamplerConfig,
    euler_maruyama_modified,
    initialize_chains,
    langevin_step,
    random_bank,
    run_inner_loop,
)


def test_quadratic_energy_handles():
    e = QuadraticEnergy(0.5)
    x = np.array([2.0, -1.0])
    assert e.value(x) == pytest.approx(-0.25 * 5.0)
    np.testing.assert_allclose(e.grad(x), [-1.0, 0.5])
    np.testing.assert_allclose(e.grad_sq_grad_norm(x), [1.0, -0.5])


def test_em_pinned_step():
    """Deterministic damped step: a=1/2 at x=1 lands exactly on zero.

    drift = -a x - 2 a^2 x = -1, and delta = sqrt(2) makes the step scale
    delta^2/2 equal one.
    """
    cfg = SamplerConfig(delta=np.sqrt(2.0), steps_per_iter=1, noise_std=0.0,
                        use_reference_drift=False, include_w2_drift=True)
    out = euler_maruyama_modified(np.array([1.0]), QuadraticEnergy(0.5), cfg)
    np.testing.assert_allclose(out, [0.0], atol=1e-15)


def test_em_requires_rng_for_noise():
    cfg = SamplerConfig(noise_std=1.0)
    with pytest.raises(ValueError):
        euler_maruyama_modified(np.array([0.0]), QuadraticEnergy(1.0), cfg)


def test_em_damping_toggle_is_noop_for_bank_energy():
    """The rectifier bank's squared-gradient-norm term vanishes identically."""
    bank = random_bank(3, (3,), seed=4, bias_std=0.3)
    bank.theta = np.array([0.7, -0.4, 1.1])
    energy = BankEnergy(bank)
    x0 = np.random.default_rng(4).standard_normal(16)
    for flag in (False, True):
        cfg = SamplerConfig(delta=0.15, noise_std=1.0, include_w2_drift=flag)
        rng = np.random.default_rng(123)
        x = x0.copy()
        for _ in range(10):
            x = euler_maruyama_modified(x, energy, cfg, rng=rng)
        if flag:
            np.testing.assert_array_equal(x, ref)
        else:
            ref = x


def test_em_matches_langevin_step_without_noise():
    bank = random_bank(2, (3, 3), seed=5, bias_std=0.2)
    bank.theta = np.array([0.9, -0.6])
    x0 = np.random.default_rng(5).standard_normal((6, 6))
    cfg = SamplerConfig(delta=0.2, steps_per_iter=1, noise_std=0.0)
    state = ChainState(x0[None].copy(), [np.random.default_rng(0)])
    langevin_step(state, bank, cfg)
    single = euler_maruyama_modified(x0, BankEnergy(bank), cfg,
                                     ref_variance=bank.ref_variance)
    np.testing.assert_allclose(state.values[0], single, atol=1e-12)


def test_initialize_chains_deterministic():
    a = initialize_chains((4, 4), 3, seed=7, init="gaussian")
    b = initialize_chains((4, 4), 3, seed=7, init="gaussian")
    np.testing.assert_array_equal(a.values, b.values)
    assert a.n_chains == 3 and a.grid_shape == (4, 4) and a.iteration == 0
    # independent per-chain streams: no two chains coincide
    assert len({c.tobytes() for c in a.values}) == 3


def test_initialize_chains_zeros_and_scale():
    z = initialize_chains((8,), 2, seed=0, init="zeros")
    assert not z.values.any()
    g = initialize_chains((10000,), 1, seed=0, init="gaussian", ref_variance=4.0)
    assert g.values.std() == pytest.approx(2.0, rel=0.05)


def test_initialize_chains_validates():
    with pytest.raises(ValueError):
        initialize_chains((4,), 0, seed=0)
    with pytest.raises(ValueError):
        initialize_chains((4,), 1, seed=0, init="ones")


def test_run_inner_loop_counts_sweeps():
    bank = random_bank(2, (3,), seed=6)
    bank.theta = np.array([0.1, -0.1])
    cfg = SamplerConfig(delta=0.1, steps_per_iter=7, noise_std=1.0)
    state = initialize_chains((12,), 2, seed=1)
    twin = state.clone()
    run_inner_loop(state, bank, cfg)
    assert state.iteration == 1
    # same trajectory as seven explicit sub-steps
    for j in range(7):
        langevin_step(twin, bank, cfg, step=j)
    np.testing.assert_array_equal(state.values, twin.values)


def test_clone_is_deep_for_values_and_rngs():
    bank = random_bank(2, (3,), seed=8)
    cfg = SamplerConfig(delta=0.1, steps_per_iter=3, noise_std=1.0)
    state = initialize_chains((6,), 2, seed=3)
    dup = state.clone()
    run_inner_loop(dup, bank, cfg)
    assert state.iteration == 0
    assert not state.values.any()
    # the clone's rng advance must not touch the original's streams
    rerun = state.clone()
    run_inner_loop(rerun, bank, cfg)
    np.testing.assert_array_equal(rerun.values, dup.values)


def test_divergence_keeps_last_finite_state():
    # unstable explicit step: a = 1 - (delta^2/2)/ref_var < -1
    bank = random_bank(1, (2,), seed=9, ref_variance=1e-4)
    cfg = SamplerConfig(delta=0.2, steps_per_iter=50, noise_std=0.0,
                        divergence_limit=1e6)
    state = ChainState(np.full((2, 4), 0.5), [np.random.default_rng(i) for i in range(2)])
    with pytest.raises(DivergenceError) as exc:
        run_inner_loop(state, bank, cfg)
    err = exc.value
    assert err.chain in (0, 1)
    assert err.iteration == 0
    assert err.step is not None
    assert np.all(np.isfinite(state.values))
    assert np.abs(state.values).max() <= 1e6


def test_sampler_config_validation():
    for bad in (dict(delta=0.0), dict(steps_per_iter=0), dict(noise_std=-1.0),
                dict(divergence_limit=0.0)):
        with pytest.raises(ValueError):
            SamplerConfig(**bad)


def test_chain_state_validation():
    with pytest.raises(ValueError):
        ChainState(np.zeros((2, 3)), [np.random.default_rng(0)])
    with pytest.raises(ValueError):
        ChainState(np.array([np.inf])[None], [np.random.default_rng(0)])


def test_ou_variance_short_run():
    """Zero-filter bank + reference drift is a discrete OU process."""
    bank = random_bank(1, (1,), seed=0)
    cfg = SamplerConfig(delta=0.4, steps_per_iter=400, noise_std=1.0)
    state = initialize_chains((1,), 800, seed=12)
    run_inner_loop(state, bank, cfg)
    a = 1.0 - 0.5 * cfg.delta ** 2
    want = cfg.delta ** 2 / (1.0 - a * a)
    assert state.values.var() == pytest.approx(want, rel=0.15)
