"""Learning loop: update algebra, reduction property, divergence, resume."""

import numpy as np
import pytest

from wframe import (
    LearnerConfig,
    SamplerConfig,
    TrainingDiverged,
    frame_update,
    gabor_bank,
    random_bank,
    synth_texture,
    train,
    wframe_update,
)
from wframe.learner import clip_weights, sample_gamma


def _quick(mode="wframe", n_iters=4, **kw):
    lc = dict(mode=mode, learning_rate=0.003, beta=2e-4, n_iters=n_iters,
              batch_obs=4, batch_syn=4)
    lc.update(kw)
    return LearnerConfig(**lc)


def _smoke_run(mode="wframe", seed=0, n_iters=4, **kw):
    data = synth_texture("stripes", (8, 8), seed=100, count=16)
    bank = gabor_bank(4, kernel_size=3)
    sc = SamplerConfig(delta=0.2, steps_per_iter=5, noise_std=1.0)
    return train(data, bank, sc, _quick(mode, n_iters, **kw), seed=seed)


def test_frame_update_pinned():
    out = frame_update([1.0, -1.0], [3.0, 2.0], [1.0, 4.0], learning_rate=0.5)
    np.testing.assert_allclose(out, [2.0, -2.0])


def test_wframe_update_pinned():
    # damping = (beta/2) * ((1-gamma) p_prev + gamma p_t)
    out = wframe_update([0.0, 0.0], [2.0, 0.0], [0.0, 2.0], p_t=[4.0, 4.0],
                        p_prev=[0.0, 8.0], gamma=0.25, beta=1.0,
                        learning_rate=1.0)
    np.testing.assert_allclose(out, [2.0 - 0.5, -2.0 - 3.5])


def test_wframe_update_beta_zero_is_frame_bitwise():
    rng = np.random.default_rng(0)
    th, ho, hs, pt, pp = (rng.standard_normal(6) for _ in range(5))
    a = frame_update(th, ho, hs, learning_rate=0.01)
    b = wframe_update(th, ho, hs, pt, pp, gamma=0.3, beta=0.0,
                      learning_rate=0.01)
    assert np.array_equal(a, b)


def test_update_shape_validation():
    with pytest.raises(ValueError):
        frame_update([1.0], [1.0, 2.0], [0.0], learning_rate=0.1)
    with pytest.raises(ValueError):
        wframe_update([1.0], [1.0], [0.0], [0.0], [0.0], gamma=2.0, beta=0.1,
                      learning_rate=0.1)


def test_clip_weights():
    th = np.array([-3.0, 0.2, 5.0])
    np.testing.assert_allclose(clip_weights(th, (-1.0, 1.0)), [-1.0, 0.2, 1.0])
    np.testing.assert_array_equal(clip_weights(th, None), th)


def test_sample_gamma():
    rng = np.random.default_rng(1)
    assert sample_gamma(0.75, rng) == 0.75
    draws = [sample_gamma(None, rng) for _ in range(100)]
    assert all(0.0 <= g <= 1.0 for g in draws)
    assert len(set(draws)) > 90


def test_learner_config_validation():
    for bad in (dict(mode="sgd"), dict(learning_rate=0.0), dict(beta=-1.0),
                dict(gamma=1.5), dict(n_iters=0), dict(batch_obs=0),
                dict(clip=(1.0, -1.0)), dict(init="random")):
        with pytest.raises(ValueError):
            _quick(**bad)


def test_trace_covers_every_iteration():
    state = _smoke_run(n_iters=5)
    assert state.iteration == 5
    assert [r.iteration for r in state.trace.rows] == list(range(5))
    assert all(r.mode == "wframe" for r in state.trace.rows)
    assert not state.diverged


def test_reduction_beta_zero_matches_frame_bitwise():
    a = _smoke_run(mode="frame", seed=3)
    b = _smoke_run(mode="wframe", seed=3, beta=0.0)
    assert np.array_equal(a.bank.theta, b.bank.theta)
    assert np.array_equal(a.chains.values, b.chains.values)
    for ra, rb in zip(a.trace.rows, b.trace.rows):
        assert ra.to_csv_line().replace("frame", "X") == \
            rb.to_csv_line().replace("wframe", "X")


def test_seed_controls_everything():
    a = _smoke_run(seed=8)
    b = _smoke_run(seed=8)
    c = _smoke_run(seed=9)
    assert np.array_equal(a.bank.theta, b.bank.theta)
    assert not np.array_equal(a.bank.theta, c.bank.theta)


def test_caller_bank_never_mutated():
    data = synth_texture("stripes", (8, 8), seed=100, count=16)
    bank = gabor_bank(4, kernel_size=3)
    sc = SamplerConfig(delta=0.2, steps_per_iter=5, noise_std=1.0)
    train(data, bank, sc, _quick(n_iters=2), seed=0)
    assert not bank.theta.any()


def test_prev_snapshot_tracks_last_synthesis():
    state = _smoke_run(n_iters=3)
    assert state.prev_snapshot is not None
    np.testing.assert_array_equal(state.prev_snapshot, state.chains.values)
    assert state.prev_snapshot is not state.chains.values


def test_on_iteration_called_each_sweep():
    seen = []
    data = synth_texture("stripes", (8, 8), seed=100, count=16)
    bank = gabor_bank(4, kernel_size=3)
    sc = SamplerConfig(delta=0.2, steps_per_iter=5, noise_std=1.0)
    train(data, bank, sc, _quick(n_iters=4), seed=0,
          on_iteration=lambda s: seen.append(s.iteration))
    assert seen == [1, 2, 3, 4]


def test_resume_is_exact_and_total_target():
    data = synth_texture("stripes", (8, 8), seed=100, count=16)
    bank = gabor_bank(4, kernel_size=3)
    sc = SamplerConfig(delta=0.2, steps_per_iter=5, noise_std=1.0)
    full = train(data, bank, sc, _quick(n_iters=6), seed=2)
    half = train(data, bank, sc, _quick(n_iters=6), seed=2, n_iters=3)
    assert half.iteration == 3
    resumed = train(data, state=half, n_iters=6)
    assert resumed.iteration == 6
    assert np.array_equal(full.bank.theta, resumed.bank.theta)
    assert np.array_equal(full.chains.values, resumed.chains.values)
    # resuming past the target is a no-op
    again = train(data, state=resumed, n_iters=6)
    assert again.iteration == 6


def test_resume_rejects_fresh_run_arguments():
    state = _smoke_run(n_iters=2)
    data = synth_texture("stripes", (8, 8), seed=100, count=16)
    with pytest.raises(ValueError):
        train(data, bank=gabor_bank(4, kernel_size=3), state=state)


def test_divergence_carries_state_and_final_row():
    data = synth_texture("stripes", (8, 8), seed=100, count=16)
    # the coupled reference scale makes the explicit step wildly unstable
    bank = gabor_bank(4, kernel_size=3, ref_variance=1e-4)
    sc = SamplerConfig(delta=0.2, steps_per_iter=5, noise_std=0.01)
    with pytest.raises(TrainingDiverged) as exc:
        train(data, bank, sc, _quick(n_iters=10, init="gaussian"), seed=0)
    err = exc.value
    assert err.state.diverged
    assert err.state.divergence_info["iteration"] == err.iteration
    last = err.state.trace.rows[-1]
    assert last.diverged
    assert np.isfinite(last.energy_mean)


def test_batch_obs_larger_than_dataset_rejected():
    data = synth_texture("stripes", (8, 8), seed=100, count=3)
    bank = gabor_bank(4, kernel_size=3)
    sc = SamplerConfig(delta=0.2, steps_per_iter=2, noise_std=1.0)
    with pytest.raises(ValueError):
        train(data, bank, sc, _quick(n_iters=1), seed=0)
