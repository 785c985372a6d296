"""Stochastic-gradient learning of filter-bank weights.

Two update rules act on theta, both driven by the gap between observed and
synthesized rectified-response statistics ``H_obs - H_syn``:

``frame``
    Plain ascent: ``theta += lr * (H_obs - H_syn)``.

``wframe``
    The same ascent minus a damping term built from the theta-gradient of
    the mean squared signal-gradient norm over the synthesized batch,

        theta += lr * (H_obs - H_syn)
                 - (beta / 2) * ((1 - gamma) * P_prev + gamma * P_t)

    with ``gamma`` drawn uniformly from [0, 1] each iteration (or pinned).
    Both statistics are evaluated at the current weights: ``P_t`` over the
    freshly synthesized batch and ``P_prev`` over the snapshot of samples
    kept from the previous iteration. At the first update, where no
    snapshot exists yet, ``P_prev`` falls back to ``P_t``. With
    ``beta = 0`` the rule reduces to ``frame`` bit-exactly.

Synthesis uses persistent Langevin chains (:mod:`wframe.sampler`); the
shuffle stream, the gamma stream, and every chain's noise stream are
independently spawned from one root seed, so the two modes see identical
data batches and chain noise under a shared seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filters import FilterBank
from .metrics import MetricRow, MetricTrace, empirical_w2_1d, mean_energy, response_distance
from .sampler import ChainState, DivergenceError, SamplerConfig, initialize_chains, run_inner_loop

__all__ = [
    "MODES",
    "LearnerConfig",
    "TrainState",
    "TrainingDiverged",
    "frame_update",
    "wframe_update",
    "clip_weights",
    "sample_gamma",
    "train",
]

MODES = ("frame", "wframe")


class TrainingDiverged(RuntimeError):
    """A chain diverged during training.

    Carries the :class:`TrainState` as of the failure (last finite chain
    values, trace ending in a flagged row) so callers can inspect or export
    the partial run.
    """

    def __init__(self, message: str, state: "TrainState", iteration: int,
                 chain: int, step: int | None = None):
        super().__init__(message)
        self.state = state
        self.iteration = int(iteration)
        self.chain = int(chain)
        self.step = None if step is None else int(step)


@dataclass(frozen=True)
class LearnerConfig:
    """Settings for the outer learning loop.

    Parameters
    ----------
    mode : {"frame", "wframe"}
        Update rule.
    learning_rate : float
        Step size on the statistic gap.
    beta : float
        Damping strength; only read in wframe mode.
    gamma : float or None
        Interpolation weight between the previous and current damping
        statistics; None draws gamma ~ U[0, 1] each iteration.
    n_iters : int
        Target number of learning iterations.
    clip : (float, float) or None
        Elementwise weight bounds applied after each update.
    batch_obs : int
        Observed signals sampled per iteration.
    batch_syn : int
        Persistent chains.
    init : {"zeros", "gaussian"}
        Chain initialization.
    """

    mode: str = "wframe"
    learning_rate: float = 0.005
    beta: float = 2e-4
    gamma: float | None = None
    n_iters: int = 100
    clip: tuple[float, float] | None = None
    batch_obs: int = 9
    batch_syn: int = 9
    init: str = "zeros"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError("learning_rate must be positive and finite")
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise ValueError("beta must be non-negative and finite")
        if self.gamma is not None and not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1] or be None")
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")
        if self.clip is not None:
            lo, hi = self.clip
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError("clip bounds must be finite with lo < hi")
            object.__setattr__(self, "clip", (float(lo), float(hi)))
        if self.batch_obs < 1 or self.batch_syn < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.init not in ("zeros", "gaussian"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class TrainState:
    """Everything a run needs to continue: model, chains, streams, trace."""

    bank: FilterBank
    chains: ChainState
    sampler_config: SamplerConfig
    learner_config: LearnerConfig
    trace: MetricTrace
    rng_shuffle: np.random.Generator = field(repr=False)
    rng_gamma: np.random.Generator = field(repr=False)
    iteration: int = 0
    prev_snapshot: np.ndarray | None = None
    theta_history: list = field(default_factory=list, repr=False)
    diverged: bool = False
    divergence_info: dict | None = None
    seed: int | None = None


def frame_update(theta, h_obs, h_syn, learning_rate: float) -> np.ndarray:
    """Plain moment-matching ascent step on theta."""
    theta, h_obs, h_syn = (np.asarray(v, dtype=np.float64) for v in (theta, h_obs, h_syn))
    if not (theta.shape == h_obs.shape == h_syn.shape) or theta.ndim != 1:
        raise ValueError("theta, h_obs, h_syn must be 1-D arrays of equal length")
    return theta + learning_rate * (h_obs - h_syn)


def wframe_update(theta, h_obs, h_syn, p_t, p_prev, gamma: float, beta: float,
                  learning_rate: float) -> np.ndarray:
    """Damped ascent step on theta.

    The damping statistic is the convex interpolation
    ``(1 - gamma) * p_prev + gamma * p_t`` scaled by ``beta / 2``; with
    ``beta = 0`` the result is bit-identical to :func:`frame_update`.
    """
    theta, h_obs, h_syn, p_t, p_prev = (
        np.asarray(v, dtype=np.float64) for v in (theta, h_obs, h_syn, p_t, p_prev)
    )
    shapes = {v.shape for v in (theta, h_obs, h_syn, p_t, p_prev)}
    if len(shapes) != 1 or theta.ndim != 1:
        raise ValueError("all update inputs must be 1-D arrays of equal length")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    damping = (0.5 * beta) * ((1.0 - gamma) * p_prev + gamma * p_t)
    return theta + learning_rate * (h_obs - h_syn) - damping


def clip_weights(theta, bounds: tuple[float, float] | None) -> np.ndarray:
    """Clamp weights elementwise to ``bounds``; None passes through a copy."""
    theta = np.asarray(theta, dtype=np.float64)
    if bounds is None:
        return theta.copy()
    lo, hi = bounds
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValueError("clip bounds must be finite with lo < hi")
    return np.clip(theta, lo, hi)


def sample_gamma(fixed: float | None, rng: np.random.Generator) -> float:
    """Fixed interpolation weight, or a fresh U[0, 1] draw from ``rng``."""
    if fixed is not None:
        if not 0.0 <= fixed <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        return float(fixed)
    return float(rng.uniform(0.0, 1.0))


def _mean_projection(batch: np.ndarray) -> np.ndarray:
    return batch.reshape(batch.shape[0], -1).mean(axis=1)


def _w2_diagnostic(syn: np.ndarray, obs: np.ndarray) -> float:
    if syn.shape[0] != obs.shape[0]:
        return float("nan")
    return empirical_w2_1d(_mean_projection(syn), _mean_projection(obs))


def _extract_items(dataset) -> np.ndarray:
    items = np.asarray(getattr(dataset, "items", dataset), dtype=np.float64)
    if items.ndim < 2:
        raise ValueError("dataset must be an array of shape (count, *grid_shape)")
    if items.shape[0] == 0:
        raise ValueError("dataset is empty")
    return items


def train(dataset, bank: FilterBank | None = None,
          sampler_config: SamplerConfig | None = None,
          learner_config: LearnerConfig | None = None,
          seed: int | None = 0, state: TrainState | None = None,
          n_iters: int | None = None, on_iteration=None) -> TrainState:
    """Run (or resume) the learning loop and return the final state.

    Parameters
    ----------
    dataset : Dataset or array_like
        Observed signals, shape ``(count, *grid_shape)``.
    bank, sampler_config, learner_config
        Model and settings for a fresh run; must be omitted when resuming.
        The bank is copied, so the caller's instance is never mutated.
    seed : int or None
        Root seed for a fresh run; chain noise, batch shuffling, and gamma
        draws use independently spawned child streams.
    state : TrainState, optional
        A previously returned (or checkpoint-loaded) state to resume; it is
        advanced in place and also returned.
    n_iters : int, optional
        Overrides the config's target iteration count (total, not extra).
    on_iteration : callable, optional
        Called with the state after every completed iteration.

    Raises
    ------
    TrainingDiverged
        When a chain leaves the finite range; the exception carries the
        state with its trace ending in a ``diverged`` row.
    """
    items = _extract_items(dataset)

    if state is None:
        if bank is None or sampler_config is None or learner_config is None:
            raise ValueError("fresh runs need bank, sampler_config, learner_config")
        bank = bank.copy()
        if bank.kernel_ndim != items.ndim - 1:
            raise ValueError(
                f"bank expects {bank.kernel_ndim}-d signals, dataset has "
                f"{items.ndim - 1}-d items"
            )
        root = np.random.SeedSequence(seed)
        chain_ss, shuffle_ss, gamma_ss = root.spawn(3)
        chains = initialize_chains(items.shape[1:], learner_config.batch_syn,
                                   chain_ss, init=learner_config.init,
                                   ref_variance=bank.ref_variance)
        state = TrainState(
            bank=bank, chains=chains, sampler_config=sampler_config,
            learner_config=learner_config, trace=MetricTrace(),
            rng_shuffle=np.random.default_rng(shuffle_ss),
            rng_gamma=np.random.default_rng(gamma_ss),
            seed=None if seed is None else int(seed),
        )
        state.theta_history.append(bank.theta.copy())
    else:
        if bank is not None or sampler_config is not None or learner_config is not None:
            raise ValueError("resume uses the state's own bank and configs")
        if state.chains.grid_shape != items.shape[1:]:
            raise ValueError(
                f"dataset shape {items.shape[1:]} does not match chains "
                f"{state.chains.grid_shape}"
            )

    bank = state.bank
    cfg = state.learner_config
    target = cfg.n_iters if n_iters is None else int(n_iters)
    if target < state.iteration:
        raise ValueError(
            f"target {target} iterations below already-completed {state.iteration}"
        )
    if items.shape[0] < cfg.batch_obs:
        raise ValueError(
            f"dataset has {items.shape[0]} items, batch_obs is {cfg.batch_obs}"
        )

    while state.iteration < target:
        t = state.iteration
        idx = state.rng_shuffle.permutation(items.shape[0])[:cfg.batch_obs]
        obs = items[idx]
        h_obs = bank.theta_gradient_batch(obs).mean(axis=0)

        try:
            run_inner_loop(state.chains, bank, state.sampler_config)
        except DivergenceError as err:
            state.diverged = True
            state.divergence_info = {
                "iteration": t, "chain": err.chain, "step": err.step,
            }
            syn = state.chains.values
            w2 = _w2_diagnostic(syn, obs)
            state.trace.append(MetricRow(
                iteration=t, mode=cfg.mode,
                energy_mean=mean_energy(bank, syn),
                response_distance=response_distance(bank, obs, syn),
                w2_1d=w2, theta_norm=float(np.linalg.norm(bank.theta)),
                update_norm=0.0, diverged=True,
            ))
            raise TrainingDiverged(
                f"iteration {t}: {err}", state=state, iteration=t,
                chain=err.chain, step=err.step,
            ) from err

        syn = state.chains.values
        h_syn = bank.theta_gradient_batch(syn).mean(axis=0)

        if cfg.mode == "wframe":
            # Both damping statistics use the current theta: P_t over the
            # fresh samples, P_prev over the previous iteration's snapshot.
            p_t = bank.grad_theta_sq_grad_norm_batch(syn).mean(axis=0)
            if state.prev_snapshot is None:
                p_prev = p_t
            else:
                p_prev = bank.grad_theta_sq_grad_norm_batch(
                    state.prev_snapshot).mean(axis=0)
            gamma = sample_gamma(cfg.gamma, state.rng_gamma)
            new_theta = wframe_update(bank.theta, h_obs, h_syn, p_t, p_prev,
                                      gamma, cfg.beta, cfg.learning_rate)
        else:
            new_theta = frame_update(bank.theta, h_obs, h_syn, cfg.learning_rate)

        if cfg.clip is not None:
            new_theta = clip_weights(new_theta, cfg.clip)

        update_norm = float(np.linalg.norm(new_theta - bank.theta))
        bank.theta = new_theta
        state.theta_history.append(bank.theta.copy())
        state.prev_snapshot = syn.copy()

        w2 = _w2_diagnostic(syn, obs)
        state.trace.append(MetricRow(
            iteration=t, mode=cfg.mode,
            energy_mean=mean_energy(bank, syn),
            response_distance=response_distance(bank, obs, syn),
            w2_1d=w2, theta_norm=float(np.linalg.norm(bank.theta)),
            update_norm=update_norm, diverged=False,
        ))
        state.iteration += 1
        if on_iteration is not None:
            on_iteration(state)

    return state
