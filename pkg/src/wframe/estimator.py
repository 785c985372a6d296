"""Scikit-learn estimator facade over the training loop.

``FrameModel`` follows the usual estimator contract: constructor arguments
are stored verbatim, all learned state lives in trailing-underscore
attributes set by ``fit``, and ``get_params``/``set_params``/``clone``
work unchanged. Rows of ``X`` are flattened signals; pass ``signal_shape``
to interpret each row as an image.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .filters import gabor_bank, random_bank
from .learner import LearnerConfig, TrainingDiverged, train
from .sampler import SamplerConfig, run_inner_loop

__all__ = ["FrameModel"]


class FrameModel(TransformerMixin, BaseEstimator):
    """Energy-based signal model trained by persistent-chain sampling.

    The model scores a signal by rectified filter responses weighted by a
    learned vector theta, against a Gaussian reference. ``fit`` alternates
    Langevin synthesis with one of two weight updates: plain
    moment-matching ascent (``mode="frame"``) or the damped variant
    (``mode="wframe"``) that shrinks weights along the gradient of the
    synthesized batch's mean squared signal-gradient norm.

    Parameters
    ----------
    mode : {"wframe", "frame"}, default="wframe"
        Weight update rule.
    n_filters : int, default=8
        Number of filters in the bank.
    kernel_size : int, default=5
        Kernel side length (square for 2-D signals).
    bank_kind : {"gabor", "random"}, default="gabor"
        Oriented deterministic kernels, or seeded unit-norm random ones.
        Gabor banks need 2-D signals.
    signal_shape : tuple of int or None, default=None
        Grid shape of one row of ``X``; None treats rows as 1-D signals.
    ref_variance : float, default=1.0
        Variance of the Gaussian reference density.
    learning_rate : float, default=0.005
        Step size on the response-statistic gap.
    beta : float, default=2e-4
        Damping strength (wframe mode only).
    gamma : float or None, default=None
        Fixed interpolation weight for the damping statistic; None draws
        it uniformly from [0, 1] each iteration.
    n_iters : int, default=100
        Learning iterations.
    clip : tuple (lo, hi) or None, default=None
        Elementwise weight bounds applied after each update.
    batch_obs : int, default=9
        Observed signals per iteration.
    batch_syn : int, default=9
        Persistent sampling chains.
    delta : float, default=0.2
        Langevin step size.
    langevin_steps : int, default=50
        Sampler steps per learning iteration.
    noise_std : float, default=1.0
        Sampler noise scale.
    use_reference_drift : bool, default=True
        Include the Gaussian-reference pull in the sampler drift.
    init : {"zeros", "gaussian"}, default="zeros"
        Chain initialization.
    random_state : int or None, default=None
        Seeds the chain noise, batch shuffling, gamma draws, and random
        bank kernels.

    Attributes
    ----------
    bank_ : FilterBank
        The fitted bank (kernels fixed, theta learned).
    state_ : TrainState
        Full training state, reusable with :func:`wframe.learner.train`.
    trace_ : MetricTrace
        Per-iteration metrics.
    diverged_ : bool
        True when training ended early because a chain left the finite
        range; the fitted attributes then hold the last finite state.
    n_features_in_ : int
        Flattened signal length seen in ``fit``.
    """

    def __init__(self, mode="wframe", n_filters=8, kernel_size=5,
                 bank_kind="gabor", signal_shape=None, ref_variance=1.0,
                 learning_rate=0.005, beta=2e-4, gamma=None, n_iters=100,
                 clip=None, batch_obs=9, batch_syn=9, delta=0.2,
                 langevin_steps=50, noise_std=1.0, use_reference_drift=True,
                 init="zeros", random_state=None):
        self.mode = mode
        self.n_filters = n_filters
        self.kernel_size = kernel_size
        self.bank_kind = bank_kind
        self.signal_shape = signal_shape
        self.ref_variance = ref_variance
        self.learning_rate = learning_rate
        self.beta = beta
        self.gamma = gamma
        self.n_iters = n_iters
        self.clip = clip
        self.batch_obs = batch_obs
        self.batch_syn = batch_syn
        self.delta = delta
        self.langevin_steps = langevin_steps
        self.noise_std = noise_std
        self.use_reference_drift = use_reference_drift
        self.init = init
        self.random_state = random_state

    def _resolve_shape(self, n_features: int) -> tuple[int, ...]:
        if self.signal_shape is None:
            return (n_features,)
        shape = tuple(int(s) for s in self.signal_shape)
        if int(np.prod(shape)) != n_features:
            raise ValueError(
                f"signal_shape {shape} has {int(np.prod(shape))} entries, "
                f"X rows have {n_features}"
            )
        return shape

    def _build_bank(self, shape: tuple[int, ...], bank_seed: int):
        if self.bank_kind == "gabor":
            if len(shape) != 2:
                raise ValueError("gabor banks need 2-D signals; "
                                 "set signal_shape=(h, w) or bank_kind='random'")
            return gabor_bank(self.n_filters, kernel_size=self.kernel_size,
                              ref_variance=self.ref_variance)
        if self.bank_kind == "random":
            kshape = (int(self.kernel_size),) * len(shape)
            return random_bank(self.n_filters, kshape, seed=bank_seed,
                               bias_std=1.0, ref_variance=self.ref_variance)
        raise ValueError(f"unknown bank_kind {self.bank_kind!r}")

    def fit(self, X, y=None):
        """Learn theta from flattened signals in the rows of ``X``."""
        X = check_array(X, dtype=np.float64)
        n, d = X.shape
        shape = self._resolve_shape(d)
        root = np.random.SeedSequence(self.random_state)
        bank_ss, train_ss = root.spawn(2)
        bank_seed = int(bank_ss.generate_state(1, dtype=np.uint64)[0])
        train_seed = int(train_ss.generate_state(1, dtype=np.uint64)[0])

        bank = self._build_bank(shape, bank_seed)
        sampler_config = SamplerConfig(
            delta=self.delta, steps_per_iter=self.langevin_steps,
            noise_std=self.noise_std,
            use_reference_drift=self.use_reference_drift,
        )
        learner_config = LearnerConfig(
            mode=self.mode, learning_rate=self.learning_rate, beta=self.beta,
            gamma=self.gamma, n_iters=self.n_iters,
            clip=None if self.clip is None else tuple(self.clip),
            batch_obs=self.batch_obs, batch_syn=self.batch_syn, init=self.init,
        )
        items = X.reshape((n,) + shape)
        try:
            state = train(items, bank=bank, sampler_config=sampler_config,
                          learner_config=learner_config, seed=train_seed)
            self.diverged_ = False
        except TrainingDiverged as err:
            state = err.state
            self.diverged_ = True
        self.state_ = state
        self.bank_ = state.bank
        self.trace_ = state.trace
        self.n_features_in_ = d
        self.signal_shape_ = shape
        return self

    def _as_signals(self, X) -> np.ndarray:
        check_is_fitted(self, "bank_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X.reshape((X.shape[0],) + self.signal_shape_)

    def transform(self, X) -> np.ndarray:
        """Per-filter mean rectified responses, shape ``(n, n_filters)``."""
        signals = self._as_signals(X)
        return self.bank_.mean_response_batch(signals)

    def score_samples(self, X) -> np.ndarray:
        """Unnormalized log-density of each row under the fitted model."""
        signals = self._as_signals(X)
        return self.bank_.log_density_unnorm_batch(signals)

    def score(self, X, y=None) -> float:
        """Mean unnormalized log-density over ``X``."""
        return float(self.score_samples(X).mean())

    def sample(self, n_steps: int | None = None) -> np.ndarray:
        """Advance a copy of the fitted chains and return flattened values.

        Deterministic and repeatable: each call clones the fitted chain
        state (values and RNG positions), so it does not perturb the model
        and returns the same batch for the same ``n_steps``.
        """
        check_is_fitted(self, "state_")
        if n_steps is None:
            n_steps = self.langevin_steps
        n_steps = int(n_steps)
        if n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        chains = self.state_.chains.clone()
        if n_steps > 0:
            cfg = self.state_.sampler_config
            if n_steps != cfg.steps_per_iter:
                cfg = SamplerConfig(
                    delta=cfg.delta, steps_per_iter=n_steps,
                    noise_std=cfg.noise_std,
                    use_reference_drift=cfg.use_reference_drift,
                    divergence_limit=cfg.divergence_limit,
                )
            run_inner_loop(chains, self.bank_, cfg)
        return chains.values.reshape(chains.n_chains, -1)
