"""Persistent Langevin chains over filter-bank energies.

The chain update is the discretized diffusion

    x <- x + (delta^2 / 2) * drift(x) + delta * noise_std * eps,
    eps ~ N(0, I)

where ``drift = grad_x energy`` plus, when enabled, the Gaussian-reference
pull ``-x / ref_variance``. Chains are persistent across learning
iterations and each chain owns an independent spawned RNG stream, so
results do not depend on evaluation order or batch scheduling.

Every step validates the proposed values; a non-finite entry or a magnitude
above the configured divergence limit raises :class:`DivergenceError`
before the state is committed, leaving the last finite values in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filters import FilterBank, as_signal

__all__ = [
    "DIVERGENCE_LIMIT",
    "SamplerConfig",
    "ChainState",
    "DivergenceError",
    "initialize_chains",
    "langevin_step",
    "run_inner_loop",
    "euler_maruyama_modified",
]

DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    """A chain produced a non-finite or out-of-range value.

    Attributes
    ----------
    chain : int
        Index of the first offending chain.
    iteration : int
        The chain state's sweep counter when the step failed.
    step : int or None
        Index of the failing step within the current inner loop, when known.
    """

    def __init__(self, message: str, chain: int, iteration: int,
                 step: int | None = None):
        super().__init__(message)
        self.chain = int(chain)
        self.iteration = int(iteration)
        self.step = None if step is None else int(step)


@dataclass(frozen=True)
class SamplerConfig:
    """Settings for the chain update.

    Parameters
    ----------
    delta : float
        Step size; the drift enters scaled by ``delta^2 / 2`` and the noise
        by ``delta * noise_std``.
    steps_per_iter : int
        Inner-loop steps run per learning iteration.
    noise_std : float
        Standard deviation multiplier on the injected noise; 0 gives a
        deterministic gradient flow (RNG streams still advance).
    use_reference_drift : bool
        Include the Gaussian-reference pull ``-x / ref_variance``.
    include_w2_drift : bool
        In :func:`euler_maruyama_modified` only: add the damping drift
        ``-grad_x ||grad_x energy||^2``, which is identically zero for
        rectifier bank energies and only matters for smooth test energies.
    divergence_limit : float
        Absolute value above which a chain counts as diverged.
    """

    delta: float = 0.2
    steps_per_iter: int = 50
    noise_std: float = 1.0
    use_reference_drift: bool = True
    include_w2_drift: bool = False
    divergence_limit: float = DIVERGENCE_LIMIT

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError("delta must be positive and finite")
        if int(self.steps_per_iter) != self.steps_per_iter or self.steps_per_iter < 1:
            raise ValueError("steps_per_iter must be a positive integer")
        if not (np.isfinite(self.noise_std) and self.noise_std >= 0):
            raise ValueError("noise_std must be non-negative and finite")
        if not self.divergence_limit > 0:
            raise ValueError("divergence_limit must be positive")


@dataclass
class ChainState:
    """Values and RNG streams of a batch of persistent chains.

    ``values`` has shape ``(n_chains, *grid_shape)``; ``rngs`` holds one
    generator per chain; ``iteration`` counts completed inner loops (not
    individual steps), matching the learner's iteration index.
    """

    values: np.ndarray
    rngs: list = field(repr=False)
    iteration: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim < 2:
            raise ValueError("values must have shape (n_chains, *grid_shape)")
        if values.shape[0] < 1:
            raise ValueError("need at least one chain")
        if len(self.rngs) != values.shape[0]:
            raise ValueError(
                f"{values.shape[0]} chains but {len(self.rngs)} RNG streams"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("chain values must be finite")
        self.values = values

    @property
    def n_chains(self) -> int:
        return self.values.shape[0]

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    def clone(self) -> "ChainState":
        """Deep copy, including exact RNG stream positions."""
        rngs = []
        for r in self.rngs:
            bg = type(r.bit_generator)()
            bg.state = r.bit_generator.state
            rngs.append(np.random.Generator(bg))
        return ChainState(self.values.copy(), rngs, self.iteration)


def initialize_chains(grid_shape, n_chains: int, seed,
                      init: str = "zeros", ref_variance: float = 1.0) -> ChainState:
    """Create ``n_chains`` chains with independent spawned RNG streams.

    Parameters
    ----------
    grid_shape : tuple of int
        Shape of each chain's signal.
    n_chains : int
        Number of chains.
    seed : int or numpy.random.SeedSequence
        Root seed; per-chain streams are spawned children, so chain i's
        stream is independent of both the other chains and the root.
    init : {"zeros", "gaussian"}
        Start at zero or at a reference-distribution draw per chain.
    ref_variance : float
        Variance of the Gaussian used when ``init="gaussian"``.
    """
    grid_shape = tuple(int(s) for s in grid_shape)
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    if init not in ("zeros", "gaussian"):
        raise ValueError(f"unknown init {init!r}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(child) for child in ss.spawn(n_chains)]
    if init == "zeros":
        values = np.zeros((n_chains,) + grid_shape)
    else:
        scale = float(np.sqrt(ref_variance))
        values = np.stack([scale * r.standard_normal(grid_shape) for r in rngs])
    return ChainState(values, rngs)


def _check_proposal(new_flat: np.ndarray, limit: float, iteration: int,
                    step: int | None):
    finite = np.isfinite(new_flat).all(axis=1)
    peak = np.abs(new_flat).max(axis=1)
    bad = ~finite | (peak > limit)
    if bad.any():
        i = int(np.argmax(bad))
        detail = ("non-finite value" if not finite[i]
                  else f"|x| = {peak[i]:.3g} > {limit:.3g}")
        where = f"iteration {iteration}" + ("" if step is None else f", step {step}")
        raise DivergenceError(
            f"chain {i} diverged at {where} ({detail})",
            chain=i, iteration=iteration, step=step,
        )


def langevin_step(state: ChainState, bank: FilterBank, config: SamplerConfig,
                  step: int | None = None) -> ChainState:
    """Advance every chain one step in place and return the state.

    A sub-step: the sweep counter ``state.iteration`` is not touched. All
    chains draw noise from their own stream, then the whole batch is
    validated; on divergence the state keeps its last finite values and the
    error names the chain (and ``step``, when given).
    """
    values = state.values
    drift = bank.grad_x_batch(values)
    if config.use_reference_drift:
        drift = drift - values / bank.ref_variance
    eps = np.stack([r.standard_normal(state.grid_shape) for r in state.rngs])
    new = (values + (0.5 * config.delta * config.delta) * drift
           + (config.delta * config.noise_std) * eps)
    _check_proposal(new.reshape(state.n_chains, -1), config.divergence_limit,
                    state.iteration, step)
    state.values = new
    return state


def run_inner_loop(state: ChainState, bank: FilterBank,
                   config: SamplerConfig) -> ChainState:
    """Run ``config.steps_per_iter`` steps, then advance the sweep counter."""
    for j in range(config.steps_per_iter):
        langevin_step(state, bank, config, step=j)
    state.iteration += 1
    return state


def euler_maruyama_modified(x, energy, config: SamplerConfig, rng=None,
                            ref_variance: float = 1.0) -> np.ndarray:
    """One step of the (optionally damped) diffusion on a single signal.

    The drift is ``energy.grad(x)``, minus ``energy.grad_sq_grad_norm(x)``
    when ``config.include_w2_drift`` is set, plus the optional reference
    pull. For a rectifier bank energy the damping callback is exactly zero,
    so trajectories with the toggle on and off coincide bitwise, and both
    match :func:`langevin_step` on a one-chain state. For smooth energies
    the extra term actively damps high-gradient regions.

    Parameters
    ----------
    x : array_like
        Current signal.
    energy : object
        Handle with ``grad`` and ``grad_sq_grad_norm`` callbacks.
    config : SamplerConfig
        Step settings; ``steps_per_iter`` is ignored here.
    rng : numpy.random.Generator, optional
        Noise stream; required when ``config.noise_std > 0``.
    ref_variance : float
        Variance of the Gaussian reference used when the reference drift is
        enabled.
    """
    x = as_signal(x)
    drift = energy.grad(x)
    if config.include_w2_drift:
        drift = drift - energy.grad_sq_grad_norm(x)
    if config.use_reference_drift:
        drift = drift - x / ref_variance
    if rng is None:
        if config.noise_std > 0:
            raise ValueError("rng is required when noise_std > 0")
        eps = np.zeros_like(x)
    else:
        eps = rng.standard_normal(x.shape)
    new = (x + (0.5 * config.delta * config.delta) * drift
           + (config.delta * config.noise_std) * eps)
    _check_proposal(new.reshape(1, -1), config.divergence_limit, 0, None)
    return new
