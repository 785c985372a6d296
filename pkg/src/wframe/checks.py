"""Named verification checks pairing each fast code path with an oracle.

Every check compares a production implementation against an independent
numerical route from :mod:`wframe.oracle` (finite differences, an explicit
Fokker-Planck solver, exhaustive transport search) or against an exact
structural property (bitwise trajectory equality, constant second
differences). Each returns a :class:`CheckResult`; ``run_all`` drives the
whole suite for the command-line ``oracle-check`` report.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .energies import BankEnergy
from .filters import FilterBank, convolve, random_bank
from .metrics import empirical_w2_1d
from .oracle import (
    DensityGrid,
    brute_force_w2,
    finite_diff_grad_batch,
    fokker_planck_1d,
    ks_statistic,
    ou_stationary_variance,
)
from .sampler import SamplerConfig, euler_maruyama_modified, initialize_chains, run_inner_loop

__all__ = [
    "CheckResult",
    "check_convolution_reference",
    "check_gradient_x",
    "check_gradient_theta",
    "check_gradient_theta_sq_norm",
    "check_grad_norm_flatness",
    "check_log_density_piecewise_quadratic",
    "check_sampler_vs_pde",
    "check_w2_equivalence",
    "run_all",
]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one verification check."""

    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


# -- shared draws -------------------------------------------------------------

def _draw_bank(rng: np.random.Generator) -> FilterBank:
    n_filters = int(rng.integers(1, 5))
    size = int(rng.integers(2, 4))
    bank = random_bank(n_filters, (size, size),
                       seed=int(rng.integers(2 ** 32)),
                       bias_std=0.3,
                       ref_variance=float(rng.uniform(0.5, 2.0)))
    bank.theta = rng.standard_normal(n_filters)
    return bank


def _draw_shape(rng: np.random.Generator) -> tuple[int, int]:
    return (int(rng.integers(4, 8)), int(rng.integers(4, 8)))


def _interior_signal(rng: np.random.Generator, bank: FilterBank, shape,
                     margin: float = 1e-3, attempts: int = 200) -> np.ndarray:
    """Draw a signal whose rectifier responses all clear ``margin``.

    Finite differencing a piecewise-linear energy is only meaningful away
    from activation boundaries; the margin keeps every probe point inside
    one pattern.
    """
    for _ in range(attempts):
        x = rng.standard_normal(shape)
        if np.abs(bank.responses(x)).min() > margin:
            return x
    raise RuntimeError("no pattern-interior signal found; margin too strict")


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.abs(a).max(initial=0.0)),
                float(np.abs(b).max(initial=0.0)), 1e-12)
    return float(np.abs(a - b).max(initial=0.0)) / scale


def _theta_fd(bank: FilterBank, X: np.ndarray, f_batch, h: float) -> np.ndarray:
    """Central differences of a batch functional in theta, one column per filter."""
    theta0 = bank.theta.copy()
    out = np.empty((X.shape[0], bank.n_filters))
    try:
        for k in range(bank.n_filters):
            step = np.zeros_like(theta0)
            step[k] = h
            bank.theta = theta0 + step
            v_plus = np.asarray(f_batch(X), dtype=np.float64)
            bank.theta = theta0 - step
            v_minus = np.asarray(f_batch(X), dtype=np.float64)
            out[:, k] = (v_plus - v_minus) / (2.0 * h)
    finally:
        bank.theta = theta0
    return out


# -- checks -------------------------------------------------------------------

def check_convolution_reference(n_draws: int = 50, seed: int = 10,
                                tol: float = 1e-10) -> CheckResult:
    """Spectral response engine vs the direct offset-sum convolution."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_draws):
        bank = _draw_bank(rng)
        x = rng.standard_normal(_draw_shape(rng))
        fast = bank.responses(x)
        direct = np.stack([convolve(x, f) for f in bank.filters])
        worst = max(worst, _rel_err(fast, direct))
    return CheckResult(
        "convolution-reference", worst <= tol,
        f"worst rel err {worst:.3e} over {n_draws} draws (tol {tol:g})")


def check_gradient_x(n_draws: int = 1000, seed: int = 11,
                     tol: float = 1e-5, h: float = 1e-6,
                     signals_per_bank: int = 10) -> CheckResult:
    """Analytic signal gradient of the energy vs central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < n_draws:
        bank = _draw_bank(rng)
        shape = _draw_shape(rng)
        batch = min(signals_per_bank, n_draws - done)
        X = np.stack([_interior_signal(rng, bank, shape) for _ in range(batch)])
        analytic = bank.grad_x_batch(X)
        for i in range(batch):
            fd = finite_diff_grad_batch(bank.energy_batch, X[i], h=h)
            worst = max(worst, _rel_err(analytic[i], fd))
        done += batch
    return CheckResult(
        "gradient-x", worst <= tol,
        f"worst rel err {worst:.3e} over {done} draws (tol {tol:g})")


def check_gradient_theta(n_draws: int = 1000, seed: int = 12,
                         tol: float = 1e-8, h: float = 1e-4,
                         signals_per_bank: int = 10) -> CheckResult:
    """Analytic weight gradient of the energy vs central differences.

    The energy is linear in the weights, so the stencil is exact up to
    round-off and the tolerance can sit near machine precision.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < n_draws:
        bank = _draw_bank(rng)
        shape = _draw_shape(rng)
        batch = min(signals_per_bank, n_draws - done)
        X = np.stack([rng.standard_normal(shape) for _ in range(batch)])
        analytic = bank.theta_gradient_batch(X)
        fd = _theta_fd(bank, X, bank.energy_batch, h)
        worst = max(worst, _rel_err(analytic, fd))
        done += batch
    return CheckResult(
        "gradient-theta", worst <= tol,
        f"worst rel err {worst:.3e} over {done} draws (tol {tol:g})")


def check_gradient_theta_sq_norm(n_draws: int = 1000, seed: int = 13,
                                 tol: float = 1e-6, h: float = 1e-4,
                                 signals_per_bank: int = 10) -> CheckResult:
    """Gram-matrix form of the damping gradient vs central differences.

    The squared gradient norm is an exact quadratic in the weights (the
    activation masks do not depend on them), so again the stencil has no
    truncation error.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < n_draws:
        bank = _draw_bank(rng)
        shape = _draw_shape(rng)
        batch = min(signals_per_bank, n_draws - done)
        X = np.stack([rng.standard_normal(shape) for _ in range(batch)])

        def sq_norm_batch(B):
            g = bank.grad_x_batch(B)
            return (g * g).sum(axis=tuple(range(1, g.ndim)))

        analytic = bank.grad_theta_sq_grad_norm_batch(X)
        fd = _theta_fd(bank, X, sq_norm_batch, h)
        worst = max(worst, _rel_err(analytic, fd))
        done += batch
    return CheckResult(
        "gradient-theta-sq-norm", worst <= tol,
        f"worst rel err {worst:.3e} over {done} draws (tol {tol:g})")


def check_grad_norm_flatness(n_points: int = 100, seed: int = 14,
                             tol: float = 1e-8, h: float = 1e-5,
                             em_steps: int = 20) -> CheckResult:
    """Signal-space flatness of the squared gradient norm for rectifier banks.

    Within one activation pattern the energy gradient is constant, so the
    finite-difference signal gradient of its squared norm must vanish; and
    the integrator step with the damping drift switched on must therefore
    be bitwise identical to the step without it.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        bank = _draw_bank(rng)
        shape = _draw_shape(rng)
        x = _interior_signal(rng, bank, shape)

        def sq_norm_batch(B):
            g = bank.grad_x_batch(B)
            return (g * g).sum(axis=tuple(range(1, g.ndim)))

        fd = finite_diff_grad_batch(sq_norm_batch, x, h=h)
        worst = max(worst, float(np.abs(fd).max()))

    bank = _draw_bank(rng)
    energy = BankEnergy(bank)
    x0 = rng.standard_normal(_draw_shape(rng))
    cfg_on = SamplerConfig(delta=0.1, steps_per_iter=1, noise_std=1.0,
                           include_w2_drift=True)
    cfg_off = SamplerConfig(delta=0.1, steps_per_iter=1, noise_std=1.0,
                            include_w2_drift=False)
    rng_on = np.random.default_rng(seed + 1)
    rng_off = np.random.default_rng(seed + 1)
    x_on = x0.copy()
    x_off = x0.copy()
    identical = True
    for _ in range(em_steps):
        x_on = euler_maruyama_modified(x_on, energy, cfg_on, rng=rng_on)
        x_off = euler_maruyama_modified(x_off, energy, cfg_off, rng=rng_off)
        if not np.array_equal(x_on, x_off):
            identical = False
            break
    passed = worst <= tol and identical
    trail = "identical" if identical else "DIVERGED"
    return CheckResult(
        "grad-norm-flatness", passed,
        f"max |fd| {worst:.3e} at {n_points} interior points (tol {tol:g}); "
        f"damped/undamped integrator trajectories {trail}")


def check_log_density_piecewise_quadratic(n_segments: int = 100, seed: int = 15,
                                          tol: float = 1e-8,
                                          n_points: int = 9) -> CheckResult:
    """Constant second differences of the log density within a pattern.

    Along any segment that stays inside one activation pattern the energy
    is affine and the reference term quadratic, so second differences of
    the unnormalized log density along evenly spaced points are constant.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_segments):
        bank = _draw_bank(rng)
        shape = _draw_shape(rng)
        x0 = _interior_signal(rng, bank, shape)
        d = rng.standard_normal(shape)
        d /= np.sqrt((d * d).sum())
        r0 = bank.responses(x0)
        rd = bank.responses(x0 + d) - r0
        with np.errstate(divide="ignore"):
            crossings = -r0 / rd
        pos = crossings[crossings > 0]
        neg = crossings[crossings < 0]
        t_hi = min(0.45 * float(pos.min()) if pos.size else 1.0, 3.0)
        t_lo = max(0.45 * float(neg.max()) if neg.size else -1.0, -3.0)
        ts = np.linspace(t_lo, t_hi, n_points)
        X = x0[None] + ts[:, None, None] * d[None]
        vals = bank.log_density_unnorm_batch(X)
        second = np.diff(vals, 2)
        worst = max(worst, float(np.abs(second - second.mean()).max()))
    return CheckResult(
        "log-density-piecewise-quadratic", worst <= tol,
        f"worst second-difference spread {worst:.3e} over {n_segments} "
        f"segments (tol {tol:g})")


def check_sampler_vs_pde(n_chains: int = 10000, seed: int = 16,
                         ks_tol: float = 0.05, var_rtol: float = 0.03,
                         delta: float = 0.2, sweeps: int = 200,
                         steps_per_sweep: int = 1) -> CheckResult:
    """Langevin chain distribution vs the Fokker-Planck oracle.

    Runs the production chain under the pure reference (linear) drift,
    where both the stationary density (via the PDE solver) and the exact
    discrete-chain variance (via the linear-recursion analysis) are
    available independently.
    """
    bank = random_bank(1, (1,), seed=0, ref_variance=1.0)
    cfg = SamplerConfig(delta=delta, steps_per_iter=steps_per_sweep,
                        noise_std=1.0, use_reference_drift=True)
    state = initialize_chains((1,), n_chains, seed, init="zeros")
    for _ in range(sweeps):
        state = run_inner_loop(state, bank, cfg)
    samples = state.values.ravel()

    grid = DensityGrid.uniform(-5.0, 5.0, 200)
    h = grid.spacing
    dt = 0.9 * min(0.5 * h * h, h / 5.0)
    horizon = 10.0
    fp = fokker_planck_1d(lambda x: -x, grid, dt, int(np.ceil(horizon / dt)))

    ks = ks_statistic(samples, fp)
    target = ou_stationary_variance(delta, 1.0, 1.0)
    var = float(np.var(samples))
    var_err = abs(var - target) / target
    passed = ks <= ks_tol and var_err <= var_rtol
    return CheckResult(
        "sampler-vs-pde", passed,
        f"KS {ks:.4f} (tol {ks_tol:g}); stationary variance {var:.4f} vs "
        f"{target:.4f}, rel err {var_err:.4f} (tol {var_rtol:g}); "
        f"{n_chains} chains x {sweeps * steps_per_sweep} steps")


def check_w2_equivalence(n_instances: int = 200, seed: int = 17,
                         tol: float = 1e-12, max_points: int = 6) -> CheckResult:
    """Sorted-coupling transport distance vs exhaustive pairing search."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(1, max_points + 1))
        scale = float(rng.uniform(0.1, 5.0))
        a = rng.normal(scale=scale, size=n)
        b = rng.normal(loc=rng.uniform(-2, 2), scale=scale, size=n)
        worst = max(worst, abs(empirical_w2_1d(a, b) - brute_force_w2(a, b)))
    return CheckResult(
        "w2-equivalence", worst <= tol,
        f"worst |fast - exhaustive| {worst:.3e} over {n_instances} instances "
        f"(tol {tol:g})")


def run_all(fast: bool = True) -> list[CheckResult]:
    """Run every check; ``fast`` shrinks draw counts for interactive use."""
    scale = 5 if fast else 1
    results = [
        check_convolution_reference(),
        check_gradient_x(n_draws=1000 // scale),
        check_gradient_theta(n_draws=1000 // scale),
        check_gradient_theta_sq_norm(n_draws=1000 // scale),
        check_grad_norm_flatness(),
        check_log_density_piecewise_quadratic(),
        check_sampler_vs_pde(n_chains=10000 // scale),
        check_w2_equivalence(),
    ]
    return results


def main_report(fast: bool = True) -> tuple[str, bool]:
    """Format the report; returns (text, all_passed)."""
    start = time.perf_counter()
    results = run_all(fast=fast)
    elapsed = time.perf_counter() - start
    lines = [r.line() for r in results]
    ok = all(r.passed for r in results)
    lines.append(f"{sum(r.passed for r in results)}/{len(results)} checks "
                 f"passed in {elapsed:.1f}s")
    return "\n".join(lines) + "\n", ok
