"""Independent numerical routes for verifying the analytic machinery.

Nothing here shares code with the production gradient, sampler, or
transport implementations: gradients come from central differences, chain
distributions from an explicit 1-D Fokker-Planck solver, transport
distances from exhaustive search over pairings, and chain moments from the
closed-form linear-recursion analysis. Agreement between these routes and
the fast implementations is what the verification suite and the acceptance
tests check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import permutations

import numpy as np

__all__ = [
    "finite_diff_grad",
    "finite_diff_grad_batch",
    "brute_force_w2",
    "DensityGrid",
    "fokker_planck_1d",
    "modified_fp_1d",
    "ks_statistic",
    "ar1_coefficient",
    "ou_stationary_variance",
]

logger = logging.getLogger(__name__)


def finite_diff_grad(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array.

    Parameters
    ----------
    f : callable
        Maps an array shaped like ``x`` to a float.
    x : array_like
        Point of evaluation; not modified.
    h : float, optional
        Half-width of the central stencil.

    Returns
    -------
    numpy.ndarray
        ``(f(x + h e_i) - f(x - h e_i)) / (2 h)`` for every coordinate i,
        shaped like ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    if not (np.isfinite(h) and h > 0):
        raise ValueError("h must be positive and finite")
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def finite_diff_grad_batch(f_batch, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient using one batched evaluation.

    Same stencil as :func:`finite_diff_grad`, but ``f_batch`` maps a
    ``(B, *shape)`` stack to ``(B,)`` values, so all ``2 d`` probe points
    are evaluated in a single call. Agreement with the scalar version is
    itself checked by the test suite.
    """
    x = np.asarray(x, dtype=np.float64)
    if not (np.isfinite(h) and h > 0):
        raise ValueError("h must be positive and finite")
    d = x.size
    probes = np.broadcast_to(x.ravel(), (2 * d, d)).copy()
    probes[np.arange(d), np.arange(d)] += h
    probes[d + np.arange(d), np.arange(d)] -= h
    vals = np.asarray(f_batch(probes.reshape((2 * d,) + x.shape)),
                      dtype=np.float64)
    if vals.shape != (2 * d,):
        raise ValueError("f_batch must return one value per probe")
    return ((vals[:d] - vals[d:]) / (2.0 * h)).reshape(x.shape)


def brute_force_w2(a, b) -> float:
    """Quadratic transport distance by exhaustive search over pairings.

    Minimizes ``sqrt(mean((a_i - b_pi(i))^2))`` over all permutations
    ``pi``; factorial cost, so inputs are capped at 8 points. Exists purely
    to validate the sorted-coupling formula on small samples.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size != b.size:
        raise ValueError("inputs must be 1-D arrays of equal size")
    if a.size == 0:
        raise ValueError("inputs must be non-empty")
    if a.size > 8:
        raise ValueError("exhaustive search capped at 8 points")
    best = np.inf
    for perm in permutations(range(b.size)):
        cost = float(np.mean((a - b[list(perm)]) ** 2))
        if cost < best:
            best = cost
    return float(np.sqrt(best))


@dataclass(frozen=True)
class DensityGrid:
    """A probability density on ``n_cells`` uniform cells over ``(lo, hi)``.

    ``values[i]`` is the density on the cell centered at
    ``lo + (i + 0.5) * spacing``; the mass ``sum(values) * spacing`` stays
    within 1e-9 of one through every evolution step.
    """

    lo: float
    hi: float
    values: np.ndarray

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        values = np.asarray(self.values, dtype=np.float64)
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError("domain must be a finite interval with lo < hi")
        if values.ndim != 1 or values.size < 3:
            raise ValueError("need at least 3 cells")
        if not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite")
        if values.min() < 0:
            raise ValueError("density values must be non-negative")
        h = (hi - lo) / values.size
        mass = values.sum() * h
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"density mass {mass!r} is not 1")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "values", values)

    @classmethod
    def normalized(cls, lo: float, hi: float, values) -> "DensityGrid":
        """Build a grid from non-negative weights, scaled to unit mass."""
        values = np.asarray(values, dtype=np.float64)
        h = (float(hi) - float(lo)) / values.size
        total = values.sum() * h
        if not total > 0:
            raise ValueError("weights must have positive mass")
        return cls(lo, hi, values / total)

    @classmethod
    def uniform(cls, lo: float, hi: float, n_cells: int) -> "DensityGrid":
        return cls.normalized(lo, hi, np.ones(int(n_cells)))

    @classmethod
    def gaussian(cls, lo: float, hi: float, n_cells: int, mean: float = 0.0,
                 variance: float = 1.0) -> "DensityGrid":
        if not variance > 0:
            raise ValueError("variance must be positive")
        grid = cls.uniform(lo, hi, n_cells)
        x = grid.centers
        return cls.normalized(lo, hi, np.exp(-0.5 * (x - mean) ** 2 / variance))

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.values.size

    @property
    def centers(self) -> np.ndarray:
        h = self.spacing
        return self.lo + h * (np.arange(self.n_cells) + 0.5)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.spacing)

    def mean(self) -> float:
        return float((self.centers * self.values).sum() * self.spacing)

    def variance(self) -> float:
        m = self.mean()
        return float(((self.centers - m) ** 2 * self.values).sum() * self.spacing)

    def cdf_at(self, x) -> np.ndarray:
        """Cumulative distribution at ``x``, linear within cells."""
        x = np.asarray(x, dtype=np.float64)
        h = self.spacing
        edges = self.lo + h * np.arange(self.n_cells + 1)
        cum = np.concatenate([[0.0], np.cumsum(self.values) * h])
        return np.interp(x, edges, cum)

    def to_csv(self) -> str:
        """Two-column snapshot (``x,density``) for plotting."""
        lines = ["x,density"]
        lines.extend(f"{repr(float(c))},{repr(float(v))}"
                     for c, v in zip(self.centers, self.values))
        return "\n".join(lines) + "\n"


def fokker_planck_1d(drift, grid: DensityGrid, dt: float,
                     n_steps: int) -> DensityGrid:
    """Evolve ``d rho/dt = -(drift * rho)' + rho''`` from ``grid``.

    Unit diffusion coefficient by convention; this matches the chain of
    :mod:`wframe.sampler` at ``noise_std = 1``, where one Langevin step of
    size delta advances time by ``delta^2 / 2`` and the stationary density
    is ``exp(integral(drift))`` up to normalization.

    Explicit finite-volume update with centered fluxes and reflecting
    (zero-flux) boundaries, so mass is conserved to round-off. ``dt`` must
    satisfy the diffusion stability bound ``spacing^2 / 2`` (and the
    advection bound ``spacing / max|drift|``); violating it is a
    configuration error. Negative cell values beyond round-off never occur
    inside the bound; any tiny negatives are clipped to zero and counted in
    a debug log line.

    Parameters
    ----------
    drift : callable
        Vectorized drift field, evaluated once at the cell interfaces.
    grid : DensityGrid
        Initial density.
    dt, n_steps : float, int
        Explicit step size and count.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    h = grid.spacing
    centers = grid.centers
    rho = grid.values.copy()
    interfaces = 0.5 * (centers[:-1] + centers[1:])
    nu = np.asarray(drift(interfaces), dtype=np.float64)
    if nu.shape != interfaces.shape or not np.all(np.isfinite(nu)):
        raise ValueError("drift must return finite values shaped like its input")
    bound = 0.5 * h * h
    peak = float(np.abs(nu).max())
    if peak > 0:
        bound = min(bound, h / peak)
    if not 0 < dt <= bound:
        raise ValueError(f"dt = {dt:.3g} exceeds the stability bound {bound:.3g}")

    scale = dt / h
    clipped = 0
    for _ in range(n_steps):
        flux = nu * 0.5 * (rho[:-1] + rho[1:]) - (rho[1:] - rho[:-1]) / h
        rho = rho - scale * np.diff(flux, prepend=0.0, append=0.0)
        neg = rho < 0
        if neg.any():
            low = float(rho.min())
            if low < -1e-12:
                logger.warning("density fell to %g; scheme assumptions violated", low)
            clipped += int(neg.sum())
            rho[neg] = 0.0
    if clipped:
        logger.debug("clipped %d negative cell values to zero", clipped)
    return DensityGrid(grid.lo, grid.hi, rho)


def modified_fp_1d(energy, grid: DensityGrid, dt: float,
                   n_steps: int) -> DensityGrid:
    """Fokker-Planck evolution under the gradient-norm-damped drift.

    The drift is ``energy.grad(x) - energy.grad_sq_grad_norm(x)``. For an
    energy whose gradient is piecewise constant the damping callback is
    zero and the evolution coincides with :func:`fokker_planck_1d` under
    the plain gradient drift.
    """
    def drift(x):
        return energy.grad(x) - energy.grad_sq_grad_norm(x)

    return fokker_planck_1d(drift, grid, dt, n_steps)


def ks_statistic(samples, density: DensityGrid) -> float:
    """Kolmogorov-Smirnov distance between a sample and a grid density."""
    samples = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if samples.size == 0:
        raise ValueError("samples must be non-empty")
    cdf = density.cdf_at(samples)
    n = samples.size
    hi = np.max(np.arange(1, n + 1) / n - cdf)
    lo = np.max(cdf - np.arange(0, n) / n)
    return float(max(hi, lo))


def ar1_coefficient(delta: float, curvature: float) -> float:
    """Per-step contraction of the chain on a quadratic energy.

    With total drift ``-curvature * x`` the update is
    ``x <- a x + delta * noise_std * eps`` with ``a = 1 - delta^2 *
    curvature / 2``; the chain is stable only for ``|a| < 1``.
    """
    return 1.0 - 0.5 * delta * delta * curvature


def ou_stationary_variance(delta: float, noise_std: float, curvature: float) -> float:
    """Exact stationary variance of the discrete chain on a quadratic energy.

    Solving ``v = a^2 v + delta^2 noise_std^2`` for the linear recursion
    gives ``v = delta^2 noise_std^2 / (1 - a^2)``; this is the discrete
    chain's own fixed point, slightly above the continuous-time value
    ``noise_std^2 / curvature``, and is what long chain averages match.
    """
    a = ar1_coefficient(delta, curvature)
    if abs(a) >= 1.0:
        raise ValueError(f"chain is unstable: contraction coefficient {a:.3g}")
    return delta * delta * noise_std * noise_std / (1.0 - a * a)
