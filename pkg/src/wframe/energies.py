"""Differentiable-energy handles for the diffusion steps and 1-D oracles.

An energy handle is any object with three vectorized callbacks:

    value(x) -> float            the energy
    grad(x) -> array like x      gradient of the energy in x
    grad_sq_grad_norm(x) -> array like x
                                 gradient in x of ||grad(x)||^2

For the rectifier filter-bank energy the last callback is identically zero
almost everywhere (the signal gradient is piecewise constant), which is the
degeneracy that motivates putting the damping on theta rather than on x.
"""

from __future__ import annotations

import numpy as np

from .filters import FilterBank, as_signal

__all__ = ["QuadraticEnergy", "BankEnergy"]


class QuadraticEnergy:
    """Isotropic quadratic energy ``-0.5 * curvature * ||x||^2``.

    With curvature ``1 / ref_variance`` this reproduces the Gaussian
    reference term, making closed-form stationary distributions available
    for sampler verification.
    """

    def __init__(self, curvature: float):
        curvature = float(curvature)
        if not np.isfinite(curvature):
            raise ValueError("curvature must be finite")
        self.curvature = curvature

    def value(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(-0.5 * self.curvature * (x * x).sum())

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return -self.curvature * x

    def grad_sq_grad_norm(self, x) -> np.ndarray:
        # ||grad||^2 = curvature^2 ||x||^2, so its gradient is 2 c^2 x.
        x = np.asarray(x, dtype=np.float64)
        return 2.0 * self.curvature * self.curvature * x

    def __repr__(self) -> str:
        return f"QuadraticEnergy(curvature={self.curvature})"


class BankEnergy:
    """Adapter exposing a :class:`~wframe.filters.FilterBank` as an energy handle.

    ``grad_sq_grad_norm`` returns exact zeros: the bank's signal gradient is
    constant within every activation pattern, so the squared gradient norm
    has zero x-gradient wherever it is differentiable.
    """

    def __init__(self, bank: FilterBank):
        if not isinstance(bank, FilterBank):
            raise TypeError("bank must be a FilterBank")
        self.bank = bank

    def value(self, x) -> float:
        return self.bank.energy(x)

    def grad(self, x) -> np.ndarray:
        return self.bank.grad_x(x)

    def grad_sq_grad_norm(self, x) -> np.ndarray:
        return np.zeros_like(as_signal(x))

    def __repr__(self) -> str:
        return f"BankEnergy({self.bank!r})"
