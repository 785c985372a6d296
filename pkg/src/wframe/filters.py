"""Filter banks and the energies they induce on grid signals.

A grid signal is a plain ``numpy.ndarray`` of float64 values whose array
shape is the grid shape (1-D sequences, 2-D images, or higher). A filter
bank scores a signal by correlating it with every kernel, rectifying the
responses, and summing:

    energy(x) = sum_k theta[k] * sum_p relu(corr(x, kernel_k)[p] + bias_k)

``corr`` is zero-padded, shape-preserving cross-correlation anchored at the
first grid point: response position ``p`` reads the signal window starting
at ``p``, and windows hanging off the high end of an axis read zeros. The
per-filter rectified sums are the signal's response statistics; their
gradient structure (linear in theta, piecewise constant in x) is what the
learning rules in :mod:`wframe.learner` exploit.

All batched operations share one cached-FFT correlation engine, so every
public entry point sees bit-identical arithmetic for a given bank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Filter",
    "FilterBank",
    "ActivationPattern",
    "as_signal",
    "convolve",
    "gabor_bank",
    "random_bank",
]


def as_signal(values) -> np.ndarray:
    """Coerce ``values`` to a float64 signal array and validate it.

    Parameters
    ----------
    values : array_like
        Grid values of any dimensionality >= 1.

    Returns
    -------
    numpy.ndarray
        Float64 array with the same shape as the input.

    Raises
    ------
    ValueError
        If the array is empty or contains non-finite entries.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim < 1:
        x = x.reshape(1)
    if x.size == 0:
        raise ValueError("signal must contain at least one value")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite values")
    return x


@dataclass(frozen=True)
class Filter:
    """A single correlation kernel with an additive response bias."""

    kernel: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=np.float64)
        if kernel.ndim < 1 or kernel.size == 0:
            raise ValueError("kernel must be a non-empty array")
        if not np.all(np.isfinite(kernel)):
            raise ValueError("kernel contains non-finite values")
        bias = float(self.bias)
        if not np.isfinite(bias):
            raise ValueError("bias must be finite")
        kernel = kernel.copy()
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "bias", bias)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.kernel.shape


class ActivationPattern:
    """Boolean rectifier state, one mask per filter over response positions.

    Two patterns compare equal when their mask arrays agree elementwise;
    within one pattern the energy is linear in the signal and exactly
    quadratic as a log-density against a Gaussian reference.
    """

    def __init__(self, masks):
        masks = np.asarray(masks, dtype=bool)
        if masks.ndim < 2:
            raise ValueError("masks must have shape (n_filters, *grid_shape)")
        masks = masks.copy()
        masks.setflags(write=False)
        self.masks = masks

    @property
    def n_filters(self) -> int:
        return self.masks.shape[0]

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.masks.shape[1:]

    def count_active(self) -> int:
        return int(self.masks.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ActivationPattern):
            return NotImplemented
        return self.masks.shape == other.masks.shape and bool(
            np.array_equal(self.masks, other.masks)
        )

    def __repr__(self) -> str:
        return (
            f"ActivationPattern(n_filters={self.n_filters}, "
            f"grid_shape={self.grid_shape}, active={self.count_active()})"
        )


class _FFTPlan:
    """Cached spectra and slices for one (kernel stack, signal shape) pair."""

    __slots__ = ("full", "axes", "kf", "kf_flip", "fwd", "bwd")

    def __init__(self, kernels: np.ndarray, sig_shape: tuple[int, ...]):
        kshape = kernels.shape[1:]
        nd = len(sig_shape)
        self.full = tuple(n + k - 1 for n, k in zip(sig_shape, kshape))
        self.axes = tuple(range(-nd, 0))
        flipped = kernels[(slice(None),) + (slice(None, None, -1),) * nd]
        self.kf = np.fft.rfftn(kernels, s=self.full, axes=self.axes)
        self.kf_flip = np.fft.rfftn(flipped, s=self.full, axes=self.axes)
        # Correlation == full convolution with the flipped kernel, shifted by
        # kernel_size - 1; gradients accumulate on the unshifted low corner.
        self.fwd = tuple(slice(k - 1, k - 1 + n) for n, k in zip(sig_shape, kshape))
        self.bwd = tuple(slice(0, n) for n in sig_shape)


class FilterBank:
    """A weighted set of filters acting as an unnormalized log-density.

    Against a zero-mean Gaussian reference with variance ``ref_variance``
    the bank defines

        log p(x) = energy(x) - ||x||^2 / (2 * ref_variance) + const

    where ``energy`` is the theta-weighted sum of rectified response sums.
    ``theta`` is the only trainable state; kernels and biases are fixed at
    construction.

    Parameters
    ----------
    filters : sequence of Filter
        Non-empty; all kernels must share dimensionality (sizes may differ,
        shorter kernels act as zero-padded to the longest).
    theta : array_like, optional
        Initial weights, one per filter. Defaults to zeros.
    ref_variance : float, optional
        Variance of the Gaussian reference density. Default 1.0.
    kind : str, optional
        Tag recording how the bank was built ("gabor", "random", "custom").
    seed : int or None, optional
        Seed recorded for provenance when the bank was randomly generated.
    """

    def __init__(self, filters, theta=None, ref_variance: float = 1.0,
                 kind: str = "custom", seed: int | None = None):
        filters = tuple(filters)
        if not filters:
            raise ValueError("filter bank needs at least one filter")
        if not all(isinstance(f, Filter) for f in filters):
            raise TypeError("filters must be Filter instances")
        ndims = {f.kernel.ndim for f in filters}
        if len(ndims) != 1:
            raise ValueError("all kernels must share dimensionality")
        ref_variance = float(ref_variance)
        if not (np.isfinite(ref_variance) and ref_variance > 0):
            raise ValueError("ref_variance must be positive and finite")

        self._filters = filters
        self.ref_variance = ref_variance
        self.kind = str(kind)
        self.seed = seed

        nd = ndims.pop()
        kmax = tuple(max(f.kernel.shape[a] for f in filters) for a in range(nd))
        stack = np.zeros((len(filters),) + kmax)
        for i, f in enumerate(filters):
            stack[(i,) + tuple(slice(0, s) for s in f.kernel.shape)] = f.kernel
        stack.setflags(write=False)
        self._kernels = stack
        self._biases = np.array([f.bias for f in filters])
        self._biases.setflags(write=False)
        self._plans: dict[tuple[int, ...], _FFTPlan] = {}

        if theta is None:
            theta = np.zeros(len(filters))
        self.theta = theta

    # -- parameters ------------------------------------------------------

    @property
    def theta(self) -> np.ndarray:
        return self._theta

    @theta.setter
    def theta(self, value):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != (len(self._filters),):
            raise ValueError(
                f"theta must have shape ({len(self._filters)},), got {value.shape}"
            )
        if not np.all(np.isfinite(value)):
            raise ValueError("theta contains non-finite values")
        value = value.copy()
        value.setflags(write=False)
        self._theta = value

    @property
    def filters(self) -> tuple[Filter, ...]:
        return self._filters

    @property
    def n_filters(self) -> int:
        return len(self._filters)

    @property
    def kernel_ndim(self) -> int:
        return self._kernels.ndim - 1

    @property
    def max_kernel_shape(self) -> tuple[int, ...]:
        return self._kernels.shape[1:]

    def copy(self) -> "FilterBank":
        return FilterBank(self._filters, theta=self._theta,
                          ref_variance=self.ref_variance,
                          kind=self.kind, seed=self.seed)

    # -- internals -------------------------------------------------------

    def _plan(self, sig_shape: tuple[int, ...]) -> _FFTPlan:
        plan = self._plans.get(sig_shape)
        if plan is None:
            plan = _FFTPlan(self._kernels, sig_shape)
            self._plans[sig_shape] = plan
        return plan

    def _check_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        nd = self.kernel_ndim
        if X.ndim != nd + 1:
            raise ValueError(
                f"expected a batch of {nd}-d signals, got array of shape {X.shape}"
            )
        if X.shape[0] == 0:
            raise ValueError("batch must contain at least one signal")
        for n, k in zip(X.shape[1:], self.max_kernel_shape):
            if n < k:
                raise ValueError(
                    f"signal shape {X.shape[1:]} is smaller than the largest "
                    f"kernel {self.max_kernel_shape}"
                )
        if not np.all(np.isfinite(X)):
            raise ValueError("signals contain non-finite values")
        return X

    def _theta_bcast(self) -> np.ndarray:
        return self._theta.reshape((-1,) + (1,) * self.kernel_ndim)

    def _masks_float(self, X: np.ndarray, plan: _FFTPlan):
        resp = self._responses_from(X, plan)
        return (resp > 0).astype(np.float64)

    def _responses_from(self, X: np.ndarray, plan: _FFTPlan) -> np.ndarray:
        xf = np.fft.rfftn(X, s=plan.full, axes=plan.axes)
        prod = xf[:, None] * plan.kf_flip
        full = np.fft.irfftn(prod, s=plan.full, axes=plan.axes)
        resp = full[(slice(None), slice(None)) + plan.fwd]
        return resp + self._biases.reshape((-1,) + (1,) * self.kernel_ndim)

    # -- batched operations ----------------------------------------------

    def responses_batch(self, X) -> np.ndarray:
        """Biased correlation maps, shape ``(batch, n_filters, *grid_shape)``."""
        X = self._check_batch(X)
        return self._responses_from(X, self._plan(X.shape[1:]))

    def theta_gradient_batch(self, X) -> np.ndarray:
        """Rectified response sums per filter, shape ``(batch, n_filters)``.

        This is the gradient of the energy with respect to theta, and the
        sufficient statistic matched by the learning rules.
        """
        resp = self.responses_batch(X)
        spatial = tuple(range(2, resp.ndim))
        return np.maximum(resp, 0.0).sum(axis=spatial)

    def mean_response_batch(self, X) -> np.ndarray:
        """Rectified response sums divided by the number of grid positions."""
        X = self._check_batch(X)
        size = float(np.prod(X.shape[1:]))
        return self.theta_gradient_batch(X) / size

    def energy_batch(self, X) -> np.ndarray:
        """Bank energy per signal, shape ``(batch,)``."""
        return self.theta_gradient_batch(X) @ self._theta

    def log_density_unnorm_batch(self, X) -> np.ndarray:
        """Unnormalized Gaussian-reference log-density per signal."""
        X = self._check_batch(X)
        sq = (X * X).sum(axis=tuple(range(1, X.ndim)))
        return self.energy_batch(X) - sq / (2.0 * self.ref_variance)

    def grad_x_batch(self, X) -> np.ndarray:
        """Energy gradient in the signal, shape ``(batch, *grid_shape)``.

        Piecewise constant in x: within one activation pattern the masks do
        not move and the gradient is a fixed theta-weighted kernel overlay.
        """
        X = self._check_batch(X)
        if not self._theta.any():
            return np.zeros_like(X)
        plan = self._plan(X.shape[1:])
        masks = self._masks_float(X, plan)
        mf = np.fft.rfftn(masks, s=plan.full, axes=plan.axes)
        weighted = (mf * (plan.kf * self._theta_bcast())).sum(axis=1)
        g = np.fft.irfftn(weighted, s=plan.full, axes=plan.axes)
        return g[(slice(None),) + plan.bwd]

    def grad_fields_batch(self, X) -> np.ndarray:
        """Per-filter signal gradients of the rectified response sums.

        Shape ``(batch, n_filters, *grid_shape)``; theta-independent. The
        energy gradient is their theta-weighted sum.
        """
        X = self._check_batch(X)
        plan = self._plan(X.shape[1:])
        masks = self._masks_float(X, plan)
        mf = np.fft.rfftn(masks, s=plan.full, axes=plan.axes)
        fields = np.fft.irfftn(mf * plan.kf, s=plan.full, axes=plan.axes)
        return fields[(slice(None), slice(None)) + plan.bwd]

    def gram_batch(self, X) -> np.ndarray:
        """Gram matrices of the per-filter gradient fields, ``(batch, K, K)``."""
        fields = self.grad_fields_batch(X)
        flat = fields.reshape(fields.shape[0], fields.shape[1], -1)
        return flat @ flat.swapaxes(1, 2)

    def grad_theta_sq_grad_norm_batch(self, X) -> np.ndarray:
        """Theta-gradient of the squared signal-gradient norm, ``(batch, K)``.

        The squared norm ``||grad_x energy||^2 = theta' G theta`` with G the
        gradient-field Gram matrix, so the theta-gradient is exactly
        ``2 G theta``; no finite differencing is involved.
        """
        gram = self.gram_batch(X)
        return 2.0 * (gram @ self._theta)

    # -- single-signal wrappers --------------------------------------------

    def responses(self, x) -> np.ndarray:
        return self.responses_batch(as_signal(x)[None])[0]

    def theta_gradient(self, x) -> np.ndarray:
        return self.theta_gradient_batch(as_signal(x)[None])[0]

    def mean_response(self, x) -> np.ndarray:
        return self.mean_response_batch(as_signal(x)[None])[0]

    def energy(self, x) -> float:
        return float(self.energy_batch(as_signal(x)[None])[0])

    def log_density_unnorm(self, x) -> float:
        return float(self.log_density_unnorm_batch(as_signal(x)[None])[0])

    def grad_x(self, x) -> np.ndarray:
        return self.grad_x_batch(as_signal(x)[None])[0]

    def grad_fields(self, x) -> np.ndarray:
        return self.grad_fields_batch(as_signal(x)[None])[0]

    def gram(self, x) -> np.ndarray:
        return self.gram_batch(as_signal(x)[None])[0]

    def grad_theta_sq_grad_norm(self, x) -> np.ndarray:
        return self.grad_theta_sq_grad_norm_batch(as_signal(x)[None])[0]

    def activation_pattern(self, x) -> ActivationPattern:
        resp = self.responses(x)
        return ActivationPattern(resp > 0)

    def __repr__(self) -> str:
        return (
            f"FilterBank(kind={self.kind!r}, n_filters={self.n_filters}, "
            f"kernel_shape={self.max_kernel_shape}, "
            f"ref_variance={self.ref_variance})"
        )


def convolve(signal, filt: Filter) -> np.ndarray:
    """Shape-preserving biased correlation of one signal with one filter.

    Position ``p`` of the output reads the signal window anchored at ``p``:

        out[p] = sum_o kernel[o] * signal[p + o] + bias

    with zero padding beyond the high edge of each axis, so
    ``convolve([1, 2, 3], Filter([1, 1]))`` gives ``[3, 5, 3]``. Direct
    summation; used as the reference semantics for the bank's FFT engine.
    """
    x = as_signal(signal)
    k = filt.kernel
    if x.ndim != k.ndim:
        raise ValueError(
            f"signal dimensionality {x.ndim} != kernel dimensionality {k.ndim}"
        )
    for n, m in zip(x.shape, k.shape):
        if n < m:
            raise ValueError(f"signal shape {x.shape} smaller than kernel {k.shape}")
    pad = [(0, m - 1) for m in k.shape]
    xp = np.pad(x, pad)
    out = np.zeros_like(x)
    for off in np.ndindex(k.shape):
        w = k[off]
        if w == 0.0:
            continue
        window = tuple(slice(o, o + n) for o, n in zip(off, x.shape))
        out += w * xp[window]
    return out + filt.bias


def _gabor_kernel(size: int, orientation: float, wavelength: float,
                  sigma: float, phase: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    vv, uu = np.meshgrid(coords, coords)
    u = uu * np.cos(orientation) + vv * np.sin(orientation)
    v = -uu * np.sin(orientation) + vv * np.cos(orientation)
    envelope = np.exp(-(u * u + v * v) / (2.0 * sigma * sigma))
    carrier = np.cos(2.0 * np.pi * u / wavelength + phase)
    kern = envelope * carrier
    kern -= kern.mean()
    norm = np.sqrt((kern * kern).sum())
    if norm > 0:
        kern /= norm
    return kern


def gabor_bank(n_filters: int, kernel_size: int = 5, ref_variance: float = 1.0,
               wavelength: float | None = None, sigma: float | None = None,
               bias: float = 0.0) -> FilterBank:
    """Deterministic bank of oriented, zero-mean, unit-norm Gabor kernels.

    Orientations are evenly spaced over half a turn; even-phase (cosine)
    kernels, so each filter responds to oriented stripes of the given
    wavelength regardless of polarity position.

    Parameters
    ----------
    n_filters : int
        Number of orientations.
    kernel_size : int, optional
        Side length of the square kernels. Default 5.
    ref_variance : float, optional
        Gaussian reference variance for the returned bank.
    wavelength : float, optional
        Carrier wavelength in pixels. Default ``kernel_size / 2``.
    sigma : float, optional
        Envelope width in pixels. Default ``kernel_size / 4``.
    bias : float, optional
        Shared response bias. Default 0.0.
    """
    if n_filters < 1:
        raise ValueError("n_filters must be >= 1")
    if kernel_size < 1:
        raise ValueError("kernel_size must be >= 1")
    if wavelength is None:
        wavelength = kernel_size / 2.0
    if sigma is None:
        sigma = kernel_size / 4.0
    filters = []
    for i in range(n_filters):
        angle = np.pi * i / n_filters
        kern = _gabor_kernel(kernel_size, angle, wavelength, sigma, phase=0.0)
        filters.append(Filter(kern, bias=bias))
    return FilterBank(filters, ref_variance=ref_variance, kind="gabor")


def random_bank(n_filters: int, kernel_shape, seed: int,
                bias_std: float = 0.0, ref_variance: float = 1.0) -> FilterBank:
    """Seeded bank of unit-norm Gaussian random kernels.

    Parameters
    ----------
    n_filters : int
        Number of filters.
    kernel_shape : int or tuple of int
        Kernel shape; a bare int means a square 2-D kernel.
    seed : int
        Seed for the kernel (and bias) draws.
    bias_std : float, optional
        Standard deviation of the Gaussian bias draws; 0 gives zero biases.
    ref_variance : float, optional
        Gaussian reference variance for the returned bank.
    """
    if n_filters < 1:
        raise ValueError("n_filters must be >= 1")
    if isinstance(kernel_shape, (int, np.integer)):
        kernel_shape = (int(kernel_shape), int(kernel_shape))
    kernel_shape = tuple(int(s) for s in kernel_shape)
    if any(s < 1 for s in kernel_shape):
        raise ValueError("kernel_shape entries must be >= 1")
    rng = np.random.default_rng(seed)
    filters = []
    for _ in range(n_filters):
        kern = rng.standard_normal(kernel_shape)
        norm = np.sqrt((kern * kern).sum())
        if norm > 0:
            kern /= norm
        b = float(rng.normal(0.0, bias_std)) if bias_std > 0 else 0.0
        filters.append(Filter(kern, bias=b))
    return FilterBank(filters, ref_variance=ref_variance, kind="random", seed=seed)
