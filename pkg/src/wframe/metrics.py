"""Training-progress metrics and the per-iteration trace.

The trace is append-only with strictly increasing iteration numbers and a
fixed CSV layout (see ``CSV_HEADER``), so exporting the same run twice
yields byte-identical files. No metric here is asserted to decrease during
training; they are measurements, not objectives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filters import FilterBank

__all__ = [
    "CSV_HEADER",
    "MetricRow",
    "MetricTrace",
    "response_distance",
    "mean_energy",
    "empirical_w2_1d",
]

CSV_HEADER = "iter,mode,energy_mean,response_distance,w2_1d,theta_norm,update_norm,diverged"


@dataclass(frozen=True)
class MetricRow:
    """One iteration's measurements.

    ``w2_1d`` is nan when the pooled observed and synthesized batches have
    different sizes; everything else must be finite unless ``diverged``.
    """

    iteration: int
    mode: str
    energy_mean: float
    response_distance: float
    w2_1d: float
    theta_norm: float
    update_norm: float
    diverged: bool = False

    def __post_init__(self):
        if self.iteration < 0:
            raise ValueError("iteration must be >= 0")
        if self.mode not in ("frame", "wframe"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.diverged:
            for name in ("energy_mean", "response_distance", "theta_norm",
                         "update_norm"):
                if not np.isfinite(getattr(self, name)):
                    raise ValueError(f"{name} must be finite unless diverged")

    def to_csv_line(self) -> str:
        cells = [
            str(int(self.iteration)),
            self.mode,
            repr(float(self.energy_mean)),
            repr(float(self.response_distance)),
            repr(float(self.w2_1d)),
            repr(float(self.theta_norm)),
            repr(float(self.update_norm)),
            "true" if self.diverged else "false",
        ]
        return ",".join(cells)


class MetricTrace:
    """Append-only sequence of :class:`MetricRow` with increasing iterations."""

    def __init__(self, rows=()):
        self._rows: list[MetricRow] = []
        for row in rows:
            self.append(row)

    def append(self, row: MetricRow):
        if not isinstance(row, MetricRow):
            raise TypeError("trace rows must be MetricRow instances")
        if self._rows and row.iteration <= self._rows[-1].iteration:
            raise ValueError(
                f"iteration {row.iteration} does not increase on "
                f"{self._rows[-1].iteration}"
            )
        self._rows.append(row)

    @property
    def rows(self) -> tuple[MetricRow, ...]:
        return tuple(self._rows)

    def __len__(self) -> int:
        return len(self._rows)

    def __iter__(self):
        return iter(self._rows)

    def __getitem__(self, i) -> MetricRow:
        return self._rows[i]

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        lines.extend(row.to_csv_line() for row in self._rows)
        return "\n".join(lines) + "\n"


def response_distance(bank: FilterBank, observed, synthesized) -> float:
    """Mean absolute gap between batch-averaged per-filter response sums.

    Both batches are reduced to one per-filter vector (rectified response
    sums, averaged over the batch); the distance is the mean absolute
    difference of those vectors, i.e. an L1 distance scaled by 1/K.
    Scaling theta leaves it unchanged; it depends on the bank only through
    kernels and biases.
    """
    f_obs = bank.theta_gradient_batch(observed).mean(axis=0)
    f_syn = bank.theta_gradient_batch(synthesized).mean(axis=0)
    return float(np.abs(f_obs - f_syn).mean())


def mean_energy(bank: FilterBank, batch) -> float:
    """Bank energy averaged over a batch."""
    return float(bank.energy_batch(batch).mean())


def empirical_w2_1d(a, b) -> float:
    """Quadratic Wasserstein distance between two equal-size 1-D samples.

    Sorting both samples gives the optimal coupling in one dimension, so

        W2(a, b) = sqrt(mean((sort(a) - sort(b))^2))

    which a brute-force search over pairings reproduces exactly.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("samples must be 1-D arrays")
    if a.size != b.size:
        raise ValueError(f"sample sizes differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("samples must be non-empty")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    diff = np.sort(a) - np.sort(b)
    return float(np.sqrt(np.mean(diff * diff)))
