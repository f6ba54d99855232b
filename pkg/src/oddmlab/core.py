"""Shared value types: sampled signals and the delay-Doppler grid."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "InvalidParameterError",
    "SampledSignal",
    "GridParams",
    "RrcParams",
]

# tolerance for deciding that a time instant sits on the sample lattice
_ALIGN_TOL = 1e-6


class InvalidParameterError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Oversampled complex baseband segment.

    Sample ``i`` sits at time ``t0 + i / rate``. All continuous-time
    integrals over signals are Riemann sums with step ``1 / rate``.
    """

    samples: np.ndarray
    rate: float
    t0: float = 0.0

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.complex128).ravel()
        if not self.rate > 0:
            raise InvalidParameterError(f"rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(x)):
            raise InvalidParameterError("samples must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def dt(self) -> float:
        return 1.0 / self.rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.rate

    @property
    def start_index(self) -> int:
        """Index of the first sample on the absolute lattice ``k / rate``."""
        return lattice_index(self.t0, self.rate)

    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real / self.rate)

    def power(self) -> float:
        if self.samples.size == 0:
            return 0.0
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples, t0: float | None = None) -> "SampledSignal":
        return SampledSignal(samples, self.rate, self.t0 if t0 is None else t0)

    def scaled(self, factor) -> "SampledSignal":
        return SampledSignal(self.samples * factor, self.rate, self.t0)

    def to_csv(self, path) -> None:
        """Write columns ``index, t_seconds, re, im``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "t_seconds", "re", "im"])
            for i, (t, v) in enumerate(zip(self.times, self.samples)):
                w.writerow([i, repr(float(t)), repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def from_csv(cls, path) -> "SampledSignal":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        if data.shape[0] < 2:
            raise InvalidParameterError("need at least two samples to recover the rate")
        t = data[:, 1]
        rate = 1.0 / np.median(np.diff(t))
        return cls(data[:, 2] + 1j * data[:, 3], rate, t[0])


def lattice_index(t: float, rate: float) -> int:
    """Return ``k`` with ``t == k / rate``; raise if ``t`` is off the lattice."""
    k = t * rate
    ki = int(np.round(k))
    if abs(k - ki) > _ALIGN_TOL:
        raise InvalidParameterError(
            f"time {t!r} is not a multiple of the sample period 1/{rate!r}"
        )
    return ki


@dataclass(frozen=True)
class GridParams:
    """Delay-Doppler grid: ``M`` delay bins of ``T0/M``, ``N`` Doppler bins of ``1/(N T0)``."""

    M: int
    N: int
    T0: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise InvalidParameterError(f"grid.M must be an integer > 1, got {self.M}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidParameterError(f"grid.N must be a positive integer, got {self.N}")
        if not self.T0 > 0:
            raise InvalidParameterError(f"grid.T0 must be positive, got {self.T0}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T0", float(self.T0))

    @property
    def delay_res(self) -> float:
        return self.T0 / self.M

    @property
    def doppler_res(self) -> float:
        return 1.0 / (self.N * self.T0)

    @property
    def bandwidth(self) -> float:
        """Nominal bandwidth ``M / T0`` (the sampling rate W of the grid)."""
        return self.M / self.T0

    @property
    def duration(self) -> float:
        return self.N * self.T0

    @property
    def size(self) -> int:
        return self.M * self.N


@dataclass(frozen=True)
class RrcParams:
    """Square-root Nyquist subpulse parameters.

    ``Q`` is the half-length in zero-ISI intervals, so the subpulse spans
    ``2 Q`` delay bins. ``oversample`` is the number of samples per delay bin.
    """

    rho: float
    Q: int
    oversample: int = 8
    orthogonalize: bool = field(default=True)

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidParameterError(f"pulse.rho must lie in [0, 1], got {self.rho}")
        if int(self.Q) != self.Q or self.Q < 1:
            raise InvalidParameterError(f"pulse.Q must be an integer >= 1, got {self.Q}")
        if int(self.oversample) != self.oversample or self.oversample < 2:
            raise InvalidParameterError(
                f"pulse.oversample must be an integer >= 2, got {self.oversample}"
            )
        object.__setattr__(self, "Q", int(self.Q))
        object.__setattr__(self, "oversample", int(self.oversample))
        object.__setattr__(self, "rho", float(self.rho))

    def duration(self, delay_res: float) -> float:
        return 2 * self.Q * delay_res
