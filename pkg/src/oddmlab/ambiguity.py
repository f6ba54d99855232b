"""Cross-ambiguity functions, grid (bi)orthogonality reports and side-lobe metrics.

Convention::

    A_{g,gamma}(tau, nu) = int g(t) conj(gamma(t - tau)) exp(-j 2 pi nu (t - tau)) dt
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import GridParams, InvalidParameterError, SampledSignal

__all__ = [
    "cross_ambiguity",
    "ambiguity_surface",
    "AmbiguityGridReport",
    "orthogonality_grid",
    "sidelobe_metrics",
    "fractional_shift",
]

_INTEGER_TOL = 1e-6


def fractional_shift(x: np.ndarray, frac: float, pad: int | None = None) -> np.ndarray:
    """Delay ``x`` by ``frac`` samples with band-limited (FFT) interpolation.

    The output has ``x.size + 1`` samples so the shifted tail is kept.
    Zero padding of ``pad`` samples on both sides (default: the input length)
    keeps the circular wrap of the FFT away from the result.
    """
    x = np.asarray(x, dtype=complex)
    pad = x.size if pad is None else pad
    n = x.size + 2 * pad
    X = np.fft.fft(np.concatenate([np.zeros(pad), x, np.zeros(pad)]))
    f = np.fft.fftfreq(n)
    y = np.fft.ifft(X * np.exp(-2j * np.pi * f * frac))
    return y[pad : pad + x.size + 1]


def _shifted_overlap(g: SampledSignal, gamma: SampledSignal, tau: float):
    """Samples of ``g(t)`` and ``gamma(t - tau)`` on their common support in g's lattice.

    Returns ``(idx, gs, gms)`` where ``idx`` indexes g's samples.
    """
    if abs(g.rate - gamma.rate) > 1e-9 * g.rate:
        raise InvalidParameterError("signals must share the same sample rate")
    d = (gamma.t0 + tau - g.t0) * g.rate
    di = int(np.floor(d + _INTEGER_TOL))
    frac = d - di
    if abs(frac) < _INTEGER_TOL or abs(frac - 1) < _INTEGER_TOL:
        if abs(frac - 1) < _INTEGER_TOL:
            di += 1
        gm = gamma.samples
    else:
        gm = fractional_shift(gamma.samples, frac)
    lo = max(0, di)
    hi = min(g.samples.size, di + gm.size)
    if hi <= lo:
        return np.arange(0), np.zeros(0, complex), np.zeros(0, complex)
    idx = np.arange(lo, hi)
    return idx, g.samples[lo:hi], gm[lo - di : hi - di]


def ambiguity_surface(g: SampledSignal, gamma: SampledSignal, taus, nus) -> np.ndarray:
    """Evaluate the cross-ambiguity function on the product grid ``taus x nus``.

    Returns an array of shape ``(len(taus), len(nus))``.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    nus = np.atleast_1d(np.asarray(nus, dtype=float))
    out = np.zeros((taus.size, nus.size), dtype=complex)
    for i, tau in enumerate(taus):
        idx, gs, gms = _shifted_overlap(g, gamma, tau)
        if idx.size == 0:
            continue
        p = gs * np.conj(gms) / g.rate
        t = g.t0 + idx / g.rate - tau
        out[i] = np.exp(-2j * np.pi * np.outer(nus, t)) @ p
    return out


def cross_ambiguity(g: SampledSignal, gamma: SampledSignal, tau: float, nu: float) -> complex:
    """Cross-ambiguity ``A_{g,gamma}(tau, nu)`` by Riemann sum.

    Shifts that land on the sample lattice use index shifting; other shifts
    use band-limited interpolation of ``gamma``.
    """
    return complex(ambiguity_surface(g, gamma, [tau], [nu])[0, 0])


@dataclass(frozen=True, eq=False)
class AmbiguityGridReport:
    """Cross-ambiguity samples on the grid ``(m T0/M, n/(N T0))``.

    ``values[m + M - 1, n + N - 1]`` holds the sample for offsets ``(m, n)``
    with ``|m| <= M-1`` and ``|n| <= N-1``.
    """

    grid: GridParams
    values: np.ndarray

    def at(self, m: int, n: int) -> complex:
        return complex(self.values[m + self.grid.M - 1, n + self.grid.N - 1])

    @property
    def origin(self) -> complex:
        return self.at(0, 0)

    @property
    def max_offorigin(self) -> float:
        mag = np.abs(self.values).copy()
        mag[self.grid.M - 1, self.grid.N - 1] = 0.0
        return float(mag.max())

    def to_csv(self, path) -> None:
        """Write columns ``m, n, abs, re, im``."""
        M, N = self.grid.M, self.grid.N
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "n", "abs", "re", "im"])
            for i, m in enumerate(range(-(M - 1), M)):
                for j, n in enumerate(range(-(N - 1), N)):
                    v = self.values[i, j]
                    w.writerow([m, n, repr(float(abs(v))), repr(float(v.real)), repr(float(v.imag))])


def orthogonality_grid(g: SampledSignal, gamma: SampledSignal, grid: GridParams) -> AmbiguityGridReport:
    """Evaluate ``A_{g,gamma}`` on every delay-Doppler grid offset of the frame."""
    M, N = grid.M, grid.N
    taus = np.arange(-(M - 1), M) * grid.delay_res
    nus = np.arange(-(N - 1), N) * grid.doppler_res
    return AmbiguityGridReport(grid, ambiguity_surface(g, gamma, taus, nus))


def sidelobe_metrics(g: SampledSignal, grid: GridParams, L: int, K: int, doppler_oversample: int = 8):
    """Normalised integrated and sampled integrated side-lobe levels of ``A_{g,g}``.

    The side-lobe region is ``[0, L/W] x [-K/T, K/T]`` with ``W = M/T0`` and
    ``T = N T0``. SISL sums ``|A|^2`` over the grid points of that region
    except the origin; ISL averages ``|A|^2`` over a dense lattice (every
    sample delay, ``doppler_oversample`` points per Doppler bin) after
    removing the cell ``|tau| < 1/(2W), |nu| < 1/(2T)`` around the origin.
    Both are normalised by ``|A(0, 0)|^2``.

    Returns ``(isl, sisl)``.
    """
    if not 1 <= L <= grid.M:
        raise InvalidParameterError(f"L must lie in [1, M={grid.M}], got {L}")
    if not 0 <= K <= grid.N - 1:
        raise InvalidParameterError(f"K must lie in [0, N-1={grid.N - 1}], got {K}")
    a00 = abs(cross_ambiguity(g, g, 0.0, 0.0)) ** 2
    if a00 == 0:
        raise InvalidParameterError("signal has zero energy; |A(0,0)| vanishes")

    taus = np.arange(L) * grid.delay_res
    nus = np.arange(-K, K + 1) * grid.doppler_res
    A = np.abs(ambiguity_surface(g, g, taus, nus)) ** 2
    A[0, K] = 0.0
    sisl = float(A.sum() / a00)

    step = 1.0 / g.rate
    taus_c = np.arange(int(round(L * grid.delay_res / step)) + 1) * step
    nus_c = np.linspace(-K, K, 2 * K * doppler_oversample + 1) * grid.doppler_res
    Ac = np.abs(ambiguity_surface(g, g, taus_c, nus_c)) ** 2
    cell = np.logical_and.outer(
        np.abs(taus_c) < grid.delay_res / 2, np.abs(nus_c) < grid.doppler_res / 2
    )
    isl = float(Ac[~cell].mean() / a00)
    return isl, sisl
