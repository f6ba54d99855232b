"""Square-root Nyquist subpulses and delay-Doppler orthogonal pulse trains.

The delay-Doppler orthogonal pulse (DDOP) is a train of ``N`` identical
subpulses ``a(t)`` spaced ``T0`` apart::

    u(t) = sum_{n=0}^{N-1} a(t - n T0)

Each subpulse is a root-raised-cosine (RRC) shape with zero-ISI interval
``T0 / M`` truncated to ``2 Q`` such intervals. The transmit side uses the
cyclically extended train ``u_ce`` with ``D`` extra subpulses on each side.

Time reference: ``a(t)`` is centred at ``t = 0``, so subpulse ``n`` of ``u``
is centred at ``n T0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GridParams, InvalidParameterError, RrcParams, SampledSignal

__all__ = [
    "rrc_impulse",
    "rrc_subpulse",
    "orthogonalize_subpulse",
    "Ddop",
    "make_ddop",
    "auto_extension",
    "periodic_prototype",
    "ddop_spectrum",
    "dtft",
]


_ORTH_ACCEPT = 1e-8


def rrc_impulse(x, rho: float) -> np.ndarray:
    """Root-raised-cosine impulse response at ``x = t / Ts`` (unnormalised).

    ``rho = 0`` gives ``sinc(x)``. The removable singularities at ``x = 0``
    and ``|x| = 1 / (4 rho)`` are filled with their limits.
    """
    x = np.asarray(x, dtype=float)
    if rho == 0:
        return np.sinc(x)
    out = np.empty_like(x)
    zero = np.abs(x) < 1e-12
    sing = np.abs(np.abs(x) - 1.0 / (4.0 * rho)) < 1e-9
    reg = ~(zero | sing)
    xr = x[reg]
    out[reg] = (
        np.sin(np.pi * xr * (1 - rho)) + 4 * rho * xr * np.cos(np.pi * xr * (1 + rho))
    ) / (np.pi * xr * (1 - (4 * rho * xr) ** 2))
    out[zero] = 1 + rho * (4 / np.pi - 1)
    arg = np.pi / (4 * rho)
    out[sing] = rho / np.sqrt(2) * (
        (1 + 2 / np.pi) * np.sin(arg) + (1 - 2 / np.pi) * np.cos(arg)
    )
    return out


def orthogonalize_subpulse(a: np.ndarray, oversample: int, max_iter: int = 300, tol: float = 1e-15):
    """Minimum-norm correction making ``a`` orthonormal to its shifts by ``oversample`` samples.

    Solves ``sum_i a[i] a[i + m * oversample] = delta(m)`` for every lag that
    overlaps, by Gauss-Newton steps projected onto the constraint manifold.
    Steps are damped (Levenberg-Marquardt) only when a full step would not
    reduce the residual, which happens at low oversampling where there are
    barely more free samples than constraints. End samples are pinned to
    zero so the longest lag is trivially satisfied. Real symmetric input
    stays real and symmetric.

    Returns the corrected samples with unit sum of squares. Raises
    :class:`InvalidParameterError` if the residual stays above ``_ORTH_ACCEPT``.
    """
    a = np.array(a, dtype=float)
    n = a.size
    a[0] = a[-1] = 0.0
    a /= np.linalg.norm(a)
    lags = np.arange(0, (n - 1) // oversample + 1) * oversample
    lags = lags[lags < n - 1]

    def residual(v):
        g = np.array([v[s:] @ v[: n - s] for s in lags])
        g[0] -= 1.0
        return g

    g = residual(a)
    lam = 0.0
    for _ in range(max_iter):
        if np.max(np.abs(g)) < tol:
            break
        J = np.zeros((lags.size, n))
        J[0] = 2 * a
        for i, s in enumerate(lags[1:], start=1):
            J[i, : n - s] += a[s:]
            J[i, s:] += a[: n - s]
        J[:, 0] = J[:, -1] = 0.0
        JJ = J @ J.T
        scale = np.trace(JJ) / lags.size
        while True:
            step = J.T @ np.linalg.solve(JJ + lam * scale * np.eye(lags.size), g)
            cand = a - step
            gc = residual(cand)
            if np.linalg.norm(gc) < np.linalg.norm(g):
                a, g = cand, gc
                lam = lam / 10 if lam > 1e-12 else 0.0
                break
            lam = max(10 * lam, 1e-10)
            if lam > 1e6:
                break
        if lam > 1e6:
            break
    if np.max(np.abs(g)) > _ORTH_ACCEPT:
        raise InvalidParameterError(
            f"cannot make the subpulse orthogonal at oversample={oversample} "
            f"(residual {np.max(np.abs(g)):.1e}); raise pulse.oversample"
        )
    return a / np.linalg.norm(a)


def rrc_subpulse(delay_res: float, p: RrcParams) -> SampledSignal:
    """Sample a unit-energy RRC subpulse with zero-ISI interval ``delay_res``.

    The result has ``2 Q oversample + 1`` samples at rate
    ``oversample / delay_res`` and is centred on ``t = 0``. With
    ``p.orthogonalize`` (the default) the truncated RRC is corrected so its
    shifts by multiples of ``delay_res`` are exactly orthogonal under the
    Riemann-sum inner product; otherwise the plain truncated shape is
    returned (for ``rho = 0``, a truncated sinc).
    """
    if not delay_res > 0:
        raise InvalidParameterError(f"delay_res must be positive, got {delay_res}")
    k = p.oversample
    x = np.arange(-p.Q * k, p.Q * k + 1) / k
    a = rrc_impulse(x, p.rho)
    if p.orthogonalize:
        a = orthogonalize_subpulse(a, k)
    rate = k / delay_res
    a = a / np.sqrt(np.sum(a**2) / rate)
    return SampledSignal(a, rate, -p.Q * delay_res)


def auto_extension(grid: GridParams, rrc: RrcParams) -> int:
    """Cyclic-extension depth ``ceil(2 Q / M)``."""
    return math.ceil(2 * rrc.Q / grid.M)


@dataclass(frozen=True, eq=False)
class Ddop:
    """A DDOP value: parameters, extension depth and sampled realisation.

    ``realization`` is the extended train ``sum_{n=-D}^{N-1+D} a(t - n T0)``
    with each subpulse carrying energy ``1/N``, so the ``D = 0`` train has
    unit energy. ``subpulse`` is that scaled ``a(t)``.
    """

    grid: GridParams
    rrc: RrcParams
    D: int
    realization: SampledSignal
    subpulse: SampledSignal

    @property
    def rate(self) -> float:
        return self.realization.rate

    @property
    def samples_per_bin(self) -> int:
        return self.rrc.oversample

    @property
    def samples_per_T0(self) -> int:
        return self.rrc.oversample * self.grid.M

    @property
    def Ta(self) -> float:
        return self.rrc.duration(self.grid.delay_res)

    def train(self, first: int, last: int) -> SampledSignal:
        """Sampled ``sum_{n=first}^{last} a(t - n T0)``."""
        return _train(self.subpulse, self.samples_per_T0, first, last)

    def receive_pulse(self) -> SampledSignal:
        """The ``D = 0`` train ``u(t)`` used by the matched filter."""
        return self.train(0, self.grid.N - 1)


def _train(sub: SampledSignal, step: int, first: int, last: int) -> SampledSignal:
    count = last - first + 1
    L = sub.samples.size
    out = np.zeros((count - 1) * step + L, dtype=complex)
    for j in range(count):
        out[j * step : j * step + L] += sub.samples
    return SampledSignal(out, sub.rate, sub.t0 + first * step / sub.rate)


def make_ddop(grid: GridParams, rrc: RrcParams, extension="auto") -> Ddop:
    """Build the DDOP for ``grid`` with subpulse ``rrc``.

    ``extension`` is ``"auto"`` for ``D = ceil(2Q/M)`` (the depth that makes
    the transmit train periodic over the range the biorthogonality proof
    needs) or an explicit non-negative integer.
    """
    if grid.N < 1:
        raise InvalidParameterError("grid.N must be >= 1")
    if extension == "auto":
        D = auto_extension(grid, rrc)
    else:
        try:
            D = int(extension)
        except (TypeError, ValueError):
            D = -1
        if D != extension or D < 0:
            raise InvalidParameterError(f"pulse.D must be 'auto' or an integer >= 0, got {extension!r}")
    a = rrc_subpulse(grid.delay_res, rrc)
    sub = a.scaled(1.0 / np.sqrt(grid.N))
    real = _train(sub, rrc.oversample * grid.M, -D, grid.N - 1 + D)
    return Ddop(grid, rrc, D, real, sub)


def periodic_prototype(T: float, N: int, segment: SampledSignal) -> SampledSignal:
    """Tile ``segment`` ``N`` times into a unit-energy pulse of duration ``T``.

    The result is exactly periodic with period ``T / N`` at the sample level.
    """
    if N < 1:
        raise InvalidParameterError(f"N must be >= 1, got {N}")
    if abs(segment.duration - T / N) > segment.dt * (1 + 1e-9):
        raise InvalidParameterError(
            f"segment lasts {segment.duration!r} s but T/N = {T / N!r} s"
        )
    if segment.energy() == 0:
        raise InvalidParameterError("segment has zero energy")
    g = np.tile(segment.samples, N)
    g = g / np.sqrt(np.sum(np.abs(g) ** 2) / segment.rate)
    return SampledSignal(g, segment.rate, segment.t0)


def dtft(x: SampledSignal, freqs) -> np.ndarray:
    """Riemann-sum Fourier transform ``int x(t) exp(-j 2 pi f t) dt`` at ``freqs``."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    t = x.times
    out = np.empty(freqs.size, dtype=complex)
    # chunk to bound the size of the kernel matrix
    step = max(1, 2_000_000 // max(1, t.size))
    for i in range(0, freqs.size, step):
        f = freqs[i : i + step]
        out[i : i + step] = np.exp(-2j * np.pi * np.outer(f, t)) @ x.samples / x.rate
    return out


def ddop_spectrum(grid: GridParams, rrc: RrcParams, freqs, guard_lobes: int = 8) -> np.ndarray:
    """Closed-form spectrum ``U(f)`` of the ``D = 0`` DDOP.

    ``U(f) = N A(f) exp(-j pi f (N-1) T0) sum_m exp(j pi m (N-1)) sinc(f N T0 - m N)``

    where ``A(f)`` is the transform of one (energy ``1/N``) subpulse. The
    infinite sum keeps every lobe whose main lobe meets the requested band
    plus ``guard_lobes`` lobes (``guard_lobes * N`` zero crossings) on each
    side. The series alternates in ``m``, so the two outermost terms get
    half weight, which cancels the leading truncation error.
    """
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size == 0:
        raise InvalidParameterError("freqs must be non-empty")
    N, T0 = grid.N, grid.T0
    sub = rrc_subpulse(grid.delay_res, rrc).scaled(1.0 / np.sqrt(N))
    f = freqs.ravel()
    A = dtft(sub, f)
    lobe = 1.0 / (N * T0)
    m_lo = math.floor((f.min() - lobe) * T0) - guard_lobes
    m_hi = math.ceil((f.max() + lobe) * T0) + guard_lobes
    m = np.arange(m_lo, m_hi + 1)
    w = np.exp(1j * np.pi * m * (N - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    comb = np.sinc(np.subtract.outer(f * N * T0, m * N)) @ w
    U = N * A * np.exp(-1j * np.pi * f * (N - 1) * T0) * comb
    return U.reshape(freqs.shape)
