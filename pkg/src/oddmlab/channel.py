"""Deterministic doubly-selective channels: EVA taps with Jakes Doppler, LTV application and AWGN."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .ambiguity import fractional_shift
from .core import GridParams, InvalidParameterError, SampledSignal

__all__ = [
    "SPEED_OF_LIGHT",
    "EVA_DELAYS_NS",
    "EVA_POWERS_DB",
    "OffGridChannel",
    "EsddChannel",
    "doppler_max",
    "round_half_toward_zero",
    "make_esdd",
    "apply_ltv",
    "add_awgn",
    "per_symbol_channel",
    "is_underspread",
]

SPEED_OF_LIGHT = 299_792_458.0

# 3GPP TS 36.104 Annex B.2, Extended Vehicular A
EVA_DELAYS_NS = (0, 30, 150, 310, 370, 710, 1090, 1730, 2510)
EVA_POWERS_DB = (0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9)

_INTEGER_TOL = 1e-6


def _freeze(a, dtype):
    a = np.array(a, dtype=dtype).ravel()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OffGridChannel:
    """Physical paths with real-valued delay ``tau`` (s), Doppler ``nu`` (Hz) and complex ``gain``."""

    tau: np.ndarray
    nu: np.ndarray
    gain: np.ndarray

    def __post_init__(self):
        tau, nu, gain = _freeze(self.tau, float), _freeze(self.nu, float), _freeze(self.gain, complex)
        if not (tau.size == nu.size == gain.size) or tau.size == 0:
            raise InvalidParameterError("need a non-empty, equal-length path list")
        if np.any(tau < 0):
            raise InvalidParameterError("path delays must be non-negative")
        if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(nu)) and np.all(np.isfinite(gain))):
            raise InvalidParameterError("path parameters must be finite")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "gain", gain)

    @classmethod
    def from_paths(cls, paths):
        """Build from an iterable of ``(tau, nu, gain)`` triples."""
        t, v, h = zip(*paths)
        return cls(t, v, h)

    @property
    def P(self) -> int:
        return self.tau.size

    @property
    def tau_max(self) -> float:
        return float(self.tau.max())

    @property
    def nu_max(self) -> float:
        return float(np.abs(self.nu).max())


@dataclass(frozen=True, eq=False)
class EsddChannel:
    """On-grid channel: integer delay bins ``l``, Doppler bins ``k`` and gains."""

    grid: GridParams
    l: np.ndarray
    k: np.ndarray
    gain: np.ndarray

    def __post_init__(self):
        l, k, gain = _freeze(self.l, int), _freeze(self.k, int), _freeze(self.gain, complex)
        if not (l.size == k.size == gain.size) or l.size == 0:
            raise InvalidParameterError("need a non-empty, equal-length path list")
        if np.any(l < 0):
            raise InvalidParameterError("delay bins must be non-negative")
        if len(set(zip(l.tolist(), k.tolist()))) != l.size:
            raise InvalidParameterError("(l, k) pairs must be distinct")
        if l.max() + 1 > self.grid.M:
            raise InvalidParameterError(f"L = {l.max() + 1} exceeds M = {self.grid.M}")
        if 2 * np.abs(k).max() > self.grid.N:
            raise InvalidParameterError(f"K = {np.abs(k).max()} exceeds N/2 = {self.grid.N / 2}")
        if not np.all(np.isfinite(gain)):
            raise InvalidParameterError("gains must be finite")
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "gain", gain)

    @classmethod
    def from_paths(cls, grid: GridParams, paths):
        """Build from an iterable of ``(l, k, gain)`` triples."""
        l, k, h = zip(*paths)
        return cls(grid, l, k, h)

    @property
    def P(self) -> int:
        return self.l.size

    @property
    def L(self) -> int:
        return int(self.l.max()) + 1

    @property
    def K(self) -> int:
        return int(np.abs(self.k).max())

    def to_offgrid(self) -> OffGridChannel:
        """Physical channel with ``tau = l T0/M`` and ``nu = k / (N T0)``."""
        return OffGridChannel(self.l * self.grid.delay_res, self.k * self.grid.doppler_res, self.gain)

    def to_csv(self, path) -> None:
        """Write columns ``l, k, gain_re, gain_im``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["l", "k", "gain_re", "gain_im"])
            for l, k, h in zip(self.l, self.k, self.gain):
                w.writerow([int(l), int(k), repr(float(h.real)), repr(float(h.imag))])


def doppler_max(speed_kmh: float, fc: float) -> float:
    """Maximum Doppler ``fc v / c`` in Hz for a speed in km/h."""
    return fc * (speed_kmh / 3.6) / SPEED_OF_LIGHT


def round_half_toward_zero(x) -> np.ndarray:
    """Nearest integer, with exact halves rounded toward zero."""
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.ceil(np.abs(x) - 0.5)).astype(int)


def make_esdd(profile, grid: GridParams, speed_kmh: float, fc: float, seed: int):
    """Draw a tapped-delay-line channel and its on-grid rounding.

    Parameters
    ----------
    profile : "EVA" or sequence of (delay_s, power_db)
        Tap delays and relative powers; powers are normalised to unit sum.
    speed_kmh, fc :
        Terminal speed (km/h) and carrier frequency (Hz).
    seed :
        Seed for gains (complex Gaussian) and Jakes angles (uniform on
        ``[-pi, pi]``, one Doppler per tap).

    Returns
    -------
    (OffGridChannel, EsddChannel)
        Taps that round to the same ``(l, k)`` cell are merged by summing
        their gains.
    """
    if speed_kmh < 0:
        raise InvalidParameterError(f"channel.speed_kmh must be >= 0, got {speed_kmh}")
    if not fc > 0:
        raise InvalidParameterError(f"channel.fc must be positive, got {fc}")
    if isinstance(profile, str):
        if profile.upper() != "EVA":
            raise InvalidParameterError(f"channel.profile must be 'EVA' or a tap list, got {profile!r}")
        delays = np.array(EVA_DELAYS_NS) * 1e-9
        powers_db = np.array(EVA_POWERS_DB)
    else:
        taps = np.asarray(profile, dtype=float).reshape(-1, 2)
        delays, powers_db = taps[:, 0], taps[:, 1]
    if delays.max() >= grid.duration:
        raise InvalidParameterError(
            f"tap delay {delays.max()!r} s exceeds the frame core duration {grid.duration!r} s"
        )
    p = 10 ** (powers_db / 10)
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    gains = np.sqrt(p / 2) * (rng.standard_normal(p.size) + 1j * rng.standard_normal(p.size))
    phi = rng.uniform(-np.pi, np.pi, p.size)
    nu = doppler_max(speed_kmh, fc) * np.cos(phi)
    off = OffGridChannel(delays, nu, gains)

    l = round_half_toward_zero(delays / grid.delay_res)
    k = round_half_toward_zero(nu / grid.doppler_res)
    cells: dict[tuple[int, int], complex] = {}
    for li, ki, h in zip(l.tolist(), k.tolist(), gains):
        cells[(li, ki)] = cells.get((li, ki), 0) + h
    on = EsddChannel.from_paths(grid, [(li, ki, h) for (li, ki), h in cells.items()])
    return off, on


def apply_ltv(x: SampledSignal, chan: OffGridChannel) -> SampledSignal:
    """``y(t) = sum_p h_p x(t - tau_p) exp(j 2 pi nu_p (t - tau_p))``.

    Delays on the sample lattice shift indices; others use band-limited
    interpolation. The output starts with ``x`` and is longer by the
    maximum delay (rounded up to a sample).
    """
    extra = int(np.ceil(chan.tau_max * x.rate - _INTEGER_TOL))
    n = len(x) + extra
    y = np.zeros(n, dtype=complex)
    t = x.t0 + np.arange(n) / x.rate
    for tau, nu, h in zip(chan.tau, chan.nu, chan.gain):
        d = tau * x.rate
        di = int(np.floor(d + _INTEGER_TOL))
        frac = d - di
        if abs(frac) < _INTEGER_TOL or abs(frac - 1) < _INTEGER_TOL:
            di += int(round(frac))
            seg = np.asarray(x.samples)
        else:
            seg = fractional_shift(x.samples, frac)
        seg = seg[: n - di]
        y[di : di + seg.size] += h * seg * np.exp(2j * np.pi * nu * (t[di : di + seg.size] - tau))
    return SampledSignal(y, x.rate, x.t0)


def add_awgn(x: SampledSignal, snr_db, seed, signal_power: float | None = None) -> SampledSignal:
    """Add circular complex Gaussian noise at ``snr_db`` relative to the signal power.

    ``snr_db=None`` (or ``inf``) is the noiseless passthrough. The reference
    power defaults to the measured mean sample power of ``x``; pass
    ``signal_power`` to calibrate against a nominal value instead.
    """
    if snr_db is None or np.isposinf(snr_db):
        return x
    p = x.power() if signal_power is None else float(signal_power)
    if not p > 0:
        raise InvalidParameterError("cannot calibrate noise against a zero-energy signal")
    var = p / 10 ** (snr_db / 10)
    rng = np.random.default_rng(seed)
    n = len(x)
    w = np.sqrt(var / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return x.with_samples(x.samples + w)


def per_symbol_channel(chan: EsddChannel, m: int, symbol_interval: float) -> EsddChannel:
    """The channel seen by symbol ``m``: gains rotated by ``exp(j 2 pi nu_p m T)``."""
    if m < 0:
        raise InvalidParameterError(f"symbol index must be >= 0, got {m}")
    nu = chan.k * chan.grid.doppler_res
    return EsddChannel(chan.grid, chan.l, chan.k, chan.gain * np.exp(2j * np.pi * nu * m * symbol_interval))


def is_underspread(tau_max: float, nu_max: float) -> bool:
    """Underspread test ``4 tau_max nu_max <= 1``."""
    return 4 * tau_max * nu_max <= 1
