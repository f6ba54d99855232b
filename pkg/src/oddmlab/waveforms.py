"""ODDM, OTFS and CP-OFDM frame synthesis (and the OTFS / CP-OFDM receivers).

All modulators are linear maps from a symbol matrix to a :class:`SampledSignal`.
ODDM frames store ``X[m, n]`` with ``m`` the delay index ``0..M-1`` and ``n``
the Doppler index ``0..N-1``; synthesis uses the signed subcarrier
``n_s in -N/2 .. N/2-1`` with ``X[m, n_s mod N]``.

ODDM time reference: symbol ``m`` of the ``D = 0`` pulse starts its first
subpulse centred at ``m T0/M``. Frame CP and CS are realised as extra
periodically continued subpulses, so the emitted frame is a window of a
signal that is periodic in ``N T0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .constellation import Constellation
from .core import GridParams, InvalidParameterError, RrcParams, SampledSignal, lattice_index
from .pulses import Ddop, make_ddop

__all__ = [
    "SCHEMES",
    "DdFrame",
    "FrameConfig",
    "signed_index",
    "isfft",
    "sfft",
    "modulate_oddm_exact",
    "modulate_oddm_approx",
    "modulate_otfs",
    "demodulate_otfs",
    "modulate_cp_ofdm",
    "demodulate_cp_ofdm",
    "ofdm_subcarriers",
    "frame_window",
]

SCHEMES = ("ODDM-exact", "ODDM-approx-A", "ODDM-approx-B", "OTFS", "CP-OFDM")


@dataclass(frozen=True, eq=False)
class DdFrame:
    """An ``M x N`` delay-Doppler symbol matrix.

    ``constellation`` may be ``None`` for raw complex symbols; otherwise every
    symbol must be one of its points.
    """

    grid: GridParams
    symbols: np.ndarray
    constellation: Constellation | None = None

    def __post_init__(self):
        X = np.array(self.symbols, dtype=complex)
        if X.shape != (self.grid.M, self.grid.N):
            raise InvalidParameterError(
                f"symbols have shape {X.shape}, grid needs {(self.grid.M, self.grid.N)}"
            )
        if not np.all(np.isfinite(X)):
            raise InvalidParameterError("symbols must be finite")
        if self.constellation is not None:
            d = np.min(np.abs(X[..., None] - self.constellation.points), axis=-1)
            if np.max(d) > 1e-9:
                raise InvalidParameterError(
                    f"symbols are not all {self.constellation.label} points"
                )
        X.setflags(write=False)
        object.__setattr__(self, "symbols", X)

    @classmethod
    def random(cls, grid: GridParams, constellation: Constellation, rng: np.random.Generator):
        """Uniform random frame; returns ``(frame, bits)``."""
        bits, X = constellation.random_symbols((grid.M, grid.N), rng)
        return cls(grid, X, constellation), bits


@dataclass(frozen=True)
class FrameConfig:
    """Frame-level guard settings.

    ``cp`` and ``cs`` are durations in seconds (``cs`` applies to ODDM only).
    ``vacant_edges`` and ``dc_null`` apply to CP-OFDM only.
    """

    cp: float = 0.0
    cs: float = 0.0
    scheme: str = "ODDM-exact"
    vacant_edges: int = 0
    dc_null: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidParameterError(f"sim.scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.cp < 0 or self.cs < 0:
            raise InvalidParameterError("cp and cs must be non-negative")
        if int(self.vacant_edges) != self.vacant_edges or self.vacant_edges < 0:
            raise InvalidParameterError("vacant_edges must be a non-negative integer")


def signed_index(N: int) -> np.ndarray:
    """Signed subcarrier for each storage column: ``n`` for ``n < N/2``, else ``n - N``."""
    n = np.arange(N)
    return (n + N // 2) % N - N // 2


def _samples(duration: float, rate: float, name: str) -> int:
    try:
        return lattice_index(duration, rate)
    except InvalidParameterError:
        raise InvalidParameterError(
            f"{name} = {duration!r} s is not a whole number of samples at {rate!r} Hz"
        ) from None


# ---------------------------------------------------------------- ODDM


def _resolve_pulse(grid: GridParams, pulse) -> Ddop:
    if isinstance(pulse, RrcParams):
        pulse = make_ddop(grid, pulse)
    if not isinstance(pulse, Ddop):
        raise InvalidParameterError("pulse must be a Ddop or RrcParams")
    if pulse.grid != grid:
        raise InvalidParameterError(f"pulse grid {pulse.grid} does not match frame grid {grid}")
    return pulse


def frame_window(pulse: Ddop, cfg: FrameConfig):
    """Sample-index window of an ODDM frame on the absolute lattice.

    Returns ``(first, last, start, stop)``: the subpulse index range that must
    be synthesised and the half-open index range ``[start, stop)`` that is
    emitted.
    """
    g = pulse.grid
    rate = pulse.rate
    cp = _samples(cfg.cp, rate, "cp")
    cs = _samples(cfg.cs, rate, "cs")
    Mk, Qk, k = pulse.samples_per_T0, pulse.rrc.Q * pulse.rrc.oversample, pulse.rrc.oversample
    first = -pulse.D - math.ceil(cp / Mk)
    last = g.N - 1 + pulse.D + math.ceil(cs / Mk)
    start = -pulse.D * Mk - Qk - cp
    stop = (g.M - 1) * k + (g.N - 1 + pulse.D) * Mk + Qk + cs + 1
    return first, last, start, stop


_CHUNK_ELEMS = 4_000_000


def _overlap_add(make_blocks, pulse: Ddop, first: int, nq: int, start: int, stop: int) -> np.ndarray:
    """Sum ``blocks[m, q, s]`` at index ``m k + (first + q) M k + s - Q k`` and crop.

    ``make_blocks(m_lo, m_hi)`` returns the blocks of delay rows
    ``m_lo..m_hi-1``; rows are processed in chunks to bound memory.
    """
    M, k = pulse.grid.M, pulse.rrc.oversample
    Mk, Qk = pulse.samples_per_T0, pulse.rrc.Q * k
    ns = pulse.subpulse.samples.size
    lo = first * Mk - Qk
    size = (M - 1) * k + (nq - 1) * Mk + ns
    buf = np.zeros(size, dtype=complex)
    step = max(1, _CHUNK_ELEMS // (nq * ns))
    base = np.arange(nq)[:, None] * Mk + np.arange(ns)[None, :]
    for m0 in range(0, M, step):
        m1 = min(M, m0 + step)
        b = make_blocks(m0, m1)
        flat = (np.arange(m0, m1)[:, None, None] * k + base[None]).ravel()
        bf = b.ravel()
        buf += np.bincount(flat, bf.real, size) + 1j * np.bincount(flat, bf.imag, size)
    return buf[start - lo : stop - lo]


def modulate_oddm_exact(frame: DdFrame, pulse, cfg: FrameConfig | None = None) -> SampledSignal:
    """Exact ODDM synthesis with the cyclically extended DDOP.

    ``x(t) = sum_m sum_n X[m, [n]_N] u_ce(t - m T0/M) exp(j 2 pi n (t - m T0/M) / (N T0))``

    ``pulse`` is a :class:`Ddop` (or :class:`RrcParams`, built with automatic
    extension). ``cfg.cp`` / ``cfg.cs`` extend the frame by periodic
    continuation, so the emitted window starts at
    ``-D T0 - Ta/2 - cp``.
    """
    cfg = cfg or FrameConfig()
    pulse = _resolve_pulse(frame.grid, pulse)
    g = frame.grid
    N = g.N
    first, last, start, stop = frame_window(pulse, cfg)
    ns = signed_index(N)
    q = np.arange(first, last + 1)
    sub = pulse.subpulse.samples.real
    s = np.arange(sub.size) - pulse.rrc.Q * pulse.rrc.oversample
    W = np.exp(2j * np.pi * np.outer(q, ns) / N)  # (q, n)
    Phi = np.exp(2j * np.pi * np.outer(ns, s) / (N * pulse.samples_per_T0)) * sub  # (n, s)
    X = frame.symbols

    def blocks(m0, m1):
        return np.einsum("qn,mn,ns->mqs", W, X[m0:m1], Phi, optimize=True)

    x = _overlap_add(blocks, pulse, first, q.size, start, stop)
    return SampledSignal(x, pulse.rate, start / pulse.rate)


def modulate_oddm_approx(frame: DdFrame, rrc, variant: str = "A", cfg: FrameConfig | None = None) -> SampledSignal:
    """Filtered-OFDM approximation of ODDM.

    Each delay branch ``m`` takes an ``N``-point inverse DFT of its row,
    ``x_m[q] = sum_n X[m, [n]_N] exp(j 2 pi n q / N)``, sampled every ``T0``
    and cyclically extended like the exact frame. Branches are interleaved
    at ``T0/M`` and shaped by the subpulse ``a(t)``.

    ``variant="A"`` shapes every branch separately and then multiplexes;
    ``variant="B"`` multiplexes digitally and applies one filter. Both share
    the exact modulator's sample window, so their outputs can be compared
    sample by sample.

    ``rrc`` may be :class:`RrcParams` or a prepared :class:`Ddop`.
    """
    cfg = cfg or FrameConfig()
    if variant not in ("A", "B"):
        raise InvalidParameterError(f"variant must be 'A' or 'B', got {variant!r}")
    pulse = _resolve_pulse(frame.grid, rrc)
    g = frame.grid
    N = g.N
    first, last, start, stop = frame_window(pulse, cfg)
    q = np.arange(first, last + 1)
    W = np.exp(2j * np.pi * np.outer(q, signed_index(N)) / N)
    xt = frame.symbols @ W.T  # (m, q)
    sub = pulse.subpulse.samples.real
    if variant == "A":
        x = _overlap_add(
            lambda m0, m1: xt[m0:m1, :, None] * sub[None, None, :], pulse, first, q.size, start, stop
        )
    else:
        k = pulse.rrc.oversample
        stream = xt.T.ravel()  # index q M + m, T0/M spacing
        up = np.zeros(stream.size * k, dtype=complex)
        up[::k] = stream
        y = fftconvolve(up, sub)
        lo = first * pulse.samples_per_T0 - pulse.rrc.Q * k
        x = y[start - lo : stop - lo]
    return SampledSignal(x, pulse.rate, start / pulse.rate)


# ---------------------------------------------------------------- OTFS


def isfft(X: np.ndarray) -> np.ndarray:
    """Unitary inverse symplectic finite Fourier transform.

    ``out[nh, mh] = (1/sqrt(MN)) sum_{m,n} X[m, n] exp(j 2 pi (nh n / N - mh m / M))``

    ``X`` is ``M x N`` (delay x Doppler); the result is ``N x M``
    (time slot x subcarrier).
    """
    X = np.asarray(X, dtype=complex)
    M, N = X.shape
    # ifft over n supplies exp(+j..)/N, fft over m supplies exp(-j..)
    return np.fft.fft(np.fft.ifft(X, axis=1), axis=0).T * np.sqrt(N / M)


def sfft(Xtf: np.ndarray) -> np.ndarray:
    """Inverse of :func:`isfft` (``N x M`` in, ``M x N`` out)."""
    Xtf = np.asarray(Xtf, dtype=complex)
    N, M = Xtf.shape
    return np.fft.fft(np.fft.ifft(Xtf.T, axis=0), axis=1) * np.sqrt(M / N)


def _rect_ofdm(tf: np.ndarray, sub_idx: np.ndarray, n_fft: int, T0: float) -> np.ndarray:
    """Rows of ``tf`` on signed subcarriers ``sub_idx``; rectangular pulse of energy 1."""
    buf = np.zeros((tf.shape[0], n_fft), dtype=complex)
    buf[:, sub_idx % n_fft] = tf
    return np.fft.ifft(buf, axis=1) * (n_fft / np.sqrt(T0))


def _rect_ofdm_rx(blocks: np.ndarray, sub_idx: np.ndarray, n_fft: int, T0: float) -> np.ndarray:
    F = np.fft.fft(blocks, axis=1) * (np.sqrt(T0) / n_fft)
    return F[:, sub_idx % n_fft]


def modulate_otfs(frame: DdFrame, cfg: FrameConfig | None = None, oversample: int = 8) -> SampledSignal:
    """OTFS: ISFFT precoding followed by CP-free OFDM with a rectangular pulse.

    ``M`` subcarriers spaced ``1/T0`` (signed indices), ``N`` symbols of
    length ``T0`` sampled at ``oversample M / T0``. A frame CP of ``cfg.cp``
    seconds, copied from the tail, starts at ``t = -cp``.
    """
    cfg = cfg or FrameConfig(scheme="OTFS")
    g = frame.grid
    n_fft = oversample * g.M
    rate = n_fft / g.T0
    cp = _samples(cfg.cp, rate, "cp")
    body = _rect_ofdm(isfft(frame.symbols), signed_index(g.M), n_fft, g.T0).ravel()
    x = np.concatenate([body[body.size - cp :], body]) if cp else body
    return SampledSignal(x, rate, -cp / rate)


def demodulate_otfs(y: SampledSignal, grid: GridParams, oversample: int = 8) -> np.ndarray:
    """Rectangular matched filter per ``T0`` symbol, then SFFT; frame starts at ``t = 0``."""
    n_fft = oversample * grid.M
    if abs(y.rate - n_fft / grid.T0) > 1e-9 * y.rate:
        raise InvalidParameterError("sample rate does not match oversample * M / T0")
    i0 = -y.start_index
    if i0 < 0 or i0 + grid.N * n_fft > len(y):
        raise InvalidParameterError("signal does not cover [0, N T0)")
    blocks = y.samples[i0 : i0 + grid.N * n_fft].reshape(grid.N, n_fft)
    return sfft(_rect_ofdm_rx(blocks, signed_index(grid.M), n_fft, grid.T0))


# ---------------------------------------------------------------- CP-OFDM


def ofdm_subcarriers(n_loaded: int, vacant_edges: int = 0, dc_null: bool = False, n_fft: int | None = None):
    """Signed loaded subcarrier indices and the DFT size.

    Loaded carriers are centred on DC; with ``dc_null`` the DC bin is
    skipped. ``n_fft`` defaults to ``n_loaded + 2 vacant_edges + dc_null``.
    """
    if n_loaded < 1:
        raise InvalidParameterError("need at least one loaded subcarrier")
    need = n_loaded + 2 * vacant_edges + int(dc_null)
    n_fft = need if n_fft is None else int(n_fft)
    if need > n_fft:
        raise InvalidParameterError(
            f"subcarrier budget exceeded: {n_loaded} loaded + 2*{vacant_edges} vacant"
            f"{' + DC' if dc_null else ''} > DFT size {n_fft}"
        )
    if dc_null:
        neg = n_loaded // 2
        idx = np.concatenate([np.arange(-neg, 0), np.arange(1, n_loaded - neg + 1)])
    else:
        idx = np.arange(n_loaded) - n_loaded // 2
    return idx, n_fft


def modulate_cp_ofdm(
    symbols,
    T0: float,
    cp: float = 0.0,
    vacant_edges: int = 0,
    dc_null: bool = False,
    n_fft: int | None = None,
) -> SampledSignal:
    """Standard CP-OFDM.

    ``symbols`` is ``M_bar x N_bar``: one row per OFDM symbol, one column
    per loaded subcarrier (in increasing frequency order). Subcarrier
    spacing is ``1/T0``; sample rate ``n_fft / T0``; each symbol lasts
    ``T0 + cp`` and starts with its CP, the first at ``t = 0``.
    """
    S = np.atleast_2d(np.asarray(symbols, dtype=complex))
    idx, n_fft = ofdm_subcarriers(S.shape[1], vacant_edges, dc_null, n_fft)
    rate = n_fft / T0
    c = _samples(cp, rate, "cp")
    body = _rect_ofdm(S, idx, n_fft, T0)
    x = np.concatenate([body[:, n_fft - c :], body], axis=1) if c else body
    return SampledSignal(x.ravel(), rate, 0.0)


def demodulate_cp_ofdm(
    y: SampledSignal,
    T0: float,
    cp: float,
    n_loaded: int,
    n_symbols: int,
    vacant_edges: int = 0,
    dc_null: bool = False,
    n_fft: int | None = None,
) -> np.ndarray:
    """Strip each symbol's CP and return the ``n_symbols x n_loaded`` DFT outputs."""
    idx, n_fft = ofdm_subcarriers(n_loaded, vacant_edges, dc_null, n_fft)
    rate = n_fft / T0
    if abs(y.rate - rate) > 1e-9 * rate:
        raise InvalidParameterError("sample rate does not match n_fft / T0")
    c = _samples(cp, rate, "cp")
    i0 = -y.start_index
    span = n_symbols * (n_fft + c)
    if i0 < 0 or i0 + span > len(y):
        raise InvalidParameterError("signal shorter than the CP-OFDM frame")
    blocks = y.samples[i0 : i0 + span].reshape(n_symbols, n_fft + c)[:, c:]
    return _rect_ofdm_rx(blocks, idx, n_fft, T0)
