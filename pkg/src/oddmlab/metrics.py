"""PSD and out-of-band emission, NMSE, closed-form bandwidth efficiency, and the BER harness."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import welch
from scipy.special import erfc

from .channel import EsddChannel, add_awgn, apply_ltv, make_esdd
from .constellation import Constellation, qam4
from .core import GridParams, InvalidParameterError, RrcParams, SampledSignal
from .pulses import make_ddop
from .receiver import MpConfig, build_H, demodulate, detect
from .waveforms import DdFrame, FrameConfig, modulate_oddm_approx, modulate_oddm_exact

__all__ = [
    "Spectrum",
    "welch_psd",
    "average_spectra",
    "oobe",
    "nmse",
    "NMSE_FLOOR_DB",
    "EFFICIENCY_SCHEMES",
    "EfficiencyParams",
    "efficiency",
    "ber_qam4_awgn",
    "BerConfig",
    "BerRow",
    "BerTable",
    "ber_harness",
    "random_esdd",
]

log = logging.getLogger(__name__)

NMSE_FLOOR_DB = -300.0


# ---------------------------------------------------------------- spectra


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Two-sided PSD estimate: ``psd`` in dB (power per Hz) on increasing ``freqs`` (Hz)."""

    freqs: np.ndarray
    psd: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        p = np.asarray(self.psd, dtype=float)
        if f.shape != p.shape or f.ndim != 1:
            raise InvalidParameterError("freqs and psd must be 1-D arrays of equal length")
        if np.any(np.diff(f) <= 0):
            raise InvalidParameterError("freqs must be strictly increasing")
        if not np.all(np.isfinite(p)):
            raise InvalidParameterError("psd must be finite")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "psd", p)

    @property
    def linear(self) -> np.ndarray:
        return 10 ** (self.psd / 10)

    def total_power(self) -> float:
        """Integral of the PSD (uniform bin width assumed)."""
        return float(self.linear.sum() * (self.freqs[1] - self.freqs[0]))

    def at(self, f) -> np.ndarray:
        """PSD in dB at ``f``, interpolated linearly in dB."""
        return np.interp(f, self.freqs, self.psd)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz", "psd_db"])
            for f, p in zip(self.freqs, self.psd):
                w.writerow([repr(float(f)), repr(float(p))])


def _to_db(p: np.ndarray) -> np.ndarray:
    return 10 * np.log10(np.maximum(p, np.finfo(float).tiny))


def welch_psd(x: SampledSignal, seg_len: int, overlap: float = 0.5, window: str = "hann") -> Spectrum:
    """Averaged windowed periodogram (two-sided density), DC-centred.

    Integrating the returned PSD over frequency gives the mean sample power,
    so a unit-power signal integrates to 0 dB.
    """
    seg_len = int(seg_len)
    if seg_len < 2 or seg_len > len(x):
        raise InvalidParameterError(f"seg_len must lie in [2, {len(x)}], got {seg_len}")
    if not 0 <= overlap <= 0.9:
        raise InvalidParameterError(f"overlap must lie in [0, 0.9], got {overlap}")
    f, p = welch(
        x.samples,
        fs=x.rate,
        window=window,
        nperseg=seg_len,
        noverlap=int(round(overlap * seg_len)),
        return_onesided=False,
        scaling="density",
        detrend=False,
    )
    f, p = np.fft.fftshift(f), np.fft.fftshift(p)
    return Spectrum(f, _to_db(p))


def average_spectra(spectra) -> Spectrum:
    """Average several spectra on the same frequency grid (in linear power)."""
    spectra = list(spectra)
    if not spectra:
        raise InvalidParameterError("no spectra to average")
    f = spectra[0].freqs
    if any(s.freqs.shape != f.shape or np.any(s.freqs != f) for s in spectra):
        raise InvalidParameterError("spectra must share a frequency grid")
    return Spectrum(f, _to_db(np.mean([s.linear for s in spectra], axis=0)))


def oobe(spec: Spectrum, half_bandwidth: float, factor: float = 1.1) -> float:
    """PSD at ``factor * half_bandwidth`` relative to the median in-band PSD (dB).

    The two band edges are averaged in linear power.
    """
    inband = spec.psd[np.abs(spec.freqs) < half_bandwidth]
    if inband.size == 0:
        raise InvalidParameterError("no frequency bins inside the band")
    edge = spec.at([-factor * half_bandwidth, factor * half_bandwidth])
    return float(_to_db(np.mean(10 ** (edge / 10))) - np.median(inband))


def nmse(x_hat: SampledSignal, x: SampledSignal) -> float:
    """``10 log10(sum|x_hat - x|^2 / sum|x|^2)`` in dB, floored at -300 dB.

    The two signals are aligned on the common sample lattice; samples
    outside either support count as zero.
    """
    if abs(x_hat.rate - x.rate) > 1e-9 * x.rate:
        raise InvalidParameterError("signals must share the same sample rate")
    ref = float(np.sum(np.abs(x.samples) ** 2))
    if ref == 0:
        raise InvalidParameterError("reference signal has zero energy")
    a, b = x_hat.start_index, x.start_index
    lo, hi = min(a, b), max(a + len(x_hat), b + len(x))
    d = np.zeros(hi - lo, dtype=complex)
    d[a - lo : a - lo + len(x_hat)] += x_hat.samples
    d[b - lo : b - lo + len(x)] -= x.samples
    err = float(np.sum(np.abs(d) ** 2))
    if err == 0:
        return NMSE_FLOOR_DB
    return max(10 * math.log10(err / ref), NMSE_FLOOR_DB)


# ---------------------------------------------------------------- efficiency

EFFICIENCY_SCHEMES = ("TDM", "FDM", "CP-OFDM", "ODDM", "CP-ODDM")

# parameters each scheme needs beyond M and N
_EFF_NEEDS = {
    "TDM": {"rho", "Q"},
    "FDM": {"K_lobes"},
    "CP-OFDM": {"K_lobes", "L"},
    "ODDM": {"rho", "Q", "L", "D"},
    "CP-ODDM": {"rho", "Q", "L"},
}


@dataclass(frozen=True)
class EfficiencyParams:
    """Inputs of the closed-form efficiency of one scheme.

    Only the parameters the scheme uses may be set; see
    :func:`efficiency`.
    """

    scheme: str
    M: int
    N: int
    rho: float | None = None
    Q: int | None = None
    L: int | None = None
    K_lobes: int | None = None
    D: int | None = None

    def __post_init__(self):
        scheme = "FDM" if self.scheme in ("(O)FDM", "OFDM") else self.scheme
        if scheme not in EFFICIENCY_SCHEMES:
            raise InvalidParameterError(f"scheme must be one of {EFFICIENCY_SCHEMES}, got {self.scheme!r}")
        object.__setattr__(self, "scheme", scheme)
        need = _EFF_NEEDS[scheme]
        for name in ("rho", "Q", "L", "K_lobes", "D"):
            val = getattr(self, name)
            if name in need and val is None:
                raise InvalidParameterError(f"{scheme} efficiency needs {name}")
            if name not in need and val is not None:
                raise InvalidParameterError(f"{name} does not apply to {scheme}")
        for name in ("M", "N", "Q", "L", "K_lobes"):
            val = getattr(self, name)
            if val is not None and (int(val) != val or val < 1):
                raise InvalidParameterError(f"{name} must be a positive integer, got {val}")
        if self.D is not None and (int(self.D) != self.D or self.D < 0):
            raise InvalidParameterError(f"D must be a non-negative integer, got {self.D}")
        if self.rho is not None and not 0 <= self.rho <= 1:
            raise InvalidParameterError(f"rho must lie in [0, 1], got {self.rho}")


def efficiency(p: EfficiencyParams) -> float:
    """Bandwidth efficiency ``MN / (B T_x)`` in closed form.

    ========  ====================================================================
    TDM       ``1 / ((1 + rho)(1 + (2Q - 1)/(MN)))``
    FDM       ``1 / (1 + (2K - 1)/(MN))``
    CP-OFDM   ``1 / ((1 + (2K - 1)/M)(1 + L/M))``
    ODDM      ``1 / ((1 + rho + (N - 1)/(MN))(1 + (2DM + L + 2Q - 1)/(MN)))``
    CP-ODDM   ``1 / ((1 + rho + (N - 1)/(MN))(1 + (L + 2Q - 1)/(MN)))``
    ========  ====================================================================

    ``K`` is the number of sinc zero crossings counted as occupied
    bandwidth on each side of a subcarrier.
    """
    M, N = p.M, p.N
    MN = M * N
    if p.scheme == "TDM":
        return 1 / ((1 + p.rho) * (1 + (2 * p.Q - 1) / MN))
    if p.scheme == "FDM":
        return 1 / (1 + (2 * p.K_lobes - 1) / MN)
    if p.scheme == "CP-OFDM":
        return 1 / ((1 + (2 * p.K_lobes - 1) / M) * (1 + p.L / M))
    f = 1 + p.rho + (N - 1) / MN
    if p.scheme == "ODDM":
        return 1 / (f * (1 + (2 * p.D * M + p.L + 2 * p.Q - 1) / MN))
    return 1 / (f * (1 + (p.L + 2 * p.Q - 1) / MN))


# ---------------------------------------------------------------- BER


def ber_qam4_awgn(snr_db) -> np.ndarray:
    """Gray 4-QAM bit error rate on AWGN at symbol SNR ``Es/N0`` (dB)."""
    snr = 10 ** (np.asarray(snr_db, dtype=float) / 10)
    return 0.5 * erfc(np.sqrt(snr / 2))


def random_esdd(grid: GridParams, P: int, L: int, K: int, rng: np.random.Generator) -> EsddChannel:
    """``P`` distinct on-grid paths with ``l < L``, ``|k| <= K`` and CN(0, 1/P) gains."""
    if P > L * (2 * K + 1):
        raise InvalidParameterError("more paths than distinct (l, k) cells")
    cells = rng.choice(L * (2 * K + 1), size=P, replace=False)
    l, k = cells // (2 * K + 1), cells % (2 * K + 1) - K
    h = (rng.standard_normal(P) + 1j * rng.standard_normal(P)) / np.sqrt(2 * P)
    return EsddChannel(grid, l, k, h)


@dataclass(frozen=True)
class BerConfig:
    """One BER experiment.

    ``channel`` is ``"identity"``, ``"eva"`` (the on-grid rounding of a
    fresh EVA draw per frame, applied as a physical channel), ``"eva-offgrid"``
    (the physical EVA draw itself) or ``"random"`` (``paths`` on-grid paths
    with ``l < max_l`` and ``|k| <= max_k``). ``link="waveform"`` runs the
    full modulate, channel, noise and matched-filter chain;
    ``link="dd"`` applies ``Y = H X + W`` directly in the delay-Doppler
    domain. ``snr_db`` entries are ``Es/N0`` per symbol; ``None`` means
    noiseless.
    """

    grid: GridParams
    rrc: RrcParams = field(default_factory=lambda: RrcParams(0.1, 16))
    D: int | str = "auto"
    scheme: str = "ODDM-exact"
    cp: float = 0.0
    channel: str = "identity"
    speed_kmh: float = 0.0
    fc: float = 5e9
    paths: int = 3
    max_l: int = 4
    max_k: int = 1
    detector: str = "MP"
    mp: MpConfig = field(default_factory=MpConfig)
    snr_db: tuple = (0.0, 4.0, 8.0, 12.0)
    frames: int = 100
    seed: int = 0
    link: str = "waveform"

    def __post_init__(self):
        if self.channel not in ("identity", "eva", "eva-offgrid", "random"):
            raise InvalidParameterError(f"channel.profile must be identity, eva, eva-offgrid or random, got {self.channel!r}")
        if self.link not in ("waveform", "dd"):
            raise InvalidParameterError(f"sim.link must be 'waveform' or 'dd', got {self.link!r}")
        if self.link == "dd" and self.channel == "eva-offgrid":
            raise InvalidParameterError("off-grid channels need the waveform link")
        if self.scheme not in ("ODDM-exact", "ODDM-approx-A", "ODDM-approx-B"):
            raise InvalidParameterError(f"BER runs support ODDM schemes only, got {self.scheme!r}")
        if self.frames < 1:
            raise InvalidParameterError("sim.frames must be >= 1")
        object.__setattr__(self, "snr_db", tuple(self.snr_db))


@dataclass(frozen=True)
class BerRow:
    """BER at one SNR, with a normal-approximation 95% interval over per-frame BERs."""

    snr_db: float | None
    frames: int
    bits: int
    bit_errors: int
    erased_frames: int
    ci_low: float
    ci_high: float

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits


@dataclass(frozen=True)
class BerTable:
    rows: tuple

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["snr_db", "frames", "bits", "bit_errors", "ber"])
            for r in self.rows:
                snr = "inf" if r.snr_db is None else repr(float(r.snr_db))
                w.writerow([snr, r.frames, r.bits, r.bit_errors, repr(r.ber)])


def _draw_channel(cfg: BerConfig, rng: np.random.Generator):
    """Return ``(physical channel or None, on-grid channel used for H)``."""
    g = cfg.grid
    if cfg.channel == "identity":
        on = EsddChannel(g, [0], [0], [1.0])
        return on.to_offgrid(), on
    if cfg.channel == "random":
        on = random_esdd(g, cfg.paths, cfg.max_l, cfg.max_k, rng)
        return on.to_offgrid(), on
    off, on = make_esdd("EVA", g, cfg.speed_kmh, cfg.fc, int(rng.integers(2**63)))
    return (off if cfg.channel == "eva-offgrid" else on.to_offgrid()), on


def ber_harness(cfg: BerConfig, constellation: Constellation | None = None) -> BerTable:
    """Monte-Carlo BER over ``cfg.frames`` frames per SNR point.

    Frame ``i`` draws its bits and channel from a child of the master seed
    that is shared by every SNR point, so SNR curves use common random
    numbers; noise uses a separate child per ``(snr, frame)``. A detection
    that returns non-finite symbols counts all of the frame's bits as
    errors (logged as an erasure).
    """
    c = constellation or qam4()
    g = cfg.grid
    M, N = g.M, g.N
    nbits = M * N * c.bits_per_symbol
    pulse = make_ddop(g, cfg.rrc, cfg.D) if cfg.link == "waveform" else None
    fcfg = FrameConfig(cp=cfg.cp, scheme=cfg.scheme)
    root = np.random.SeedSequence(cfg.seed)
    frame_seeds = root.spawn(cfg.frames)
    noise_root = np.random.SeedSequence([cfg.seed, 1])
    noise_seeds = noise_root.spawn(len(cfg.snr_db) * cfg.frames)

    # per-frame quantities that do not depend on SNR
    frames = []
    for i in range(cfg.frames):
        rng = np.random.default_rng(frame_seeds[i])
        frame, bits = DdFrame.random(g, c, rng)
        phys, on = _draw_channel(cfg, rng)
        H = build_H(on)
        if cfg.link == "waveform":
            if cfg.scheme == "ODDM-exact":
                x = modulate_oddm_exact(frame, pulse, fcfg)
            else:
                x = modulate_oddm_approx(frame, pulse, cfg.scheme[-1], fcfg)
            rx = apply_ltv(x, phys)
        else:
            rx = H.matvec(frame.symbols)
        frames.append((bits, H, rx))

    rows = []
    for si, snr in enumerate(cfg.snr_db):
        noiseless = snr is None or np.isposinf(snr)
        N0 = 0.0 if noiseless else 10 ** (-snr / 10)
        errs, erased = [], 0
        for i, (bits, H, rx) in enumerate(frames):
            seed = noise_seeds[si * cfg.frames + i]
            if cfg.link == "waveform":
                y = add_awgn(rx, None if noiseless else snr, seed, signal_power=rx.rate)
                Y = demodulate(y, pulse)
            else:
                w = np.random.default_rng(seed)
                Y = rx + np.sqrt(N0 / 2) * (w.standard_normal(rx.shape) + 1j * w.standard_normal(rx.shape))
            res = detect(Y, H, c, N0, cfg.detector, cfg.mp)
            if not np.all(np.isfinite(res.symbols)):
                log.warning("frame %d at %s dB: detection failed, counted as erased", i, snr)
                erased += 1
                errs.append(nbits)
                continue
            errs.append(int(np.count_nonzero(c.demap(res.symbols) != bits)))
        e = np.asarray(errs, dtype=float) / nbits
        half = 1.96 * e.std(ddof=1) / math.sqrt(e.size) if e.size > 1 else 0.0
        rows.append(
            BerRow(
                None if noiseless else float(snr),
                cfg.frames,
                nbits * cfg.frames,
                int(sum(errs)),
                erased,
                float(e.mean() - half),
                float(e.mean() + half),
            )
        )
    return BerTable(tuple(rows))
