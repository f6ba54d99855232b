"""Delay-Doppler multicarrier (ODDM) waveform laboratory.

Pulse design, ambiguity analysis, waveform synthesis, doubly-selective
channels, matched-filter reception and detection, and evaluation metrics.
"""

from .ambiguity import (
    AmbiguityGridReport,
    ambiguity_surface,
    cross_ambiguity,
    orthogonality_grid,
    sidelobe_metrics,
)
from .channel import (
    EsddChannel,
    OffGridChannel,
    add_awgn,
    apply_ltv,
    doppler_max,
    make_esdd,
    per_symbol_channel,
)
from .constellation import Constellation, qam4
from .core import GridParams, InvalidParameterError, RrcParams, SampledSignal
from .metrics import (
    BerConfig,
    EfficiencyParams,
    Spectrum,
    ber_harness,
    ber_qam4_awgn,
    efficiency,
    nmse,
    oobe,
    welch_psd,
)
from .pulses import Ddop, ddop_spectrum, make_ddop, periodic_prototype, rrc_subpulse
from .receiver import DdChannelMatrix, DetectionResult, MpConfig, build_H, demodulate, detect
from .waveforms import (
    DdFrame,
    FrameConfig,
    isfft,
    modulate_cp_ofdm,
    modulate_oddm_approx,
    modulate_oddm_exact,
    modulate_otfs,
    sfft,
)

__all__ = [
    "AmbiguityGridReport",
    "ambiguity_surface",
    "cross_ambiguity",
    "orthogonality_grid",
    "sidelobe_metrics",
    "EsddChannel",
    "OffGridChannel",
    "add_awgn",
    "apply_ltv",
    "doppler_max",
    "make_esdd",
    "per_symbol_channel",
    "Constellation",
    "qam4",
    "GridParams",
    "InvalidParameterError",
    "RrcParams",
    "SampledSignal",
    "BerConfig",
    "EfficiencyParams",
    "Spectrum",
    "ber_harness",
    "ber_qam4_awgn",
    "efficiency",
    "nmse",
    "oobe",
    "welch_psd",
    "Ddop",
    "ddop_spectrum",
    "make_ddop",
    "periodic_prototype",
    "rrc_subpulse",
    "DdChannelMatrix",
    "DetectionResult",
    "MpConfig",
    "build_H",
    "demodulate",
    "detect",
    "DdFrame",
    "FrameConfig",
    "isfft",
    "modulate_cp_ofdm",
    "modulate_oddm_approx",
    "modulate_oddm_exact",
    "modulate_otfs",
    "sfft",
]

__version__ = "0.1.0"
