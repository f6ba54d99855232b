"""Config-driven experiment runner.

Usage::

    oddmlab <pulse|ambiguity|psd|nmse|efficiency|ber> --config run.yaml [--seed N] [--output DIR]

Outputs go to ``--output``, else ``output.dir`` from the config, else the
``ODDM_OUTPUT_DIR`` environment variable, else ``./oddm_out``. Every run
writes ``manifest.yaml`` holding the fully resolved config plus derived
quantities; feeding the manifest back as ``--config`` reproduces the run.
"""

from __future__ import annotations

import argparse
import copy
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
import yaml

from .ambiguity import orthogonality_grid, sidelobe_metrics
from .channel import doppler_max, make_esdd
from .constellation import qam4
from .core import GridParams, InvalidParameterError, RrcParams
from .metrics import (
    EfficiencyParams,
    BerConfig,
    average_spectra,
    ber_harness,
    efficiency,
    nmse,
    oobe,
    welch_psd,
)
from .pulses import auto_extension, make_ddop
from .receiver import MpConfig
from .waveforms import (
    DdFrame,
    FrameConfig,
    modulate_cp_ofdm,
    modulate_oddm_approx,
    modulate_oddm_exact,
    modulate_otfs,
)

log = logging.getLogger("oddmlab")

SUBCOMMANDS = ("pulse", "ambiguity", "psd", "nmse", "efficiency", "ber")
ENV_OUTPUT = "ODDM_OUTPUT_DIR"

DEFAULTS = {
    "grid": {"M": 32, "N": 8, "T0_us": 1e6 / 15e3},
    "pulse": {"rho": 0.1, "Q": 16, "oversample": 8, "D": "auto", "orthogonalize": True},
    "channel": {
        "profile": "identity",
        "speed_kmh": 0.0,
        "fc_ghz": 5.0,
        "seed": 0,
        "paths": 3,
        "max_l": 4,
        "max_k": 1,
    },
    "sim": {
        "scheme": "ODDM-exact",
        "detector": "MP",
        "snr_db": [0.0, 4.0, 8.0, 12.0],
        "frames": 100,
        "cp_us": 0.0,
        "cs_us": 0.0,
        "link": "waveform",
        "mp": {"iters": 30, "damping": 0.6, "tol": 1e-4},
    },
    "ambiguity": {"L": 8, "K": 3},
    "psd": {
        "seg_len": 16384,
        "overlap": 0.5,
        "window": "hann",
        "frames": 2,
        "schemes": ["ODDM-exact", "OTFS"],
        "vacant_edges": 0,
    },
    "nmse": {"rho": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0], "Q": [16]},
    "efficiency": {"N": [8, 16, 32, 64, 128], "L": 20, "K_lobes": 11},
    "output": {"dir": None},
}


class ConfigError(Exception):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


def _merge(base: dict, over: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        key = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(key, "unknown key")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(key, "expected a mapping")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = v
    return out


def _num(cfg, key, *, integer=False, lo=None, lo_open=False, hi=None):
    sec, _, name = key.rpartition(".")
    d = cfg
    for part in sec.split("."):
        d = d[part]
    v = d[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(key, f"must be {'>' if lo_open else '>='} {lo}, got {v!r}")
    if hi is not None and v > hi:
        raise ConfigError(key, f"must be <= {hi}, got {v!r}")
    return int(v) if integer else float(v)


def resolve(raw: dict | None) -> dict:
    """Merge ``raw`` over the defaults and validate every key."""
    raw = dict(raw or {})
    raw.pop("derived", None)
    raw.pop("subcommand", None)
    cfg = _merge(DEFAULTS, raw)
    _num(cfg, "grid.M", integer=True, lo=2)
    _num(cfg, "grid.N", integer=True, lo=1)
    _num(cfg, "grid.T0_us", lo=0, lo_open=True)
    _num(cfg, "pulse.rho", lo=0, hi=1)
    _num(cfg, "pulse.Q", integer=True, lo=1)
    _num(cfg, "pulse.oversample", integer=True, lo=2)
    D = cfg["pulse"]["D"]
    if D != "auto":
        _num(cfg, "pulse.D", integer=True, lo=0)
    if not isinstance(cfg["pulse"]["orthogonalize"], bool):
        raise ConfigError("pulse.orthogonalize", "expected true or false")
    if cfg["channel"]["profile"] not in ("identity", "eva", "eva-offgrid", "random"):
        raise ConfigError("channel.profile", f"expected identity, eva, eva-offgrid or random, got {cfg['channel']['profile']!r}")
    _num(cfg, "channel.speed_kmh", lo=0)
    _num(cfg, "channel.fc_ghz", lo=0, lo_open=True)
    _num(cfg, "channel.seed", integer=True, lo=0)
    for k in ("paths", "max_l"):
        _num(cfg, f"channel.{k}", integer=True, lo=1)
    _num(cfg, "channel.max_k", integer=True, lo=0)
    sim = cfg["sim"]
    if sim["scheme"] not in ("ODDM-exact", "ODDM-approx-A", "ODDM-approx-B", "OTFS", "CP-OFDM"):
        raise ConfigError("sim.scheme", f"unknown scheme {sim['scheme']!r}")
    if str(sim["detector"]).upper() not in ("ML", "MMSE", "MP"):
        raise ConfigError("sim.detector", f"expected ML, MMSE or MP, got {sim['detector']!r}")
    if sim["link"] not in ("waveform", "dd"):
        raise ConfigError("sim.link", f"expected waveform or dd, got {sim['link']!r}")
    if not isinstance(sim["snr_db"], list) or not sim["snr_db"]:
        raise ConfigError("sim.snr_db", "expected a non-empty list")
    for i, s in enumerate(sim["snr_db"]):
        if s is not None and (isinstance(s, bool) or not isinstance(s, (int, float))):
            raise ConfigError(f"sim.snr_db[{i}]", f"expected a number or null, got {s!r}")
    _num(cfg, "sim.frames", integer=True, lo=1)
    _num(cfg, "sim.cp_us", lo=0)
    _num(cfg, "sim.cs_us", lo=0)
    _num(cfg, "sim.mp.iters", integer=True, lo=1)
    _num(cfg, "sim.mp.damping", lo=0, lo_open=True, hi=1)
    _num(cfg, "sim.mp.tol", lo=0)
    _num(cfg, "ambiguity.L", integer=True, lo=1, hi=cfg["grid"]["M"])
    _num(cfg, "ambiguity.K", integer=True, lo=0, hi=cfg["grid"]["N"] - 1)
    _num(cfg, "psd.seg_len", integer=True, lo=2)
    _num(cfg, "psd.overlap", lo=0, hi=0.9)
    _num(cfg, "psd.frames", integer=True, lo=1)
    _num(cfg, "psd.vacant_edges", integer=True, lo=0)
    for i, s in enumerate(cfg["psd"]["schemes"]):
        if s not in ("ODDM-exact", "ODDM-approx-A", "ODDM-approx-B", "OTFS", "CP-OFDM"):
            raise ConfigError(f"psd.schemes[{i}]", f"unknown scheme {s!r}")
    for key in ("nmse.rho", "nmse.Q", "efficiency.N"):
        sec, name = key.split(".")
        if not isinstance(cfg[sec][name], list) or not cfg[sec][name]:
            raise ConfigError(key, "expected a non-empty list")
    _num(cfg, "efficiency.L", integer=True, lo=1)
    _num(cfg, "efficiency.K_lobes", integer=True, lo=1)
    return cfg


# ---------------------------------------------------------------- builders


def _grid(cfg, N=None) -> GridParams:
    g = cfg["grid"]
    return GridParams(g["M"], g["N"] if N is None else N, g["T0_us"] * 1e-6)


def _rrc(cfg, rho=None, Q=None) -> RrcParams:
    p = cfg["pulse"]
    return RrcParams(
        p["rho"] if rho is None else rho,
        p["Q"] if Q is None else Q,
        p["oversample"],
        p["orthogonalize"],
    )


def _cp_seconds(cfg, key: str, rate: float) -> float:
    # snap to the sample lattice so guard lengths are whole samples
    us = cfg["sim"][key]
    n = us * 1e-6 * rate
    if abs(n - round(n)) > 1e-6:
        raise ConfigError(f"sim.{key}", f"{us} us is not a whole number of samples at {rate} Hz")
    return round(n) / rate


def _derived(cfg) -> dict:
    g, r = _grid(cfg), _rrc(cfg)
    D = auto_extension(g, r) if cfg["pulse"]["D"] == "auto" else int(cfg["pulse"]["D"])
    ch = cfg["channel"]
    nu_max = doppler_max(ch["speed_kmh"], ch["fc_ghz"] * 1e9)
    out = {
        "D": D,
        "delay_res_s": g.delay_res,
        "doppler_res_hz": g.doppler_res,
        "sample_rate_hz": r.oversample * g.M / g.T0,
        "nu_max_hz": nu_max,
        "K_max": int(round(nu_max / g.doppler_res)),
    }
    if ch["profile"] in ("eva", "eva-offgrid"):
        _, on = make_esdd("EVA", g, ch["speed_kmh"], ch["fc_ghz"] * 1e9, ch["seed"])
        out["L"] = on.L
        out["K"] = on.K
    elif ch["profile"] == "random":
        out["L"] = ch["max_l"]
        out["K"] = ch["max_k"]
    return out


# ---------------------------------------------------------------- pipelines


def _run_pulse(cfg, out: Path):
    d = make_ddop(_grid(cfg), _rrc(cfg), cfg["pulse"]["D"])
    d.realization.to_csv(out / "pulse_ce.csv")
    d.receive_pulse().to_csv(out / "pulse_rx.csv")
    d.subpulse.to_csv(out / "subpulse.csv")


def _run_ambiguity(cfg, out: Path):
    g = _grid(cfg)
    d = make_ddop(g, _rrc(cfg), cfg["pulse"]["D"])
    rep = orthogonality_grid(d.realization, d.receive_pulse(), g)
    rep.to_csv(out / "ambiguity.csv")
    isl, sisl = sidelobe_metrics(d.receive_pulse(), g, cfg["ambiguity"]["L"], cfg["ambiguity"]["K"])
    with open(out / "sidelobes.csv", "w") as fh:
        fh.write("L,K,isl,sisl,max_offorigin\n")
        fh.write(f"{cfg['ambiguity']['L']},{cfg['ambiguity']['K']},{isl!r},{sisl!r},{rep.max_offorigin!r}\n")


def _modulate(scheme, frame, cfg, pulse, fcfg, rng):
    if scheme == "ODDM-exact":
        return modulate_oddm_exact(frame, pulse, fcfg)
    if scheme.startswith("ODDM-approx"):
        return modulate_oddm_approx(frame, pulse, scheme[-1], fcfg)
    if scheme == "OTFS":
        return modulate_otfs(frame, fcfg, cfg["pulse"]["oversample"])
    g = frame.grid
    k = cfg["pulse"]["oversample"]
    v = cfg["psd"]["vacant_edges"]
    # CP-OFDM with the same bandwidth: M - 2v loaded subcarriers per T0 symbol
    sym = qam4().random_symbols((g.N, g.M - 2 * v), rng)[1]
    return modulate_cp_ofdm(sym, g.T0, fcfg.cp, v, False, k * g.M)


def _run_psd(cfg, out: Path):
    g = _grid(cfg)
    pulse = make_ddop(g, _rrc(cfg), cfg["pulse"]["D"])
    rate = pulse.rate
    hb = g.M / (2 * g.T0)
    p = cfg["psd"]
    rows = []
    for scheme in p["schemes"]:
        fcfg = FrameConfig(cp=_cp_seconds(cfg, "cp_us", rate), cs=_cp_seconds(cfg, "cs_us", rate), scheme=scheme)
        rng = np.random.default_rng(cfg["channel"]["seed"])
        specs = []
        for _ in range(p["frames"]):
            frame, _ = DdFrame.random(g, qam4(), rng)
            x = _modulate(scheme, frame, cfg, pulse, fcfg, rng)
            specs.append(welch_psd(x, min(p["seg_len"], len(x)), p["overlap"], p["window"]))
        spec = average_spectra(specs)
        spec.to_csv(out / f"psd_{scheme}.csv")
        rows.append((scheme, oobe(spec, hb)))
    with open(out / "oobe.csv", "w") as fh:
        fh.write("scheme,oobe_db\n")
        for s, v in rows:
            fh.write(f"{s},{v!r}\n")


def _run_nmse(cfg, out: Path):
    g = _grid(cfg)
    rng = np.random.default_rng(cfg["channel"]["seed"])
    frame, _ = DdFrame.random(g, qam4(), rng)
    with open(out / "nmse.csv", "w") as fh:
        fh.write("Q,rho,nmse_A_db,nmse_B_db,nmse_AB_db\n")
        for Q in cfg["nmse"]["Q"]:
            for rho in cfg["nmse"]["rho"]:
                d = make_ddop(g, _rrc(cfg, rho=rho, Q=Q), cfg["pulse"]["D"])
                xe = modulate_oddm_exact(frame, d)
                xa = modulate_oddm_approx(frame, d, "A")
                xb = modulate_oddm_approx(frame, d, "B")
                fh.write(f"{Q},{rho!r},{nmse(xa, xe)!r},{nmse(xb, xe)!r},{nmse(xa, xb)!r}\n")


def _run_efficiency(cfg, out: Path):
    M = cfg["grid"]["M"]
    p, e = cfg["pulse"], cfg["efficiency"]
    with open(out / "efficiency.csv", "w") as fh:
        fh.write("scheme,M,N,rho,Q,L,K_lobes,D,eta\n")
        for N in e["N"]:
            D = auto_extension(GridParams(M, N, 1.0), _rrc(cfg)) if p["D"] == "auto" else p["D"]
            cases = [
                EfficiencyParams("TDM", M, N, rho=p["rho"], Q=p["Q"]),
                EfficiencyParams("FDM", M, N, K_lobes=e["K_lobes"]),
                EfficiencyParams("CP-OFDM", M, N, L=e["L"], K_lobes=e["K_lobes"]),
                EfficiencyParams("ODDM", M, N, rho=p["rho"], Q=p["Q"], L=e["L"], D=D),
                EfficiencyParams("CP-ODDM", M, N, rho=p["rho"], Q=p["Q"], L=e["L"]),
            ]
            for c in cases:
                vals = ["" if v is None else repr(v) for v in (c.rho, c.Q, c.L, c.K_lobes, c.D)]
                fh.write(f"{c.scheme},{M},{N},{','.join(vals)},{efficiency(c)!r}\n")


def _run_ber(cfg, out: Path):
    g = _grid(cfg)
    sim, ch = cfg["sim"], cfg["channel"]
    rate = cfg["pulse"]["oversample"] * g.M / g.T0
    bc = BerConfig(
        grid=g,
        rrc=_rrc(cfg),
        D=cfg["pulse"]["D"],
        scheme=sim["scheme"],
        cp=_cp_seconds(cfg, "cp_us", rate),
        channel=ch["profile"],
        speed_kmh=ch["speed_kmh"],
        fc=ch["fc_ghz"] * 1e9,
        paths=ch["paths"],
        max_l=ch["max_l"],
        max_k=ch["max_k"],
        detector=str(sim["detector"]).upper(),
        mp=MpConfig(**sim["mp"]),
        snr_db=tuple(sim["snr_db"]),
        frames=sim["frames"],
        seed=ch["seed"],
        link=sim["link"],
    )
    ber_harness(bc).to_csv(out / "ber.csv")
    if ch["profile"] in ("eva", "eva-offgrid"):
        make_esdd("EVA", g, ch["speed_kmh"], ch["fc_ghz"] * 1e9, ch["seed"])[1].to_csv(out / "channel_example.csv")


RUNNERS = {
    "pulse": _run_pulse,
    "ambiguity": _run_ambiguity,
    "psd": _run_psd,
    "nmse": _run_nmse,
    "efficiency": _run_efficiency,
    "ber": _run_ber,
}


def _output_dir(args_dir, cfg) -> Path:
    d = args_dir or cfg["output"]["dir"] or os.environ.get(ENV_OUTPUT) or "oddm_out"
    return Path(d)


def run(subcommand: str, cfg: dict, out_dir: Path) -> list[Path]:
    """Run one pipeline; files appear in ``out_dir`` only if every step succeeds."""
    if subcommand not in RUNNERS:
        raise ConfigError("subcommand", f"expected one of {SUBCOMMANDS}, got {subcommand!r}")
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=out_dir))
    try:
        RUNNERS[subcommand](cfg, tmp)
        manifest = {"subcommand": subcommand, **cfg, "derived": _derived(cfg)}
        with open(tmp / "manifest.yaml", "w") as fh:
            yaml.safe_dump(manifest, fh, sort_keys=True)
        written = []
        for f in sorted(tmp.iterdir()):
            dest = out_dir / f.name
            os.replace(f, dest)
            written.append(dest)
        return written
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oddmlab", description="ODDM waveform experiments")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", "-c", type=Path, help="YAML experiment config (or an emitted manifest)")
    ap.add_argument("--seed", type=int, help="override channel.seed")
    ap.add_argument("--output", "-o", type=Path, help="output directory")
    ap.add_argument("--verbose", "-v", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        raw = {}
        if args.config is not None:
            with open(args.config) as fh:
                raw = yaml.safe_load(fh) or {}
            if not isinstance(raw, dict):
                raise ConfigError("<root>", "config must be a mapping")
        if args.seed is not None:
            raw = copy.deepcopy(raw)
            raw.setdefault("channel", {})["seed"] = args.seed
        cfg = resolve(raw)
        out = _output_dir(args.output, cfg)
        written = run(args.subcommand, cfg, out)
    except ConfigError as e:
        print(f"oddmlab: invalid config: {e}", file=sys.stderr)
        return 2
    except (OSError, yaml.YAMLError) as e:
        print(f"oddmlab: {e}", file=sys.stderr)
        return 2
    except (InvalidParameterError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as e:
        print(f"oddmlab: {args.subcommand} failed: {e}", file=sys.stderr)
        return 1
    for w in written:
        log.info("wrote %s", w)
    return 0


if __name__ == "__main__":
    sys.exit(main())
