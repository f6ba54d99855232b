import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from oddmlab import (
    DdFrame,
    EsddChannel,
    FrameConfig,
    GridParams,
    InvalidParameterError,
    OffGridChannel,
    RrcParams,
    SampledSignal,
    add_awgn,
    apply_ltv,
    build_H,
    demodulate,
    doppler_max,
    make_ddop,
    make_esdd,
    modulate_oddm_exact,
    per_symbol_channel,
    qam4,
)
from oddmlab.channel import EVA_DELAYS_NS, is_underspread, round_half_toward_zero

T0 = 1 / 15e3


def _signal(n=400, seed=0, rate=1e6, t0=0.0):
    rng = np.random.default_rng(seed)
    return SampledSignal(rng.standard_normal(n) + 1j * rng.standard_normal(n), rate, t0)


class TestMakeEsdd:
    grid = GridParams(512, 32, T0)

    def test_eva_delay_bins(self):
        assert self.grid.delay_res == pytest.approx(130.2e-9, rel=1e-3)
        off, on = make_esdd("EVA", self.grid, 0.0, 5e9, seed=1)
        assert on.L == 20
        assert int(on.l.max()) == 19
        assert_allclose(off.tau, np.array(EVA_DELAYS_NS) * 1e-9)

    def test_zero_speed_has_no_doppler(self):
        off, on = make_esdd("EVA", self.grid, 0.0, 5e9, seed=2)
        assert np.all(on.k == 0) and np.all(off.nu == 0)

    def test_doppler_bound_at_500_kmh(self):
        nu_max = doppler_max(500, 5e9)
        # exact c; c = 3e8 would give 2314.8 Hz and the same K
        assert nu_max == pytest.approx(2316.42, abs=0.01)
        assert round(nu_max * 32 * T0) == 5
        for seed in range(20):
            off, on = make_esdd("EVA", self.grid, 500, 5e9, seed)
            assert np.all(np.abs(off.nu) <= nu_max + 1e-9)
            assert on.K <= 5

    def test_deterministic_under_seed(self):
        a = make_esdd("EVA", self.grid, 300, 5e9, seed=7)
        b = make_esdd("EVA", self.grid, 300, 5e9, seed=7)
        c = make_esdd("EVA", self.grid, 300, 5e9, seed=8)
        assert_array_equal(a[0].gain, b[0].gain)
        assert_array_equal(a[1].k, b[1].k)
        assert not np.array_equal(a[0].gain, c[0].gain)

    def test_unit_average_power(self):
        p = [np.sum(np.abs(make_esdd("EVA", self.grid, 120, 5e9, s)[0].gain) ** 2) for s in range(3000)]
        assert np.mean(p) == pytest.approx(1.0, abs=0.03)

    def test_taps_in_one_cell_merge(self):
        # 0 ns and 30 ns share delay bin 0 at zero speed
        off, on = make_esdd("EVA", self.grid, 0.0, 5e9, seed=3)
        cell = on.gain[(on.l == 0) & (on.k == 0)]
        assert cell.size == 1
        assert cell[0] == pytest.approx(off.gain[0] + off.gain[1])
        assert on.P < off.P

    def test_custom_profile(self):
        grid = GridParams(64, 8, T0)
        taps = [(0.0, 0.0), (3 * grid.delay_res, -3.0)]
        off, on = make_esdd(taps, grid, 0.0, 2e9, seed=0)
        assert sorted(on.l.tolist()) == [0, 3]

    @pytest.mark.parametrize(
        "args",
        [("EVA", -1.0, 5e9), ("EVA", 10.0, 0.0), ("ETU", 10.0, 5e9), ([(1.0, 0.0)], 10.0, 5e9)],
    )
    def test_invalid(self, args):
        profile, speed, fc = args
        with pytest.raises(InvalidParameterError):
            make_esdd(profile, self.grid, speed, fc, 0)

    def test_underspread_at_table_speeds(self):
        for v in (80, 120, 300, 500):
            off, _ = make_esdd("EVA", self.grid, v, 5e9, seed=v)
            assert is_underspread(off.tau_max, off.nu_max)


def test_round_half_toward_zero():
    x = np.array([0.5, -0.5, 1.5, -2.5, 1.6, -1.4, 2.0])
    assert round_half_toward_zero(x).tolist() == [0, 0, 1, -2, 2, -1, 2]


class TestEsddChannel:
    grid = GridParams(8, 4, T0)

    @pytest.mark.parametrize(
        "paths",
        [[(0, 0, 1), (0, 0, 0.5)], [(8, 0, 1)], [(0, 3, 1)], [(-1, 0, 1)], []],
    )
    def test_validation(self, paths):
        with pytest.raises((InvalidParameterError, ValueError)):
            EsddChannel.from_paths(self.grid, paths)

    def test_summary_and_csv(self, tmp_path):
        ch = EsddChannel.from_paths(self.grid, [(0, 0, 1), (3, -2, 0.5j)])
        assert (ch.P, ch.L, ch.K) == (2, 4, 2)
        ch.to_csv(tmp_path / "c.csv")
        rows = list(csv.reader(open(tmp_path / "c.csv")))
        assert rows[0] == ["l", "k", "gain_re", "gain_im"]
        assert rows[2] == ["3", "-2", "0.0", "0.5"]

    def test_offgrid_validation(self):
        with pytest.raises(InvalidParameterError):
            OffGridChannel([-1e-6], [0.0], [1.0])
        with pytest.raises(InvalidParameterError):
            OffGridChannel([0.0, 1e-6], [0.0], [1.0])


class TestApplyLtv:
    def test_identity_path(self):
        x = _signal()
        y = apply_ltv(x, OffGridChannel([0.0], [0.0], [1.0]))
        assert_array_equal(y.samples, x.samples)
        assert y.t0 == x.t0

    def test_pure_doppler(self):
        x = _signal(t0=-3e-5)
        nu = 1234.5
        y = apply_ltv(x, OffGridChannel([0.0], [nu], [1.0]))
        assert_allclose(y.samples, x.samples * np.exp(2j * np.pi * nu * x.times), atol=1e-9)

    def test_integer_delay_extends_output(self):
        x = _signal()
        y = apply_ltv(x, OffGridChannel([5e-6], [0.0], [0.5]))
        assert len(y) == len(x) + 5
        assert_allclose(y.samples[5:], 0.5 * x.samples)
        assert_array_equal(y.samples[:5], 0)

    def test_time_variance_is_a_phase(self):
        x = _signal(t0=0.0)
        d = 7
        shifted = x.with_samples(x.samples, t0=d / x.rate)
        chan = OffGridChannel([3e-6], [2500.0], [0.8 - 0.3j])
        y = apply_ltv(x, chan)
        ys = apply_ltv(shifted, chan)
        assert_allclose(ys.samples, y.samples * np.exp(2j * np.pi * 2500.0 * d / x.rate), atol=1e-12)

    def test_linearity(self):
        x1, x2 = _signal(seed=1), _signal(seed=2)
        chan = OffGridChannel([0.0, 2.3e-6], [100.0, -900.0], [1.0, 0.4j])
        a, b = 0.3 + 1j, -2.0
        lhs = apply_ltv(x1.with_samples(a * x1.samples + b * x2.samples), chan).samples
        rhs = a * apply_ltv(x1, chan).samples + b * apply_ltv(x2, chan).samples
        assert_allclose(lhs, rhs, atol=1e-10)

    def test_fractional_delay_preserves_energy(self):
        grid = GridParams(32, 4, T0)
        d = make_ddop(grid, RrcParams(0.5, 8, 8))
        frame, _ = DdFrame.random(grid, qam4(), np.random.default_rng(3))
        x = modulate_oddm_exact(frame, d)
        y = apply_ltv(x, OffGridChannel([0.37 / x.rate], [0.0], [1.0]))
        assert y.energy() == pytest.approx(x.energy(), rel=1e-6)

    def test_on_and_off_grid_descriptions_agree(self):
        grid = GridParams(64, 16, T0)
        d = make_ddop(grid, RrcParams(0.2, 8, 8))
        frame, _ = DdFrame.random(grid, qam4(), np.random.default_rng(4))
        x = modulate_oddm_exact(frame, d, FrameConfig(cp=20 * grid.delay_res))
        paths = [(0, 0, 1.0), (3, 2, 0.5j), (11, -1, 0.2)]
        on = EsddChannel.from_paths(grid, paths)
        off = OffGridChannel(
            [l * T0 / 64 for l, _, _ in paths], [k / (16 * T0) for _, k, _ in paths], [h for _, _, h in paths]
        )
        assert_allclose(apply_ltv(x, off).samples, apply_ltv(x, on.to_offgrid()).samples, atol=1e-9)

    def test_two_paths_match_channel_matrix(self):
        grid = GridParams(32, 8, T0)
        d = make_ddop(grid, RrcParams(1.0, 16, 8))
        frame, _ = DdFrame.random(grid, qam4(), np.random.default_rng(5))
        chan = EsddChannel.from_paths(grid, [(0, 1, 0.8), (3, -1, 0.6j)])
        x = modulate_oddm_exact(frame, d, FrameConfig(cp=4 * grid.delay_res))
        Y = demodulate(apply_ltv(x, chan.to_offgrid()), d)
        HX = build_H(chan).matvec(frame.symbols)
        assert np.linalg.norm(Y - HX) / np.linalg.norm(HX) <= 1e-3


class TestAwgn:
    def test_calibration(self):
        x = SampledSignal(np.exp(2j * np.pi * 0.01 * np.arange(1_000_000)), 1e6)
        y = add_awgn(x, 7.0, seed=3)
        w = y.samples - x.samples
        snr = 10 * np.log10(x.power() / np.mean(np.abs(w) ** 2))
        assert snr == pytest.approx(7.0, abs=0.1)
        # circular: real and imaginary parts carry equal power
        assert np.var(w.real) == pytest.approx(np.var(w.imag), rel=0.02)

    def test_nominal_power_reference(self):
        x = SampledSignal(np.ones(200_000), 1.0)
        y = add_awgn(x, 0.0, seed=1, signal_power=4.0)
        assert np.mean(np.abs(y.samples - 1) ** 2) == pytest.approx(4.0, rel=0.02)

    def test_deterministic(self):
        x = _signal()
        assert_array_equal(add_awgn(x, 3.0, 9).samples, add_awgn(x, 3.0, 9).samples)
        assert not np.array_equal(add_awgn(x, 3.0, 9).samples, add_awgn(x, 3.0, 10).samples)

    @pytest.mark.parametrize("snr", [None, np.inf])
    def test_passthrough(self, snr):
        x = _signal()
        assert add_awgn(x, snr, 0) is x

    def test_zero_signal(self):
        with pytest.raises(InvalidParameterError):
            add_awgn(SampledSignal(np.zeros(10), 1.0), 10.0, 0)


class TestPerSymbolChannel:
    grid = GridParams(16, 8, T0)

    def test_zero_index(self):
        ch = EsddChannel.from_paths(self.grid, [(0, 1, 1.0), (2, -3, 0.5j)])
        assert_array_equal(per_symbol_channel(ch, 0, T0).gain, ch.gain)

    @settings(max_examples=20, deadline=None)
    @given(m=st.integers(0, 10_000))
    def test_static_channel_unchanged(self, m):
        ch = EsddChannel.from_paths(self.grid, [(0, 0, 1.0), (5, 0, 0.2 - 0.1j)])
        assert_allclose(per_symbol_channel(ch, m, T0).gain, ch.gain)

    def test_full_rotation(self):
        ch = EsddChannel.from_paths(self.grid, [(0, 1, 1.0)])
        out = per_symbol_channel(ch, self.grid.size, self.grid.delay_res)
        assert out.gain[0] == pytest.approx(1.0, abs=1e-9)
        assert_array_equal(out.l, ch.l)
        assert_array_equal(out.k, ch.k)

    def test_negative_index(self):
        ch = EsddChannel.from_paths(self.grid, [(0, 1, 1.0)])
        with pytest.raises(InvalidParameterError):
            per_symbol_channel(ch, -1, T0)
