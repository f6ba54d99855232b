import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from oddmlab import (
    DdFrame,
    FrameConfig,
    GridParams,
    InvalidParameterError,
    OffGridChannel,
    RrcParams,
    apply_ltv,
    demodulate,
    isfft,
    make_ddop,
    modulate_cp_ofdm,
    modulate_oddm_approx,
    modulate_oddm_exact,
    modulate_otfs,
    nmse,
    qam4,
    sfft,
)
from oddmlab.waveforms import demodulate_cp_ofdm, demodulate_otfs, ofdm_subcarriers, signed_index

T0 = 1 / 15e3


def _impulse(grid, m, n, value=1.0):
    X = np.zeros((grid.M, grid.N), dtype=complex)
    X[m, n] = value
    return DdFrame(grid, X)


def _on_lattice(x, first, count):
    """Samples of ``x`` at absolute indices ``first .. first + count - 1`` (zero outside)."""
    out = np.zeros(count, dtype=complex)
    lo = max(first, x.start_index)
    hi = min(first + count, x.start_index + len(x))
    if hi > lo:
        out[lo - first : hi - first] = x.samples[lo - x.start_index : hi - x.start_index]
    return out


class TestDdFrame:
    def test_shape_checked(self):
        with pytest.raises(InvalidParameterError):
            DdFrame(GridParams(4, 2, T0), np.zeros((2, 4)))

    def test_constellation_membership(self):
        g = GridParams(4, 2, T0)
        with pytest.raises(InvalidParameterError):
            DdFrame(g, np.full((4, 2), 0.3 + 0j), qam4())
        frame, bits = DdFrame.random(g, qam4(), np.random.default_rng(0))
        assert bits.size == 16
        assert_array_equal(qam4().map_bits(bits).reshape(4, 2), frame.symbols)

    def test_signed_index(self):
        assert signed_index(8).tolist() == [0, 1, 2, 3, -4, -3, -2, -1]
        assert signed_index(5).tolist() == [0, 1, 2, -2, -1]

    def test_frame_config_validation(self):
        with pytest.raises(InvalidParameterError):
            FrameConfig(cp=-1.0)
        with pytest.raises(InvalidParameterError):
            FrameConfig(scheme="GFDM")
        with pytest.raises(InvalidParameterError):
            FrameConfig(vacant_edges=-2)


class TestOddmExact:
    grid = GridParams(32, 8, T0)

    def test_single_symbol_is_the_receive_pulse(self):
        d = make_ddop(self.grid, RrcParams(0.1, 8, 8), extension=0)
        x = modulate_oddm_exact(_impulse(self.grid, 0, 0), d)
        u = d.receive_pulse()
        first = min(x.start_index, u.start_index)
        n = max(x.start_index + len(x), u.start_index + len(u)) - first
        assert_allclose(_on_lattice(x, first, n), _on_lattice(u, first, n), atol=1e-15)

    @pytest.mark.parametrize("m0,col", [(3, 0), (5, 2), (31, 6), (17, 4)])
    def test_single_symbol_is_shifted_modulated_pulse(self, m0, col):
        d = make_ddop(self.grid, RrcParams(0.1, 20, 8))
        x = modulate_oddm_exact(_impulse(self.grid, m0, col, 0.5 - 1j), d)
        # oracle: u_ce(t - m0 dt) exp(j 2 pi n (t - m0 dt) / (N T0)) with signed n
        u = d.realization
        k = d.samples_per_bin
        shifted_first = u.start_index + m0 * k
        n_s = signed_index(self.grid.N)[col]
        t_rel = (shifted_first + np.arange(len(u))) / u.rate - m0 * self.grid.delay_res
        ref = (0.5 - 1j) * u.samples * np.exp(2j * np.pi * n_s * t_rel / self.grid.duration)
        first = min(x.start_index, shifted_first)
        n = max(x.start_index + len(x), shifted_first + len(u)) - first
        ref_full = np.zeros(n, dtype=complex)
        ref_full[shifted_first - first : shifted_first - first + len(u)] = ref
        assert_allclose(_on_lattice(x, first, n), ref_full, atol=1e-9)

    def test_round_trip_identity_channel(self):
        d = make_ddop(self.grid, RrcParams(0.1, 16, 8))
        frame, _ = DdFrame.random(self.grid, qam4(), np.random.default_rng(1))
        Y = demodulate(modulate_oddm_exact(frame, d), d)
        assert np.max(np.abs(Y - frame.symbols)) <= 1e-6

    def test_round_trip_with_cp_and_cs(self):
        d = make_ddop(self.grid, RrcParams(0.3, 12, 8))
        frame, _ = DdFrame.random(self.grid, qam4(), np.random.default_rng(2))
        cfg = FrameConfig(cp=5 * self.grid.delay_res, cs=3 * self.grid.delay_res)
        x = modulate_oddm_exact(frame, d, cfg)
        plain = modulate_oddm_exact(frame, d)
        assert len(x) == len(plain) + 8 * d.samples_per_bin
        Y = demodulate(x, d, cp=cfg.cp)
        assert np.max(np.abs(Y - frame.symbols)) <= 1e-6

    @pytest.mark.parametrize("Q,cp_bins", [(4, 8), (20, 8), (8, 40)])
    def test_frame_cp_is_cyclic(self, Q, cp_bins):
        # the emitted prefix repeats the frame one period N T0 later
        d = make_ddop(self.grid, RrcParams(0.1, Q, 8))
        frame, _ = DdFrame.random(self.grid, qam4(), np.random.default_rng(3))
        x = modulate_oddm_exact(frame, d, FrameConfig(cp=cp_bins * self.grid.delay_res))
        c = cp_bins * d.samples_per_bin
        i0 = -x.start_index
        span = self.grid.N * d.samples_per_T0
        s = x.samples
        assert i0 >= c
        assert_allclose(s[i0 - c : i0], s[i0 - c + span : i0 + span], atol=1e-9 * np.max(np.abs(s)))

    def test_grid_mismatch(self):
        d = make_ddop(GridParams(16, 8, T0), RrcParams(0.1, 4, 8))
        with pytest.raises(InvalidParameterError):
            modulate_oddm_exact(_impulse(self.grid, 0, 0), d)

    def test_cp_off_lattice(self):
        d = make_ddop(self.grid, RrcParams(0.1, 4, 8))
        with pytest.raises(InvalidParameterError):
            modulate_oddm_exact(_impulse(self.grid, 0, 0), d, FrameConfig(cp=1e-9))


class TestOddmApprox:
    def test_variants_agree_at_scale(self):
        grid = GridParams(512, 32, T0)
        d = make_ddop(grid, RrcParams(0.1, 16, 8))
        frame, _ = DdFrame.random(grid, qam4(), np.random.default_rng(4))
        assert nmse(modulate_oddm_approx(frame, d, "A"), modulate_oddm_approx(frame, d, "B")) <= -40

    def test_single_symbol_matches_exact(self):
        grid = GridParams(128, 8, T0)
        d = make_ddop(grid, RrcParams(0.2, 16, 8))
        frame = _impulse(grid, 3, 0)
        assert nmse(modulate_oddm_approx(frame, d, "A"), modulate_oddm_exact(frame, d)) <= -30

    def test_nmse_falls_with_rolloff(self):
        grid = GridParams(128, 16, T0)
        frame, _ = DdFrame.random(grid, qam4(), np.random.default_rng(5))
        curve = []
        for rho in (0.1, 0.3, 0.6, 1.0):
            d = make_ddop(grid, RrcParams(rho, 16, 8))
            curve.append(nmse(modulate_oddm_approx(frame, d, "B"), modulate_oddm_exact(frame, d)))
        assert np.all(np.diff(curve) <= 0)

    def test_nmse_barely_depends_on_q(self):
        # Q changes the approximation error by well under a decibel
        grid = GridParams(512, 32, T0)
        frame, _ = DdFrame.random(grid, qam4(), np.random.default_rng(6))
        vals = []
        for Q in (8, 16, 32):
            d = make_ddop(grid, RrcParams(0.2, Q, 8))
            vals.append(nmse(modulate_oddm_approx(frame, d, "A"), modulate_oddm_exact(frame, d)))
        assert max(vals) - min(vals) < 1.0

    def test_accepts_rrc_params(self):
        grid = GridParams(16, 4, T0)
        rrc = RrcParams(0.5, 4, 8)
        frame, _ = DdFrame.random(grid, qam4(), np.random.default_rng(7))
        a = modulate_oddm_approx(frame, rrc, "A")
        b = modulate_oddm_approx(frame, make_ddop(grid, rrc), "A")
        assert_array_equal(a.samples, b.samples)

    def test_bad_variant(self):
        grid = GridParams(16, 4, T0)
        with pytest.raises(InvalidParameterError):
            modulate_oddm_approx(_impulse(grid, 0, 0), RrcParams(0.5, 4, 8), "C")


class TestOtfs:
    def test_isfft_of_constant(self):
        M, N = 8, 4
        out = isfft(np.ones((M, N)))
        assert out.shape == (N, M)
        assert out[0, 0] == pytest.approx(np.sqrt(M * N))
        rest = out.copy()
        rest[0, 0] = 0
        assert np.max(np.abs(rest)) < 1e-12

    def test_isfft_unitary_and_inverse(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))
        assert np.linalg.norm(isfft(X)) == pytest.approx(np.linalg.norm(X))
        assert_allclose(sfft(isfft(X)), X, atol=1e-12)

    def test_isfft_matches_definition(self):
        rng = np.random.default_rng(9)
        M, N = 4, 3
        X = rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))
        m, n = np.arange(M), np.arange(N)
        ref = np.empty((N, M), dtype=complex)
        for nh in range(N):
            for mh in range(M):
                ref[nh, mh] = np.sum(X * np.exp(2j * np.pi * (nh * n[None, :] / N - mh * m[:, None] / M)))
        assert_allclose(isfft(X), ref / np.sqrt(M * N), atol=1e-12)

    def test_duration_cp_and_round_trip(self):
        grid = GridParams(16, 4, T0)
        frame, _ = DdFrame.random(grid, qam4(), np.random.default_rng(10))
        x = modulate_otfs(frame)
        assert x.duration == pytest.approx(grid.N * T0)
        assert_allclose(demodulate_otfs(x, grid), frame.symbols, atol=1e-12)
        cp = 4 * grid.delay_res
        y = modulate_otfs(frame, FrameConfig(cp=cp, scheme="OTFS"))
        c = int(round(cp * y.rate))
        assert_array_equal(y.samples[:c], y.samples[-c:])
        assert y.t0 == pytest.approx(-cp)


class TestCpOfdm:
    def test_single_dc_carrier_is_constant(self):
        x = modulate_cp_ofdm(np.array([[2.0 - 1j]]), T0, n_fft=64)
        assert_allclose(x.samples, np.full(64, (2.0 - 1j) / np.sqrt(T0)), atol=1e-9)

    @pytest.mark.parametrize("dc_null,vacant", [(False, 0), (True, 3)])
    def test_round_trip(self, dc_null, vacant):
        rng = np.random.default_rng(11)
        S = rng.standard_normal((5, 12)) + 1j * rng.standard_normal((5, 12))
        cp = 16 / 64 * T0
        x = modulate_cp_ofdm(S, T0, cp, vacant, dc_null, n_fft=64)
        assert_allclose(demodulate_cp_ofdm(x, T0, cp, 12, 5, vacant, dc_null, n_fft=64), S, atol=1e-9)
        # every symbol opens with a copy of its own tail
        blocks = x.samples.reshape(5, 80)
        assert_array_equal(blocks[:, :16], blocks[:, -16:])

    def test_dc_null_skips_dc(self):
        idx, n_fft = ofdm_subcarriers(4, 1, True)
        assert 0 not in idx.tolist() and n_fft == 7

    def test_two_tap_lti_channel(self):
        n_fft, cp = 64, 8
        delta = T0 / n_fft
        rng = np.random.default_rng(12)
        S = rng.standard_normal((4, 20)) + 1j * rng.standard_normal((4, 20))
        x = modulate_cp_ofdm(S, T0, cp * delta, n_fft=n_fft)
        chan = OffGridChannel([0.0, 4 * delta], [0.0, 0.0], [1.0, 0.5])
        Y = demodulate_cp_ofdm(apply_ltv(x, chan), T0, cp * delta, 20, 4, n_fft=n_fft)
        idx, _ = ofdm_subcarriers(20, n_fft=n_fft)
        H = 1 + 0.5 * np.exp(-2j * np.pi * (idx / T0) * 4 * delta)
        assert_allclose(Y, S * H[None, :], atol=1e-6)

    def test_budget_exceeded(self):
        with pytest.raises(InvalidParameterError):
            modulate_cp_ofdm(np.ones((1, 60)), T0, vacant_edges=3, n_fft=64)


def _modulators():
    grid = GridParams(16, 4, T0)
    d = make_ddop(grid, RrcParams(0.2, 8, 8))
    return grid, {
        "ODDM-exact": lambda F: modulate_oddm_exact(F, d, FrameConfig(cp=2 * grid.delay_res)),
        "ODDM-approx-A": lambda F: modulate_oddm_approx(F, d, "A"),
        "ODDM-approx-B": lambda F: modulate_oddm_approx(F, d, "B"),
        "OTFS": lambda F: modulate_otfs(F, FrameConfig(cp=3 * grid.delay_res, scheme="OTFS")),
        "CP-OFDM": lambda F: modulate_cp_ofdm(F.symbols, T0, T0 / 8, 2, True, n_fft=32),
    }


@pytest.mark.parametrize("scheme", ["ODDM-exact", "ODDM-approx-A", "ODDM-approx-B", "OTFS", "CP-OFDM"])
def test_linearity(scheme):
    grid, mods = _modulators()
    mod = mods[scheme]
    rng = np.random.default_rng(13)
    X1 = rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4))
    X2 = rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4))
    a, b = 0.7 - 0.2j, -1.3 + 0.5j
    lhs = mod(DdFrame(grid, a * X1 + b * X2)).samples
    rhs = a * mod(DdFrame(grid, X1)).samples + b * mod(DdFrame(grid, X2)).samples
    assert_allclose(lhs, rhs, atol=1e-9 * np.max(np.abs(rhs)))


@pytest.mark.parametrize("scheme", ["ODDM-exact", "ODDM-approx-A", "OTFS", "CP-OFDM"])
def test_energy_proportional_to_symbol_count(scheme):
    grid = GridParams(32, 8, T0)
    # unit-energy pulse; a cyclic extension adds data-dependent energy
    d = make_ddop(grid, RrcParams(0.2, 8, 8), extension=0)
    mod = {
        "ODDM-exact": lambda F: modulate_oddm_exact(F, d),
        "ODDM-approx-A": lambda F: modulate_oddm_approx(F, d, "A"),
        "OTFS": lambda F: modulate_otfs(F),
        "CP-OFDM": lambda F: modulate_cp_ofdm(F.symbols, T0, T0 / 8, n_fft=64),
    }[scheme]
    rng = np.random.default_rng(14)
    e = np.array([mod(DdFrame.random(grid, qam4(), rng)[0]).energy() for _ in range(100)]) / grid.size
    assert np.max(np.abs(e / e.mean() - 1)) <= 0.05
