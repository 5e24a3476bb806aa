"""Transmitter chain and receiver front-end tests."""

import numpy as np
import pytest
from scipy.special import erf

from nfdmsim.channel import FiberParams, make_scales, ssfm_propagate
from nfdmsim.signals import PHYSICAL, SignalError, TimeSignal
from nfdmsim.txrx import (
    PulseShape,
    ScalingError,
    SystemConfig,
    linear_ft,
    nis_encode,
    precompensate,
    qpsk_decide,
    qpsk_modulate,
    qpsk_symbol_index,
    resample_bandlimited,
    rx_frontend,
    synthesize_pulse_train,
    tx_build_burst,
    tx_waveform,
)
from nfdmsim.glm import bnft_inverse
from nfdmsim.signals import NonlinearSpectrum


def small_cfg(**kw):
    base = dict(n_info=16, n_guard=48, target_power_dbm=-16.0)
    base.update(kw)
    return SystemConfig(**base)


class TestQpsk:
    def test_gray_map_first_symbol(self):
        frame = qpsk_modulate([0, 0])
        assert np.allclose(frame.symbols[0], np.exp(1j * np.pi / 4))

    def test_decide_quadrant_center(self):
        sym, bits = qpsk_decide(1 + 1j)
        assert np.allclose(sym, np.exp(1j * np.pi / 4))
        assert list(bits) == [0, 0]

    def test_decide_second_quadrant(self):
        sym, bits = qpsk_decide(-0.1 + 2j)
        assert np.allclose(sym, np.exp(3j * np.pi / 4))
        assert list(bits) == [0, 1]

    def test_round_trip_all_symbols_with_noise(self):
        frame = qpsk_modulate([0, 0, 0, 1, 1, 1, 1, 0])
        for s, b in zip(frame.symbols, frame.bits.reshape(-1, 2)):
            got, bits = qpsk_decide(s * (1 + 0.1))
            assert np.allclose(got, s)
            assert np.array_equal(bits, b)

    def test_boundary_tie_breaks(self):
        # boundaries resolve toward the smaller constellation index
        assert qpsk_symbol_index(np.array([1.0 + 0j]))[0] == 0    # m3/m0
        assert qpsk_symbol_index(np.array([1j]))[0] == 0          # m0/m1
        assert qpsk_symbol_index(np.array([-1.0 + 0j]))[0] == 1   # m1/m2
        assert qpsk_symbol_index(np.array([-1j]))[0] == 2         # m2/m3
        assert qpsk_symbol_index(np.array([0j]))[0] == 0

    def test_odd_bit_count_rejected(self):
        with pytest.raises(SignalError):
            qpsk_modulate([0, 1, 0])


class TestPulse:
    def test_energy_fraction(self):
        cfg = small_cfg()
        pulse = PulseShape(cfg.ts, 0.99)
        frac = erf(cfg.ts / (2 * pulse.sigma))
        assert frac == pytest.approx(0.99, abs=1e-10)

    def test_unit_energy_on_grid(self):
        cfg = small_cfg()
        pulse = PulseShape(cfg.ts)
        t = np.arange(-8 * cfg.ts, 8 * cfg.ts, cfg.dt)
        energy = np.sum(np.abs(pulse.amplitude(t)) ** 2) * cfg.dt
        assert energy == pytest.approx(1.0, abs=1e-6)

    def test_grid_energy_fraction_in_symbol(self):
        cfg = small_cfg()
        pulse = PulseShape(cfg.ts)
        t = np.arange(-8 * cfg.ts, 8 * cfg.ts, cfg.dt)
        g = pulse.amplitude(t)
        inside = np.abs(t) <= cfg.ts / 2
        frac = np.sum(np.abs(g[inside]) ** 2) / np.sum(np.abs(g) ** 2)
        assert frac == pytest.approx(0.99, abs=1e-4)


class TestSynthesize:
    def test_single_symbol_is_pulse(self):
        cfg = SystemConfig(n_info=1, n_guard=16, constellation_order=4)
        frame = qpsk_modulate([0, 0])
        u = synthesize_pulse_train(frame, cfg)
        pulse = PulseShape(cfg.ts, cfg.pulse_energy_fraction)
        expected = frame.symbols[0] * pulse.amplitude(cfg.t_grid)
        assert np.max(np.abs(u.samples - expected)) < 1e-12

    def test_guard_region_energy(self):
        cfg = small_cfg()
        rng = np.random.default_rng(0)
        u = synthesize_pulse_train(qpsk_modulate(rng.integers(0, 2, 32)), cfg)
        guard = u.samples[cfg.info_samples:]
        assert np.sum(np.abs(guard) ** 2) * cfg.dt <= 0.01

    def test_total_energy(self):
        cfg = small_cfg()
        rng = np.random.default_rng(1)
        u = synthesize_pulse_train(qpsk_modulate(rng.integers(0, 2, 32)), cfg)
        assert u.energy() == pytest.approx(cfg.n_info, rel=0.02)


class TestNisEncode:
    def test_zero_signal(self):
        cfg = small_cfg()
        u = TimeSignal(np.zeros(cfg.n_frame), cfg.dt, cfg.frame_start)
        rho = nis_encode(u, cfg.detection_lambda_grid())
        assert np.all(rho.rho == 0)

    def test_linear_limit_round_trip(self):
        # BNFT(nis_encode(u)) recovers u at low amplitude
        cfg = small_cfg()
        rng = np.random.default_rng(2)
        u = synthesize_pulse_train(qpsk_modulate(rng.integers(0, 2, 32)), cfg)
        scaled = TimeSignal(1e-3 * u.samples, u.dt, u.t0)
        lam_max = np.pi / (2 * cfg.dt)
        lam = -lam_max + (2 * lam_max / (2 * cfg.n_frame)) * np.arange(2 * cfg.n_frame)
        rho = nis_encode(scaled, lam)
        q = bnft_inverse(rho, cfg.t_grid, "dlp", edge_tol=5e-3).samples
        ns = cfg.info_samples
        err = np.linalg.norm(q[:ns] - scaled.samples[:ns]) \
            / np.linalg.norm(scaled.samples[:ns])
        assert err < 0.01

    def test_frequency_shift_moves_support(self):
        cfg = small_cfg()
        rng = np.random.default_rng(3)
        u = synthesize_pulse_train(qpsk_modulate(rng.integers(0, 2, 32)), cfg)
        lam = np.asarray(cfg.detection_lambda_grid())
        dlam = lam[1] - lam[0]
        shift_bins = 8
        dw = 2 * dlam * shift_bins                 # frequency shift by dw
        u2 = TimeSignal(u.samples * np.exp(1j * dw * u.t_grid), u.dt, u.t0)
        r1 = nis_encode(u, lam).rho
        r2 = nis_encode(u2, lam).rho
        # support moves by -dw/2 = -shift_bins grid points
        assert np.max(np.abs(r2[:-shift_bins] - r1[shift_bins:])) < 1e-6 * np.max(np.abs(r1))


class TestPrecompensate:
    def test_identity_at_zero_length(self):
        lam = np.linspace(-2, 2, 33)
        rho = NonlinearSpectrum(lam, np.exp(-lam ** 2) + 0j)
        out = precompensate(rho, 0.0)
        assert np.array_equal(out.rho, rho.rho)

    def test_phase_value(self):
        lam = np.linspace(-2, 2, 41)
        rho = NonlinearSpectrum(lam, np.ones_like(lam, dtype=complex))
        out = precompensate(rho, 0.5)
        idx = np.argmin(np.abs(lam - 1.0))
        assert out.rho[idx] == pytest.approx(np.exp(2j), abs=1e-9)

    def test_channel_rotation_cancels(self):
        lam = np.linspace(-2, 2, 41)
        rho = NonlinearSpectrum(lam, np.exp(-lam ** 2) * np.exp(0.3j * lam))
        out = precompensate(rho, 1.7)
        back = out.rho * np.exp(-4j * lam * lam * 1.7)
        assert np.max(np.abs(back - rho.rho)) < 1e-12


class TestTxBuild:
    def test_power_within_tolerance(self):
        fiber = FiberParams(length_km=1000.0)
        cfg = small_cfg(target_power_dbm=-14.0)
        scales = make_scales(fiber, cfg.t0_phys)
        frame = qpsk_modulate(np.random.default_rng(4).integers(0, 2, 32))
        tx = tx_build_burst(frame, cfg, scales,
                            fiber.length_m / (2 * scales.z0))
        assert abs(tx.realized_power_dbm - cfg.target_power_dbm) <= 0.05
        assert tx.signal.units == PHYSICAL

    def test_low_power_loopback_matches_pulse_train(self):
        # launched frame (after undoing the reversal and centering) matches
        # the pulse train at low power within the pulse-tail tolerance
        cfg = small_cfg(target_power_dbm=-30.0)
        fiber = FiberParams(length_km=1000.0)
        scales = make_scales(fiber, cfg.t0_phys)
        rng = np.random.default_rng(5)
        frame = qpsk_modulate(rng.integers(0, 2, 32))
        u = synthesize_pulse_train(frame, cfg)
        tx = tx_build_burst(frame, cfg, scales, 0.0)
        from nfdmsim.channel import to_normalized
        qn = to_normalized(tx.signal, scales)
        aligned = np.roll(qn.samples, -cfg.guard_shift_samples)
        ns = cfg.info_samples
        ref = tx.gain * u.samples[:ns]
        rel = np.linalg.norm(aligned[:ns] - ref) / np.linalg.norm(ref)
        assert rel < 0.03

    def test_unreachable_power_raises(self):
        cfg = small_cfg(target_power_dbm=40.0, tx_max_bisect=8)
        fiber = FiberParams(length_km=1000.0)
        scales = make_scales(fiber, cfg.t0_phys)
        frame = qpsk_modulate(np.random.default_rng(6).integers(0, 2, 32))
        with pytest.raises(ScalingError):
            tx_build_burst(frame, cfg, scales, 1.0)


class TestRxFrontend:
    def test_noiseless_loopback_transparency(self):
        # no fiber: rx realigns and reproduces the transmitted frame
        cfg = small_cfg(target_power_dbm=-18.0)
        fiber = FiberParams(length_km=1000.0)
        scales = make_scales(fiber, cfg.t0_phys)
        rng = np.random.default_rng(7)
        frame = qpsk_modulate(rng.integers(0, 2, 32))
        tx = tx_build_burst(frame, cfg, scales, 0.0)
        up = resample_bandlimited(tx.signal, cfg.channel_oversampling)
        r = rx_frontend(up, cfg, scales)
        u = synthesize_pulse_train(frame, cfg)
        ref = np.roll(tx_waveform(u, tx.gain, cfg, 0.0),
                      -cfg.guard_shift_samples)
        ns = cfg.info_samples
        rel = np.linalg.norm(r.samples[:ns] - ref[:ns]) / np.linalg.norm(ref[:ns])
        assert rel < 1e-6

    def test_white_noise_band_limited(self):
        cfg = small_cfg()
        fiber = FiberParams(length_km=1000.0)
        scales = make_scales(fiber, cfg.t0_phys)
        rng = np.random.default_rng(8)
        n16 = cfg.n_frame * cfg.channel_oversampling
        dt16 = cfg.dt * scales.t0 / cfg.channel_oversampling
        noise = rng.normal(size=n16) + 1j * rng.normal(size=n16)
        wave = TimeSignal(1e-3 * noise, dt16,
                          cfg.frame_start * scales.t0, PHYSICAL)
        out = rx_frontend(wave, cfg, scales)
        spec = np.fft.fft(out.samples)
        f = np.fft.fftfreq(out.n, d=out.dt * scales.t0)
        outside = np.abs(f) > cfg.frontend_bandwidth_hz / 2
        assert np.max(np.abs(spec[outside])) <= 1e-9 * np.max(np.abs(spec)) \
            if outside.any() else True

    def test_symbol_boundaries_on_grid(self):
        cfg = small_cfg()
        # t_k = (k - 1/2) Ts lands on integer sample index k*oversampling
        for k in (1, 5, 16):
            t_k = (k - 0.5) * cfg.ts
            idx = (t_k - cfg.frame_start) / cfg.dt
            assert idx == pytest.approx(k * cfg.oversampling, abs=1e-12)

    def test_wrong_grid_rejected(self):
        cfg = small_cfg()
        fiber = FiberParams(length_km=1000.0)
        scales = make_scales(fiber, cfg.t0_phys)
        wave = TimeSignal(np.zeros(100) + 0j, 1e-11, 0.0, PHYSICAL)
        from nfdmsim.txrx import FramingError
        with pytest.raises((FramingError, SignalError)):
            rx_frontend(wave, cfg, scales)


class TestCausality:
    def test_received_depends_only_on_past_symbols(self):
        # two noiseless bursts differing only from symbol k+1 onward agree
        # up to t_k within the pulse-tail tolerance
        cfg = small_cfg(target_power_dbm=-14.0)
        fiber = FiberParams(length_km=1000.0)
        scales = make_scales(fiber, cfg.t0_phys)
        length = fiber.length_m / (2 * scales.z0)
        steps = 1000
        k = 8
        rng = np.random.default_rng(9)
        bits1 = rng.integers(0, 2, 32)
        bits2 = bits1.copy()
        bits2[2 * k:] = 1 - bits2[2 * k:]        # flip symbols k+1..
        received = []
        for bits in (bits1, bits2):
            frame = qpsk_modulate(bits)
            tx = tx_build_burst(frame, cfg, scales, length)
            wave = resample_bandlimited(tx.signal, cfg.channel_oversampling)
            out = ssfm_propagate(wave, fiber, steps, noise_on=False)
            received.append(rx_frontend(out, cfg, scales))
        upto = cfg.oversampling * k + 1          # samples through t_k
        a, b = received[0].samples, received[1].samples
        rel = np.linalg.norm(a[:upto] - b[:upto]) / np.linalg.norm(a[:upto])
        assert rel < 1e-2
        # and they must differ substantially afterwards
        rest = slice(upto, cfg.info_samples)
        assert np.linalg.norm(a[rest] - b[rest]) / np.linalg.norm(a[rest]) > 0.2
