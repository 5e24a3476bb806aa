"""Channel oracles: normalization arithmetic, analytic dispersion, exact SPM,
soliton invariance, and ASE calibration."""

import numpy as np
import pytest

from nfdmsim.channel import (
    FiberParams,
    StepSizeError,
    ase_total_psd,
    make_scales,
    ssfm_propagate,
    to_normalized,
    to_physical,
)
from nfdmsim.signals import PHYSICAL, SignalError, TimeSignal


def paper_fiber(length_km=4000.0):
    return FiberParams(length_km=length_km)


class TestScales:
    def test_paper_values(self):
        scales = make_scales(paper_fiber(), 100e-12)
        assert scales.z0 == pytest.approx(490.4e3, rel=2e-4)
        assert scales.p0 == pytest.approx(1.672e-3, rel=5e-4)
        assert scales.normalized_length == pytest.approx(8.157, rel=2e-4)

    def test_unit_case(self):
        fiber = FiberParams(beta2_ps2_km=-1e27, gamma_w_km=1e3,
                            length_km=1e-3)
        scales = make_scales(fiber, 1.0)
        assert scales.z0 == pytest.approx(1.0)
        assert scales.p0 == pytest.approx(1.0)

    def test_invalid_t0(self):
        with pytest.raises(SignalError):
            make_scales(paper_fiber(), -1.0)

    def test_unit_round_trip_identity(self):
        rng = np.random.default_rng(0)
        scales = make_scales(paper_fiber(), 50e-12)
        a = rng.normal(size=128) + 1j * rng.normal(size=128)
        sig = TimeSignal(1e-2 * a, 12.5e-12, -1e-9, PHYSICAL)
        back = to_physical(to_normalized(sig, scales), scales)
        assert np.max(np.abs(back.samples - sig.samples)) \
            <= 1e-12 * np.max(np.abs(sig.samples))
        assert back.dt == pytest.approx(sig.dt, rel=1e-14)
        assert back.t0 == pytest.approx(sig.t0, rel=1e-12)

    def test_parameter_invariants(self):
        with pytest.raises(SignalError):
            FiberParams(beta2_ps2_km=+1.0)
        with pytest.raises(SignalError):
            FiberParams(length_km=0.0)
        with pytest.raises(SignalError):
            FiberParams(eta_sp=-1.0)


class TestSsfm:
    def test_dispersion_only_vs_analytic_gaussian(self):
        # gamma -> 0: chirped-Gaussian closed form
        fiber = FiberParams(gamma_w_km=1e-12, length_km=120.0)
        t0_p = 30e-12
        dt = 2e-12
        t = (np.arange(4096) - 2048) * dt
        a0 = np.exp(-t ** 2 / (2 * t0_p ** 2)).astype(complex)
        sig = TimeSignal(a0, dt, t[0], PHYSICAL)
        out = ssfm_propagate(sig, fiber, steps=400, noise_on=False)
        s = t0_p ** 2 - 1j * fiber.beta2_si * fiber.length_m
        ref = t0_p / np.sqrt(s) * np.exp(-t ** 2 / (2 * s))
        err = np.linalg.norm(out.samples - ref) / np.linalg.norm(ref)
        assert err < 1e-6

    def test_spm_only_magnitude_and_phase(self):
        # beta2 negligible: |out| = |in| exactly, phase = +gamma |A|^2 L
        fiber = FiberParams(beta2_ps2_km=-1e-18, gamma_w_km=1.22,
                            length_km=80.0)
        rng = np.random.default_rng(1)
        a0 = 1e-2 * (rng.normal(size=512) + 1j * rng.normal(size=512))
        sig = TimeSignal(a0, 1e-11, 0.0, PHYSICAL)
        out = ssfm_propagate(sig, fiber, steps=64, noise_on=False)
        assert np.max(np.abs(np.abs(out.samples) - np.abs(a0))) < 1e-12
        expected = a0 * np.exp(1j * fiber.gamma_si * fiber.length_m
                               * np.abs(a0) ** 2)
        assert np.max(np.abs(out.samples - expected)) < 1e-9

    def test_soliton_invariance(self):
        # fundamental soliton sqrt(p0) sech(t/t0) over two soliton lengths
        fiber = paper_fiber()
        t0 = 50e-12
        scales = make_scales(fiber, t0)
        fiber2 = FiberParams(length_km=2 * scales.z0 / 1e3)
        dt = t0 / 16
        t = (np.arange(4096) - 2048) * dt
        a0 = np.sqrt(scales.p0) / np.cosh(t / t0)
        sig = TimeSignal(a0, dt, t[0], PHYSICAL)
        out = ssfm_propagate(sig, fiber2, steps=1600, noise_on=False)
        err = np.linalg.norm(np.abs(out.samples) - np.abs(a0)) \
            / np.linalg.norm(a0)
        assert err < 1e-4

    def test_energy_conservation_noiseless(self):
        rng = np.random.default_rng(2)
        fiber = paper_fiber(length_km=100.0)
        a0 = 1e-2 * (rng.normal(size=1024) + 1j * rng.normal(size=1024))
        sig = TimeSignal(a0, 5e-12, 0.0, PHYSICAL)
        out = ssfm_propagate(sig, fiber, steps=200, noise_on=False)
        e_in = np.sum(np.abs(a0) ** 2)
        e_out = np.sum(np.abs(out.samples) ** 2)
        assert abs(e_out - e_in) / e_in < 1e-6

    def test_self_convergence(self):
        # band-limited random waveform comparable to the operating signals
        rng = np.random.default_rng(3)
        fiber = paper_fiber(length_km=200.0)
        n, dt = 2048, 5e-12
        white = rng.normal(size=n) + 1j * rng.normal(size=n)
        f = np.fft.fftfreq(n, dt)
        spec = np.fft.fft(white) * (np.abs(f) < 15e9)
        env = np.exp(-((np.arange(n) - n / 2) / 300) ** 2)
        a0 = 2e-2 * env * np.fft.ifft(spec)
        sig = TimeSignal(a0, dt, 0.0, PHYSICAL)
        out1 = ssfm_propagate(sig, fiber, steps=250, noise_on=False)
        out2 = ssfm_propagate(sig, fiber, steps=500, noise_on=False)
        diff = np.linalg.norm(out1.samples - out2.samples) \
            / np.linalg.norm(out2.samples)
        assert diff < 1e-5

    def test_ase_power_calibration(self):
        fiber = paper_fiber(length_km=400.0)
        n = 4096
        dt = 6.25e-12
        zero = TimeSignal(np.zeros(n, dtype=complex), dt, 0.0, PHYSICAL)
        total = 0.0
        reals = 100
        for i in range(reals):
            rng = np.random.default_rng(1000 + i)
            out = ssfm_propagate(zero, fiber, steps=40, noise_on=True, rng=rng)
            total += float(np.mean(np.abs(out.samples) ** 2))
        mean_power = total / reals
        expected = ase_total_psd(fiber) / dt      # PSD times simulation band
        assert mean_power == pytest.approx(expected, rel=0.02)

    def test_determinism(self):
        fiber = paper_fiber(length_km=50.0)
        sig = TimeSignal(np.full(256, 1e-2 + 0j), 1e-11, 0.0, PHYSICAL)
        o1 = ssfm_propagate(sig, fiber, 20, True, np.random.default_rng(7))
        o2 = ssfm_propagate(sig, fiber, 20, True, np.random.default_rng(7))
        assert np.array_equal(o1.samples, o2.samples)

    def test_step_size_guard(self):
        fiber = paper_fiber(length_km=1000.0)
        sig = TimeSignal(np.full(64, 1.0 + 0j), 1e-11, 0.0, PHYSICAL)  # 1 W
        with pytest.raises(StepSizeError):
            ssfm_propagate(sig, fiber, steps=2, noise_on=False)


class TestAse:
    def test_zero_eta_sp(self):
        assert ase_total_psd(FiberParams(eta_sp=0.0)) == 0.0

    def test_paper_parameters_value(self):
        # eta_sp h nu alpha_lin L with nu at 1550 nm over 4000 km
        psd = ase_total_psd(paper_fiber())
        nu = 299792458.0 / 1550e-9
        expected = 4 * 6.62607015e-34 * nu * (0.2 * np.log(10) / 10 / 1e3) * 4e6
        assert psd == pytest.approx(expected, rel=1e-12)
        assert psd == pytest.approx(9.44e-17, rel=5e-3)

    def test_linearity_in_length(self):
        full = ase_total_psd(paper_fiber(length_km=4000.0))
        half = ase_total_psd(paper_fiber(length_km=2000.0))
        assert half == pytest.approx(full / 2, rel=1e-12)
