"""Inverse-NFT oracles: closed-form sech spectrum, linearized inverse,
round trips through the forward transform, and march/peeling equivalences."""

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from nfdmsim.glm import (
    GlmMarch,
    bnft_glm_dense_reference,
    bnft_inverse,
    omega_for_grid,
)
from nfdmsim.signals import NonlinearSpectrum, SignalError, TimeSignal
from nfdmsim.zs import continuous_spectrum, fnft_forward


def sech_spectrum(lam, amp):
    a = gamma_fn(0.5 - 1j * lam) ** 2 / (
        gamma_fn(0.5 - 1j * lam + amp) * gamma_fn(0.5 - 1j * lam - amp))
    b = -np.sin(np.pi * amp) / np.cosh(np.pi * lam)
    return NonlinearSpectrum(lam, b / a)


def smooth_random_spectrum(lam, energy, seed=0):
    """Band-limited spectrum with smooth bounded-slope phase, scaled to the
    requested nonlinear energy (1/pi) int log(1+|rho|^2)."""
    rng = np.random.default_rng(seed)
    coef = rng.normal(size=4)
    env = np.exp(-(lam / 1.6) ** 2) * (1.0 + 0.5 * np.cos(1.3 * lam + coef[0])
                                       + 0.3 * np.sin(2.1 * lam + coef[1]))
    theta = 2.5 * np.sin(0.9 * lam + coef[2]) + 1.8 * np.cos(1.7 * lam + coef[3])
    base = np.abs(env) * np.exp(1j * theta)
    lo, hi = 0.0, 100.0
    for _ in range(60):
        s = 0.5 * (lo + hi)
        e = np.trapezoid(np.log1p(np.abs(s * base) ** 2), lam) / np.pi
        if e < energy:
            lo = s
        else:
            hi = s
    return NonlinearSpectrum(lam, s * base)


def grid_pair(t_span, dt, lam_oversample=2):
    n = int(round(t_span / dt))
    t = -t_span / 2 + dt * (np.arange(n) + 0.5)
    lam = np.linspace(-np.pi / (2 * dt), np.pi / (2 * dt),
                      lam_oversample * n, endpoint=False)
    return t, lam


class TestAgainstClosedForm:
    def test_sech_reconstruction_glm(self):
        amp = 0.3
        t, lam = grid_pair(20.0, 20.0 / 256)
        spec = sech_spectrum(lam, amp)
        q = bnft_inverse(spec, t, "glm").samples
        err = np.max(np.abs(q - amp / np.cosh(t))) / amp
        assert err < 5e-4

    def test_sech_reconstruction_peel(self):
        # the circle peel carries the discrete-model bias O(dt^2)
        amp = 0.3
        t, lam = grid_pair(20.0, 20.0 / 512)
        spec = sech_spectrum(lam, amp)
        q = bnft_inverse(spec, t, "dlp").samples
        err = np.max(np.abs(q - amp / np.cosh(t))) / amp
        assert err < 2e-3

    def test_zero_spectrum(self):
        t, lam = grid_pair(10.0, 0.1)
        spec = NonlinearSpectrum(lam, np.zeros_like(lam, dtype=complex))
        q = bnft_inverse(spec, t).samples
        assert np.max(np.abs(q)) == 0.0

    def test_linear_limit_inverse(self):
        # rho tiny: q(t) ~ -2 Omega*(2t), the scaled inverse FT of the data
        t, lam = grid_pair(30.0, 30.0 / 256)
        rho = 1e-3 * np.exp(-(lam / 1.2) ** 2) * np.exp(0.8j * lam)
        spec = NonlinearSpectrum(lam, rho)
        q = bnft_inverse(spec, t).samples
        dlam = lam[1] - lam[0]
        pred = np.array(
            [-2 * np.conj((dlam / (2 * np.pi))
                          * np.sum(rho * np.exp(2j * lam * tk))) for tk in t])
        err = np.max(np.abs(q - pred)) / np.max(np.abs(pred))
        assert err < 1e-2


class TestRoundTrip:
    @pytest.mark.parametrize("energy,seed", [(0.5, 1), (1.0, 2), (0.5, 3)])
    def test_fnft_of_bnft_recovers_rho(self, energy, seed):
        t, lam = grid_pair(50.0, 0.045)
        spec = smooth_random_spectrum(lam, energy, seed)
        q = bnft_inverse(spec, t, "glm")
        rho2 = continuous_spectrum(fnft_forward(q, lam)).rho
        err = np.max(np.abs(rho2 - spec.rho)) / np.max(np.abs(spec.rho))
        assert err <= 1e-3

    def test_peel_round_trip(self):
        t, lam = grid_pair(50.0, 0.05)
        spec = smooth_random_spectrum(lam, 1.0, 4)
        q = bnft_inverse(spec, t, "dlp")
        rho2 = continuous_spectrum(fnft_forward(q, lam)).rho
        err = np.max(np.abs(rho2 - spec.rho)) / np.max(np.abs(spec.rho))
        assert err <= 1e-3

    def test_peel_round_trip_convergence(self):
        errs = []
        for dt in (0.1, 0.05):
            t, lam = grid_pair(40.0, dt)
            spec = smooth_random_spectrum(lam, 1.0, 6)
            q = bnft_inverse(spec, t, "dlp")
            rho2 = continuous_spectrum(fnft_forward(q, lam)).rho
            errs.append(np.max(np.abs(rho2 - spec.rho))
                        / np.max(np.abs(spec.rho)))
        assert errs[1] < 0.4 * errs[0]          # second order-ish

    def test_bnft_of_fnft_low_energy_signal(self):
        rng = np.random.default_rng(9)
        dt = 0.08
        t = -15 + dt * (np.arange(int(30 / dt)) + 0.5)
        u = (0.25 * np.exp(-(t / 2.5) ** 2) * np.exp(0.4j * t)
             + 0.15 * np.exp(-((t - 2) / 1.5) ** 2) * np.exp(-0.8j * t))
        lam = np.linspace(-np.pi / (2 * dt), np.pi / (2 * dt), 2 * t.size,
                          endpoint=False)
        sig = TimeSignal(u, dt, t[0])
        rho = continuous_spectrum(fnft_forward(sig, lam))
        q = bnft_inverse(rho, t).samples
        assert np.max(np.abs(q - u)) / np.max(np.abs(u)) <= 1e-3


class TestEngines:
    def test_march_equals_dense_reference(self):
        t, lam = grid_pair(20.0, 20.0 / 128)
        spec = sech_spectrum(lam, 0.35)
        q1 = bnft_inverse(spec, t, "glm").samples
        q2 = bnft_glm_dense_reference(spec, t)
        assert np.max(np.abs(q1 - q2)) < 1e-12

    def test_incremental_march_matches_batch(self):
        t, lam = grid_pair(20.0, 20.0 / 128)
        spec = smooth_random_spectrum(lam, 0.6, 5)
        om = omega_for_grid(spec, t)
        full = GlmMarch(t, om.copy()).run_all()
        march = GlmMarch(t, om.copy())
        parts = [march.extend_block(s) for s in (3, 17, 8, 1, 64, 35)]
        inc = np.concatenate(parts)[::-1]
        assert np.max(np.abs(inc - full)) < 1e-12

    def test_peek_preserves_state_and_matches_extend(self):
        t, lam = grid_pair(20.0, 20.0 / 128)
        spec = smooth_random_spectrum(lam, 0.6, 6)
        om = omega_for_grid(spec, t)
        march = GlmMarch(t, om)
        march.extend_block(40)
        peeked = march.peek_block(8)
        committed = march.extend_block(8)
        assert np.array_equal(peeked, committed)

    def test_peek_many_matches_peek_block(self):
        t, lam = grid_pair(20.0, 20.0 / 128)
        spec = smooth_random_spectrum(lam, 0.6, 7)
        om = omega_for_grid(spec, t)
        march = GlmMarch(t, om.copy())
        march.extend_block(60)
        rng = np.random.default_rng(0)
        hi = 4 * march.n_low
        patches = []
        for _ in range(3):
            o = om.copy()
            lo = max(0, 4 * (march.n_low - 8) - 40)
            o[lo:hi] += 0.02 * (rng.standard_normal(hi - lo)
                                + 1j * rng.standard_normal(hi - lo))
            patches.append(o)
        many = march.peek_many(8, patches, hi)
        for patch, got in zip(patches, many):
            ref = march.peek_block(8, patch)
            assert np.max(np.abs(got - ref)) < 1e-12

    def test_commit_peeked_continues_exactly(self):
        t, lam = grid_pair(20.0, 20.0 / 128)
        spec = smooth_random_spectrum(lam, 0.6, 8)
        om = omega_for_grid(spec, t)
        march = GlmMarch(t, om.copy())
        march.extend_block(60)
        hi = 4 * march.n_low
        march.peek_many(8, [march.omega], hi)
        march.commit_peeked(0)
        rest = march.extend_block(march.remaining)
        ref = GlmMarch(t, om.copy()).run_all()
        got = np.concatenate([rest])[::-1]
        assert np.max(np.abs(got - ref[: rest.size])) < 1e-12


class TestGuards:
    def test_non_decayed_spectrum_rejected(self):
        t, lam = grid_pair(10.0, 0.1)
        spec_rho = np.full(lam.size, 0.5 + 0j)
        with pytest.raises(SignalError):
            bnft_inverse(NonlinearSpectrum(lam, spec_rho), t)

    def test_bad_time_grid_rejected(self):
        _, lam = grid_pair(10.0, 0.1)
        spec = NonlinearSpectrum(lam, np.exp(-lam ** 2))
        with pytest.raises(SignalError):
            bnft_inverse(spec, np.array([0.0, 0.1, 0.15]))

    def test_unknown_algorithm(self):
        t, lam = grid_pair(10.0, 0.1)
        spec = NonlinearSpectrum(lam, 1e-8 * np.exp(-lam ** 2))
        with pytest.raises(SignalError):
            bnft_inverse(spec, t, algorithm="magic")
