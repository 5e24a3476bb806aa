"""Inline oracle and property checks behind the `selftest` CLI command."""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm
from scipy.special import gamma as gamma_fn

from .channel import FiberParams, make_scales, ssfm_propagate
from .glm import bnft_inverse
from .harness import qfactor_from_ber, rate_efficiency
from .signals import NonlinearSpectrum, PHYSICAL, TimeSignal
from .txrx import SystemConfig, qpsk_decide, qpsk_modulate
from .zs import continuous_spectrum, fnft_forward, zs_step_matrix


def _check_step_matrix():
    q, lam, dt = 0.3 + 0.4j, 0.7, 0.1
    oracle = expm(dt * np.array([[-1j * lam, q], [-np.conj(q), 1j * lam]]))
    return np.max(np.abs(zs_step_matrix(q, lam, dt) - oracle)) < 1e-12


def _check_unimodularity():
    rng = np.random.default_rng(12)
    u = 0.5 * (rng.normal(size=256) + 1j * rng.normal(size=256))
    c = fnft_forward(TimeSignal(u, 0.15, -2.0), np.linspace(-3, 3, 41))
    return c.unimodularity_defect() < 1e-6


def _check_sech_scattering():
    amp, dt = 0.4, 0.01
    t = np.arange(-12, 12, dt)
    lam = np.linspace(-2, 2, 9)
    c = fnft_forward(TimeSignal(amp / np.cosh(t), dt, t[0]), lam)
    a_exact = gamma_fn(0.5 - 1j * lam) ** 2 / (
        gamma_fn(0.5 - 1j * lam + amp) * gamma_fn(0.5 - 1j * lam - amp))
    return np.max(np.abs(c.a - a_exact)) < 1e-5


def _check_round_trip():
    dt = 0.05
    n = int(40 / dt)
    t = -20 + dt * (np.arange(n) + 0.5)
    lam = np.linspace(-np.pi / (2 * dt), np.pi / (2 * dt), 2 * n,
                      endpoint=False)
    rho = 0.6 * np.exp(-(lam / 1.5) ** 2) * np.exp(1j * 2.0 * np.sin(0.8 * lam))
    spec = NonlinearSpectrum(lam, rho)
    q = bnft_inverse(spec, t, "dlp")
    rho2 = continuous_spectrum(fnft_forward(q, lam)).rho
    return np.max(np.abs(rho2 - rho)) / np.max(np.abs(rho)) < 1e-3


def _check_dispersion_oracle():
    fiber = FiberParams(gamma_w_km=1e-12, length_km=120.0)
    t0_p, dt = 30e-12, 2e-12
    t = (np.arange(4096) - 2048) * dt
    a0 = np.exp(-t ** 2 / (2 * t0_p ** 2)).astype(complex)
    out = ssfm_propagate(TimeSignal(a0, dt, t[0], PHYSICAL), fiber, 400, False)
    s = t0_p ** 2 - 1j * fiber.beta2_si * fiber.length_m
    ref = t0_p / np.sqrt(s) * np.exp(-t ** 2 / (2 * s))
    return np.linalg.norm(out.samples - ref) / np.linalg.norm(ref) < 1e-6


def _check_qpsk():
    bits = np.array([0, 0, 0, 1, 1, 1, 1, 0])
    frame = qpsk_modulate(bits)
    ok = np.allclose(frame.symbols[0], np.exp(1j * np.pi / 4))
    for s, b in zip(frame.symbols, bits.reshape(-1, 2)):
        _, back = qpsk_decide(s * (1 + 0.1))
        ok = ok and np.array_equal(back, b)
    return ok


def _check_qfactor():
    return abs(qfactor_from_ber(0.1587)) < 0.01


def _check_rate_eta():
    return (round(100 * rate_efficiency(128, 160)) == 44
            and round(100 * rate_efficiency(256, 160)) == 62
            and round(100 * rate_efficiency(512, 160)) == 76)


CHECKS = [
    ("ZS step matrix vs matrix exponential", _check_step_matrix),
    ("unimodularity |a|^2+|b|^2=1", _check_unimodularity),
    ("sech closed-form scattering", _check_sech_scattering),
    ("inverse NFT round trip", _check_round_trip),
    ("dispersion-only analytic oracle", _check_dispersion_oracle),
    ("QPSK Gray map round trip", _check_qpsk),
    ("Q-factor formula", _check_qfactor),
    ("rate efficiency values", _check_rate_eta),
]


def run_selftest(println=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok = bool(fn())
        except Exception as exc:     # noqa: BLE001 - report, do not crash
            println(f"FAIL  {name}  ({type(exc).__name__}: {exc})")
            all_ok = False
            continue
        println(("PASS  " if ok else "FAIL  ") + name)
        all_ok = all_ok and ok
    return all_ok
