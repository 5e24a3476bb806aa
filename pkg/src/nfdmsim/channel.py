"""Fiber channel: unit normalization and split-step NLSE propagation.

Propagation convention (fixed package-wide):

    dA/dz = -j (beta2/2) d2A/dt2 + j gamma |A|^2 A

with the Fourier kernel ``U(w) = int u exp(-j w t) dt``, so one dispersion
step multiplies the spectrum by ``exp(+j beta2/2 w^2 dz)`` and one Kerr step
rotates each sample by ``exp(+j gamma |A|^2 dz)``.

Normalized (soliton) units use ``q(Z, T) = conj(A(z, t)) / sqrt(p0)`` with
``T = t/t0``, ``Z = z/z0``, ``z0 = t0^2/|beta2|``, ``p0 = 1/(gamma z0)``.
The conjugation makes the normalized field obey

    j dq/dZ = (1/2) d2q/dT2 + |q|^2 q,

the equation whose scattering data under the ZS convention of
:mod:`nfdmsim.zs` evolve as ``a`` constant and
``rho(lam) -> rho(lam) exp(-2 j lam^2 Z)``, i.e. the phase rotation the
transmitter precompensates.

Ideal distributed amplification: attenuation is exactly balanced (no loss
term in the propagator) while amplified spontaneous emission loads the
signal continuously; each step adds circular complex Gaussian noise of
per-sample variance ``eta_sp h nu alpha_lin dz B_sim`` (one polarization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import NORMALIZED, PHYSICAL, SignalError, TimeSignal

PLANCK = 6.62607015e-34          # J s
C_LIGHT = 299792458.0            # m / s


class StepSizeError(ValueError):
    """Split-step resolution too coarse for the requested power."""


@dataclass
class FiberParams:
    """Link parameters in the customary engineering units."""

    beta2_ps2_km: float = -20.39
    gamma_w_km: float = 1.22
    alpha_db_km: float = 0.2
    length_km: float = 4000.0
    eta_sp: float = 4.0
    carrier_wavelength_nm: float = 1550.0

    def __post_init__(self):
        if not self.length_km > 0:
            raise SignalError("fiber length must be positive")
        if not self.gamma_w_km > 0:
            raise SignalError("gamma must be positive")
        if not self.beta2_ps2_km < 0:
            raise SignalError("anomalous dispersion (beta2 < 0) required")
        if self.eta_sp < 0:
            raise SignalError("spontaneous emission factor must be >= 0")

    @property
    def beta2_si(self) -> float:
        """s^2 / m"""
        return self.beta2_ps2_km * 1e-27

    @property
    def gamma_si(self) -> float:
        """1 / (W m)"""
        return self.gamma_w_km * 1e-3

    @property
    def alpha_lin_per_m(self) -> float:
        return self.alpha_db_km * np.log(10.0) / 10.0 / 1e3

    @property
    def length_m(self) -> float:
        return self.length_km * 1e3

    @property
    def carrier_frequency_hz(self) -> float:
        return C_LIGHT / (self.carrier_wavelength_nm * 1e-9)


@dataclass
class NormalizationScales:
    """Soliton-unit scales derived from a free normalization time t0."""

    t0: float                # s
    z0: float                # m
    p0: float                # W
    normalized_length: float  # fiber length / z0


def make_scales(fiber: FiberParams, t0: float) -> NormalizationScales:
    """z0 = t0^2/|beta2|, p0 = 1/(gamma z0), normalized length L = length/z0."""
    if not (t0 > 0 and np.isfinite(t0)):
        raise SignalError("normalization time t0 must be positive")
    z0 = t0 * t0 / abs(fiber.beta2_si)
    p0 = 1.0 / (fiber.gamma_si * z0)
    return NormalizationScales(t0=t0, z0=z0, p0=p0,
                               normalized_length=fiber.length_m / z0)


def to_normalized(signal: TimeSignal, scales: NormalizationScales) -> TimeSignal:
    """Physical field -> soliton units (includes the convention conjugation)."""
    if signal.units != PHYSICAL:
        raise SignalError("to_normalized expects a physical-units signal")
    return TimeSignal(np.conj(signal.samples) / np.sqrt(scales.p0),
                      signal.dt / scales.t0, signal.t0 / scales.t0, NORMALIZED)


def to_physical(signal: TimeSignal, scales: NormalizationScales) -> TimeSignal:
    """Soliton units -> physical field (inverse of :func:`to_normalized`)."""
    if signal.units != NORMALIZED:
        raise SignalError("to_physical expects a normalized-units signal")
    return TimeSignal(np.conj(signal.samples) * np.sqrt(scales.p0),
                      signal.dt * scales.t0, signal.t0 * scales.t0, PHYSICAL)


def ase_total_psd(fiber: FiberParams) -> float:
    """Accumulated ASE power spectral density over the full span, W/Hz
    (single polarization): eta_sp h nu alpha_lin L."""
    return (fiber.eta_sp * PLANCK * fiber.carrier_frequency_hz
            * fiber.alpha_lin_per_m * fiber.length_m)


def ssfm_propagate(signal: TimeSignal, fiber: FiberParams, steps: int,
                   noise_on: bool, rng: np.random.Generator | None = None,
                   max_step_phase: float = 0.05) -> TimeSignal:
    """Symmetric split-step propagation with ideal distributed amplification.

    ``steps`` uniform segments; per-step peak nonlinear phase must stay
    below ``max_step_phase`` radians.  With ``noise_on`` a seeded generator
    must be supplied; equal seeds give bit-identical output.
    """
    if signal.units != PHYSICAL:
        raise SignalError("ssfm_propagate expects a physical-units signal")
    if steps < 1:
        raise SignalError("steps must be >= 1")
    if noise_on and rng is None:
        raise SignalError("noise_on requires an rng stream")
    a = signal.samples.copy()
    n = a.size
    dz = fiber.length_m / steps
    peak_power = float(np.max(np.abs(a) ** 2))
    if fiber.gamma_si * peak_power * dz > max_step_phase:
        raise StepSizeError(
            f"peak nonlinear phase per step "
            f"{fiber.gamma_si * peak_power * dz:.3f} rad exceeds "
            f"{max_step_phase}; increase steps")
    w = 2.0 * np.pi * np.fft.fftfreq(n, d=signal.dt)
    half = np.exp(0.5j * fiber.beta2_si * w * w * (dz / 2.0))
    full = half * half
    gamma = fiber.gamma_si
    if noise_on:
        # per-sample circular complex variance over the simulation band
        sigma2 = (fiber.eta_sp * PLANCK * fiber.carrier_frequency_hz
                  * fiber.alpha_lin_per_m * dz / signal.dt)
        noise_scale = np.sqrt(sigma2 / 2.0)
    spec = np.fft.fft(a) * half
    for k in range(steps):
        a = np.fft.ifft(spec)
        a *= np.exp(1j * gamma * dz * np.abs(a) ** 2)
        if noise_on:
            a += noise_scale * (rng.standard_normal(n)
                                + 1j * rng.standard_normal(n))
        spec = np.fft.fft(a)
        spec *= full if k < steps - 1 else half
    a = np.fft.ifft(spec)
    return TimeSignal(a, signal.dt, signal.t0, PHYSICAL)
