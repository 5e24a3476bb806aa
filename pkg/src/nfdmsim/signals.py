"""Shared value types: sampled waveforms and nonlinear spectra.

Conventions used throughout the package (fixed once, tested in the suites):

* Linear Fourier transform: ``U(w) = integral u(t) exp(-j w t) dt``.
* Zakharov-Shabat system (focusing, vanishing boundaries):
  ``v' = [[-j lam, q], [-conj(q), j lam]] v``.
* Continuous nonlinear spectrum: ``rho(lam) = b(lam) / a(lam)`` with the
  boundary referencing of :mod:`nfdmsim.zs`; in the small-signal limit
  ``rho(lam) -> -conj(U(-2 lam))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PHYSICAL = "physical"
NORMALIZED = "normalized"


class SignalError(ValueError):
    """Invalid waveform or spectrum data."""


@dataclass
class TimeSignal:
    """Uniformly sampled complex baseband waveform.

    ``samples`` are in sqrt(W) when ``units == 'physical'`` and dimensionless
    soliton units when ``units == 'normalized'``. ``t0`` is the time of the
    first sample, ``dt`` the spacing, both in seconds or normalized time.
    """

    samples: np.ndarray
    dt: float
    t0: float = 0.0
    units: str = NORMALIZED

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise SignalError("signal must hold at least one sample")
        if not (self.dt > 0) or not np.isfinite(self.dt):
            raise SignalError("sample spacing must be positive and finite")
        if not np.all(np.isfinite(self.samples)):
            raise SignalError("signal samples must be finite")
        if self.units not in (PHYSICAL, NORMALIZED):
            raise SignalError(f"unknown units flag {self.units!r}")

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def t_grid(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        """Time of the last sample."""
        return self.t0 + self.dt * (self.n - 1)

    def energy(self) -> float:
        """Sum |q_n|^2 dt (finite, non-negative by construction)."""
        return float(np.sum(np.abs(self.samples) ** 2) * self.dt)

    def copy(self) -> "TimeSignal":
        return TimeSignal(self.samples.copy(), self.dt, self.t0, self.units)


@dataclass
class NonlinearSpectrum:
    """Continuous nonlinear spectrum rho(lam) on a uniform real lam grid."""

    lambda_grid: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.lambda_grid = np.asarray(self.lambda_grid, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.complex128)
        if self.lambda_grid.ndim != 1 or self.lambda_grid.size < 2:
            raise SignalError("lambda grid must hold at least two points")
        if self.rho.shape != self.lambda_grid.shape:
            raise SignalError("rho and lambda grid shapes differ")
        d = np.diff(self.lambda_grid)
        if np.any(d <= 0):
            raise SignalError("lambda grid must be strictly increasing")
        if not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
            raise SignalError("lambda grid must be uniform")
        if not np.all(np.isfinite(self.rho)):
            raise SignalError("rho must be finite on the whole grid")

    @property
    def n(self) -> int:
        return self.lambda_grid.size

    @property
    def dlam(self) -> float:
        return float(self.lambda_grid[1] - self.lambda_grid[0])

    def nonlinear_energy(self) -> float:
        """Trace-formula energy (1/pi) integral log(1+|rho|^2) dlam."""
        return float(np.trapezoid(np.log1p(np.abs(self.rho) ** 2), self.lambda_grid) / np.pi)

    def copy(self) -> "NonlinearSpectrum":
        return NonlinearSpectrum(self.lambda_grid.copy(), self.rho.copy())


@dataclass
class ScatteringCoefficients:
    """Jost coefficients a(lam), b(lam) on a uniform real lam grid."""

    lambda_grid: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.lambda_grid = np.asarray(self.lambda_grid, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.complex128)
        self.b = np.asarray(self.b, dtype=np.complex128)
        if self.a.shape != self.lambda_grid.shape or self.b.shape != self.lambda_grid.shape:
            raise SignalError("a, b and lambda grid shapes differ")

    def unimodularity_defect(self) -> float:
        """max over lam of | |a|^2 + |b|^2 - 1 | (focusing case, real lam)."""
        return float(np.max(np.abs(np.abs(self.a) ** 2 + np.abs(self.b) ** 2 - 1.0)))


def uniform_lambda_grid(n_points: int, lam_max: float) -> np.ndarray:
    """Uniform grid of n_points on [-lam_max, lam_max), FFT-bin style."""
    if n_points < 2:
        raise SignalError("lambda grid needs at least two points")
    step = 2.0 * lam_max / n_points
    return -lam_max + step * np.arange(n_points)
