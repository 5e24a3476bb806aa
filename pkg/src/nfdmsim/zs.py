"""Forward Zakharov-Shabat scattering (piecewise-constant transfer matrices).

The potential is treated as piecewise constant around each sample
(``q(t) = q_n`` on ``[t_n - dt/2, t_n + dt/2)``) and each slab is propagated
with the exact matrix exponential of the constant-coefficient generator
``G = [[-j lam, q], [-conj(q), j lam]]``, which has the closed form

    exp(G dt) = cos(D dt) I + sin(D dt)/D * G,   D = sqrt(lam^2 + |q|^2).

Coefficients are referenced to the support endpoints so that ``a -> 1`` for
compactly supported input and extending the signal with zero samples leaves
(a, b) unchanged:

    a = T11 exp(+j lam (t2 - t1)),   b = T21 exp(-j lam (t1 + t2)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import (
    NonlinearSpectrum,
    ScatteringCoefficients,
    SignalError,
    TimeSignal,
)


class NyquistRangeError(ValueError):
    """lambda grid extends beyond the Nyquist range of the sampling."""


class ContiguityError(ValueError):
    """Extension segment is not contiguous with the consumed prefix."""


class NearSingularSpectrumError(ArithmeticError):
    """|a(lam)| below threshold: a discrete eigenvalue sits too close to the
    real axis for the continuous-spectrum-only machinery of this package."""


def zs_step_matrix(q_sample: complex, lam: float, dt: float) -> np.ndarray:
    """Exact one-slab transfer matrix exp(dt * [[-j lam, q], [-q*, j lam]])."""
    if not np.isfinite(dt) or dt <= 0:
        raise SignalError("dt must be positive and finite")
    if not np.isfinite(q_sample) or not np.isfinite(lam):
        raise SignalError("q_sample and lambda must be finite")
    m11, m12, m21, m22 = _step_entries(complex(q_sample), np.asarray([float(lam)]), dt)
    return np.array([[m11[0], m12[0]], [m21[0], m22[0]]], dtype=np.complex128)


def _step_entries(q: complex, lam: np.ndarray, dt: float):
    """Vectorized slab-matrix entries over a lambda vector."""
    delta = np.sqrt(lam * lam + (q.real * q.real + q.imag * q.imag))
    c = np.cos(delta * dt)
    # sin(x)/x stays exact at delta == 0 via sinc
    s = dt * np.sinc(delta * dt / np.pi)
    jls = 1j * lam * s
    return c - jls, q * s, -np.conj(q) * s, c + jls


@dataclass
class ScatteringState:
    """Per-lambda accumulated transfer product plus consumed-sample index.

    Values are immutable by convention: ``extend`` returns a new state and
    never mutates its input, so states are safe to share across threads and
    to retain as checkpoints.
    """

    lambda_grid: np.ndarray
    t11: np.ndarray
    t12: np.ndarray
    t21: np.ndarray
    t22: np.ndarray
    t_left: float      # left edge of the consumed support (first slab edge)
    dt: float
    consumed: int      # number of absorbed samples

    @classmethod
    def initial(cls, lambda_grid: np.ndarray, t_left: float, dt: float) -> "ScatteringState":
        lam = np.asarray(lambda_grid, dtype=np.float64)
        one = np.ones_like(lam, dtype=np.complex128)
        zero = np.zeros_like(one)
        return cls(lam, one.copy(), zero.copy(), zero.copy(), one.copy(), t_left, dt, 0)

    @property
    def t_right(self) -> float:
        """Right edge of the consumed support."""
        return self.t_left + self.consumed * self.dt

    def extend(self, samples: np.ndarray) -> "ScatteringState":
        """Absorb further samples (left-to-right matrix products, in order)."""
        samples = np.ascontiguousarray(samples, dtype=np.complex128)
        t11, t12 = self.t11.copy(), self.t12.copy()
        t21, t22 = self.t21.copy(), self.t22.copy()
        lam, dt = self.lambda_grid, self.dt
        if _njit is not None and samples.size:
            _transfer_jit(np.ascontiguousarray(lam), samples, dt,
                          t11, t12, t21, t22)
        else:
            for q in samples:
                m11, m12, m21, m22 = _step_entries(complex(q), lam, dt)
                n11 = m11 * t11 + m12 * t21
                n12 = m11 * t12 + m12 * t22
                n21 = m21 * t11 + m22 * t21
                n22 = m21 * t12 + m22 * t22
                t11, t12, t21, t22 = n11, n12, n21, n22
        return ScatteringState(
            self.lambda_grid, t11, t12, t21, t22,
            self.t_left, self.dt, self.consumed + samples.size,
        )

    def coefficients(self) -> ScatteringCoefficients:
        """Endpoint-referenced (a, b); invariant under zero-sample padding."""
        lam = self.lambda_grid
        width = self.t_right - self.t_left
        a = self.t11 * np.exp(1j * lam * width)
        b = self.t21 * np.exp(-1j * lam * (self.t_left + self.t_right))
        return ScatteringCoefficients(lam, a, b)

    def det_defect(self) -> float:
        """max |det T - 1|; the generator is traceless so det is exactly 1."""
        det = self.t11 * self.t22 - self.t12 * self.t21
        return float(np.max(np.abs(det - 1.0)))


def _check_nyquist(lambda_grid: np.ndarray, dt: float) -> None:
    lam_nyq = np.pi / (2.0 * dt)
    if np.max(np.abs(lambda_grid)) > lam_nyq * (1.0 + 1e-9):
        raise NyquistRangeError(
            f"lambda grid reaches {np.max(np.abs(lambda_grid)):.6g}, beyond "
            f"the Nyquist range {lam_nyq:.6g} of dt = {dt:.6g}"
        )


try:
    from numba import njit as _njit
except ImportError:                                    # pragma: no cover
    _njit = None

if _njit is not None:
    @_njit(cache=True, fastmath=False)
    def _transfer_jit(lam, q, dt, t11, t12, t21, t22):  # pragma: no cover
        m = lam.size
        for n in range(q.size):
            qq = q[n]
            aq = abs(qq)
            qc = np.conj(qq)
            for k in range(m):
                delta = np.sqrt(lam[k] * lam[k] + aq * aq)
                x = delta * dt
                s = dt if delta == 0.0 else np.sin(x) / delta
                c = np.cos(x)
                m11 = c - 1j * lam[k] * s
                m12 = qq * s
                m21 = -qc * s
                m22 = c + 1j * lam[k] * s
                n11 = m11 * t11[k] + m12 * t21[k]
                n12 = m11 * t12[k] + m12 * t22[k]
                n21 = m21 * t11[k] + m22 * t21[k]
                n22 = m21 * t12[k] + m22 * t22[k]
                t11[k] = n11
                t12[k] = n12
                t21[k] = n21
                t22[k] = n22


def initial_state(signal: TimeSignal, lambda_grid: np.ndarray) -> ScatteringState:
    """Empty state anchored at the left slab edge of ``signal``."""
    lam = np.asarray(lambda_grid, dtype=np.float64)
    _check_nyquist(lam, signal.dt)
    return ScatteringState.initial(lam, signal.t0 - signal.dt / 2.0, signal.dt)


def fnft_forward(signal: TimeSignal, lambda_grid: np.ndarray) -> ScatteringCoefficients:
    """Forward NFT over the whole signal (Boffetta-Osborne transfer product)."""
    state = initial_state(signal, lambda_grid)
    return state.extend(signal.samples).coefficients()


def fnft_extend(state: ScatteringState, segment: TimeSignal) -> ScatteringState:
    """Absorb a contiguous segment into a running scattering state.

    The segment's first sample must sit exactly one ``dt`` past the last
    absorbed sample; composition over any split reproduces the batch
    transform bit-for-bit (identical evaluation order).
    """
    if abs(segment.dt - state.dt) > 1e-12 * state.dt:
        raise ContiguityError("segment sample spacing differs from the state")
    expected_t0 = state.t_left + state.dt / 2.0 + state.consumed * state.dt
    if abs(segment.t0 - expected_t0) > 1e-9 * state.dt:
        raise ContiguityError(
            f"segment starts at {segment.t0!r}, expected {expected_t0!r}"
        )
    _check_nyquist(state.lambda_grid, state.dt)
    return state.extend(segment.samples)


def continuous_spectrum(coeffs: ScatteringCoefficients,
                        a_floor: float = 1e-12) -> NonlinearSpectrum:
    """rho = b / a pointwise; hard error when a(lam) nearly vanishes."""
    amin = float(np.min(np.abs(coeffs.a)))
    if amin < a_floor:
        raise NearSingularSpectrumError(
            f"|a(lam)| reaches {amin:.3e} (< {a_floor:.0e}); discrete "
            "eigenvalue too close to the real axis for this operating regime"
        )
    return NonlinearSpectrum(coeffs.lambda_grid, coeffs.b / coeffs.a)
