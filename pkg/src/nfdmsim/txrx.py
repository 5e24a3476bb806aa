"""Transmitter chain (bits to launched waveform) and receiver front end.

Burst geometry, all in soliton units with ``t0 = t0_fraction * Ts``
(default Ts/2): symbol slots ``(t_{k-1}, t_k]`` with ``t_k = (k-1/2) Ts``,
pulse centers ``tau_k = (k-1) Ts``, frame window ``(n_info+n_guard) Ts``
starting at ``-Ts/2`` with all guards appended after the data.

Chain: the pulse train is mapped onto the continuous nonlinear spectrum
(small-signal limit ``rho(lam) = -conj(U(-2 lam))``; the exact encoding
prescribes the left reflection data ``conj(b)/a`` so the waveform-to-signal
map is forward causal), precompensated by ``exp(4 j lam^2 L)``, delayed by
half the guard interval so the dispersed waveform stays inside the frame,
inverted to the time domain, and time reversed before launch.  The fiber
cancels the precompensation and the receiver undoes the framing reversal,
so the received signal up to ``t_k`` depends only on symbols ``1..k`` (up
to pulse-tail leakage), the property the iterative and decision-feedback
detectors exploit.

Launch power is set by bisection on a scalar gain applied to the pulse train
before the spectral mapping, measuring realized power over the information
window of the launched waveform (the map is nonlinear, so power does not
scale quadratically with the gain).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfinv

from .channel import NormalizationScales, to_physical
from .glm import bnft_inverse, bnft_schur
from .signals import NonlinearSpectrum, PHYSICAL, SignalError, TimeSignal


class ScalingError(RuntimeError):
    """Launch-power bisection failed to converge."""


class FramingError(ValueError):
    """Receiver window does not line up with the burst frame."""


# ---------------------------------------------------------------------------
# configuration and frame geometry

GRAY_SYMBOLS = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))
GRAY_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]])  # index m -> bits


@dataclass
class SystemConfig:
    symbol_rate: float = 10e9        # baud
    oversampling: int = 8            # samples per symbol (NFT processing)
    n_info: int = 64
    n_guard: int = 160
    constellation_order: int = 4
    target_power_dbm: float = -6.0
    frontend_bandwidth_hz: float = 100e9
    pulse_energy_fraction: float = 0.99
    t0_fraction: float = 0.5         # normalization time t0 = fraction * Ts
    channel_oversampling: int = 2    # channel grid refinement vs oversampling
    tx_bnft_algorithm: str = "dlp"
    tx_power_tol_db: float = 0.05
    tx_max_bisect: int = 30

    def __post_init__(self):
        if self.n_info < 1 or self.n_guard < 0:
            raise SignalError("need n_info >= 1 and n_guard >= 0")
        if self.oversampling < 2:
            raise SignalError("oversampling must be >= 2")
        if self.constellation_order != 4:
            raise SignalError("only QPSK (order 4) is in scope")

    # normalized-unit geometry -------------------------------------------
    @property
    def ts_phys(self) -> float:
        return 1.0 / self.symbol_rate

    @property
    def t0_phys(self) -> float:
        return self.t0_fraction * self.ts_phys

    @property
    def ts(self) -> float:
        """Symbol time in soliton units."""
        return 1.0 / self.t0_fraction

    @property
    def dt(self) -> float:
        return self.ts / self.oversampling

    @property
    def n_frame(self) -> int:
        return (self.n_info + self.n_guard) * self.oversampling

    @property
    def frame_start(self) -> float:
        return -self.ts / 2.0

    @property
    def t_grid(self) -> np.ndarray:
        return self.frame_start + self.dt * np.arange(self.n_frame)

    @property
    def guard_shift_samples(self) -> int:
        """Half the guard interval, in samples (the frame-centering shift)."""
        return (self.n_guard * self.oversampling) // 2

    @property
    def info_samples(self) -> int:
        """Samples in the detection window [frame_start, t_{n_info}]."""
        return self.n_info * self.oversampling + 1

    def slot_sample_range(self, k: int) -> tuple[int, int]:
        """Sample index range [lo, hi) of symbol slot k (1-based);
        slot 1 additionally owns the frame-start boundary sample."""
        if not 1 <= k <= self.n_info:
            raise SignalError(f"slot {k} outside 1..{self.n_info}")
        lo = self.oversampling * (k - 1) + 1
        if k == 1:
            lo = 0
        return lo, self.oversampling * k + 1

    def center_index(self, k: int) -> int:
        """Grid index of the matched-filter sampling instant tau_k."""
        return self.oversampling * (k - 1) + self.oversampling // 2

    def detection_lambda_grid(self) -> np.ndarray:
        """Uniform grid of 8*n_info points over the Nyquist range."""
        lam_max = np.pi / (2.0 * self.dt)
        n_pts = self.oversampling * self.n_info
        return -lam_max + (2.0 * lam_max / n_pts) * np.arange(n_pts)


@dataclass
class PulseShape:
    """Unit-energy Gaussian with a set fraction of energy inside one Ts."""

    ts: float
    energy_fraction: float = 0.99

    @property
    def sigma(self) -> float:
        return self.ts / (2.0 * erfinv(self.energy_fraction))

    def amplitude(self, t: np.ndarray) -> np.ndarray:
        s = self.sigma
        return (np.pi * s * s) ** (-0.25) * np.exp(-t * t / (2 * s * s))

    def spectrum(self, omega: np.ndarray) -> np.ndarray:
        """FT under U(w) = int g exp(-j w t) dt (real, even)."""
        s = self.sigma
        return (4.0 * np.pi * s * s) ** 0.25 * np.exp(-s * s * omega * omega / 2.0)


@dataclass
class SymbolFrame:
    symbols: np.ndarray
    bits: np.ndarray

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.complex128)
        self.bits = np.asarray(self.bits, dtype=np.int64)
        if self.bits.size != 2 * self.symbols.size:
            raise SignalError("QPSK carries 2 bits per symbol")
        if not np.allclose(np.abs(self.symbols), 1.0, atol=1e-12):
            raise SignalError("QPSK symbols must be unit modulus")

    @property
    def n(self) -> int:
        return self.symbols.size


# ---------------------------------------------------------------------------
# mapping

def qpsk_modulate(bits: np.ndarray) -> SymbolFrame:
    """Gray map {00,01,11,10} -> exp(j(pi/4 + m pi/2))."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % 2:
        raise SignalError("bit count must be even")
    if bits.size == 0:
        raise SignalError("need at least one symbol")
    b = bits.reshape(-1, 2)
    # Gray sequence index: 00->0, 01->1, 11->2, 10->3
    m = b[:, 0] * 3 + b[:, 1] * 1 - 2 * (b[:, 0] & b[:, 1])
    return SymbolFrame(GRAY_SYMBOLS[m], bits)


def qpsk_symbol_index(samples: np.ndarray) -> np.ndarray:
    """Minimum-distance quadrant decision; boundary ties resolve toward the
    smaller constellation index."""
    samples = np.atleast_1d(np.asarray(samples, dtype=np.complex128))
    if not np.all(np.isfinite(samples)):
        raise SignalError("decision samples must be finite")
    re, im = samples.real, samples.imag
    m = np.zeros(samples.shape, dtype=np.int64)
    m[(re < 0) & (im > 0)] = 1
    m[(re < 0) & (im <= 0)] = 2
    m[(re > 0) & (im < 0)] = 3
    # boundaries: re == 0 or im == 0
    m[(re == 0) & (im > 0)] = 0          # boundary m0/m1 -> 0
    m[(re == 0) & (im < 0)] = 2          # boundary m2/m3 -> 2
    m[(im == 0) & (re > 0)] = 0          # boundary m3/m0 -> 0
    m[(im == 0) & (re < 0)] = 1          # boundary m1/m2 -> 1
    m[(re == 0) & (im == 0)] = 0
    return m


def qpsk_decide(sample: complex) -> tuple[complex, np.ndarray]:
    m = int(qpsk_symbol_index(np.array([sample]))[0])
    return complex(GRAY_SYMBOLS[m]), GRAY_BITS[m].copy()


def bits_from_indices(m: np.ndarray) -> np.ndarray:
    return GRAY_BITS[np.asarray(m, dtype=np.int64)].reshape(-1)


# ---------------------------------------------------------------------------
# waveform synthesis and spectral mapping

def synthesize_pulse_train(frame: SymbolFrame, cfg: SystemConfig) -> TimeSignal:
    """u(t) = sum_k x_k g(t - (k-1) Ts) on the oversampled frame grid
    (normalized units, guards zero)."""
    if frame.n != cfg.n_info:
        raise SignalError("frame length differs from n_info")
    pulse = PulseShape(cfg.ts, cfg.pulse_energy_fraction)
    t = cfg.t_grid
    u = np.zeros(cfg.n_frame, dtype=np.complex128)
    half_width = 9.0 * pulse.sigma
    for k in range(frame.n):
        tau = k * cfg.ts
        lo = max(0, int((tau - half_width - t[0]) / cfg.dt))
        hi = min(cfg.n_frame, int((tau + half_width - t[0]) / cfg.dt) + 2)
        u[lo:hi] += frame.symbols[k] * pulse.amplitude(t[lo:hi] - tau)
    return TimeSignal(u, cfg.dt, cfg.frame_start)


def linear_ft(signal: TimeSignal, omega: np.ndarray) -> np.ndarray:
    """U(w) = dt * sum u_n exp(-j w t_n) on an arbitrary frequency grid.

    Uniform grids whose spacing aligns on 2 pi / (K dt) go through one
    zero-padded FFT; anything else falls back to the direct transform.
    """
    u, t0, dt = signal.samples, signal.t0, signal.dt
    omega = np.asarray(omega, dtype=np.float64)
    n, m = u.size, omega.size
    if m > 1:
        dw = omega[1] - omega[0]
        uniform = np.allclose(np.diff(omega), dw, rtol=1e-12, atol=0.0)
        ratio = 2.0 * np.pi / (abs(dw) * dt)
        k_pad = int(round(ratio))
        if uniform and abs(ratio - k_pad) < 1e-9 * ratio and k_pad > 1:
            coeff = u * np.exp(-1j * omega[0] * dt * np.arange(n))
            padded = np.zeros(k_pad, dtype=np.complex128)
            # fold: samples a period apart carry identical grid phases
            np.add.at(padded, np.mod(np.arange(n), k_pad), coeff)
            if dw > 0:
                spec = np.fft.fft(padded)          # kernel e^{-2pi j n k / K}
            else:
                spec = np.fft.ifft(padded) * k_pad
            vals = spec[np.mod(np.arange(m), k_pad)]
            return dt * vals * np.exp(-1j * omega * t0)
    return dt * (np.exp(-1j * np.outer(omega, t0 + dt * np.arange(n))) @ u)


def nis_encode(u: TimeSignal, lambda_grid: np.ndarray) -> NonlinearSpectrum:
    """Map a waveform onto the continuous nonlinear spectrum:
    rho(lam) = -conj(U(-2 lam)), the relation whose small-signal limit the
    forward scattering inverts (launch power enters as a scalar gain on u,
    found by the transmitter's bisection)."""
    lam = np.asarray(lambda_grid, dtype=np.float64)
    return NonlinearSpectrum(lam, -np.conj(linear_ft(u, -2.0 * lam)))


def nis_decode(rho_values: np.ndarray) -> np.ndarray:
    """Inverse of the spectral map: U(-2 lam) = -conj(rho)."""
    return -np.conj(np.asarray(rho_values, dtype=np.complex128))


def precompensate(rho: NonlinearSpectrum, length: float) -> NonlinearSpectrum:
    """Multiply the spectrum by exp(4 j lam^2 L)."""
    if length < 0:
        raise SignalError("normalized length must be >= 0")
    lam = rho.lambda_grid
    return NonlinearSpectrum(lam, rho.rho * np.exp(4j * lam * lam * length))


def spectral_shift(rho: NonlinearSpectrum, advance: float) -> NonlinearSpectrum:
    """Advance the reconstructed waveform by ``advance`` time units
    (multiplies by exp(+2 j lam advance))."""
    lam = rho.lambda_grid
    return NonlinearSpectrum(lam, rho.rho * np.exp(2j * lam * advance))


# ---------------------------------------------------------------------------
# transmitter

@dataclass
class TxBurst:
    """Launched burst plus the channel-state the receiver is granted."""

    signal: TimeSignal            # physical units, 8 samples/symbol
    gain: float                   # scalar gain applied to u before encoding
    realized_power_dbm: float
    bisect_evals: int
    frame: SymbolFrame = field(repr=False, default=None)


def tx_dense_lambda_grid(cfg: SystemConfig, factor: int = 2) -> np.ndarray:
    """Dense full-band lambda grid used by the transmitter inversion."""
    lam_max = np.pi / (2.0 * cfg.dt)
    n = factor * cfg.n_frame
    return -lam_max + (2.0 * lam_max / n) * np.arange(n)


def _tx_spectrum(u: TimeSignal, gain: float, cfg: SystemConfig,
                 lam: np.ndarray, length: float) -> np.ndarray:
    """Scale, encode, precompensate, and center the burst in the frame.

    The centering delays the reconstruction by half the guard interval so
    the dispersed (precompensated) waveform keeps both tails inside the
    frame window."""
    # the frame-mirrored train is encoded; together with the final time
    # reversal of the launch this renders the received signal causal in the
    # transmitted symbol order (see module docstring)
    scaled = TimeSignal(gain * u.samples[::-1], u.dt, u.t0)
    rho = -np.conj(linear_ft(scaled, -2.0 * lam))
    phase = 4.0 * length * lam * lam \
        + 2.0 * lam * (cfg.guard_shift_samples * cfg.dt)
    return rho * np.exp(1j * phase)


def _launch_info_slice(cfg: SystemConfig) -> slice:
    """Information-window samples of the launched (reversed) frame."""
    c = cfg.guard_shift_samples
    return slice(c, c + cfg.n_info * cfg.oversampling)


def tx_waveform(u: TimeSignal, gain: float, cfg: SystemConfig,
                length: float, algorithm: str | None = None,
                power_probe: bool = False) -> np.ndarray:
    """Normalized launched waveform on the frame grid for a given gain."""
    algorithm = algorithm or cfg.tx_bnft_algorithm
    t = cfg.t_grid
    if algorithm in ("dlp", "schur"):
        lam = tx_dense_lambda_grid(cfg)
        rho = _tx_spectrum(u, gain, cfg, lam, length)
        n_keep = None
        if power_probe:
            # the launch info window mirrors onto pre-reversal samples
            # below n_frame - guard_shift
            n_keep = cfg.n_frame - cfg.guard_shift_samples
        qp = bnft_schur(rho, t, lam=lam, n_keep=n_keep)
    else:
        lam = np.asarray(uniform_full_band(cfg))
        rho = _tx_spectrum(u, gain, cfg, lam, length)
        qp = bnft_inverse(NonlinearSpectrum(lam, rho), t,
                          algorithm="glm", edge_tol=5e-3).samples
    return qp[::-1].copy()


def uniform_full_band(cfg: SystemConfig) -> np.ndarray:
    """Frame-sized lambda grid over the full Nyquist band (TX inversion)."""
    lam_max = np.pi / (2.0 * cfg.dt)
    n = cfg.n_frame
    return -lam_max + (2.0 * lam_max / n) * np.arange(n)


def tx_build_burst(frame: SymbolFrame, cfg: SystemConfig,
                   scales: NormalizationScales, length: float) -> TxBurst:
    """Full transmitter: pulse train -> spectral encoding -> precompensation
    -> inverse NFT -> time reversal -> power scaling -> physical units.

    ``length`` is the normalized span in the units of the precompensation
    phase exp(4 j lam^2 L) (i.e. physical length / (2 z0): the fiber rotates
    rho by exp(-2 j lam^2 z/z0))."""
    u = synthesize_pulse_train(frame, cfg)
    target_w = 1e-3 * 10.0 ** (cfg.target_power_dbm / 10.0)
    info = _launch_info_slice(cfg)

    def power_of(q_norm: np.ndarray) -> float:
        return scales.p0 * float(np.mean(np.abs(q_norm[info]) ** 2))

    # linear-limit seed: power scales with gain^2
    p_u = float(np.mean(np.abs(u.samples[: cfg.n_info * cfg.oversampling]) ** 2))
    g = np.sqrt(target_w / (scales.p0 * p_u))
    tol = cfg.tx_power_tol_db
    evals = 0

    def measure(gain: float) -> float:
        nonlocal evals
        evals += 1
        return power_of(tx_waveform(u, gain, cfg, length, power_probe=True))

    p = measure(g)
    err_db = 10.0 * np.log10(p / target_w)
    lo, hi = g, g
    p_lo = p_hi = p
    expand = 0
    while p_lo > target_w and expand < 8:
        lo /= 1.6
        p_lo = measure(lo)
        expand += 1
    while p_hi < target_w and expand < 16:
        hi *= 1.6
        p_hi = measure(hi)
        expand += 1
    if p_lo > target_w or p_hi < target_w:
        raise ScalingError("could not bracket the launch power target")
    for _ in range(cfg.tx_max_bisect):
        if abs(err_db) <= tol and lo != hi:
            break
        g = np.sqrt(lo * hi)
        p = measure(g)
        err_db = 10.0 * np.log10(p / target_w)
        if abs(err_db) <= tol:
            break
        if p < target_w:
            lo = g
        else:
            hi = g
    else:
        raise ScalingError(
            f"bisection exceeded {cfg.tx_max_bisect} iterations "
            f"(residual {err_db:.3f} dB)")
    q_norm = tx_waveform(u, g, cfg, length, power_probe=False)
    realized = power_of(q_norm)
    launched = to_physical(
        TimeSignal(q_norm, cfg.dt, cfg.frame_start), scales)
    return TxBurst(signal=launched, gain=float(g),
                   realized_power_dbm=10.0 * np.log10(realized / 1e-3),
                   bisect_evals=evals, frame=frame)


# ---------------------------------------------------------------------------
# receiver front end

def resample_bandlimited(signal: TimeSignal, factor: int) -> TimeSignal:
    """Exact spectral up-sampling by an integer factor."""
    if factor == 1:
        return signal.copy()
    n = signal.n
    spec = np.fft.fft(signal.samples)
    out = np.zeros(n * factor, dtype=np.complex128)
    h = n // 2
    out[:h] = spec[:h]
    out[-(n - h):] = spec[h:]
    out *= factor
    return TimeSignal(np.fft.ifft(out), signal.dt / factor, signal.t0,
                      signal.units)


def brickwall_lowpass(samples: np.ndarray, dt: float, bandwidth_hz: float) -> np.ndarray:
    """Ideal low-pass keeping |f| <= bandwidth/2 (total width = bandwidth)."""
    f = np.fft.fftfreq(samples.size, d=dt)
    spec = np.fft.fft(samples)
    spec[np.abs(f) > bandwidth_hz / 2.0] = 0.0
    return np.fft.ifft(spec)


def rx_frontend(waveform: TimeSignal, cfg: SystemConfig,
                scales: NormalizationScales) -> TimeSignal:
    """Front-end filter, ADC decimation to the NFT grid, frame alignment,
    and conversion to soliton units.

    The output grid starts at the frame origin ``-Ts/2`` with symbol
    boundaries ``t_k`` landing on exact sample indices.
    """
    if waveform.units != PHYSICAL:
        raise SignalError("rx_frontend expects a physical waveform")
    dt8 = cfg.dt * scales.t0
    ratio = dt8 / waveform.dt
    factor = int(round(ratio))
    if abs(ratio - factor) > 1e-9 or factor < 1:
        raise FramingError("waveform grid is not a multiple of the NFT grid")
    filtered = brickwall_lowpass(waveform.samples, waveform.dt,
                                 cfg.frontend_bandwidth_hz)
    if factor > 1:
        # decimate by spectral truncation at the target Nyquist band
        filtered = brickwall_lowpass(filtered, waveform.dt, 1.0 / dt8)
        filtered = filtered[::factor]
    if filtered.size != cfg.n_frame:
        raise FramingError(
            f"got {filtered.size} samples, expected frame of {cfg.n_frame}")
    # undo the launch framing: the encoder mirror and the launch reversal
    # compose to a pure frame offset of the guard-centering shift
    aligned = np.roll(filtered, -cfg.guard_shift_samples)
    phys = TimeSignal(aligned, dt8, cfg.frame_start * scales.t0, PHYSICAL)
    out = TimeSignal(np.conj(phys.samples) / np.sqrt(scales.p0),
                     cfg.dt, cfg.frame_start)
    return out
