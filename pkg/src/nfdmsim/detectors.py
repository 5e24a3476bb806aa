"""The four detection strategies, sharing one nonlinear-frequency demodulator.

All detectors slice QPSK decisions from per-symbol statistics computed over
the detection window ``[-Ts/2, t_n_info]`` of the aligned, normalized
received signal:

* ``fnft``    - scatter the whole window once, demodulate every symbol.
* ``ifnft``   - grow one scattering prefix a symbol slot at a time and
  demodulate symbol k from the truncated signal (zero past t_k); the same
  per-sample transfer products as ``fnft``, just banked per step.
* ``dffnft``  - additionally replace the already-decided part of the signal
  by a noiseless reconstruction (decision feedback in the nonlinear
  frequency domain): per step the retained checkpoint state re-absorbs one
  reconstructed and one received slot.
* ``dfbnft``  - decide in the time domain: for each candidate symbol extend
  an incremental reconstruction by one slot and pick the smallest L2
  distance to the received samples.

Reconstructions replay the transmitter chain without precompensation at the
realized launch gain (receiver-known channel state) through the same
incremental inverse transform the transmitter uses.

Operation counters are kept in symbol-slot units; ``n_fnft_equiv`` /
``n_bnft_equiv`` report ceil(slots / n_info), the full-burst-transform
accounting in which the complexity contracts read (1,0), (1,0), (2,1) and
(0,M).  Iterations internal to one inverse-transform slot (quadrature,
peeling sweeps) are inside the unit, exactly as a transform's FFTs would be.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import NormalizationScales
from .glm import PeelMarch, circle_factor
from .signals import NonlinearSpectrum, SignalError, TimeSignal
from .txrx import (
    GRAY_SYMBOLS,
    PulseShape,
    SystemConfig,
    bits_from_indices,
    linear_ft,
    qpsk_symbol_index,
    synthesize_pulse_train,
    tx_dense_lambda_grid,
)
from .zs import ScatteringState, continuous_spectrum, initial_state


@dataclass
class DetectionResult:
    symbols: np.ndarray
    bits: np.ndarray
    decision_samples: np.ndarray
    fnft_slots: int
    bnft_slots: int
    n_info: int

    @property
    def n_fnft_equiv(self) -> int:
        return -(-self.fnft_slots // self.n_info) if self.fnft_slots else 0

    @property
    def n_bnft_equiv(self) -> int:
        return -(-self.bnft_slots // self.n_info) if self.bnft_slots else 0


# ---------------------------------------------------------------------------
# shared demodulator


class Demodulator:
    """Inverse spectral map, matched filter, and symbol-time sampler.

    ``reference`` (optional complex scalar) removes the deterministic
    gain/common-rotation of the chain, measured once per burst from the
    noiseless transmitter replay; decisions are quadrant slicing either way.
    """

    def __init__(self, cfg: SystemConfig, reference: complex = 1.0):
        self.cfg = cfg
        self.lam = np.asarray(cfg.detection_lambda_grid())
        pulse = PulseShape(cfg.ts, cfg.pulse_energy_fraction)
        self._filter = pulse.spectrum(-2.0 * self.lam)
        taus = np.arange(cfg.n_info) * cfg.ts
        dlam = self.lam[1] - self.lam[0]
        self._sampler = (dlam / np.pi) * np.exp(-2j * np.outer(taus, self.lam))
        self.reference = complex(reference)

    def samples(self, rho: NonlinearSpectrum) -> np.ndarray:
        """Per-symbol decision samples from a nonlinear spectrum."""
        r = rho.rho
        m2 = np.abs(r) ** 2
        factor = np.where(m2 > 1e-12,
                          np.sqrt(np.log1p(m2) / np.maximum(m2, 1e-300)), 1.0)
        u_est = -np.conj(r * factor)
        return (self._sampler @ (u_est * self._filter)) / self.reference

    def sample_one(self, rho: NonlinearSpectrum, k: int) -> complex:
        r = rho.rho
        m2 = np.abs(r) ** 2
        factor = np.where(m2 > 1e-12,
                          np.sqrt(np.log1p(m2) / np.maximum(m2, 1e-300)), 1.0)
        u_est = -np.conj(r * factor)
        return complex(self._sampler[k - 1] @ (u_est * self._filter)
                       / self.reference)


def nfd_demodulate(rho: NonlinearSpectrum, cfg: SystemConfig,
                   reference: complex = 1.0) -> np.ndarray:
    """Decision samples for all n_info symbols (inverse map, matched filter
    with the pulse's spectrum, sampling at t = (k-1) Ts)."""
    return Demodulator(cfg, reference).samples(rho)


def _detection_signal(received: TimeSignal, cfg: SystemConfig) -> TimeSignal:
    ns = cfg.info_samples
    if received.n < ns:
        raise SignalError("received window shorter than the detection window")
    return TimeSignal(received.samples[:ns], received.dt, received.t0)


# ---------------------------------------------------------------------------
# reconstruction machinery (decision feedback)


class Reconstructor:
    """Incremental noiseless reconstruction from decided symbols.

    Replays the transmitter chain without precompensation at the realized
    gain: the running prefix spectrum is the encoding of the decided pulse
    train, and samples come from the same incremental inverse-NFT march the
    transmitter uses.  One committed march sample per reconstructed sample;
    candidate evaluations peek without committing.
    """

    def __init__(self, cfg: SystemConfig, gain: float):
        self.cfg = cfg
        self.gain = float(gain)
        self.lam = tx_dense_lambda_grid(cfg)
        # per-position sampled-pulse spectral templates: contribution of
        # symbol k (unit amplitude) to -conj(gain * U(-2 lam)), including
        # the transmitter's guard-centering delay so the march leaves room
        # for the data's acausal wings
        n = cfg.n_frame
        # advance phase matching the transmitter's guard centering
        self._shift = np.exp(+2j * self.lam * (cfg.guard_shift_samples * cfg.dt))
        templates = []
        pulse = PulseShape(cfg.ts, cfg.pulse_energy_fraction)
        t = cfg.t_grid
        half_width = 9.0 * pulse.sigma
        for k in range(cfg.n_info):
            tau = k * cfg.ts
            lo = max(0, int((tau - half_width - t[0]) / cfg.dt))
            hi = min(n, int((tau + half_width - t[0]) / cfg.dt) + 2)
            buf = np.zeros(n, dtype=np.complex128)
            buf[lo:hi] = pulse.amplitude(t[lo:hi] - tau)
            # the encoder works on the frame-mirrored train
            sig = TimeSignal(buf[::-1], cfg.dt, cfg.frame_start)
            templates.append(linear_ft(sig, -2.0 * self.lam))
        self._templates = templates
        self._u_run = np.zeros(self.lam.size, dtype=np.complex128)
        # the pre-reversal waveform is peeled from its late edge, which is
        # the received signal's forward direction
        self.march = PeelMarch(cfg.t_grid, self.lam, direction="late")
        self.march.rebase_rho(np.zeros(self.lam.size, dtype=np.complex128))
        self._offset = cfg.guard_shift_samples
        self.march.extend(self._offset)
        self.samples = np.zeros(cfg.info_samples, dtype=np.complex128)
        self._filled = 0

    def _rho_with(self, k: int, symbol: complex) -> np.ndarray:
        u = self._u_run + symbol * self._templates[k - 1]
        return -np.conj(self.gain * u) * self._shift

    def candidate_slot(self, k: int, symbol: complex) -> np.ndarray:
        """Reconstructed samples of slot k if symbol k were ``symbol``."""
        lo, hi = self.cfg.slot_sample_range(k)
        return self.march.peek(hi - lo, rho_tot=self._rho_with(k, symbol))

    def commit(self, k: int, symbol: complex) -> np.ndarray:
        """Decide symbol k: advance the march through slot k."""
        self._u_run += symbol * self._templates[k - 1]
        self.march.rebase_rho(-np.conj(self.gain * self._u_run) * self._shift)
        lo, hi = self.cfg.slot_sample_range(k)
        out = self.march.extend(hi - lo)
        self.samples[lo:hi] = out
        self._filled = hi
        return out

    def slot(self, k: int) -> np.ndarray:
        lo, hi = self.cfg.slot_sample_range(k)
        if hi > self._filled:
            raise SignalError(f"slot {k} not reconstructed yet")
        return self.samples[lo:hi]


# ---------------------------------------------------------------------------
# detectors


def detect_fnft(received: TimeSignal, cfg: SystemConfig,
                reference: complex = 1.0) -> DetectionResult:
    """Conventional detection: one full-window transform, then demodulate."""
    sig = _detection_signal(received, cfg)
    demod = Demodulator(cfg, reference)
    state = initial_state(sig, demod.lam)
    state = state.extend(sig.samples)
    rho = continuous_spectrum(state.coefficients())
    y = demod.samples(rho)
    idx = qpsk_symbol_index(y)
    return DetectionResult(GRAY_SYMBOLS[idx], bits_from_indices(idx), y,
                           fnft_slots=cfg.n_info, bnft_slots=0,
                           n_info=cfg.n_info)


def detect_ifnft(received: TimeSignal, cfg: SystemConfig,
                 reference: complex = 1.0) -> DetectionResult:
    """Iterative detection on truncated signals r_k(t) = r(t <= t_k).

    One running scattering prefix absorbs each slot once (a single
    full-burst transform in total), demodulating symbol k from the prefix.
    """
    sig = _detection_signal(received, cfg)
    demod = Demodulator(cfg, reference)
    state = initial_state(sig, demod.lam)
    y = np.zeros(cfg.n_info, dtype=np.complex128)
    slots = 0
    for k in range(1, cfg.n_info + 1):
        lo, hi = cfg.slot_sample_range(k)
        state = state.extend(sig.samples[lo:hi])
        slots += 1
        rho = continuous_spectrum(state.coefficients())
        y[k - 1] = demod.sample_one(rho, k)
    idx = qpsk_symbol_index(y)
    return DetectionResult(GRAY_SYMBOLS[idx], bits_from_indices(idx), y,
                           fnft_slots=slots, bnft_slots=0, n_info=cfg.n_info)


def detect_dffnft(received: TimeSignal, cfg: SystemConfig,
                  scales: NormalizationScales, length: float,
                  gain: float, reference: complex = 1.0) -> DetectionResult:
    """Decision-feedback detection in the nonlinear frequency domain.

    Step k scatters the assembled signal (noiseless reconstruction up to
    t_{k-1}, received on (t_{k-1}, t_k], zero after): the checkpoint state
    holds the reconstruction through t_{k-2} and two symbol slots are
    re-absorbed per step; the reconstruction itself advances one slot per
    step (one full-burst inverse transform overall).
    """
    sig = _detection_signal(received, cfg)
    demod = Demodulator(cfg, reference)
    recon = Reconstructor(cfg, gain)
    checkpoint = initial_state(sig, demod.lam)
    y = np.zeros(cfg.n_info, dtype=np.complex128)
    fnft_slots = 0
    bnft_slots = 0
    prev_recon = None       # reconstruction of slot k-1, made at step k-1
    older_recon = None      # reconstruction of slot k-2
    for k in range(1, cfg.n_info + 1):
        if k == 1:
            state = checkpoint.extend(
                sig.samples[slice(*cfg.slot_sample_range(1))])
            fnft_slots += 1
        else:
            state = checkpoint.extend(prev_recon)
            lo, hi = cfg.slot_sample_range(k)
            state = state.extend(sig.samples[lo:hi])
            fnft_slots += 2
        rho = continuous_spectrum(state.coefficients())
        y[k - 1] = demod.sample_one(rho, k)
        m = int(qpsk_symbol_index(np.array([y[k - 1]]))[0])
        symbol = GRAY_SYMBOLS[m]
        if k < cfg.n_info:
            # reconstruct the slot just decided; consumed by step k+1
            older_recon = prev_recon
            prev_recon = recon.commit(k, symbol)
            bnft_slots += 1
            if k >= 2:
                checkpoint = checkpoint.extend(older_recon)
    idx = qpsk_symbol_index(y)
    return DetectionResult(GRAY_SYMBOLS[idx], bits_from_indices(idx), y,
                           fnft_slots=fnft_slots, bnft_slots=bnft_slots,
                           n_info=cfg.n_info)


def detect_dfbnft(received: TimeSignal, cfg: SystemConfig,
                  scales: NormalizationScales, length: float,
                  gain: float, reference: complex = 1.0,
                  candidates: np.ndarray | None = None) -> DetectionResult:
    """Decision-feedback detection in the time domain.

    For each of the M candidate symbols the incremental reconstruction is
    extended through slot k and compared with the received samples; the
    smallest L2 distance wins (ties resolve to the lowest constellation
    index).  M reconstruction branches advance one slot per step: M
    full-burst inverse transforms in total.
    """
    sig = _detection_signal(received, cfg)
    cands = GRAY_SYMBOLS if candidates is None else np.asarray(candidates)
    recon = Reconstructor(cfg, gain)
    y = np.zeros(cfg.n_info, dtype=np.complex128)
    idx_out = np.zeros(cfg.n_info, dtype=np.int64)
    bnft_slots = 0
    for k in range(1, cfg.n_info + 1):
        lo, hi = cfg.slot_sample_range(k)
        r_slot = sig.samples[lo:hi]
        dists = np.empty(len(cands))
        for m, cand in enumerate(cands):
            branch = recon.candidate_slot(k, cand)
            bnft_slots += 1
            dists[m] = float(np.sum(np.abs(r_slot - branch) ** 2)) * cfg.dt
        m_star = int(np.argmin(dists))
        idx_out[k - 1] = m_star
        y[k - 1] = cands[m_star]
        recon.commit(k, cands[m_star])
    symbols = np.asarray(cands)[idx_out]
    if candidates is None:
        bits = bits_from_indices(idx_out)
    else:
        bits = np.zeros(2 * cfg.n_info, dtype=np.int64)
    return DetectionResult(symbols, bits, y,
                           fnft_slots=0, bnft_slots=bnft_slots,
                           n_info=cfg.n_info)


DETECTORS = {
    "fnft": detect_fnft,
    "ifnft": detect_ifnft,
    "dffnft": detect_dffnft,
    "dfbnft": detect_dfbnft,
}
