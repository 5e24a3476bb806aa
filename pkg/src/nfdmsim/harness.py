"""Monte Carlo experiment runner: bit streams, per-burst chain, error
counting, Q-factor bookkeeping, CSV persistence.

Randomness is drawn from counter-keyed substreams ``default_rng([seed,
burst_index, purpose])`` (purpose 0 = data bits, 1 = ASE), so every burst is
reproducible in isolation, all detectors see identical channel realizations,
and results do not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfcinv

from .channel import (
    FiberParams,
    NormalizationScales,
    make_scales,
    ssfm_propagate,
)
from .detectors import (
    Demodulator,
    detect_dfbnft,
    detect_dffnft,
    detect_fnft,
    detect_ifnft,
)
from .signals import SignalError, TimeSignal
from .txrx import (
    SystemConfig,
    qpsk_modulate,
    resample_bandlimited,
    rx_frontend,
    synthesize_pulse_train,
    tx_build_burst,
    tx_waveform,
)
from .zs import continuous_spectrum, initial_state

DETECTOR_NAMES = ("fnft", "ifnft", "dffnft", "dfbnft")

CSV_HEADER = ("power_dbm,detector,n_b,n_z,eta,bits,errors,ber,q2_db,"
              "seed,failed_bursts,wall_time_s")


def qfactor_from_ber(p_b: float) -> float:
    """Q^2 in dB: 20 log10(sqrt(2) erfc^-1(2 P_b)); +-inf sentinels outside
    (0, 0.5)."""
    if p_b <= 0.0:
        return float("inf")
    if p_b >= 0.5:
        return float("-inf")
    return float(20.0 * np.log10(np.sqrt(2.0) * erfcinv(2.0 * p_b)))


def rate_efficiency(n_b: int, n_z: int) -> float:
    """eta = N_b / (N_b + N_z)."""
    if n_b < 1 or n_z < 0:
        raise SignalError("need n_b >= 1 and n_z >= 0")
    return n_b / (n_b + n_z)


@dataclass
class ResultRecord:
    power_dbm: float
    detector: str
    n_b: int
    n_z: int
    eta: float
    bits: int
    errors: int
    seed: int
    failed_bursts: int = 0
    wall_time_s: float = 0.0

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else float("nan")

    @property
    def q2_db(self) -> float:
        return qfactor_from_ber(self.ber) if self.bits else float("nan")

    def csv_row(self) -> str:
        def f(x):
            return f"{x:.9g}"
        return ",".join([
            f(self.power_dbm), self.detector, str(self.n_b), str(self.n_z),
            f(self.eta), str(self.bits), str(self.errors), f(self.ber),
            f(self.q2_db), str(self.seed), str(self.failed_bursts),
            f(self.wall_time_s),
        ])


def rng_stream(seed: int, burst: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(burst), int(purpose)])


@dataclass
class BurstOutcome:
    bits_tx: np.ndarray
    errors: dict
    failed: dict


def run_burst(cfg: SystemConfig, fiber: FiberParams,
              scales: NormalizationScales, detectors: tuple[str, ...],
              seed: int, burst_index: int, steps: int,
              noise_on: bool = True) -> BurstOutcome:
    """One burst through the full chain; per-detector bit errors."""
    bits = rng_stream(seed, burst_index, 0).integers(0, 2, 2 * cfg.n_info)
    frame = qpsk_modulate(bits)
    length_phase = fiber.length_m / (2.0 * scales.z0)
    tx = tx_build_burst(frame, cfg, scales, length_phase)
    wave = resample_bandlimited(tx.signal, cfg.channel_oversampling)
    rng = rng_stream(seed, burst_index, 1) if noise_on else None
    received = ssfm_propagate(wave, fiber, steps, noise_on=noise_on, rng=rng)
    r = rx_frontend(received, cfg, scales)
    # deterministic chain reference for the spectral demodulators: demodulate
    # the noiseless replay once per burst (receiver-known channel state)
    u = synthesize_pulse_train(frame, cfg)
    replay = np.roll(tx_waveform(u, tx.gain, cfg, 0.0),
                     -cfg.guard_shift_samples)
    ns = cfg.info_samples
    demod = Demodulator(cfg)
    state = initial_state(TimeSignal(replay[:ns], cfg.dt, cfg.frame_start),
                          demod.lam)
    y_ref = demod.samples(
        continuous_spectrum(state.extend(replay[:ns]).coefficients()))
    alpha = complex(np.sum(y_ref * np.conj(frame.symbols))
                    / np.sum(np.abs(frame.symbols) ** 2))
    errors = {}
    failed = {}
    for name in detectors:
        try:
            if name == "fnft":
                res = detect_fnft(r, cfg, alpha)
            elif name == "ifnft":
                res = detect_ifnft(r, cfg, alpha)
            elif name == "dffnft":
                res = detect_dffnft(r, cfg, scales, length_phase, tx.gain,
                                    alpha)
            elif name == "dfbnft":
                res = detect_dfbnft(r, cfg, scales, length_phase, tx.gain,
                                    alpha)
            else:
                raise SignalError(f"unknown detector {name!r}")
            errors[name] = int(np.sum(res.bits != bits))
        except Exception:
            failed[name] = True
    return BurstOutcome(bits_tx=bits, errors=errors, failed=failed)


def channel_steps(fiber: FiberParams, step_km: float) -> int:
    return max(1, int(np.ceil(fiber.length_km / step_km)))


def run_montecarlo(cfg: SystemConfig, fiber: FiberParams,
                   detectors: tuple[str, ...], power_dbm: float,
                   n_bursts: int, seed: int, step_km: float = 0.1,
                   noise_on: bool = True,
                   log=None) -> list[ResultRecord]:
    """n_bursts through the chain at one launch power; one record per
    detector.  Deterministic given (seed, config)."""
    if n_bursts < 1:
        raise SignalError("n_bursts must be >= 1")
    cfg_p = SystemConfig(**{**cfg.__dict__, "target_power_dbm": power_dbm})
    scales = make_scales(fiber, cfg_p.t0_phys)
    steps = channel_steps(fiber, step_km)
    t_start = time.time()
    totals = {d: [0, 0, 0] for d in detectors}   # bits, errors, failed
    for b in range(n_bursts):
        try:
            out = run_burst(cfg_p, fiber, scales, detectors, seed, b, steps,
                            noise_on)
        except Exception as exc:
            if log:
                log(f"burst {b} (seed {seed}) failed in the common chain: {exc}")
            for d in detectors:
                totals[d][2] += 1
            continue
        for d in detectors:
            if d in out.errors:
                totals[d][0] += out.bits_tx.size
                totals[d][1] += out.errors[d]
            else:
                totals[d][2] += 1
                if log:
                    log(f"burst {b} (seed {seed}) failed in detector {d}")
    wall = time.time() - t_start
    eta = rate_efficiency(cfg_p.n_info, cfg_p.n_guard)
    return [ResultRecord(power_dbm=power_dbm, detector=d, n_b=cfg_p.n_info,
                         n_z=cfg_p.n_guard, eta=eta, bits=totals[d][0],
                         errors=totals[d][1], seed=seed,
                         failed_bursts=totals[d][2], wall_time_s=wall)
            for d in detectors]


@dataclass
class SweepSummary:
    detector: str
    best_power_dbm: float
    best_q2_db: float


def power_sweep(cfg: SystemConfig, fiber: FiberParams,
                detectors: tuple[str, ...], powers_dbm, n_bursts: int,
                seed: int, step_km: float = 0.1, noise_on: bool = True,
                log=None) -> tuple[list[ResultRecord], list[SweepSummary]]:
    """Monte Carlo at each grid power plus a max-Q^2 summary per detector."""
    powers = list(powers_dbm)
    if not powers:
        raise SignalError("power grid must be non-empty")
    records: list[ResultRecord] = []
    for p in powers:
        if log:
            log(f"power {p:+.2f} dBm ...")
        records.extend(run_montecarlo(cfg, fiber, detectors, p, n_bursts,
                                      seed, step_km, noise_on, log))
    summaries = []
    for d in detectors:
        rows = [r for r in records if r.detector == d and r.bits > 0]
        best = max(rows, key=lambda r: (r.q2_db, -r.power_dbm))
        summaries.append(SweepSummary(d, best.power_dbm, best.q2_db))
    return records, summaries


def write_csv(records: list[ResultRecord], path_or_buf) -> None:
    own = isinstance(path_or_buf, (str, bytes))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            fh.write(r.csv_row() + "\n")
    finally:
        if own:
            fh.close()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER.split(","):
            raise SignalError("CSV header does not match the harness schema")
        return list(reader)
