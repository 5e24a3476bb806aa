"""Structured configuration with the study's default link built in."""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .channel import FiberParams
from .signals import SignalError
from .txrx import SystemConfig


@dataclass
class RunConfig:
    fiber: FiberParams
    system: SystemConfig
    powers_dbm: list
    n_bursts: int = 100
    seed: int = 1
    step_km: float = 0.1
    noise_on: bool = True
    detectors: tuple = ("fnft", "ifnft", "dffnft", "dfbnft")


DEFAULTS = {
    "fiber": {
        "beta2_ps2_km": -20.39,
        "gamma_w_km": 1.22,
        "alpha_db_km": 0.2,
        "length_km": 4000.0,
        "eta_sp": 4.0,
        "carrier_wavelength_nm": 1550.0,
    },
    "system": {
        "symbol_rate": 10e9,
        "oversampling": 8,
        "n_info": 128,
        "n_guard": 160,
        "constellation_order": 4,
        "target_power_dbm": -6.0,
        "frontend_bandwidth_hz": 100e9,
        "pulse_energy_fraction": 0.99,
        "t0_fraction": 0.5,
        "channel_oversampling": 2,
    },
    "run": {
        "powers_dbm": [-6.0],
        "n_bursts": 100,
        "seed": 1,
        "step_km": 0.1,
        "noise_on": True,
        "detectors": ["fnft", "ifnft", "dffnft", "dfbnft"],
    },
}


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults <- YAML file <- overrides into a RunConfig."""
    merged = {k: dict(v) for k, v in DEFAULTS.items()}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise SignalError("config file must hold a mapping")
        for section in ("fiber", "system", "run"):
            part = data.get(section, {})
            if not isinstance(part, dict):
                raise SignalError(f"config section {section!r} must be a mapping")
            unknown = set(part) - set(merged[section])
            if unknown:
                raise SignalError(
                    f"unknown keys in config section {section!r}: {sorted(unknown)}")
            merged[section].update(part)
    for section, part in (overrides or {}).items():
        merged[section].update(part)
    try:
        fiber = FiberParams(**merged["fiber"])
        system = SystemConfig(**merged["system"])
    except TypeError as exc:
        raise SignalError(f"bad configuration: {exc}") from exc
    run = merged["run"]
    detectors = tuple(run["detectors"])
    bad = [d for d in detectors if d not in ("fnft", "ifnft", "dffnft", "dfbnft")]
    if bad:
        raise SignalError(f"unknown detectors {bad}")
    return RunConfig(
        fiber=fiber, system=system,
        powers_dbm=[float(p) for p in run["powers_dbm"]],
        n_bursts=int(run["n_bursts"]), seed=int(run["seed"]),
        step_km=float(run["step_km"]), noise_on=bool(run["noise_on"]),
        detectors=detectors,
    )


def dump_default_config() -> str:
    return yaml.safe_dump(DEFAULTS, sort_keys=False)
