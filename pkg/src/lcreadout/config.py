"""Run configuration: one JSON document with SI-suffixed keys."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .circuit import (
    CircuitParams,
    CouplingCalibration,
    coupling_coefficients,
    dispersive_shift,
    resonator_frequency,
)
from .duffing import ReadoutResonator
from .dynamics import NoiseModel
from .errors import ParameterDomainError
from .optimize import DriveBounds
from .readout import ReadoutConfig

__all__ = ["RunConfig", "load_config", "bundled_config_path", "readout_resonator"]

_MASK64 = (1 << 64) - 1


def bundled_config_path() -> Path:
    return Path(str(resources.files("lcreadout") / "data" / "paper-device.json"))


def readout_resonator(circuit: CircuitParams, calibration: CouplingCalibration, phi_ext: float, chi2_ratio: float) -> ReadoutResonator:
    """Readout resonator seen at ``phi_ext``: bare frequency, shift and Kerr from the circuit."""
    coeffs = coupling_coefficients(circuit, phi_ext, calibration)
    return ReadoutResonator(
        f_c0_hz=float(resonator_frequency(circuit, coeffs.phi_ext)),
        chi_hz=dispersive_shift(circuit, phi_ext, calibration),
        eta_hz=coeffs.eta_hz,
        kappa_hz=circuit.kappa_hz,
        chi2_ratio=chi2_ratio,
    )


def _build(cls, d: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ParameterDomainError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ParameterDomainError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    circuit: CircuitParams
    calibration: CouplingCalibration
    noise: NoiseModel
    readout: ReadoutConfig
    bounds: DriveBounds
    phi_ext: float = 0.0
    seed: int = 0
    output_dir: str = "out"
    search_budget: int = 60
    curve_times_s: tuple = ()
    n_rounds: int = 10
    shots_per_round: int = 30000
    flux_points: int = 41
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            circuit = _build(CircuitParams, d["circuit"], "circuit")
            calibration = _build(CouplingCalibration, d["calibration"], "calibration")
            nd = dict(d.get("noise", {}))
            noise = NoiseModel(
                t1_s=nd.pop("t1_s", circuit.t1_s),
                t2star_s=nd.pop("t2star_s", circuit.t2star_s),
                **nd,
            )
            rd = dict(d["readout"])
            phi = float(rd.pop("phi_ext", 0.0))
            chi2 = float(rd.pop("chi2_ratio", 1.8))
            resonator = readout_resonator(circuit, calibration, phi, chi2)
            readout = _build(ReadoutConfig, {"resonator": resonator, "noise": noise, **rd}, "readout")
            sd = d.get("search", {})
            bounds = DriveBounds(
                (float(sd["f_drive_min_hz"]), float(sd["f_drive_max_hz"])),
                (float(sd["epsilon_min_hz"]), float(sd["epsilon_max_hz"])),
            )
            seed = int(d["seed"])
        except KeyError as exc:
            raise ParameterDomainError(f"missing config key {exc}") from None
        if not 0 <= seed <= _MASK64:
            raise ParameterDomainError("seed must be an unsigned 64-bit integer")
        bd = d.get("benchmark", {})
        return cls(
            circuit=circuit,
            calibration=calibration,
            noise=noise,
            readout=readout,
            bounds=bounds,
            phi_ext=phi,
            seed=seed,
            output_dir=str(d.get("output_dir", "out")),
            search_budget=int(sd.get("budget", 60)),
            curve_times_s=tuple(float(t) for t in sd.get("times_s", ())),
            n_rounds=int(bd.get("n_rounds", 10)),
            shots_per_round=int(bd.get("shots_per_round", 30000)),
            flux_points=int(d.get("flux_points", 41)),
            raw=d,
        )


def load_config(path=None) -> RunConfig:
    """Read a config file; ``None`` loads the bundled device config."""
    p = bundled_config_path() if path is None else Path(path)
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParameterDomainError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ParameterDomainError("config must be a JSON object")
    return RunConfig.from_dict(data)

