"""Run configuration: TOML ingestion, unit conversion and validation.

Frequencies are written as strings with a unit, ``"1 MHz"`` meaning
ω/2π = 1 MHz, or ``"6.28e6 rad/s"``.  They are converted to rad/s once, here.
Times are in seconds, temperatures in kelvin, masses in kilograms.
"""
from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

try:
    import tomllib as toml  # Python ≥ 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as toml

from .analytic import bose_einstein
from .constants import TWO_PI

SCENARIOS = (
    "ideal-protocol",
    "open-protocol",
    "concurrence-scan",
    "analytic-compare",
    "gravity-gap",
    "transmon-spectrum",
)

_HZ = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}
_FREQ = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(Hz|kHz|MHz|GHz|rad/s)\s*$")


class ConfigError(ValueError):
    """Validation failure; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def parse_frequency(value: Any, key: str = "frequency") -> float:
    """``"50 kHz"`` → 2π·5e4 rad/s; ``"3 rad/s"`` → 3.  Bare numbers are rejected."""
    if not isinstance(value, str):
        raise ConfigError(key, f"frequency needs a unit string such as '1 MHz', got {value!r}")
    m = _FREQ.match(value)
    if not m:
        raise ConfigError(key, f"cannot parse frequency {value!r} (units: Hz, kHz, MHz, GHz, rad/s)")
    number, unit = float(m.group(1)), m.group(2)
    return number if unit == "rad/s" else TWO_PI * number * _HZ[unit]


def to_hz(omega: float) -> float:
    return omega / TWO_PI


def freq(default: Optional[str] = None, required: bool = False):
    """Dataclass field holding a frequency in rad/s, parsed from a unit string."""
    if required:
        return field(default=None, metadata={"unit": "frequency", "required": True})
    value = None if default is None else parse_frequency(default)
    return field(default=value, metadata={"unit": "frequency"})


@dataclass(frozen=True)
class RunSection:
    scenario: str = None
    seed: int = 0
    sampling_shots: int = 0  # 0: exhaustive branch enumeration only


@dataclass(frozen=True)
class MechanicsSection:
    omega_m: float = freq(required=True)
    lambda_e: Optional[float] = freq()  # may be derived from protocol.alpha
    lambda_g: float = freq("0 Hz")
    Q_m: float = 1e5
    temperature: float = 0.025
    mass: float = 3e-15
    n_initial: Optional[float] = 0.0  # "thermal" in the file → None

    @property
    def gamma_m(self) -> float:
        return self.omega_m / self.Q_m

    @property
    def n_bar(self) -> float:
        return bose_einstein(self.omega_m, self.temperature)


@dataclass(frozen=True)
class TransmonSection:
    E_J: float = freq("45 GHz")
    E_C: float = freq("0.5 GHz")
    eta: float = 0.0
    charge_cutoff: int = 40
    chi: float = freq("45 MHz")
    gamma_q: float = freq("5 kHz")
    gamma_q_tilde: float = freq("20 kHz")


@dataclass(frozen=True)
class CavitySection:
    omega_c: float = freq("11 GHz")
    kappa_s: float = freq("200 kHz")
    truncation: int = 2


@dataclass(frozen=True)
class DetectorSection:
    Delta: float = freq("1 GHz")
    chi_p: Optional[float] = freq()  # default: parity time πΔ/χ_p² equal to 1/(4κ_s)
    kappa_p: float = freq("20 kHz")
    efficiency: float = 1.0
    noise: bool = False


@dataclass(frozen=True)
class ProtocolSection:
    n_pulses: int = 0
    alpha: Optional[float] = None
    force_orientation: str = "same"
    interaction_time: Optional[float] = None
    transfer: str = "unitary"
    recenter: bool = True
    noise: bool = True  # open-protocol only: reference rates on or off


@dataclass(frozen=True)
class NumericsSection:
    mech_truncation: Optional[int] = None
    method: str = "rk4_fixed"
    dt: Optional[float] = None
    tolerance: float = 1e-9
    tail: float = 1e-4


@dataclass(frozen=True)
class ScanSection:
    periods: float = 2.0
    samples_per_period: int = 64
    lambda_e_values: Optional[tuple] = field(default=None, metadata={"unit": "frequency-list"})
    n_bar: Optional[float] = None  # override of the bath occupation


@dataclass(frozen=True)
class GravitySection:
    separation: float = 1e-6
    coupling: Optional[float] = freq()  # desk-scale override of K
    grav_constant: Optional[float] = None
    grav_fraction: float = 0.1
    enabled: bool = True
    periods: int = 3
    samples_per_period: int = 48
    n_bar: Optional[float] = None


@dataclass(frozen=True)
class SpectrumSection:
    E_J_min: float = freq("17.5 GHz")
    E_J_max: float = freq("27.5 GHz")
    steps: int = 11


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"


SECTIONS = {
    "run": RunSection,
    "mechanics": MechanicsSection,
    "transmon": TransmonSection,
    "cavity": CavitySection,
    "detector": DetectorSection,
    "protocol": ProtocolSection,
    "numerics": NumericsSection,
    "scan": ScanSection,
    "gravity": GravitySection,
    "spectrum": SpectrumSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class RunConfig:
    run: RunSection
    mechanics: MechanicsSection
    transmon: TransmonSection = TransmonSection()
    cavity: CavitySection = CavitySection()
    detector: DetectorSection = DetectorSection()
    protocol: ProtocolSection = ProtocolSection()
    numerics: NumericsSection = NumericsSection()
    scan: ScanSection = ScanSection()
    gravity: GravitySection = GravitySection()
    spectrum: SpectrumSection = SpectrumSection()
    output: OutputSection = OutputSection()

    @property
    def scenario(self) -> str:
        return self.run.scenario

    @property
    def chi_p(self) -> float:
        if self.detector.chi_p is not None:
            return self.detector.chi_p
        return math.sqrt(4 * math.pi * self.detector.Delta * self.cavity.kappa_s)

    def with_scenario(self, scenario: str) -> "RunConfig":
        if scenario not in SCENARIOS:
            raise ConfigError("run.scenario", f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
        return dataclasses.replace(self, run=dataclasses.replace(self.run, scenario=scenario))

    def resolved(self) -> dict:
        """Parameters after unit conversion plus derived quantities, for echoing."""
        out = {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}
        if out["scan"]["lambda_e_values"] is not None:
            out["scan"]["lambda_e_values"] = list(out["scan"]["lambda_e_values"])
        out["derived"] = {
            "gamma_m": self.mechanics.gamma_m,
            "n_bar": self.mechanics.n_bar,
            "chi_p": self.chi_p,
            "alpha": alpha_of(self),
        }
        return out


def alpha_of(cfg: RunConfig) -> float:
    m = cfg.mechanics
    return (cfg.protocol.n_pulses + 1) * (m.lambda_e - m.lambda_g) / m.omega_m


def _build_section(name: str, cls, raw: Any):
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}", "unknown key")
    values = {}
    for key, f in known.items():
        full = f"{name}.{key}"
        if key not in raw:
            if f.metadata.get("required"):
                raise ConfigError(full, "missing mandatory key")
            continue
        v = raw[key]
        unit = f.metadata.get("unit")
        if unit == "frequency":
            v = parse_frequency(v, full)
        elif unit == "frequency-list":
            if not isinstance(v, list) or not v:
                raise ConfigError(full, "expected a non-empty list of frequencies")
            v = tuple(parse_frequency(x, full) for x in v)
        elif key == "n_initial" and v == "thermal":
            v = None
        values[key] = v
    try:
        return cls(**values)
    except TypeError as exc:  # pragma: no cover
        raise ConfigError(name, str(exc)) from exc


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.run.scenario is None:
        raise ConfigError("run.scenario", "missing mandatory key")
    if cfg.run.scenario not in SCENARIOS:
        raise ConfigError("run.scenario", f"unknown scenario {cfg.run.scenario!r}; choose from {SCENARIOS}")
    m, p = cfg.mechanics, cfg.protocol
    if m.omega_m <= 0:
        raise ConfigError("mechanics.omega_m", "must be positive")
    for key in ("Q_m", "temperature", "mass"):
        if getattr(m, key) <= 0:
            raise ConfigError(f"mechanics.{key}", "must be positive")
    if p.n_pulses < 0:
        raise ConfigError("protocol.n_pulses", "must be >= 0")
    if m.lambda_e is None:
        if p.alpha is None:
            raise ConfigError("mechanics.lambda_e", "missing mandatory key (or give protocol.alpha)")
        lam = m.lambda_g + p.alpha * m.omega_m / (p.n_pulses + 1)
        cfg = dataclasses.replace(cfg, mechanics=dataclasses.replace(m, lambda_e=lam))
    elif p.alpha is not None:
        derived = alpha_of(cfg)
        if not math.isclose(p.alpha, derived, rel_tol=1e-9, abs_tol=1e-12):
            raise ConfigError(
                "protocol.alpha",
                f"{p.alpha} is inconsistent with (N_p+1)(λ_e−λ_g)/ω_m = {derived}",
            )
    if p.force_orientation not in ("same", "reverted"):
        raise ConfigError("protocol.force_orientation", "must be 'same' or 'reverted'")
    if p.transfer not in ("unitary", "cascaded"):
        raise ConfigError("protocol.transfer", "must be 'unitary' or 'cascaded'")
    if cfg.numerics.method not in ("rk4_fixed", "adaptive_embedded"):
        raise ConfigError("numerics.method", "must be 'rk4_fixed' or 'adaptive_embedded'")
    if cfg.cavity.truncation < 2:
        raise ConfigError("cavity.truncation", "must be >= 2")
    if not 0 <= cfg.detector.efficiency <= 1:
        raise ConfigError("detector.efficiency", "must lie in [0, 1]")
    if cfg.spectrum.steps < 1:
        raise ConfigError("spectrum.steps", "must be >= 1")
    if cfg.scan.periods <= 0 or cfg.scan.samples_per_period < 2:
        raise ConfigError("scan.periods", "need periods > 0 and samples_per_period >= 2")
    return cfg


def config_from_dict(doc: dict) -> RunConfig:
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    if "mechanics" not in doc:
        raise ConfigError("mechanics", "missing mandatory section")
    sections = {name: _build_section(name, cls, doc.get(name, {})) for name, cls in SECTIONS.items()}
    return _validate(RunConfig(**sections))


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    with path.open("rb") as fh:
        try:
            doc = toml.load(fh)
        except toml.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"not valid TOML: {exc}") from exc
    return config_from_dict(doc)


def default_config_text() -> str:
    """The bundled reference-parameter configuration."""
    return resources.files("heralded_ecs").joinpath("data/table1.toml").read_text(encoding="utf-8")


def default_config() -> RunConfig:
    return config_from_dict(toml.loads(default_config_text()))
