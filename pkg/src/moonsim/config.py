"""Run configuration: YAML on disk, validated with pydantic.

A config is one YAML mapping.  Top-level keys::

    version: 1
    dims: {x: 32, y: 32}
    guard: 4
    initial: {qubit: e, nx: 0, ny: 0}
    pre_rwa: {nu: 200.0, tol: 1.0e-10}         # optional
    simulate: {...}                             # for `moonsim simulate`
    protocol: {...}                             # for `moonsim protocol`
    scan: {...}                                 # for `moonsim scan`
    verify: {...}                               # optional overrides for `moonsim verify`
    output: {path: out.csv, trajectory: null}

Protocol steps are mappings with exactly one of ``pulse``, ``set_qubit`` or
``rotation``.  Pulse durations are a number, ``{t0: n}`` (pi time of the
``|e,n> -> |g,n+k>`` flip) or ``{t_g: n}`` (quadratic-model flip from ``|e,n>``).
See README.md for the complete grammar.
"""
from __future__ import annotations

import math
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .coupling import CouplingParams, eta_grid
from .dynamics import PulseSpec
from .errors import ConfigError, InvalidArgumentError, MoonsimError
from .fock import HybridState

SCHEMA_VERSION = 1


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Dims(_Model):
    x: int = Field(32, ge=2)
    y: int = Field(32, ge=2)


class Initial(_Model):
    qubit: Literal["e", "g", "plus"] = "e"
    nx: int = Field(0, ge=0)
    ny: int = Field(0, ge=0)


class PulseConfig(_Model):
    axis: Literal["x", "y"]
    k: int = Field(ge=0, le=8)
    eta: float = Field(ge=0.0, allow_inf_nan=False)
    omega: float = Field(1.0, ge=0.0, allow_inf_nan=False)
    model: Literal["effective", "quadratic", "full_pre_rwa"] = "effective"
    omega_eff: Optional[float] = Field(None, allow_inf_nan=False)
    n_ref: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _quadratic(self):
        if self.model == "quadratic":
            if self.k != 2:
                raise ValueError("quadratic pulses must have k = 2")
            if self.omega_eff is None and self.n_ref is None:
                raise ValueError("quadratic pulses need omega_eff or n_ref")
        return self


class SymbolicDuration(_Model):
    t0: Optional[int] = Field(None, ge=0)
    t_g: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _one(self):
        if (self.t0 is None) == (self.t_g is None):
            raise ValueError("give exactly one of t0 or t_g")
        return self


class Rotation(_Model):
    theta: float = Field(allow_inf_nan=False)
    phi: float = Field(0.0, allow_inf_nan=False)


class Step(_Model):
    pulse: Optional[PulseConfig] = None
    duration: Optional[Union[SymbolicDuration, float]] = None
    set_qubit: Optional[Literal["e", "g", "plus"]] = None
    rotation: Optional[Rotation] = None
    label: str = ""

    @field_validator("duration")
    @classmethod
    def _finite(cls, v):
        if isinstance(v, float) and (not math.isfinite(v) or v < 0):
            raise ValueError("duration must be finite and >= 0")
        return v

    @model_validator(mode="after")
    def _kind(self):
        kinds = [n for n in ("pulse", "set_qubit", "rotation") if getattr(self, n) is not None]
        if len(kinds) != 1:
            raise ValueError(f"a step needs exactly one of pulse, set_qubit, rotation (got {kinds or 'none'})")
        if self.pulse is not None and self.duration is None:
            raise ValueError("pulse steps need a duration")
        if self.pulse is None and self.duration is not None:
            raise ValueError("only pulse steps take a duration")
        return self


class Target(_Model):
    M: int = Field(8, ge=0)
    N: int = Field(10, ge=0)


class ProtocolConfig(_Model):
    mode: Literal["ideal_per_branch", "shared_clock", "pre_rwa"] = "ideal_per_branch"
    target: Target = Target()
    steps: list[Step] = Field(min_length=1)


class TimeGrid(_Model):
    t_max: Optional[float] = Field(None, gt=0.0, allow_inf_nan=False)
    t_max_pi: Optional[float] = Field(None, gt=0.0, allow_inf_nan=False)
    samples: int = Field(201, ge=2)

    @model_validator(mode="after")
    def _one(self):
        if (self.t_max is None) == (self.t_max_pi is None):
            raise ValueError("give exactly one of t_max or t_max_pi")
        return self


class Tracked(_Model):
    axis: Literal["x", "y"]
    n: int = Field(ge=0)


class SimulateConfig(_Model):
    pulse: PulseConfig
    time: TimeGrid
    track: list[Tracked] = []


class PreRWA(_Model):
    nu: float = Field(gt=0.0, allow_inf_nan=False)
    delta: Optional[float] = Field(None, allow_inf_nan=False)
    tol: float = Field(1e-10, ge=1e-12, le=1e-6)


class Grid(_Model):
    """Either explicit ``values`` or ``start``/``stop``/``num``."""

    values: Optional[list[float]] = None
    start: Optional[float] = None
    stop: Optional[float] = None
    num: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _shape(self):
        ranged = (self.start, self.stop, self.num)
        if self.values is not None:
            if any(v is not None for v in ranged):
                raise ValueError("give values or start/stop/num, not both")
            if not self.values:
                raise ValueError("grid is empty")
        elif any(v is None for v in ranged):
            raise ValueError("grid needs values or all of start, stop, num")
        return self

    def points(self) -> list[float]:
        if self.values is not None:
            return [float(v) for v in self.values]
        return [float(v) for v in eta_grid(self.start, self.stop, self.num)]


class Pair(_Model):
    n_upper: int = Field(4, ge=0)
    n_lower: int = Field(4, ge=0)
    k: int = Field(4, ge=0, le=8)


class ScanConfig(_Model):
    kind: Literal["commensurability", "resonance"] = "commensurability"
    omega: float = Field(1.0, gt=0.0, allow_inf_nan=False)
    eta: Optional[Grid] = None
    pair: Pair = Pair()
    full_run: bool = True
    threshold: float = Field(0.999, gt=0.0, le=1.0)
    pulse: Optional[PulseConfig] = None
    delta: Optional[Grid] = None
    n_ref: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _needs(self):
        if self.kind == "commensurability" and self.eta is None:
            raise ValueError("commensurability scans need an eta grid")
        if self.kind == "resonance" and (self.delta is None or self.pulse is None):
            raise ValueError("resonance scans need a pulse template and a delta grid")
        return self


class Tolerances(_Model):
    oracle: float = 1e-9
    timing_pe: float = 1e-12
    timing_root: float = 1e-9
    laguerre: float = 1e-10
    protocol: float = 1e-10
    kernel: float = 1e-12
    entropy: float = 1e-10
    shared_clock: float = 1e-6
    norm: float = 1e-12
    unitarity: float = 1e-10
    rwa: float = 0.05


class Inject(_Model):
    propagator_perturbation: float = Field(0.0, allow_inf_nan=False)


class RWACheck(_Model):
    nu: float = Field(200.0, gt=0.0)
    eta: float = Field(0.5, gt=0.0, le=1.0)
    k: int = Field(4, ge=0, le=8)
    samples: int = Field(201, ge=2)
    tol: float = Field(1e-10, ge=1e-12, le=1e-6)


class VerifyConfig(_Model):
    tolerances: Tolerances = Tolerances()
    inject: Inject = Inject()
    rwa: RWACheck = RWACheck()
    include_rwa: bool = True
    shared_clock_grid: Grid = Grid(start=0.02, stop=1.0, num=50)


class Output(_Model):
    path: Optional[str] = None
    trajectory: Optional[str] = None


class RunConfig(_Model):
    version: Literal[1] = 1
    dims: Dims = Dims()
    guard: int = Field(4, ge=0)
    initial: Initial = Initial()
    pre_rwa: Optional[PreRWA] = None
    simulate: Optional[SimulateConfig] = None
    protocol: Optional[ProtocolConfig] = None
    scan: Optional[ScanConfig] = None
    verify: VerifyConfig = VerifyConfig()
    output: Output = Output()

    @model_validator(mode="after")
    def _guard_fits(self):
        if self.guard >= min(self.dims.x, self.dims.y):
            raise ValueError(f"guard={self.guard} must be below both mode dims {self.dims.x}, {self.dims.y}")
        return self


# --- parsing ---------------------------------------------------------------------------

def _line_of(text: str, loc) -> Optional[int]:
    """1-based source line of the deepest existing node along ``loc``."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for key in loc:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt, line = v, k.start_mark.line + 1
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            node = None
    if node is not None:
        line = node.start_mark.line + 1
    return line


def _format_errors(exc: ValidationError, text: Optional[str]) -> str:
    lines = []
    for err in exc.errors():
        loc = [p for p in err["loc"] if not (isinstance(p, str) and p in ("float", "SymbolicDuration"))]
        path = ".".join(str(p) for p in loc) or "<root>"
        where = ""
        if text is not None:
            ln = _line_of(text, loc)
            if ln is not None:
                where = f" (line {ln})"
        lines.append(f"{path}{where}: {err['msg']}")
    return "\n".join(lines)


def apply_override(raw: dict, assignment: str) -> dict:
    """Apply ``dotted.path=value`` (value parsed as YAML) to a raw config mapping."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"override key {key!r} is malformed")
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override value for {key!r} is not valid YAML: {exc}") from None
    node = raw
    for i, part in enumerate(parts[:-1]):
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ConfigError(f"override path {'.'.join(parts[:i + 1])}: no such list index") from None
        else:
            node = node.setdefault(part, {})
        if not isinstance(node, (dict, list)):
            raise ConfigError(f"override path {'.'.join(parts[:i + 1])} is not a mapping or list")
    last = parts[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = parsed
        except (ValueError, IndexError):
            raise ConfigError(f"override path {key}: no such list index") from None
    else:
        node[last] = parsed
    return raw


def parse(text: str, overrides: tuple[str, ...] = ()) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for ov in overrides:
        apply_override(raw, ov)
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, None if overrides else text)) from None


def to_dict(cfg: RunConfig) -> dict:
    return cfg.model_dump(mode="json", exclude_none=True)


def serialize(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=False)


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("moonsim.configs").iterdir() if p.name.endswith(".yaml"))


def read_text(path_or_name: str) -> str:
    """Read a config file, falling back to a bundled config of that name."""
    p = Path(path_or_name)
    if p.is_file():
        return p.read_text()
    name = path_or_name[:-5] if path_or_name.endswith(".yaml") else path_or_name
    ref = resources.files("moonsim.configs").joinpath(f"{name}.yaml")
    if ref.is_file():
        return ref.read_text()
    raise ConfigError(f"no config file or bundled config named {path_or_name!r} (bundled: {', '.join(bundled_names())})")


def load(path_or_name: str, overrides: tuple[str, ...] = ()) -> RunConfig:
    return parse(read_text(path_or_name), overrides)


# --- builders ---------------------------------------------------------------------------

def build_pulse(pc: PulseConfig, pre_rwa: Optional[PreRWA] = None, duration: float = 0.0) -> PulseSpec:
    from .protocol import quadratic_omega_eff

    params = CouplingParams(pc.eta, pc.k, pc.omega)
    omega_eff = pc.omega_eff
    if pc.model == "quadratic" and omega_eff is None:
        omega_eff = quadratic_omega_eff(params, pc.n_ref)
    nu = delta = None
    if pc.model == "full_pre_rwa":
        if pre_rwa is None:
            raise ConfigError("full_pre_rwa pulses need a pre_rwa section with nu")
        nu, delta = pre_rwa.nu, pre_rwa.delta
    return PulseSpec(pc.axis, params, duration, pc.model, omega_eff, nu, delta)


def build_initial(cfg: RunConfig) -> HybridState:
    try:
        return HybridState.basis(cfg.initial.qubit, cfg.initial.nx, cfg.initial.ny, cfg.dims.x, cfg.dims.y)
    except InvalidArgumentError as exc:
        raise ConfigError(f"initial: {exc}") from None


def build_protocol(cfg: RunConfig):
    from . import protocol as pr

    if cfg.protocol is None:
        raise ConfigError("protocol: section missing")
    steps = []
    for i, s in enumerate(cfg.protocol.steps):
        try:
            if s.pulse is not None:
                pulse = build_pulse(s.pulse, cfg.pre_rwa)
                if isinstance(s.duration, SymbolicDuration):
                    dur = pr.PiTime(s.duration.t0) if s.duration.t0 is not None else pr.QuadraticFlipTime(s.duration.t_g)
                else:
                    dur = float(s.duration)
                steps.append(pr.PulseStep(pulse, dur, s.label))
            elif s.set_qubit is not None:
                steps.append(pr.SetQubit(s.set_qubit, s.label))
            else:
                steps.append(pr.CarrierRotation(s.rotation.theta, s.rotation.phi, s.label))
        except MoonsimError as exc:
            raise ConfigError(f"protocol.steps.{i}: {exc}") from None
    try:
        return pr.Protocol(
            (cfg.dims.x, cfg.dims.y),
            build_initial(cfg),
            tuple(steps),
            (cfg.protocol.target.M, cfg.protocol.target.N),
            cfg.guard,
        )
    except MoonsimError as exc:
        raise ConfigError(f"protocol: {exc}") from None
