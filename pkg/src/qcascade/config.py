"""Flat ``key = value`` run configuration."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigError
from .integrator import DEFAULT_DT, DEFAULT_MAX_TIME, DEFAULT_RESIDUAL_TOL
from .observables import DEFAULT_N_MAX
from .scenarios import CUTOFF_CAP, CUTOFF_START, CUTOFF_STEP, SCENARIOS, SweepPlan, SystemParams, log_grid

__all__ = ["RunConfig", "parse_config", "format_config", "apply_overrides"]


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams = field(default_factory=SystemParams)
    scenario: str = "cascaded"
    pump_min: float = 1e-3
    pump_max: float = 10.0
    points: int = 30
    escalate: bool = True
    cutoff_start: int = CUTOFF_START
    cutoff_step: int = CUTOFF_STEP
    cutoff_cap: int = CUTOFF_CAP
    dt: float = DEFAULT_DT
    residual_tol: float = DEFAULT_RESIDUAL_TOL
    max_time: float = DEFAULT_MAX_TIME
    n_max: int = DEFAULT_N_MAX
    output: str = "."
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario: expected one of {', '.join(SCENARIOS)}, got {self.scenario!r}")
        if not 0 < self.pump_min < self.pump_max:
            raise ConfigError("pump_min/pump_max: need 0 < pump_min < pump_max")
        if self.points < 2:
            raise ConfigError("points: need at least 2 grid points")
        for name in ("dt", "residual_tol", "max_time"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be > 0")
        if self.n_max < 2:
            raise ConfigError("n_max: must be >= 2")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        if self.cutoff_start < 1 or self.cutoff_step < 1 or self.cutoff_cap < self.cutoff_start:
            raise ConfigError("cutoff_start/cutoff_step/cutoff_cap: invalid escalation schedule")

    def grid(self) -> tuple[float, ...]:
        return log_grid(self.pump_min, self.pump_max, self.points)

    def plan(self, pumps=None, scenario: str | None = None) -> SweepPlan:
        return SweepPlan(
            pumps=tuple(self.grid() if pumps is None else pumps),
            scenario=scenario or self.scenario,
            n_max=self.n_max,
            cutoffs=None if self.escalate else (self.params.cutoff_s, self.params.cutoff_t),
            cutoff_start=self.cutoff_start,
            cutoff_step=self.cutoff_step,
            cutoff_cap=self.cutoff_cap,
            dt=self.dt,
            residual_tol=self.residual_tol,
            max_time=self.max_time,
            workers=self.workers,
        )


_PARAM_KEYS = {f.name: f.type for f in fields(SystemParams)}
_RUN_KEYS = {f.name: f.type for f in fields(RunConfig) if f.name != "params"}
KEYS = tuple(_PARAM_KEYS) + tuple(_RUN_KEYS)


def _kind(annotation: str) -> str:
    return str(annotation).split()[0].strip("'\"")


def _convert(key: str, text: str):
    kind = _kind(_PARAM_KEYS.get(key) or _RUN_KEYS[key])
    if kind == "float":
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {text!r}") from None
        if not math.isfinite(value):
            raise ConfigError(f"{key}: expected a finite number, got {text!r}")
        return value
    if kind == "int":
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if kind == "bool":
        low = text.lower()
        if low in ("true", "false"):
            return low == "true"
        raise ConfigError(f"{key}: expected true or false, got {text!r}")
    return text


def _build(values: dict) -> RunConfig:
    params = {k: v for k, v in values.items() if k in _PARAM_KEYS}
    run = {k: v for k, v in values.items() if k in _RUN_KEYS}
    return RunConfig(params=SystemParams(**params), **run)


def _pairs(text: str, source: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}line {lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = (s.strip() for s in line.partition("="))
        yield where, key, value


def _collect(pairs, values: dict) -> dict:
    for where, key, value in pairs:
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if not value:
            raise ConfigError(f"{where}: {key}: missing value")
        try:
            values[key] = _convert(key, value)
            _build(values)
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    return values


def parse_config(text: str, source: str = "") -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Omitted keys keep their defaults."""
    prefix = f"{source}: " if source else ""
    return _build(_collect(_pairs(text, prefix), {}))


def apply_overrides(config: RunConfig, assignments: list[str]) -> RunConfig:
    """Apply ``key=value`` strings (the ``--set`` flags) on top of ``config``."""
    values = _flatten(config)
    pairs = []
    for item in assignments:
        key, sep, value = (s.strip() for s in item.partition("="))
        if not sep:
            raise ConfigError(f"--set {item!r}: expected key=value")
        pairs.append((f"--set {item!r}", key, value))
    return _build(_collect(pairs, values))


def _flatten(config: RunConfig) -> dict:
    values = asdict(config.params)
    values.update({k: getattr(config, k) for k in _RUN_KEYS})
    return values


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(config: RunConfig) -> str:
    """Every key with its value; ``parse_config`` of the result gives ``config`` back."""
    values = _flatten(config)
    return "".join(f"{k} = {_render(values[k])}\n" for k in KEYS)


def with_params(config: RunConfig, **changes) -> RunConfig:
    return replace(config, params=replace(config.params, **changes))
