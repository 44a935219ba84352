"""The three excitation configurations and pump-rate sweeps over them.

* ``cascaded``: an incoherently pumped single-emitter source cavity whose
  output feeds a one- or two-emitter target cavity.
* ``coherent``: the target alone, driven through a displaced cavity field.
* ``incoherent``: the target alone, each emitter pumped incoherently.

Factor order is ``(e_s, p_s, e_t1, [e_t2], p_t)`` for the cascaded layout and
``(e_t1, [e_t2], p_t)`` for the target-only layouts.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, UndefinedCorrelationError
from .hilbert import (
    BosonMode,
    SubsystemLayout,
    TwoLevel,
    annihilation,
    build_jc_hamiltonian,
    embed,
    identity,
    sigma_minus,
)
from .integrator import (
    DEFAULT_DT,
    DEFAULT_MAX_TIME,
    DEFAULT_RESIDUAL_TOL,
    DensityMatrix,
    evolve_to_steady_state,
)
from .lindblad import CascadeTerm, Dissipator, GeneratorSpec
from .observables import (
    DEFAULT_N_MAX,
    CorrelationRecord,
    correlations,
    photon_distribution,
    second_central_difference,
)

__all__ = [
    "SCENARIOS",
    "SystemParams",
    "Scenario",
    "SweepPlan",
    "Transition",
    "build_cascaded",
    "build_coherent_drive",
    "build_incoherent_drive",
    "build_scenario",
    "reverse_cascade",
    "steady_state_records",
    "solve_point",
    "run_sweep",
    "sweep_with_ladder",
    "log_grid",
    "transition_analysis",
]

log = logging.getLogger(__name__)

SCENARIOS = ("cascaded", "coherent", "incoherent")

CUTOFF_START = 6
CUTOFF_STEP = 2
CUTOFF_CAP = 14
GUARD_RELATIVE = 0.01
# g^(n) pairs both below this are treated as equal (orders above the cutoff are exactly 0)
GUARD_ABSOLUTE = 1e-12


@dataclass(frozen=True)
class SystemParams:
    """Rates in ps^-1. Defaults are the reference cascaded parameter set."""

    g_s: float = 0.1
    g_t: float = 0.1
    gamma_s: float = 0.02
    gamma_t: float = 0.5
    kappa_s: float = 0.1
    kappa_t: float = 0.005
    n_emitters_target: int = 2
    cutoff_s: int = 10
    cutoff_t: int = 10
    pump_s: float = 0.1
    pump_t: float = math.sqrt(0.5 * 0.1)

    RATES = ("g_s", "g_t", "gamma_s", "gamma_t", "kappa_s", "kappa_t", "pump_s", "pump_t")

    def __post_init__(self):
        for name in self.RATES:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ConfigError(f"{name}: expected a number, got {value!r}")
            if not math.isfinite(value):
                raise ConfigError(f"{name}: must be finite, got {value}")
            if value < 0:
                raise ConfigError(f"{name}: rates must be >= 0, got {value}")
            object.__setattr__(self, name, float(value))
        for name in ("cutoff_s", "cutoff_t"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name}: expected an integer, got {value!r}")
            if value < 1:
                raise ConfigError(f"{name}: cutoff must be >= 1, got {value}")
            object.__setattr__(self, name, int(value))
        if self.n_emitters_target not in (1, 2):
            raise ConfigError(
                f"n_emitters_target: must be 1 or 2, got {self.n_emitters_target!r}"
            )

    def with_cutoffs(self, cutoff_s: int, cutoff_t: int) -> "SystemParams":
        return replace(self, cutoff_s=cutoff_s, cutoff_t=cutoff_t)


@dataclass(frozen=True, eq=False)
class Scenario:
    """A generator together with the slots of the cavities it reports on."""

    kind: str
    spec: GeneratorSpec
    cavities: dict[str, int]

    @property
    def layout(self) -> SubsystemLayout:
        return self.spec.layout


def _cascaded_layout(p: SystemParams) -> SubsystemLayout:
    return SubsystemLayout(
        (TwoLevel(), BosonMode(p.cutoff_s))
        + (TwoLevel(),) * p.n_emitters_target
        + (BosonMode(p.cutoff_t),)
    )


def _target_layout(p: SystemParams) -> SubsystemLayout:
    return SubsystemLayout((TwoLevel(),) * p.n_emitters_target + (BosonMode(p.cutoff_t),))


def build_cascaded(params: SystemParams) -> GeneratorSpec:
    """Source cavity cascaded into the target, one cascade term per target emitter.

    Dissipators: source pump (sigma_s^+), source emitter decay, both cavity
    losses and the decay of every target emitter. Cascade strength is
    ``sqrt(kappa_s * gamma_t)`` with ``J_s = a_s`` and ``J_t = sigma_t,i^-``.
    """
    p = params
    lay = _cascaded_layout(p)
    ne = p.n_emitters_target
    targets = list(range(2, 2 + ne))
    cav_t = 2 + ne

    def lift(op, slot):
        return embed(op, slot, lay)

    sm_s = lift(sigma_minus(), 0)
    a_s = lift(annihilation(p.cutoff_s), 1)
    a_t = lift(annihilation(p.cutoff_t), cav_t)
    sm_t = [lift(sigma_minus(), k) for k in targets]

    h = build_jc_hamiltonian(p.g_s, 1, [0], lay) + build_jc_hamiltonian(p.g_t, cav_t, targets, lay)
    dissipators = [
        Dissipator(sm_s.dag(), p.pump_s),
        Dissipator(sm_s, p.gamma_s),
        Dissipator(a_s, p.kappa_s),
        Dissipator(a_t, p.kappa_t),
    ] + [Dissipator(s, p.gamma_t) for s in sm_t]
    strength = math.sqrt(p.kappa_s * p.gamma_t)
    cascades = [CascadeTerm(a_s, s, strength) for s in sm_t]
    return GeneratorSpec(h, dissipators, cascades)


def build_coherent_drive(params: SystemParams) -> GeneratorSpec:
    """Target alone, driven by displacing ``a_t -> a_t + (pump_t / g_t) I`` in its Hamiltonian.

    The substitution gives ``H_t + pump_t * sum_j (sigma_j^+ + sigma_j^-)``.
    Cavity loss and emitter decay keep the undisplaced operators.
    """
    p = params
    if p.g_t == 0 and p.pump_t != 0:
        raise ConfigError("coherent drive needs g_t > 0: the displacement pump_t / g_t is undefined")
    lay = _target_layout(p)
    ne = p.n_emitters_target
    a_t = embed(annihilation(p.cutoff_t), ne, lay)
    alpha = p.pump_t / p.g_t if p.pump_t else 0.0
    displaced = a_t + alpha * identity(lay)
    h = build_jc_hamiltonian(p.g_t, ne, list(range(ne)), lay, cavity_operator=displaced)
    dissipators = [Dissipator(a_t, p.kappa_t)] + [
        Dissipator(embed(sigma_minus(), k, lay), p.gamma_t) for k in range(ne)
    ]
    return GeneratorSpec(h, dissipators, [])


def build_incoherent_drive(params: SystemParams) -> GeneratorSpec:
    """Target alone with an incoherent pump ``sigma^+`` of rate ``pump_t`` on every emitter."""
    p = params
    lay = _target_layout(p)
    ne = p.n_emitters_target
    a_t = embed(annihilation(p.cutoff_t), ne, lay)
    sms = [embed(sigma_minus(), k, lay) for k in range(ne)]
    h = build_jc_hamiltonian(p.g_t, ne, list(range(ne)), lay)
    dissipators = (
        [Dissipator(s.dag(), p.pump_t) for s in sms]
        + [Dissipator(a_t, p.kappa_t)]
        + [Dissipator(s, p.gamma_t) for s in sms]
    )
    return GeneratorSpec(h, dissipators, [])


def build_scenario(kind: str, params: SystemParams) -> Scenario:
    ne = params.n_emitters_target
    if kind == "cascaded":
        return Scenario(kind, build_cascaded(params), {"source": 1, "target": 2 + ne})
    if kind == "coherent":
        return Scenario(kind, build_coherent_drive(params), {"target": ne})
    if kind == "incoherent":
        return Scenario(kind, build_incoherent_drive(params), {"target": ne})
    raise ConfigError(f"unknown scenario {kind!r}; expected one of {', '.join(SCENARIOS)}")


def reverse_cascade(spec: GeneratorSpec) -> GeneratorSpec:
    """Same generator with the Hamiltonian and every cascade strength negated."""
    return GeneratorSpec(
        -spec.hamiltonian,
        list(spec.dissipators),
        [CascadeTerm(c.source_jump, c.target_jump, -c.strength) for c in spec.cascades],
    )


def _pump_field(kind: str) -> str:
    return "pump_s" if kind == "cascaded" else "pump_t"


def steady_state_records(
    scenario: Scenario,
    rho,
    pump_rate: float,
    cutoffs: tuple[int, int],
    n_max: int = DEFAULT_N_MAX,
    converged: bool = True,
) -> list[CorrelationRecord]:
    """One record per reported cavity. Orders below the mean-photon floor are left out."""
    out = []
    for system, slot in scenario.cavities.items():
        dist = photon_distribution(rho, scenario.layout, slot, system)
        try:
            g = correlations(dist, n_max)
        except UndefinedCorrelationError as exc:
            log.warning("%s at pump %.6g: %s", system, pump_rate, exc)
            g = {}
        out.append(
            CorrelationRecord(
                pump_rate=float(pump_rate),
                system=system,
                mean_n=dist.mean,
                g=g,
                cutoff_s=cutoffs[0],
                cutoff_t=cutoffs[1],
                converged=converged,
                distribution=dist.probabilities,
            )
        )
    return out


@dataclass(frozen=True)
class SweepPlan:
    """Pump grid and numerical settings of a sweep.

    ``cutoffs`` fixes the truncation and disables escalation; otherwise each
    point starts at ``(cutoff_start,)*2`` and rises by ``cutoff_step`` until
    every g^(n) moves by less than ``guard`` (relative) or ``cutoff_cap`` is hit.
    """

    pumps: tuple[float, ...]
    scenario: str = "cascaded"
    n_max: int = DEFAULT_N_MAX
    cutoffs: tuple[int, int] | None = None
    cutoff_start: int = CUTOFF_START
    cutoff_step: int = CUTOFF_STEP
    cutoff_cap: int = CUTOFF_CAP
    guard: float = GUARD_RELATIVE
    dt: float = DEFAULT_DT
    residual_tol: float = DEFAULT_RESIDUAL_TOL
    max_time: float = DEFAULT_MAX_TIME
    workers: int = 1

    def __post_init__(self):
        pumps = tuple(float(x) for x in self.pumps)
        if not pumps:
            raise ConfigError("pump grid is empty")
        if any(not math.isfinite(x) or x <= 0 for x in pumps):
            raise ConfigError("pump rates must be positive and finite")
        if any(b <= a for a, b in zip(pumps, pumps[1:])):
            raise ConfigError("pump grid must be strictly increasing")
        object.__setattr__(self, "pumps", pumps)
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.n_max < 2:
            raise ConfigError("n_max must be >= 2")
        if self.cutoffs is not None:
            cs = tuple(int(c) for c in self.cutoffs)
            if len(cs) != 2 or min(cs) < 1:
                raise ConfigError("fixed cutoffs must be two integers >= 1")
            object.__setattr__(self, "cutoffs", cs)
        if not 1 <= self.cutoff_start <= self.cutoff_cap or self.cutoff_step < 1:
            raise ConfigError("invalid cutoff escalation schedule")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def log_grid(low: float, high: float, points: int) -> tuple[float, ...]:
    if not 0 < low < high or points < 2:
        raise ConfigError("log grid needs 0 < low < high and at least 2 points")
    return tuple(float(x) for x in np.geomspace(low, high, points))


def solve_point(
    kind: str,
    params: SystemParams,
    pump: float,
    cutoffs: tuple[int, int],
    plan: SweepPlan,
) -> list[CorrelationRecord]:
    """Steady-state records of one scenario at one pump rate and truncation."""
    p = replace(params.with_cutoffs(*cutoffs), **{_pump_field(kind): pump})
    scenario = build_scenario(kind, p)
    result = evolve_to_steady_state(
        scenario.spec,
        DensityMatrix.ground(scenario.layout),
        dt=plan.dt,
        residual_tol=plan.residual_tol,
        max_time=plan.max_time,
    )
    return steady_state_records(
        scenario, result.final_state, pump, cutoffs, plan.n_max, result.converged
    )


def _stable(low: list[CorrelationRecord], high: list[CorrelationRecord], n_max: int, tol: float) -> bool:
    for a, b in zip(low, high):
        for n in range(2, n_max + 1):
            if n not in a.g or n not in b.g:
                return False
            ga, gb = a.g[n], b.g[n]
            if max(abs(ga), abs(gb)) <= GUARD_ABSOLUTE:
                continue
            if abs(gb - ga) >= tol * abs(ga):
                return False
    return True


def _sweep_point(args) -> tuple[list[CorrelationRecord], dict[int, list[CorrelationRecord]]]:
    kind, params, pump, plan = args
    if plan.cutoffs is not None:
        records = solve_point(kind, params, pump, plan.cutoffs, plan)
        return records, {plan.cutoffs[0]: records}
    c = plan.cutoff_start
    low = solve_point(kind, params, pump, (c, c), plan)
    ladder = {c: low}
    while c + plan.cutoff_step <= plan.cutoff_cap:
        high = solve_point(kind, params, pump, (c + plan.cutoff_step,) * 2, plan)
        ladder[c + plan.cutoff_step] = high
        if _stable(low, high, plan.n_max, plan.guard):
            log.info("pump %.6g accepted at cutoff %d", pump, c)
            return low, ladder
        c += plan.cutoff_step
        low = high
    log.warning("pump %.6g: g^(n) not stable at the cutoff cap %d", pump, c)
    for r in low:
        r.converged = False
    return low, ladder


def sweep_with_ladder(
    plan: SweepPlan, params: SystemParams
) -> tuple[list[CorrelationRecord], dict[float, dict[int, list[CorrelationRecord]]]]:
    """Like :func:`run_sweep`, also returning every truncation tried per pump value.

    The second item maps pump rate to ``{cutoff: records}``; with escalation the
    accepted records sit at cutoff ``c`` and their check at ``c + cutoff_step``.
    """
    jobs = [(plan.scenario, params, pump, plan) for pump in plan.pumps]
    if plan.workers == 1 or len(jobs) == 1:
        results = [_sweep_point(j) for j in jobs]
    else:
        workers = min(plan.workers, len(jobs), os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    records = [r for chunk, _ in results for r in chunk]
    ladders = {pump: ladder for pump, (_, ladder) in zip(plan.pumps, results)}
    return sorted(records, key=lambda r: (r.pump_rate, r.system)), ladders


def run_sweep(plan: SweepPlan, params: SystemParams) -> list[CorrelationRecord]:
    """Steady-state records for every pump value, sorted by ``(pump_rate, system)``.

    Points are independent; with ``plan.workers > 1`` they run in separate
    processes. Results do not depend on the worker count.
    """
    return sweep_with_ladder(plan, params)[0]


@dataclass(frozen=True)
class Transition:
    """Where the second differences at g^(2) of source and target cross.

    ``kind`` is ``"crossing"``, ``"none"`` (no sign change of target minus
    source on the grid) or ``"degenerate"`` (the difference vanishes everywhere).
    ``pump`` is the first crossing, linearly interpolated in the pump rate.
    """

    kind: str
    pump: float | None
    pumps: tuple[float, ...]
    source_dd: tuple[float, ...]
    target_dd: tuple[float, ...]
    crossings: tuple[float, ...] = field(default=())


def _dd2(record: CorrelationRecord) -> float:
    try:
        return second_central_difference(record.g, 2)
    except KeyError:
        return math.nan


def transition_analysis(
    records_source: Sequence[CorrelationRecord],
    records_target: Sequence[CorrelationRecord],
    zero_tol: float = 1e-14,
) -> Transition:
    """Crossing of the g^(2) second differences of source and target over a shared grid.

    Points where either g^(2) or g^(3) is undefined are carried as NaN and
    skipped; a crossing is only interpolated between neighbouring defined points.
    """
    src = sorted(records_source, key=lambda r: r.pump_rate)
    tgt = sorted(records_target, key=lambda r: r.pump_rate)
    pumps = [r.pump_rate for r in src]
    if not pumps or pumps != [r.pump_rate for r in tgt]:
        raise ValueError("source and target records must share one nonempty pump grid")
    s = np.array([_dd2(r) for r in src])
    t = np.array([_dd2(r) for r in tgt])
    base = dict(pumps=tuple(pumps), source_dd=tuple(s.tolist()), target_dd=tuple(t.tolist()))
    ok = np.isfinite(s) & np.isfinite(t)
    x = np.asarray(pumps)[ok]
    d = (t - s)[ok]
    if d.size == 0 or np.all(np.abs(d) <= zero_tol):
        return Transition("degenerate", None, **base)

    crossings = []
    sign = np.where(np.abs(d) <= zero_tol, 0, np.sign(d))
    for i in range(len(d) - 1):
        if sign[i] == 0:
            if i == 0 or sign[i - 1] != 0:
                crossings.append(float(x[i]))
        elif sign[i] * sign[i + 1] < 0:
            crossings.append(float(x[i] + (x[i + 1] - x[i]) * d[i] / (d[i] - d[i + 1])))
    if sign[-1] == 0 and len(d) > 1 and sign[-2] != 0:
        crossings.append(float(x[-1]))
    if not crossings:
        return Transition("none", None, **base)
    return Transition("crossing", crossings[0], crossings=tuple(crossings), **base)
