import math
from dataclasses import replace

import numpy as np
import pytest

import qcascade.scenarios as scn
from qcascade.errors import ConfigError
from qcascade.hilbert import embed, sigma_minus
from qcascade.integrator import evolve_to_steady_state
from qcascade.observables import CorrelationRecord, reduced_density_matrix
from qcascade.scenarios import (
    SweepPlan,
    SystemParams,
    build_cascaded,
    build_coherent_drive,
    build_incoherent_drive,
    build_scenario,
    log_grid,
    reverse_cascade,
    run_sweep,
    steady_state_records,
    sweep_with_ladder,
    transition_analysis,
)

from conftest import small_scenario


def test_defaults_are_the_reference_parameters():
    p = SystemParams()
    assert (p.g_s, p.g_t, p.gamma_s, p.gamma_t, p.kappa_s, p.kappa_t) == (0.1, 0.1, 0.02, 0.5, 0.1, 0.005)
    assert p.pump_t == pytest.approx(0.2236, abs=1e-4)


@pytest.mark.parametrize("change", [{"kappa_s": -1}, {"cutoff_t": 0}, {"n_emitters_target": 3},
                                    {"gamma_t": float("nan")}, {"g_s": "0.1"}])
def test_invalid_params(change):
    with pytest.raises(ConfigError):
        SystemParams(**change)


def test_cascaded_dimension_and_terms():
    spec = build_cascaded(SystemParams())
    assert spec.dim == 2 * 11 * 4 * 11 == 968
    # source pump, source decay, two cavity losses, one decay per target emitter
    assert len(spec.dissipators) == 6
    assert len(spec.cascades) == 2
    assert all(c.strength == pytest.approx(math.sqrt(0.1 * 0.5)) for c in spec.cascades)
    assert all(c.strength ** 2 <= 0.1 * 0.5 * (1 + 1e-12) for c in spec.cascades)
    one = build_cascaded(SystemParams(n_emitters_target=1, cutoff_s=3, cutoff_t=3))
    assert len(one.dissipators) == 5 and len(one.cascades) == 1


def test_zero_source_loss_means_zero_cascade_strength():
    spec = build_cascaded(SystemParams(kappa_s=0.0, cutoff_s=2, cutoff_t=2))
    assert all(c.strength == 0 for c in spec.cascades)


def test_decoupled_target_matches_target_alone():
    coupled = small_scenario("cascaded", emitters=2, cutoff=2, kappa_s=0.0)
    alone = small_scenario("incoherent", emitters=2, cutoff=2, pump_t=0.0)
    a = evolve_to_steady_state(coupled.spec).final_state
    b = evolve_to_steady_state(alone.spec).final_state
    ra = reduced_density_matrix(a, coupled.layout, coupled.cavities["target"])
    rb = reduced_density_matrix(b, alone.layout, alone.cavities["target"])
    assert np.max(np.abs(ra - rb)) < 1e-8


def test_coherent_drive_hamiltonian_identity():
    p = SystemParams(cutoff_t=3)
    bare = build_coherent_drive(replace(p, pump_t=0.0))
    driven = build_coherent_drive(p)
    lay = bare.layout
    drive = sum((embed(sigma_minus(), k, lay).matrix + embed(sigma_minus(), k, lay).dag().matrix
                 for k in range(2)))
    assert np.array_equal(driven.hamiltonian.matrix, bare.hamiltonian.matrix + p.pump_t * drive) or \
        np.max(np.abs(driven.hamiltonian.matrix - bare.hamiltonian.matrix - p.pump_t * drive)) < 1e-15
    assert driven.hamiltonian.is_hermitian()
    # plain target JC: cavity loss and emitter decays, no pump
    assert len(bare.dissipators) == 3 and not bare.cascades


def test_coherent_drive_needs_coupling():
    with pytest.raises(ConfigError):
        build_coherent_drive(SystemParams(g_t=0.0, cutoff_t=2))
    build_coherent_drive(SystemParams(g_t=0.0, pump_t=0.0, cutoff_t=2))


def test_incoherent_drive_terms_and_vacuum_limit():
    spec = build_incoherent_drive(SystemParams(cutoff_t=2))
    assert len(spec.dissipators) == 2 + 1 + 2
    sc = small_scenario("incoherent", emitters=2, cutoff=2, pump_t=0.0)
    rho = evolve_to_steady_state(sc.spec).final_state.matrix
    assert abs(rho[0, 0] - 1) < 1e-8


def test_strong_incoherent_pump_gives_thermal_light():
    sc = small_scenario("incoherent", emitters=1, cutoff=10, pump_t=10.0)
    rho = evolve_to_steady_state(sc.spec).final_state
    rec = steady_state_records(sc, rho, 10.0, (10, 10), 3)[0]
    assert abs(rec.g[2] - 2) < 0.01


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        build_scenario("squeezed", SystemParams())


def test_reversed_cascade_leaves_statistics_unchanged():
    sc = small_scenario("cascaded", emitters=2, cutoff=3)
    flipped = reverse_cascade(sc.spec)
    assert all(c.strength < 0 for c in flipped.cascades)
    a = evolve_to_steady_state(sc.spec).final_state
    b = evolve_to_steady_state(flipped).final_state
    ra = steady_state_records(sc, a, 0.1, (3, 3))
    rb = steady_state_records(replace(sc, spec=flipped), b, 0.1, (3, 3))
    for x, y in zip(ra, rb):
        assert abs(x.g[2] - y.g[2]) < 1e-8


def test_records_leave_out_undefined_orders():
    sc = small_scenario("incoherent", emitters=1, cutoff=2, pump_t=0.0)
    rho = evolve_to_steady_state(sc.spec).final_state
    rec = steady_state_records(sc, rho, 1.0, (2, 2))[0]
    assert rec.g == {} and rec.mean_n < 1e-9


def test_sweep_plan_validation():
    with pytest.raises(ConfigError):
        SweepPlan(pumps=())
    with pytest.raises(ConfigError):
        SweepPlan(pumps=(0.2, 0.1))
    with pytest.raises(ConfigError):
        SweepPlan(pumps=(0.0, 0.1))
    with pytest.raises(ConfigError):
        SweepPlan(pumps=(0.1,), scenario="other")
    assert len(log_grid(1e-3, 10, 30)) == 30


def test_sweep_sorted_deterministic_and_worker_independent():
    params = SystemParams(n_emitters_target=1)
    plan = SweepPlan(pumps=(0.05, 0.2, 1.0), cutoffs=(2, 2), n_max=3)
    a = run_sweep(plan, params)
    b = run_sweep(replace(plan, workers=2), params)
    assert [(r.pump_rate, r.system) for r in a] == sorted((r.pump_rate, r.system) for r in a)
    assert len(a) == 6
    for x, y in zip(a, b):
        assert (x.pump_rate, x.system, x.mean_n, x.g) == (y.pump_rate, y.system, y.mean_n, y.g)


def _fake_solver(stable_from):
    def solve(kind, params, pump, cutoffs, plan):
        c = cutoffs[0]
        # alternates by 10% between successive cutoffs until stable_from
        wobble = 0.0 if c >= stable_from else 0.1 * ((c // 2) % 2)
        g = {n: 1.0 + wobble for n in range(2, plan.n_max + 1)}
        return [CorrelationRecord(pump, "target", 0.5, g, c, c, True)]
    return solve


def test_escalation_accepts_first_stable_cutoff(monkeypatch):
    monkeypatch.setattr(scn, "solve_point", _fake_solver(stable_from=12))
    plan = SweepPlan(pumps=(0.1,), n_max=3)
    records, ladders = sweep_with_ladder(plan, SystemParams())
    (rec,) = records
    # values 1.1, 1.0, 1.1, 1.0, 1.0 at cutoffs 6..14
    assert rec.converged and rec.cutoff_s == 12
    assert sorted(ladders[0.1]) == [6, 8, 10, 12, 14]


def test_escalation_flags_points_unstable_at_the_cap(monkeypatch):
    monkeypatch.setattr(scn, "solve_point", _fake_solver(stable_from=99))
    (rec,) = run_sweep(SweepPlan(pumps=(0.1,), n_max=3), SystemParams())
    assert not rec.converged and rec.cutoff_s == 14


def _records(pumps, dd, system):
    return [CorrelationRecord(p, system, 1.0, {2: 1.0, 3: d + 1.0}, 2, 2) for p, d in zip(pumps, dd)]


def test_transition_synthetic_crossing():
    pumps = np.linspace(0.5, 1.7, 7)
    tr = transition_analysis(_records(pumps, 1 - pumps, "source"), _records(pumps, pumps - 1, "target"))
    assert tr.kind == "crossing" and tr.pump == pytest.approx(1.0)
    assert tr.source_dd[0] == pytest.approx(0.5)


def test_transition_identical_records_are_degenerate():
    pumps = [0.1, 0.2, 0.3]
    recs = _records(pumps, [0.1, -0.2, 0.3], "source")
    tr = transition_analysis(recs, recs)
    assert tr.kind == "degenerate" and tr.pump is None


def test_transition_without_sign_change():
    pumps = [0.1, 0.2, 0.3]
    tr = transition_analysis(_records(pumps, [0, 0, 0], "source"), _records(pumps, [1, 2, 3], "target"))
    assert tr.kind == "none" and tr.pump is None


def test_transition_needs_a_shared_grid():
    with pytest.raises(ValueError):
        transition_analysis(_records([0.1, 0.2], [0, 0], "s"), _records([0.1, 0.3], [0, 0], "t"))


def test_transition_skips_undefined_points():
    pumps = [0.1, 0.2, 0.3, 0.4]
    src = _records(pumps, [1, 1, 1, 1], "source")
    src[0].g = {}
    tr = transition_analysis(src, _records(pumps, [5, 2, 0, 0], "target"))
    assert math.isnan(tr.source_dd[0])
    assert tr.kind == "crossing" and tr.pump == pytest.approx(0.25)
