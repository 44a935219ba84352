"""Self-check suite: analytic references and solver cross-validation at small cutoffs."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .hilbert import embed, identity, sigma_minus
from .integrator import DensityMatrix, evolve_to_steady_state, steady_state_nullspace
from .lindblad import apply_generator, vectorized_superoperator
from .observables import (
    fock_distribution,
    g_n_from_distribution,
    poisson_distribution,
    reference_gn,
    thermal_distribution,
)
from .scenarios import SystemParams, build_coherent_drive, build_scenario

__all__ = ["Check", "ORACLE_CASES", "oracle_gap", "run_checks"]

# scenario kind, emitters in the target, pump rate (ps^-1)
ORACLE_CASES = (
    ("cascaded", 1, 0.1),
    ("cascaded", 2, 0.1),
    ("coherent", 2, math.sqrt(0.05)),
    ("incoherent", 2, math.sqrt(0.05)),
)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _analytic() -> list[Check]:
    out = []
    p = thermal_distribution(0.5, 40)
    err = max(abs(g_n_from_distribution(p, n) - reference_gn("thermal", n)) / reference_gn("thermal", n) for n in range(2, 7))
    out.append(Check("thermal g^(n) = n!", err < 1e-4, f"max relative error {err:.2e}"))
    p = poisson_distribution(1.0, 20)
    err = max(abs(g_n_from_distribution(p, n) - 1.0) for n in range(2, 7))
    out.append(Check("coherent g^(n) = 1", err < 1e-6, f"max error {err:.2e}"))
    err = abs(g_n_from_distribution(fock_distribution(4, 10), 2) - reference_gn("fock", 2, 4))
    ok = reference_gn("fock", 2, 4) == 0.75 and err < 1e-10
    out.append(Check("Fock(4) g^(2) = 0.75", ok, f"moment path error {err:.2e}"))
    return out


def oracle_gap(kind: str, emitters: int, pump: float, cutoff: int) -> float:
    """Max-norm distance between the RK4 and null-space steady states."""
    field = "pump_s" if kind == "cascaded" else "pump_t"
    params = replace(SystemParams(n_emitters_target=emitters, cutoff_s=cutoff, cutoff_t=cutoff), **{field: pump})
    sc = build_scenario(kind, params)
    rk4 = evolve_to_steady_state(sc.spec, DensityMatrix.ground(sc.layout))
    ns = steady_state_nullspace(sc.spec, max_dim=sc.spec.dim)
    return float(np.max(np.abs(rk4.final_state.matrix - ns.matrix)))


def _oracles(cutoff: int = 2) -> list[Check]:
    out = []
    for kind, ne, pump in ORACLE_CASES:
        gap = oracle_gap(kind, ne, pump, cutoff)
        out.append(Check(f"RK4 vs null space, {kind} {ne}-TLS ({cutoff},{cutoff})", gap < 1e-6, f"max difference {gap:.2e}"))
    return out


def _generator_paths() -> list[Check]:
    sc = build_scenario("cascaded", SystemParams(n_emitters_target=1, cutoff_s=2, cutoff_t=2))
    n = sc.spec.dim
    rng = np.random.default_rng(7)
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = x @ x.conj().T
    rho /= np.trace(rho)
    direct = apply_generator(sc.spec, rho)
    via = (vectorized_superoperator(sc.spec) @ rho.reshape(-1, order="F")).reshape(n, n, order="F")
    err = float(np.max(np.abs(direct - via)))
    tr = abs(np.trace(direct))
    return [
        Check("direct generator vs vectorized superoperator", err < 1e-12, f"max difference {err:.2e}"),
        Check("generator is trace free", tr < 1e-12 * n, f"|Tr L rho| = {tr:.2e}"),
    ]


def _drive_identity() -> list[Check]:
    p = SystemParams(cutoff_t=4)
    bare = build_coherent_drive(replace(p, pump_t=0.0)).hamiltonian
    driven = build_coherent_drive(p).hamiltonian
    lay = bare.layout
    drive = sum(
        (embed(sigma_minus(), k, lay) + embed(sigma_minus(), k, lay).dag() for k in range(p.n_emitters_target)),
        0 * identity(lay),
    )
    err = float(np.max(np.abs(driven.matrix - (bare + p.pump_t * drive).matrix)))
    return [Check("displaced-field drive equals H_t + pump (s^+ + s^-)", err < 1e-12, f"max difference {err:.2e}")]


def run_checks() -> list[Check]:
    return _analytic() + _generator_paths() + _drive_identity() + _oracles()
