"""Steady-state photon statistics of cascaded cavity QED systems.

An incoherently pumped single-emitter cavity (the source) drives a cavity
holding one or two emitters (the target) through a unidirectional cascade
coupling. The package builds the master-equation generator, integrates it to
the steady state with fixed-step RK4 and reports the equal-time correlations
g^(n)(0) of both cavities.
"""
from .errors import (
    ConfigError,
    DegenerateSteadyStateError,
    NumericalInstabilityError,
    UndefinedCorrelationError,
)
from .hilbert import (
    BosonMode,
    Operator,
    SubsystemLayout,
    TwoLevel,
    annihilation,
    build_jc_hamiltonian,
    embed,
    identity,
    sigma_minus,
)
from .integrator import DensityMatrix, EvolutionResult, evolve_to_steady_state, rk4_step, steady_state_nullspace
from .lindblad import (
    CascadeTerm,
    Dissipator,
    GeneratorSpec,
    apply_cascade,
    apply_dissipator,
    apply_generator,
    vectorized_superoperator,
)
from .observables import (
    CorrelationRecord,
    PhotonDistribution,
    expectation,
    g_n,
    photon_distribution,
    reference_gn,
    second_central_difference,
)
from .scenarios import (
    SweepPlan,
    SystemParams,
    build_cascaded,
    build_coherent_drive,
    build_incoherent_drive,
    run_sweep,
    transition_analysis,
)

__version__ = "0.1.0"
