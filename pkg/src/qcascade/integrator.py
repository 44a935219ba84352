"""Fixed-step RK4 evolution to the steady state and a null-space oracle."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .errors import DegenerateSteadyStateError, NumericalInstabilityError
from .hilbert import SubsystemLayout
from .lindblad import (
    DEFAULT_SUPEROPERATOR_MAX_DIM,
    BlockGenerator,
    GeneratorSpec,
    apply_generator,
    excitation_blocks,
    vectorized_superoperator,
)

__all__ = [
    "DensityMatrix",
    "EvolutionResult",
    "StateView",
    "rk4_step",
    "evolve_to_steady_state",
    "propagate",
    "steady_state_nullspace",
    "DEFAULT_DT",
    "DEFAULT_RESIDUAL_TOL",
    "DEFAULT_MAX_TIME",
]

log = logging.getLogger(__name__)

DEFAULT_DT = 0.01  # ps
DEFAULT_RESIDUAL_TOL = 1e-10  # ps^-1, max-norm of d rho / dt
DEFAULT_MAX_TIME = 1e4  # ps

# Null spaces of superoperators up to this size are found by dense SVD.
_DENSE_NULLSPACE_LIMIT = 1024


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    layout: SubsystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.layout.dim, self.layout.dim):
            raise ValueError("density matrix does not match layout dimension")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def ground(cls, layout: SubsystemLayout) -> "DensityMatrix":
        """All emitters in the ground state, all modes in vacuum."""
        m = np.zeros((layout.dim, layout.dim), dtype=complex)
        m[0, 0] = 1.0
        return cls(layout, m)

    @classmethod
    def maximally_mixed(cls, layout: SubsystemLayout) -> "DensityMatrix":
        return cls(layout, np.eye(layout.dim, dtype=complex) / layout.dim)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(la.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def validate(self, tol: float = 1e-9, eig_tol: float = 1e-7) -> None:
        """Raise ValueError unless Hermitian, unit trace and positive within tolerance."""
        if self.hermiticity_residual() > tol:
            raise ValueError(f"not Hermitian: residual {self.hermiticity_residual():.3e}")
        if abs(self.trace() - 1.0) > tol:
            raise ValueError(f"trace {self.trace():.12f} differs from 1")
        if self.min_eigenvalue() < -eig_tol:
            raise ValueError(f"negative eigenvalue {self.min_eigenvalue():.3e}")


@dataclass
class EvolutionResult:
    final_state: DensityMatrix
    steps_taken: int
    residual: float
    converged: bool
    trace_drift: float
    time: float


class StateView:
    """Read-only view of the running state handed to evolution monitors.

    ``step_asymmetry`` is the Hermiticity residual of the latest RK4 update
    before its Hermitian part was taken (0 before the first step). The
    reduced backend stores one triangle only, so there it measures the
    imaginary parts that appeared on entries that must be real.
    """

    def __init__(self, rho: np.ndarray | None = None, packed: np.ndarray | None = None,
                 blocks: BlockGenerator | None = None, step_asymmetry: float = 0.0):
        self._rho, self._packed, self._blocks = rho, packed, blocks
        self.step_asymmetry = step_asymmetry

    def matrix(self) -> np.ndarray:
        if self._rho is not None:
            return self._rho
        return self._blocks.unpack(self._packed)

    def trace(self) -> complex:
        if self._rho is not None:
            return complex(np.trace(self._rho))
        return complex(self._packed[self._blocks.diagonal].sum())

    def hermiticity_residual(self) -> float:
        if self._rho is not None:
            return float(np.max(np.abs(self._rho - self._rho.conj().T)))
        v = self._packed
        return float(np.max(np.abs(v - v[self._blocks.transpose].conj())))

    def min_eigenvalue(self) -> float:
        if self._rho is not None:
            mats = [self._rho]
        else:
            mats = self._blocks.blocks(self._packed)
        return min(float(la.eigvalsh(0.5 * (m + m.conj().T))[0]) for m in mats)


Monitor = Callable[[int, float, StateView], None]


def _rk4_update(f, x, dt, k1):
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(spec: GeneratorSpec, rho: np.ndarray, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``d rho/dt = L rho``."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    rho = np.asarray(getattr(rho, "matrix", rho), dtype=complex)
    out = _rk4_update(lambda r: apply_generator(spec, r), rho, dt, apply_generator(spec, rho))
    if not np.all(np.isfinite(out)):
        raise NumericalInstabilityError(f"non-finite state after RK4 step with dt={dt}")
    return out


def evolve_to_steady_state(
    spec: GeneratorSpec,
    rho0: DensityMatrix | np.ndarray | None = None,
    dt: float = DEFAULT_DT,
    residual_tol: float = DEFAULT_RESIDUAL_TOL,
    max_time: float = DEFAULT_MAX_TIME,
    *,
    backend: str = "reduced",
    monitor: Monitor | None = None,
    monitor_every: int = 100,
) -> EvolutionResult:
    """Integrate with fixed-step RK4 until ``max|d rho/dt| < residual_tol``.

    Parameters
    ----------
    spec : GeneratorSpec
    rho0 : DensityMatrix or array, optional
        Initial state; the global ground state by default.
    dt, residual_tol, max_time : float
        Step (ps), stopping residual (ps^-1, max-norm) and time limit (ps).
        Hitting ``max_time`` returns ``converged=False`` rather than raising.
    backend : {"reduced", "block", "matrix"}
        ``"matrix"`` steps full density matrices through :func:`apply_generator`.
        ``"block"`` steps a packed vector through a sparse Liouvillian restricted
        to the excitation-number blocks when the generator and ``rho0`` allow it
        (full space otherwise). ``"reduced"`` additionally stores one entry per
        orbit of Hermitian conjugation and of exchanges of identical factors
        that leave the generator and ``rho0`` invariant; it needs a Hermitian
        ``rho0``. All three give the same trajectory up to round-off.
    monitor : callable, optional
        Called as ``monitor(step, time, view)`` at step 0, every
        ``monitor_every`` steps, and on the final state.

    The Hermitian part is restored after every full step; the trace is never
    renormalized, its largest excursion is reported as ``trace_drift``.
    """
    rho0 = _initial(spec, rho0, dt)

    stepper = _make_stepper(spec, rho0, backend)
    f = stepper.derivative
    x = stepper.pack(rho0)

    tr0 = stepper.trace(x)
    drift = 0.0
    asymmetry = 0.0
    t = 0.0
    step = 0
    max_steps = int(np.ceil(max_time / dt))
    while True:
        k1 = f(x)
        residual = float(np.max(np.abs(k1)))
        if not np.isfinite(residual):
            raise NumericalInstabilityError(
                f"non-finite derivative at t={t:.4g} ps (dt={dt} ps too large for the rates?)"
            )
        converged = residual < residual_tol
        done = converged or step >= max_steps
        if monitor is not None and (step % monitor_every == 0 or done):
            view = stepper.view(x)
            view.step_asymmetry = asymmetry
            monitor(step, t, view)
        if done:
            break
        raw = _rk4_update(f, x, dt, k1)
        if monitor is not None:
            asymmetry = stepper.asymmetry(raw)
        x = stepper.hermitize(raw)
        step += 1
        t = step * dt
        drift = max(drift, abs(stepper.trace(x) - tr0))

    if not converged:
        log.warning("no steady state after %.4g ps: residual %.3e", t, residual)
    return EvolutionResult(
        final_state=DensityMatrix(spec.layout, stepper.unpack(x)),
        steps_taken=step,
        residual=residual,
        converged=converged,
        trace_drift=float(drift),
        time=t,
    )


def propagate(
    spec: GeneratorSpec,
    rho0: DensityMatrix | np.ndarray | None,
    dt: float,
    duration: float,
    *,
    backend: str = "reduced",
) -> DensityMatrix:
    """State after ``round(duration / dt)`` RK4 steps, Hermitian part restored each step."""
    rho0 = _initial(spec, rho0, dt)
    stepper = _make_stepper(spec, rho0, backend)
    x = stepper.pack(rho0)
    for _ in range(int(round(duration / dt))):
        x = stepper.hermitize(_rk4_update(stepper.derivative, x, dt, stepper.derivative(x)))
    out = stepper.unpack(x)
    if not np.all(np.isfinite(out)):
        raise NumericalInstabilityError(f"non-finite state after propagation with dt={dt}")
    return DensityMatrix(spec.layout, out)


def _initial(spec: GeneratorSpec, rho0, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if rho0 is None:
        rho0 = DensityMatrix.ground(spec.layout)
    rho0 = np.asarray(getattr(rho0, "matrix", rho0), dtype=complex)
    if rho0.shape != (spec.dim, spec.dim):
        raise ValueError("initial state does not match the generator dimension")
    return rho0


def _make_stepper(spec: GeneratorSpec, rho0: np.ndarray, backend: str):
    if backend == "matrix":
        return _MatrixBackend(spec)
    if backend == "block":
        return _BlockBackend(spec, rho0)
    if backend == "reduced":
        return _ReducedBackend(spec, rho0)
    raise ValueError(f"unknown backend {backend!r}")


class _MatrixBackend:
    def __init__(self, spec: GeneratorSpec):
        self.spec = spec

    def derivative(self, rho: np.ndarray) -> np.ndarray:
        return apply_generator(self.spec, rho)

    def pack(self, rho: np.ndarray) -> np.ndarray:
        return rho.copy()

    def unpack(self, rho: np.ndarray) -> np.ndarray:
        return rho

    def hermitize(self, rho: np.ndarray) -> np.ndarray:
        return 0.5 * (rho + rho.conj().T)

    def asymmetry(self, rho: np.ndarray) -> float:
        return float(np.max(np.abs(rho - rho.conj().T)))

    def trace(self, rho: np.ndarray) -> complex:
        return np.trace(rho)

    def view(self, rho: np.ndarray) -> StateView:
        return StateView(rho=rho)


class _BlockBackend:
    def __init__(self, spec: GeneratorSpec, rho0: np.ndarray):
        self.gen = _block_generator(spec, rho0)
        self.derivative = self.gen.matrix.dot
        self.pack = self.gen.pack
        self.unpack = self.gen.unpack

    def hermitize(self, v: np.ndarray) -> np.ndarray:
        return 0.5 * (v + v[self.gen.transpose].conj())

    def asymmetry(self, v: np.ndarray) -> float:
        return float(np.max(np.abs(v - v[self.gen.transpose].conj())))

    def trace(self, v: np.ndarray) -> complex:
        return v[self.gen.diagonal].sum()

    def view(self, v: np.ndarray) -> StateView:
        return StateView(packed=v, blocks=self.gen)


class _ReducedBackend:
    """Symmetry-orbit representatives of the packed block state.

    Uses Hermiticity and every exchange of two identical factors that leaves
    both the generator and the initial state invariant.
    """

    def __init__(self, spec: GeneratorSpec, rho0: np.ndarray):
        if np.max(np.abs(rho0 - rho0.conj().T)) > 1e-12:
            raise ValueError("the reduced backend needs a Hermitian initial state")
        self.gen = _block_generator(spec, rho0)
        maps = [(self.gen.transpose, True)]
        x0 = self.gen.pack(rho0)
        for perm in _exchange_permutations(spec.layout):
            if np.any(self.gen.labels[perm] != self.gen.labels):
                continue
            pm = self.gen.basis_map(perm)
            if np.max(np.abs(x0[pm] - x0)) <= 1e-12 and self.gen.is_symmetry(pm, False):
                maps.append((pm, False))
        self.exchanges = len(maps) - 1
        self.fold = self.gen.symmetry_fold(maps)
        self.derivative = self.fold.apply
        diag = self.gen.rows[self.fold.reps] == self.gen.cols[self.fold.reps]
        self._diag = np.flatnonzero(diag)
        # multiplicity of each diagonal representative in the full trace
        self._weight = np.bincount(
            self.fold.expand[self.gen.diagonal], minlength=self.fold.reps.size
        )[self._diag]
        self._real = self.fold.real

    def pack(self, rho: np.ndarray) -> np.ndarray:
        return self.fold.reduce(self.gen.pack(rho))

    def unpack(self, y: np.ndarray) -> np.ndarray:
        return self.gen.unpack(self.fold.restore(y))

    def hermitize(self, y: np.ndarray) -> np.ndarray:
        y[self._real] = y[self._real].real
        return y

    def asymmetry(self, y: np.ndarray) -> float:
        imag = np.abs(y[self._real].imag)
        return float(imag.max()) if imag.size else 0.0

    def trace(self, y: np.ndarray) -> complex:
        return complex(np.dot(self._weight, y[self._diag]))

    def view(self, y: np.ndarray) -> StateView:
        return StateView(packed=self.fold.restore(y), blocks=self.gen)


def _exchange_permutations(layout) -> list[np.ndarray]:
    """Basis permutations swapping two factors of the same kind."""
    idx = np.arange(layout.dim).reshape(layout.dims)
    out = []
    for a in range(len(layout)):
        for b in range(a + 1, len(layout)):
            if layout.factors[a] == layout.factors[b]:
                out.append(np.swapaxes(idx, a, b).ravel())
    return out


def _block_generator(spec: GeneratorSpec, rho0: np.ndarray) -> BlockGenerator:
    labels = excitation_blocks(spec)
    if labels is not None:
        off_block = labels[:, None] != labels[None, :]
        if np.any(np.abs(rho0[off_block]) > 0):
            labels = None
    return BlockGenerator(spec, labels)


def steady_state_nullspace(
    spec: GeneratorSpec,
    max_dim: int = DEFAULT_SUPEROPERATOR_MAX_DIM,
    null_tol: float = 1e-9,
) -> DensityMatrix:
    """Stationary state from the null space of the vectorized generator.

    Independent of the time-stepping path. Singular values (dense) or
    eigenvalues (shift-invert Arnoldi) below ``null_tol`` times the largest
    matrix element count as zero; more than one zero raises
    :class:`DegenerateSteadyStateError`.
    """
    n = spec.dim
    L = vectorized_superoperator(spec, max_dim=max_dim)
    scale = max(1.0, float(np.max(np.abs(L.data)))) if L.nnz else 1.0
    tol = null_tol * scale
    if n * n <= _DENSE_NULLSPACE_LIMIT:
        _, s, vh = la.svd(L.toarray())
        zero = int(np.sum(s < tol))
        if zero != 1:
            raise DegenerateSteadyStateError(zero)
        vec = vh[-1].conj()
    else:
        k = min(6, n * n - 2)
        v0 = np.ones(n * n, dtype=complex)
        vals, vecs = spla.eigs(L.tocsc(), k=k, sigma=tol, which="LM", v0=v0)
        zero_mask = np.abs(vals) < tol
        zero = int(zero_mask.sum())
        if zero != 1:
            if zero == k:
                raise DegenerateSteadyStateError(
                    zero, f"null space of the generator has dimension >= {zero}"
                )
            raise DegenerateSteadyStateError(zero)
        vec = vecs[:, np.flatnonzero(zero_mask)[0]]
    rho = vec.reshape(n, n, order="F")
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(spec.layout, rho)

