"""Composite Hilbert spaces of two-level emitters and truncated cavity modes.

Basis conventions used throughout the package:

* factors are combined with a row-major Kronecker product, so the first factor
  is the slowest-varying index;
* a two-level system has ground = index 0 and excited = index 1;
* a boson mode with ``cutoff`` N carries the Fock states 0..N (dimension N+1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence, Union

import numpy as np

__all__ = [
    "TwoLevel",
    "BosonMode",
    "SubsystemLayout",
    "Operator",
    "annihilation",
    "sigma_minus",
    "identity",
    "embed",
    "build_jc_hamiltonian",
    "excitation_numbers",
]

# Dense complex128 operators beyond this size would exceed a few GB each.
MAX_DIMENSION = 20_000

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class TwoLevel:
    """A two-level emitter (ground, excited)."""

    @property
    def dim(self) -> int:
        return 2


@dataclass(frozen=True)
class BosonMode:
    """A bosonic mode truncated to photon numbers ``0..cutoff``."""

    cutoff: int

    def __post_init__(self):
        if not isinstance(self.cutoff, (int, np.integer)) or isinstance(self.cutoff, bool):
            raise TypeError(f"cutoff must be an integer, got {self.cutoff!r}")
        if self.cutoff < 1:
            raise ValueError(f"boson cutoff must be >= 1, got {self.cutoff}")

    @property
    def dim(self) -> int:
        return int(self.cutoff) + 1


FactorKind = Union[TwoLevel, BosonMode]


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered tensor factors of a composite space.

    >>> SubsystemLayout((TwoLevel(), BosonMode(2))).dim
    6
    """

    factors: tuple[FactorKind, ...]
    dims: tuple[int, ...] = field(init=False, repr=False)
    dim: int = field(init=False, repr=False)

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("a layout needs at least one factor")
        for f in factors:
            if not isinstance(f, (TwoLevel, BosonMode)):
                raise TypeError(f"unknown factor kind {f!r}")
        dims = tuple(f.dim for f in factors)
        total = math.prod(dims)
        if total > MAX_DIMENSION:
            raise ValueError(
                f"layout dimension {total} exceeds the dense-operator limit {MAX_DIMENSION}"
            )
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "dim", total)

    def __len__(self) -> int:
        return len(self.factors)

    def check_slot(self, slot: int) -> None:
        if not 0 <= slot < len(self.factors):
            raise IndexError(f"slot {slot} out of range for {len(self.factors)} factors")


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense complex matrix acting on ``layout``."""

    layout: SubsystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.layout.dim
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match layout dimension {d}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def dag(self) -> "Operator":
        return Operator(self.layout, self.matrix.conj().T)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) < tol)

    def _same_layout(self, other: "Operator") -> None:
        if other.layout != self.layout:
            raise ValueError("operators act on different layouts")

    def __matmul__(self, other: "Operator") -> "Operator":
        self._same_layout(other)
        return Operator(self.layout, self.matrix @ other.matrix)

    def __add__(self, other: "Operator") -> "Operator":
        self._same_layout(other)
        return Operator(self.layout, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._same_layout(other)
        return Operator(self.layout, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.layout, scalar * self.matrix)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(self.layout, -self.matrix)


def annihilation(cutoff: int) -> Operator:
    """Photon annihilation operator with ``M[n-1, n] = sqrt(n)``."""
    mode = BosonMode(cutoff)
    mat = np.diag(np.sqrt(np.arange(1, mode.dim, dtype=float)), 1).astype(complex)
    return Operator(SubsystemLayout((mode,)), mat)


def sigma_minus() -> Operator:
    """Two-level lowering operator, excited (1) -> ground (0)."""
    mat = np.array([[0, 1], [0, 0]], dtype=complex)
    return Operator(SubsystemLayout((TwoLevel(),)), mat)


def identity(layout: SubsystemLayout) -> Operator:
    return Operator(layout, np.eye(layout.dim, dtype=complex))


def embed(op: Operator, slot: int, layout: SubsystemLayout) -> Operator:
    """Lift a single-factor operator to ``I x ... x op x ... x I``."""
    layout.check_slot(slot)
    if op.dim != layout.dims[slot]:
        raise ValueError(
            f"operator dimension {op.dim} does not match factor {slot} "
            f"of dimension {layout.dims[slot]}"
        )
    left = math.prod(layout.dims[:slot])
    right = math.prod(layout.dims[slot + 1:])
    mat = np.kron(np.kron(np.eye(left), op.matrix), np.eye(right))
    return Operator(layout, mat)


def build_jc_hamiltonian(
    g: float,
    cavity_slot: int,
    emitter_slots: Sequence[int],
    layout: SubsystemLayout,
    cavity_operator: Operator | None = None,
) -> Operator:
    """Resonant Jaynes-Cummings coupling ``g * sum_j (a^+ s_j^- + s_j^+ a)``.

    Parameters
    ----------
    g : float
        Coupling rate in ps^-1 (hbar = 1).
    cavity_slot, emitter_slots :
        Factor indices of the cavity mode and of the emitters it couples to.
    layout : SubsystemLayout
    cavity_operator : Operator, optional
        Replacement for the embedded annihilation operator ``a``. Used to build
        displaced-field Hamiltonians; defaults to the bare ladder operator.
    """
    emitter_slots = list(emitter_slots)
    if not emitter_slots:
        raise ValueError("at least one emitter slot is required")
    if len(set(emitter_slots)) != len(emitter_slots) or cavity_slot in emitter_slots:
        raise ValueError("cavity and emitter slots must be distinct")
    if not np.isreal(g):
        raise TypeError("coupling g must be real")
    layout.check_slot(cavity_slot)
    cavity = layout.factors[cavity_slot]
    if not isinstance(cavity, BosonMode):
        raise ValueError(f"slot {cavity_slot} is not a boson mode")
    for s in emitter_slots:
        layout.check_slot(s)
        if not isinstance(layout.factors[s], TwoLevel):
            raise ValueError(f"slot {s} is not a two-level emitter")

    if cavity_operator is None:
        cavity_operator = embed(annihilation(cavity.cutoff), cavity_slot, layout)
    a = cavity_operator.matrix
    sm = sigma_minus()
    h = np.zeros((layout.dim, layout.dim), dtype=complex)
    for s in emitter_slots:
        sig = embed(sm, s, layout).matrix
        h += a.conj().T @ sig + sig.conj().T @ a
    return Operator(layout, float(np.real(g)) * h)


def excitation_numbers(layout: SubsystemLayout) -> np.ndarray:
    """Total excitation count (emitter level + photon number) per basis state."""
    return reduce(
        lambda acc, d: (acc[:, None] + np.arange(d)[None, :]).ravel(),
        layout.dims,
        np.zeros(1, dtype=np.int64),
    )
