"""Expectation values, photon statistics and equal-time correlations g^(n)(0)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import gammaln

from .errors import UndefinedCorrelationError
from .hilbert import BosonMode, Operator, SubsystemLayout

__all__ = [
    "PhotonDistribution",
    "CorrelationRecord",
    "expectation",
    "reduced_density_matrix",
    "photon_distribution",
    "factorial_moment",
    "g_n",
    "g_n_from_distribution",
    "g_n_direct",
    "correlations",
    "reference_gn",
    "second_central_difference",
    "thermal_distribution",
    "poisson_distribution",
    "fock_distribution",
    "MEAN_PHOTON_FLOOR",
    "DEFAULT_N_MAX",
]

MEAN_PHOTON_FLOOR = 1e-9
DEFAULT_N_MAX = 10


@dataclass(frozen=True)
class PhotonDistribution:
    """Fock-state occupations ``p_0..p_cutoff`` of one cavity."""

    probabilities: np.ndarray
    subsystem: str = "target"

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("need occupations for at least photon numbers 0 and 1")
        if np.any(p < -1e-9):
            raise ValueError(f"negative occupation {p.min():.3e}")
        if abs(p.sum() - 1.0) > 1e-8:
            raise ValueError(f"occupations sum to {p.sum():.12f}, not 1")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @property
    def cutoff(self) -> int:
        return self.probabilities.size - 1

    @property
    def mean(self) -> float:
        p = self.probabilities
        return float(np.dot(np.arange(p.size), p))

    def clipped(self) -> np.ndarray:
        """Occupations with round-off negatives set to zero, for reporting."""
        return np.clip(self.probabilities, 0.0, None)


@dataclass
class CorrelationRecord:
    """Steady-state statistics of one cavity at one pump rate."""

    pump_rate: float
    system: str
    mean_n: float
    g: dict[int, float]
    cutoff_s: int
    cutoff_t: int
    converged: bool = True
    distribution: np.ndarray | None = field(default=None, repr=False, compare=False)


def _matrix(rho) -> np.ndarray:
    return np.asarray(getattr(rho, "matrix", rho))


def expectation(op: Operator, rho) -> complex:
    """``Tr(op rho)``."""
    m = _matrix(rho)
    if m.shape != op.matrix.shape:
        raise ValueError(f"operator shape {op.matrix.shape} does not match state {m.shape}")
    # Tr(A B) = sum_ij A_ij B_ji
    return complex(np.sum(op.matrix * m.T))


def reduced_density_matrix(rho, layout: SubsystemLayout, slot: int) -> np.ndarray:
    """Partial trace over every factor except ``slot``."""
    layout.check_slot(slot)
    m = _matrix(rho)
    if m.shape != (layout.dim, layout.dim):
        raise ValueError("state does not match layout")
    dims = layout.dims
    left = math.prod(dims[:slot])
    right = math.prod(dims[slot + 1:])
    t = m.reshape(left, dims[slot], right, left, dims[slot], right)
    return np.einsum("aibajb->ij", t)


def photon_distribution(rho, layout: SubsystemLayout, cavity_slot: int, subsystem: str = "target") -> PhotonDistribution:
    layout.check_slot(cavity_slot)
    if not isinstance(layout.factors[cavity_slot], BosonMode):
        raise ValueError(f"slot {cavity_slot} is not a boson mode")
    reduced = reduced_density_matrix(rho, layout, cavity_slot)
    return PhotonDistribution(np.real(np.diag(reduced)), subsystem)


def factorial_moment(p: np.ndarray, n: int) -> float:
    """``<a^+n a^n> = sum_m p_m m!/(m-n)!``; orders above the cutoff give 0."""
    p = np.asarray(p, dtype=float)
    m = np.arange(p.size)
    if n >= p.size:
        return 0.0
    # falling factorial m (m-1) ... (m-n+1), zero for m < n
    falling = np.ones(p.size)
    for k in range(n):
        falling *= np.clip(m - k, 0, None)
    return float(np.dot(p, falling))


def _as_probabilities(p) -> np.ndarray:
    if isinstance(p, PhotonDistribution):
        return p.probabilities
    return np.asarray(p, dtype=float)


def g_n_from_distribution(p, n: int, floor: float = MEAN_PHOTON_FLOOR) -> float:
    if n < 2:
        raise ValueError("correlation order must be >= 2")
    p = _as_probabilities(p)
    mean = factorial_moment(p, 1)
    if mean < floor:
        raise UndefinedCorrelationError(
            f"mean photon number {mean:.3e} below floor {floor:.1e}; g^({n}) undefined"
        )
    return factorial_moment(p, n) / mean ** n


def g_n(rho, layout: SubsystemLayout, cavity_slot: int, n: int, floor: float = MEAN_PHOTON_FLOOR) -> float:
    """Normalized ``g^(n)(0) = <a^+n a^n> / <a^+ a>^n`` from factorial moments."""
    dist = photon_distribution(rho, layout, cavity_slot)
    return g_n_from_distribution(dist, n, floor)


def g_n_direct(rho, layout: SubsystemLayout, cavity_slot: int, n: int) -> float:
    """Same quantity by explicit operator products on the reduced cavity state."""
    reduced = reduced_density_matrix(rho, layout, cavity_slot)
    d = reduced.shape[0]
    a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)
    an = np.linalg.matrix_power(a, n)
    num = np.trace(an.T @ an @ reduced).real
    mean = np.trace(a.T @ a @ reduced).real
    return num / mean ** n


def correlations(dist, n_max: int = DEFAULT_N_MAX, floor: float = MEAN_PHOTON_FLOOR) -> dict[int, float]:
    """``{n: g^(n)}`` for ``n = 2..n_max``."""
    p = _as_probabilities(dist)
    return {n: g_n_from_distribution(p, n, floor) for n in range(2, n_max + 1)}


def reference_gn(kind: str, n: int, photons: int | None = None) -> float:
    """Closed-form g^(n)(0) of Fock, coherent and thermal light.

    ``kind`` is ``"fock"`` (requires ``photons`` = N), ``"coherent"`` or
    ``"thermal"``. Fock light gives N!/(N^n (N-n)!), zero once n > N.
    """
    if n < 1:
        raise ValueError("correlation order must be >= 1")
    kind = kind.lower()
    if kind == "coherent":
        return 1.0
    if kind == "thermal":
        return float(math.factorial(n))
    if kind == "fock":
        if photons is None or photons < 1:
            raise ValueError("Fock reference needs a photon number >= 1")
        if n > photons:
            return 0.0
        return math.factorial(photons) / (photons ** n * math.factorial(photons - n))
    raise ValueError(f"unknown reference kind {kind!r}")


def second_central_difference(g_values: Mapping[int, float], n: int) -> float:
    """``g^(n+1) - 2 g^(n) + g^(n-1)`` with unit spacing.

    ``g^(1)`` is taken as 1 when absent, since the normalized first-order
    correlation at zero delay is identically one.
    """
    values = dict(g_values)
    values.setdefault(1, 1.0)
    missing = [k for k in (n - 1, n, n + 1) if k not in values]
    if missing:
        raise KeyError(f"second difference at n={n} needs orders {missing}")
    return values[n + 1] - 2.0 * values[n] + values[n - 1]


def thermal_distribution(nbar: float, cutoff: int) -> np.ndarray:
    """Bose-Einstein occupations ``nbar^n / (1+nbar)^(n+1)``, renormalized on 0..cutoff."""
    n = np.arange(cutoff + 1)
    p = nbar ** n / (1.0 + nbar) ** (n + 1)
    return p / p.sum()


def poisson_distribution(nbar: float, cutoff: int) -> np.ndarray:
    """Coherent-state occupations, renormalized on 0..cutoff."""
    p = np.zeros(cutoff + 1)
    if nbar <= 0:
        p[0] = 1.0
        return p
    n = np.arange(cutoff + 1)
    p = np.exp(n * np.log(nbar) - nbar - gammaln(n + 1))
    return p / p.sum()


def fock_distribution(photons: int, cutoff: int) -> np.ndarray:
    if not 0 <= photons <= cutoff:
        raise ValueError("photon number outside 0..cutoff")
    p = np.zeros(cutoff + 1)
    p[photons] = 1.0
    return p
