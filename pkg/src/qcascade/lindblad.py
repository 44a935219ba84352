"""Master-equation generator: Hamiltonian part, local dissipators, cascade terms.

Dissipators follow the convention ``D[sqrt(r) J] rho = r (2 J rho J^+ - {J^+ J, rho})``,
so a jump at rate ``r`` empties a level at rate ``2 r``. A cascade term of
strength ``s`` feeding ``J_s`` (source) into ``J_t`` (target) contributes

    -s ( [J_t^+, J_s rho] + [rho J_s^+, J_t] ).

Only source-to-target coupling exists; there is no back-action term.

Three independent evaluation paths are provided: :func:`apply_generator`
(left/right sparse-times-dense products), :func:`vectorized_superoperator`
(Kronecker assembly on the full column-stacked space) and
:class:`BlockGenerator` (pairwise assembly restricted to an invariant
block-diagonal support, used by the integrator, optionally folded over
symmetry orbits).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .hilbert import HERMITIAN_TOL, Operator, SubsystemLayout, excitation_numbers

__all__ = [
    "Dissipator",
    "CascadeTerm",
    "GeneratorSpec",
    "apply_dissipator",
    "apply_cascade",
    "apply_generator",
    "vectorized_superoperator",
    "excitation_blocks",
    "BlockGenerator",
    "FoldedGenerator",
    "DEFAULT_SUPEROPERATOR_MAX_DIM",
]

DEFAULT_SUPEROPERATOR_MAX_DIM = 64


@dataclass(frozen=True, eq=False)
class Dissipator:
    jump: Operator
    rate: float

    def __post_init__(self):
        rate = float(self.rate)
        if not np.isfinite(rate) or rate < 0:
            raise ValueError(f"dissipator rate must be finite and >= 0, got {self.rate!r}")
        object.__setattr__(self, "rate", rate)

    @cached_property
    def _jump(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.jump.matrix)

    @cached_property
    def _jump_dag(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.jump.matrix.conj().T)

    @cached_property
    def _number(self) -> sp.csr_matrix:
        return (self._jump_dag @ self._jump).tocsr()


@dataclass(frozen=True, eq=False)
class CascadeTerm:
    """Unidirectional coupling of ``source_jump`` into ``target_jump``."""

    source_jump: Operator
    target_jump: Operator
    strength: float

    def __post_init__(self):
        if self.source_jump.layout != self.target_jump.layout:
            raise ValueError("cascade jumps must share a layout")
        strength = float(self.strength)
        if not np.isfinite(strength):
            raise ValueError("cascade strength must be finite")
        object.__setattr__(self, "strength", strength)

    @cached_property
    def _ops(self) -> tuple[sp.csr_matrix, ...]:
        js = sp.csr_matrix(self.source_jump.matrix)
        jt = sp.csr_matrix(self.target_jump.matrix)
        return js, js.conj().T.tocsr(), jt, jt.conj().T.tocsr()


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """Full right-hand side ``d rho / dt`` of a Markovian master equation."""

    hamiltonian: Operator
    dissipators: tuple[Dissipator, ...] = ()
    cascades: tuple[CascadeTerm, ...] = ()
    layout: SubsystemLayout = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "dissipators", tuple(self.dissipators))
        object.__setattr__(self, "cascades", tuple(self.cascades))
        layout = self.hamiltonian.layout
        for d in self.dissipators:
            if d.jump.layout != layout:
                raise ValueError("dissipator acts on a different layout than the Hamiltonian")
        for c in self.cascades:
            if c.source_jump.layout != layout:
                raise ValueError("cascade term acts on a different layout than the Hamiltonian")
        if not self.hamiltonian.is_hermitian(HERMITIAN_TOL):
            raise ValueError("Hamiltonian is not Hermitian")
        object.__setattr__(self, "layout", layout)

    @property
    def dim(self) -> int:
        return self.layout.dim

    @cached_property
    def _hamiltonian(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.hamiltonian.matrix)

    def operators(self) -> list[Operator]:
        ops = [self.hamiltonian]
        ops += [d.jump for d in self.dissipators]
        for c in self.cascades:
            ops += [c.source_jump, c.target_jump]
        return ops


def _check_square(spec_dim: int, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.shape != (spec_dim, spec_dim):
        raise ValueError(f"density matrix shape {rho.shape} does not match dimension {spec_dim}")
    return rho


def _right(m: np.ndarray, op: sp.csr_matrix) -> np.ndarray:
    # m @ op for dense m and sparse op, without densifying op
    return np.asarray((op.T @ m.T).T)


def apply_dissipator(d: Dissipator, rho: np.ndarray) -> np.ndarray:
    """``rate * (2 J rho J^+ - J^+ J rho - rho J^+ J)``."""
    rho = _check_square(d.jump.dim, rho)
    j, jd, num = d._jump, d._jump_dag, d._number
    out = 2.0 * _right(j @ rho, jd) - num @ rho - _right(rho, num)
    return d.rate * out


def apply_cascade(c: CascadeTerm, rho: np.ndarray) -> np.ndarray:
    rho = _check_square(c.source_jump.dim, rho)
    js, jsd, jt, jtd = c._ops
    left = js @ rho  # J_s rho
    right = _right(rho, jsd)  # rho J_s^+
    out = jtd @ left - _right(left, jtd) + _right(right, jt) - jt @ right
    return -c.strength * out


def apply_generator(spec: GeneratorSpec, rho: np.ndarray) -> np.ndarray:
    """Evaluate ``d rho / dt`` by sparse left/right products.

    ``rho`` need not be Hermitian; Runge-Kutta stages pass intermediate
    matrices straight through.
    """
    rho = _check_square(spec.dim, rho)
    h = spec._hamiltonian
    out = -1j * (h @ rho - _right(rho, h))
    for d in spec.dissipators:
        out += apply_dissipator(d, rho)
    for c in spec.cascades:
        out += apply_cascade(c, rho)
    return out


def _generator_terms(spec: GeneratorSpec):
    """Yield ``(coef, A, B)`` with the generator equal to ``sum coef * A rho B``.

    ``None`` stands for the identity.
    """
    h = spec._hamiltonian
    yield -1j, h, None
    yield 1j, None, h
    for d in spec.dissipators:
        if d.rate == 0.0:
            continue
        yield 2.0 * d.rate, d._jump, d._jump_dag
        yield -d.rate, d._number, None
        yield -d.rate, None, d._number
    for c in spec.cascades:
        if c.strength == 0.0:
            continue
        js, jsd, jt, jtd = c._ops
        s = c.strength
        yield -s, (jtd @ js).tocsr(), None
        yield s, js, jtd
        yield -s, None, (jsd @ jt).tocsr()
        yield s, jt, jsd


def vectorized_superoperator(
    spec: GeneratorSpec, max_dim: int = DEFAULT_SUPEROPERATOR_MAX_DIM
) -> sp.csr_matrix:
    """Sparse Liouvillian acting on column-stacked ``vec(rho)``.

    Uses ``vec(A rho B) = (B^T kron A) vec(rho)``. Refuses layouts with
    ``dim > max_dim`` since the result has ``dim**2`` rows.
    """
    n = spec.dim
    if n > max_dim:
        raise ValueError(
            f"superoperator for dim={n} exceeds the cap max_dim={max_dim} "
            f"({n * n} x {n * n}); pass a larger max_dim to override"
        )
    eye = sp.identity(n, dtype=complex, format="csr")
    total = sp.csr_matrix((n * n, n * n), dtype=complex)
    for coef, a, b in _generator_terms(spec):
        a = eye if a is None else a
        b = eye if b is None else b
        total = total + coef * sp.kron(b.T, a, format="csr")
    total.sum_duplicates()
    return total


def _shift(op: sp.csr_matrix, labels: np.ndarray) -> int | None:
    """Uniform label change ``labels[row] - labels[col]`` of ``op``, or None."""
    coo = op.tocoo()
    mask = np.abs(coo.data) > 0
    if not mask.any():
        return 0
    diff = np.unique(labels[coo.row[mask]] - labels[coo.col[mask]])
    return int(diff[0]) if diff.size == 1 else None


def excitation_blocks(spec: GeneratorSpec) -> np.ndarray | None:
    """Excitation-number labels if the generator conserves ``N(bra) - N(ket)``.

    Returns the per-basis-state excitation count when every term maps a
    block-diagonal density matrix (in total excitation number) to a
    block-diagonal one, otherwise None.
    """
    labels = excitation_numbers(spec.layout)
    if _shift(spec._hamiltonian, labels) != 0:
        return None
    for d in spec.dissipators:
        if d.rate > 0 and _shift(d._jump, labels) is None:
            return None
    for c in spec.cascades:
        if c.strength == 0:
            continue
        js, _, jt, _ = c._ops
        qs, qt = _shift(js, labels), _shift(jt, labels)
        if qs is None or qt is None or qs != qt:
            return None
    return labels


@dataclass(frozen=True, eq=False)
class FoldedGenerator:
    """Generator on symmetry-orbit representatives of a packed state.

    For a symmetric packed state ``x``, ``(L x)[reps] = direct @ y +
    mirrored @ conj(y)`` with ``y = x[reps]``; ``x = y[expand]`` conjugated
    where ``flip``. Representatives in ``real`` are forced real by symmetry.
    """

    reps: np.ndarray
    expand: np.ndarray
    flip: np.ndarray
    real: np.ndarray
    direct: sp.csr_matrix
    mirrored: sp.csr_matrix

    def apply(self, y: np.ndarray) -> np.ndarray:
        return self.direct @ y + self.mirrored @ y.conj()

    def reduce(self, x: np.ndarray) -> np.ndarray:
        return x[self.reps]

    def restore(self, y: np.ndarray) -> np.ndarray:
        x = y[self.expand]
        x[self.flip] = x[self.flip].conj()
        return x


class BlockGenerator:
    """Liouvillian restricted to density matrices that are block diagonal in ``labels``.

    Block ``b`` holds the basis states with the ``b``-th distinct label; the
    packed vector stores each block column-stacked, blocks in label order.
    With constant labels this is the full column-stacked space.
    """

    def __init__(self, spec: GeneratorSpec, labels: np.ndarray | None = None):
        n = spec.dim
        labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels)
        if labels.shape != (n,):
            raise ValueError("one label per basis state is required")
        self.spec = spec
        self.labels = labels
        values, block = np.unique(labels, return_inverse=True)
        sizes = np.bincount(block)
        local = np.empty(n, dtype=np.int64)
        for b in range(len(values)):
            local[block == b] = np.arange(sizes[b])
        offsets = np.concatenate(([0], np.cumsum(sizes.astype(np.int64) ** 2)))
        self._block, self._local, self._sizes, self._offsets = block, local, sizes, offsets
        self.size = int(offsets[-1])
        self._members = [np.flatnonzero(block == b) for b in range(len(values))]

        rows, cols = self._support_indices()
        self.rows, self.cols = rows, cols
        self.diagonal = np.flatnonzero(rows == cols)
        self.transpose = self.position(cols, rows)
        self.matrix = self._assemble()

    def position(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        b = self._block[i]
        if np.any(b != self._block[j]):
            raise ValueError("element lies outside the block-diagonal support")
        return self._offsets[b] + self._local[i] + self._sizes[b] * self._local[j]

    def _support_indices(self) -> tuple[np.ndarray, np.ndarray]:
        rows = np.empty(self.size, dtype=np.int64)
        cols = np.empty(self.size, dtype=np.int64)
        for b, members in enumerate(self._members):
            m = len(members)
            sl = slice(self._offsets[b], self._offsets[b + 1])
            rows[sl] = np.tile(members, m)
            cols[sl] = np.repeat(members, m)
        return rows, cols

    def _entries_by_block(self, op: sp.csr_matrix | None, side: str):
        # For A rho: entries (out_row, in_row) grouped by block of in_row.
        # For rho B: entries (in_col, out_col) grouped by block of in_col.
        n = self.spec.dim
        if op is None:
            idx = np.arange(n)
            inner, outer, val = idx, idx, np.ones(n, dtype=complex)
        else:
            coo = op.tocoo()
            keep = coo.data != 0
            r, c, val = coo.row[keep], coo.col[keep], coo.data[keep]
            inner, outer = (c, r) if side == "left" else (r, c)
        blk = self._block[inner]
        order = np.argsort(blk, kind="stable")
        blk, inner, outer, val = blk[order], inner[order], outer[order], val[order]
        bounds = np.searchsorted(blk, np.arange(len(self._sizes) + 1))
        return [
            (inner[bounds[b]:bounds[b + 1]], outer[bounds[b]:bounds[b + 1]], val[bounds[b]:bounds[b + 1]])
            for b in range(len(self._sizes))
        ]

    def _assemble(self) -> sp.csr_matrix:
        data, out_pos, in_pos = [], [], []
        for coef, a, b in _generator_terms(self.spec):
            left = self._entries_by_block(a, "left")
            right = self._entries_by_block(b, "right")
            for (i_in, i_out, av), (j_in, j_out, bv) in zip(left, right):
                if i_in.size == 0 or j_in.size == 0:
                    continue
                ii_out = np.repeat(i_out, j_in.size)
                jj_out = np.tile(j_out, i_in.size)
                if np.any(self._block[ii_out] != self._block[jj_out]):
                    raise ValueError("generator does not preserve the block-diagonal support")
                data.append(coef * np.outer(av, bv).ravel())
                out_pos.append(self.position(ii_out, jj_out))
                in_pos.append(self.position(np.repeat(i_in, j_in.size), np.tile(j_in, i_in.size)))
        mat = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(out_pos), np.concatenate(in_pos))),
            shape=(self.size, self.size),
        )
        mat.sum_duplicates()
        mat.eliminate_zeros()
        return mat

    def basis_map(self, perm: np.ndarray) -> np.ndarray:
        """Packed-position map induced by the basis permutation ``perm``."""
        perm = np.asarray(perm)
        if np.any(self.labels[perm] != self.labels):
            raise ValueError("basis permutation mixes excitation blocks")
        return self.position(perm[self.rows], perm[self.cols])

    def is_symmetry(self, position_map: np.ndarray, conj: bool, tol: float = 1e-12) -> bool:
        """Whether ``M[map p, map q] == M[p, q]`` (complex-conjugated if ``conj``)."""
        m = self.matrix.tocoo()
        moved = sp.csr_matrix(
            (m.data, (position_map[m.row], position_map[m.col])), shape=m.shape
        )
        target = self.matrix.conj() if conj else self.matrix
        diff = moved - target
        return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= tol

    def symmetry_fold(self, maps: Sequence[tuple[np.ndarray, bool]]) -> "FoldedGenerator":
        """Restrict the generator to one representative per symmetry orbit.

        ``maps`` are involutive packed-position maps ``(perm, conj)``; a state
        obeying ``x[perm p] = x[p]`` (or its conjugate when ``conj``) for all
        of them is stored by orbit representatives only. Each map must be a
        symmetry of the generator (see :meth:`is_symmetry`).
        """
        n = self.size
        idx = np.arange(n)
        if maps:
            edges = np.concatenate([np.asarray(pm) for pm, _ in maps])
            graph = sp.csr_matrix(
                (np.ones(edges.size), (np.tile(idx, len(maps)), edges)), shape=(n, n)
            )
            _, comp = connected_components(graph, directed=False)
        else:
            comp = idx
        rep = np.full(comp.max() + 1, n, dtype=np.int64)
        np.minimum.at(rep, comp, idx)
        reps = rep[comp]

        # flip[p]: x[p] == conj(x[rep]); propagate along the maps until stable
        known = idx == reps
        flip = np.zeros(n, dtype=bool)
        real = np.zeros(n, dtype=bool)
        changed = True
        while changed:
            changed = False
            for pm, c in maps:
                pm = np.asarray(pm)
                src = known & ~known[pm]
                dst = pm[src]
                flip[dst] = flip[src] ^ c
                known[dst] = True
                changed |= bool(src.any())
        for pm, c in maps:
            pm = np.asarray(pm)
            clash = flip[np.asarray(pm)] != (flip ^ c)
            real[reps[clash]] = True

        order = np.unique(reps)
        slot = np.full(n, -1, dtype=np.int64)
        slot[order] = np.arange(order.size)
        expand = slot[reps]
        sub = self.matrix[order].tocoo()
        cf = flip[sub.col]
        shape = (order.size, order.size)
        direct = sp.csr_matrix((sub.data[~cf], (sub.row[~cf], expand[sub.col[~cf]])), shape=shape)
        mirrored = sp.csr_matrix((sub.data[cf], (sub.row[cf], expand[sub.col[cf]])), shape=shape)
        direct.sum_duplicates()
        mirrored.sum_duplicates()
        return FoldedGenerator(order, expand, flip, np.flatnonzero(real[order]), direct, mirrored)

    def pack(self, rho: np.ndarray) -> np.ndarray:
        rho = _check_square(self.spec.dim, rho)
        vec = rho[self.rows, self.cols].astype(complex)
        outside = np.abs(rho).sum() - np.abs(vec).sum()
        if outside > 1e-12 * max(1.0, np.abs(rho).sum()):
            raise ValueError("density matrix has weight outside the block-diagonal support")
        return vec

    def unpack(self, vec: np.ndarray) -> np.ndarray:
        n = self.spec.dim
        rho = np.zeros((n, n), dtype=complex)
        rho[self.rows, self.cols] = vec
        return rho

    def blocks(self, vec: np.ndarray) -> list[np.ndarray]:
        """Dense diagonal blocks of a packed vector."""
        out = []
        for b, m in enumerate(self._sizes):
            seg = vec[self._offsets[b]:self._offsets[b + 1]]
            out.append(seg.reshape(m, m, order="F"))
        return out

