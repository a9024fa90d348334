"""Statevector simulation restricted to products of Hamming-weight-1 sectors.

Every one-hot block of ``k`` qubits only ever populates its ``k`` single
excitation states, so a product of ``L`` blocks is tracked with ``prod(k_l)``
amplitudes instead of ``2**sum(k_l)``.  Amplitudes are stored as an
``L``-dimensional complex array whose axis ``l`` indexes the occupied position
of block ``l``; flattening is row-major over blocks in declaration order.

Positions and multi-indices are 0-based throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NORM_TOL = 1e-12
UNITARY_TOL = 1e-12


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class BlockLayout:
    """Disjoint one-hot blocks over the free variables ``0..n-1``.

    ``blocks[l]`` lists the variable indices of block ``l`` in position
    order.  Together the blocks must cover every free variable exactly once.
    """

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(v) for v in b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise LayoutError("layout needs at least one block")
        seen: set[int] = set()
        for l, b in enumerate(blocks):
            if len(b) < 2:
                raise LayoutError(f"block {l} has size {len(b)} < 2")
            overlap = seen.intersection(b)
            if overlap or len(set(b)) != len(b):
                raise LayoutError(f"block {l} reuses variables {sorted(overlap) or b}")
            seen.update(b)
        if seen != set(range(len(seen))):
            raise LayoutError("block variables must be exactly 0..n-1")

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "BlockLayout":
        """Consecutive blocks, e.g. ``(2, 3)`` -> ``((0, 1), (2, 3, 4))``."""
        out, start = [], 0
        for k in sizes:
            out.append(tuple(range(start, start + int(k))))
            start += int(k)
        return cls(tuple(out))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def dim(self) -> int:
        return int(np.prod(self.sizes, dtype=np.int64))

    @property
    def num_qubits(self) -> int:
        return sum(self.sizes)

    def flat_index(self, multi_index: Sequence[int]) -> int:
        self._check_multi_index(multi_index)
        return int(np.ravel_multi_index(tuple(multi_index), self.shape))

    def multi_index(self, flat: int) -> tuple[int, ...]:
        if not 0 <= flat < self.dim:
            raise IndexError(f"flat index {flat} outside 0..{self.dim - 1}")
        return tuple(int(i) for i in np.unravel_index(flat, self.shape))

    def _check_multi_index(self, multi_index: Sequence[int]) -> None:
        if len(multi_index) != self.num_blocks:
            raise IndexError(f"expected {self.num_blocks} positions, got {len(multi_index)}")
        for l, (i, k) in enumerate(zip(multi_index, self.sizes)):
            if not 0 <= i < k:
                raise IndexError(f"position {i} out of range for block {l} of size {k}")


@dataclass
class SubspaceState:
    layout: BlockLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.size != self.layout.dim:
            raise LayoutError(f"state has {amps.size} amplitudes, layout needs {self.layout.dim}")
        self.amplitudes = amps.reshape(self.layout.shape)

    @classmethod
    def basis(cls, layout: BlockLayout, multi_index: Sequence[int]) -> "SubspaceState":
        amps = np.zeros(layout.shape, dtype=np.complex128)
        amps[tuple(multi_index)] = 1.0
        return cls(layout, amps)

    @property
    def vector(self) -> np.ndarray:
        """Flat view of the amplitudes (row-major over blocks)."""
        return self.amplitudes.reshape(-1)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.vector) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def copy(self) -> "SubspaceState":
        return SubspaceState(self.layout, self.amplitudes.copy())


@dataclass
class CostDiagonal:
    """Objective value of every feasible multi-index (flat, row-major)."""

    values: np.ndarray
    e_opt: float = field(init=False)
    optima: np.ndarray = field(init=False)
    atol: float = 1e-9

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size == 0:
            raise ValueError("empty cost diagonal")
        self.e_opt = float(self.values.min())
        self.optima = np.flatnonzero(self.values <= self.e_opt + self.atol)

    def __len__(self) -> int:
        return self.values.size


def _check_dims(state: SubspaceState, diag: CostDiagonal) -> None:
    if len(diag) != state.layout.dim:
        raise LayoutError(f"diagonal length {len(diag)} != state dimension {state.layout.dim}")


def init_wp_state(layout: BlockLayout, probs: Sequence[Sequence[float]]) -> SubspaceState:
    """Product of biased W states, amplitude ``prod_l sqrt(P[l][i_l])``."""
    tables = [np.asarray(p, dtype=np.float64) for p in probs]
    if len(tables) != layout.num_blocks:
        raise LayoutError(f"{len(tables)} probability blocks for {layout.num_blocks} layout blocks")
    amps = np.ones((), dtype=np.complex128)
    for l, (p, k) in enumerate(zip(tables, layout.sizes)):
        if p.shape != (k,):
            raise LayoutError(f"block {l}: {p.size} probabilities for size {k}")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"block {l}: probabilities must be positive and sum to 1")
        amps = np.multiply.outer(amps, np.sqrt(p))
    return SubspaceState(layout, amps)


def apply_cost_phase(state: SubspaceState, diag: CostDiagonal, gamma: float) -> SubspaceState:
    _check_dims(state, diag)
    state.amplitudes *= np.exp(-1j * gamma * diag.values).reshape(state.layout.shape)
    return state


def _check_unitary(u: np.ndarray) -> None:
    if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=UNITARY_TOL, rtol=0):
        raise ValueError("matrix is not unitary")


def apply_block_unitary(state: SubspaceState, block: int, u: np.ndarray) -> SubspaceState:
    """Apply a ``k x k`` matrix to the axis of ``block``."""
    u = np.asarray(u, dtype=np.complex128)
    k = state.layout.sizes[block]
    if u.shape != (k, k):
        raise LayoutError(f"block {block} needs a {k}x{k} matrix, got {u.shape}")
    out = np.tensordot(u, state.amplitudes, axes=([1], [block]))
    state.amplitudes = np.moveaxis(out, 0, block)
    return state


def apply_pair_rotation(state: SubspaceState, block: int, i: int, j: int, u) -> SubspaceState:
    """Replace the amplitude pair at positions ``(i, j)`` of ``block`` by ``u @ (a_i, a_j)``.

    This is the sector image of a two-qubit gate acting on span{|01>, |10>}.
    """
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (2, 2):
        raise ValueError("pair rotation must be 2x2")
    _check_unitary(u)
    k = state.layout.sizes[block]
    if i == j or not (0 <= i < k and 0 <= j < k):
        raise IndexError(f"invalid pair ({i}, {j}) for block of size {k}")
    amps = np.moveaxis(state.amplitudes, block, 0)
    a_i, a_j = amps[i].copy(), amps[j].copy()
    amps[i] = u[0, 0] * a_i + u[0, 1] * a_j
    amps[j] = u[1, 0] * a_i + u[1, 1] * a_j
    return state


def apply_basis_phase(state: SubspaceState, block: int, i: int, phi: float) -> SubspaceState:
    """Multiply every amplitude whose block ``block`` sits at position ``i`` by ``exp(-1j*phi)``."""
    k = state.layout.sizes[block]
    if not 0 <= i < k:
        raise IndexError(f"position {i} out of range for block of size {k}")
    amps = np.moveaxis(state.amplitudes, block, 0)
    amps[i] *= np.exp(-1j * phi)
    return state


def expectation(state: SubspaceState, diag: CostDiagonal) -> float:
    _check_dims(state, diag)
    return float(np.dot(state.probabilities(), diag.values))


def sample(state: SubspaceState, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``shots`` multi-indices; returns an ``(shots, L)`` integer array."""
    flat = sample_flat(state, shots, rng)
    return np.stack(np.unravel_index(flat, state.layout.shape), axis=1)


def sample_flat(state: SubspaceState, shots: int, rng: np.random.Generator) -> np.ndarray:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = state.probabilities()
    p = p / p.sum()
    # inverse-CDF draw: one uniform per shot keeps the stream reproducible
    cdf = np.cumsum(p)
    u = rng.random(shots) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), p.size - 1)


def index_to_bitstring(layout: BlockLayout, multi_index: Sequence[int],
                       fixed_values: Sequence[int] = ()) -> np.ndarray:
    """One-hot bitstring of a multi-index, fixed variable values appended."""
    layout._check_multi_index(multi_index)
    bits = np.zeros(layout.num_qubits, dtype=np.uint8)
    for block, i in zip(layout.blocks, multi_index):
        bits[block[i]] = 1
    return np.concatenate([bits, np.asarray(fixed_values, dtype=np.uint8)])


def indices_to_bitstrings(layout: BlockLayout, multi_indices: np.ndarray) -> np.ndarray:
    """Vectorised :func:`index_to_bitstring` over an ``(M, L)`` array."""
    idx = np.atleast_2d(np.asarray(multi_indices, dtype=np.int64))
    bits = np.zeros((idx.shape[0], layout.num_qubits), dtype=np.uint8)
    rows = np.arange(idx.shape[0])
    for l, block in enumerate(layout.blocks):
        bits[rows, np.asarray(block)[idx[:, l]]] = 1
    return bits


def bitstring_to_index(layout: BlockLayout, bits: Sequence[int]) -> tuple[int, ...]:
    """Inverse of :func:`index_to_bitstring` on feasible strings (fixed tail ignored)."""
    bits = np.asarray(bits)
    out = []
    for l, block in enumerate(layout.blocks):
        ones = np.flatnonzero(bits[list(block)])
        if ones.size != 1:
            raise ValueError(f"block {l} is not one-hot")
        out.append(int(ones[0]))
    return tuple(out)
