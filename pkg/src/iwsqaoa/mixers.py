"""Warm-started XY mixers on arbitrary per-block topologies.

All matrices here live in the single-excitation basis ``|e_0>, ..., |e_{k-1}>``
of one block.  For a pair ``(i, j)`` the two-level block is written in the
ordered basis ``(|e_i>, |e_j>)`` with bias ``q = P_i / (P_i + P_j)``, so its
ground state is ``(sqrt(q), sqrt(1 - q))``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .subspace import BlockLayout, LayoutError, SubspaceState, apply_block_unitary

Q_GUARD = 1e-12

Edge = tuple[int, int]


# --------------------------------------------------------------------------- #
# probability tables
# --------------------------------------------------------------------------- #

@dataclass
class ProbabilityTable:
    """Per-block warm-start distributions.

    ``eps`` is set when the table was produced by clamping; the bounds are then
    ``[eps / (k - 1), 1 - eps]`` for a block of size ``k``.
    """

    blocks: list[np.ndarray]
    eps: float | None = None

    def __post_init__(self):
        self.blocks = [np.asarray(b, dtype=np.float64).copy() for b in self.blocks]

    @classmethod
    def uniform(cls, sizes: Sequence[int]) -> "ProbabilityTable":
        return cls([np.full(k, 1.0 / k) for k in sizes])

    @classmethod
    def from_solution(cls, sizes: Sequence[int], multi_index: Sequence[int], eps: float) -> "ProbabilityTable":
        """Warm start concentrated on one feasible solution, clamped by ``eps``."""
        from .iws import clamp

        raw = []
        for k, i in zip(sizes, multi_index):
            p = np.zeros(k)
            p[i] = 1.0
            raw.append(p)
        return clamp(cls(raw), eps)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, l: int) -> np.ndarray:
        return self.blocks[l]

    def __iter__(self):
        return iter(self.blocks)

    def is_valid(self, tol: float = 1e-12) -> bool:
        return all(np.all(b > 0) and np.all(b < 1) and abs(b.sum() - 1) <= tol for b in self.blocks)

    def to_list(self) -> list[list[float]]:
        return [b.tolist() for b in self.blocks]


def derive_pair_bias(probs: Sequence[float], i: int, j: int) -> float:
    p = np.asarray(probs, dtype=np.float64)
    return float(p[i] / (p[i] + p[j]))


# --------------------------------------------------------------------------- #
# topologies and edge colouring
# --------------------------------------------------------------------------- #

def _canonical(edges: Iterable[Edge]) -> tuple[Edge, ...]:
    out = []
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise ValueError(f"self loop on vertex {u}")
        out.append((min(u, v), max(u, v)))
    if len(set(out)) != len(out):
        raise ValueError("duplicate edges")
    return tuple(out)


def _is_matching(layer: Sequence[Edge]) -> bool:
    verts = [v for e in layer for v in e]
    return len(verts) == len(set(verts))


def _ring_coloring(k: int) -> list[list[Edge]]:
    even = [(i, i + 1) for i in range(0, k - 1, 2)]
    odd = [(i, i + 1) for i in range(1, k - 1, 2)]
    if k % 2 == 0:
        odd.append((0, k - 1))
        return [even, odd]
    return [even, odd, [(0, k - 1)]]


def _line_coloring(k: int) -> list[list[Edge]]:
    layers = [[(i, i + 1) for i in range(0, k - 1, 2)], [(i, i + 1) for i in range(1, k - 1, 2)]]
    return [layer for layer in layers if layer]


def _complete_coloring(k: int) -> list[list[Edge]]:
    # round-robin 1-factorisation; odd k gets a phantom vertex
    m = k if k % 2 == 0 else k + 1
    layers = []
    for r in range(m - 1):
        layer = []
        pairs = [(m - 1, r)] + [((r + s) % (m - 1), (r - s) % (m - 1)) for s in range(1, m // 2)]
        for u, v in pairs:
            if u < k and v < k:
                layer.append((min(u, v), max(u, v)))
        layers.append(sorted(layer))
    return layers


def misra_gries(k: int, edges: Sequence[Edge]) -> list[list[Edge]]:
    """Proper edge colouring with at most ``max_degree + 1`` colours."""
    edges = _canonical(edges)
    if not edges:
        return []
    degree = np.zeros(k, dtype=int)
    for u, v in edges:
        degree[u] += 1
        degree[v] += 1
    ncol = int(degree.max()) + 1
    color: dict[Edge, int] = {}
    at: list[dict[int, int]] = [dict() for _ in range(k)]  # vertex -> {colour: neighbour}

    def free(v: int, c: int) -> bool:
        return c not in at[v]

    def first_free(v: int) -> int:
        return next(c for c in range(ncol) if free(v, c))

    def set_color(u: int, v: int, c: int | None) -> None:
        e = (min(u, v), max(u, v))
        old = color.pop(e, None)
        if old is not None:
            del at[u][old]
            del at[v][old]
        if c is not None:
            color[e] = c
            at[u][c] = v
            at[v][c] = u

    for (x, y) in edges:
        # maximal fan of x starting at y
        fan = [y]
        used = {y}
        while True:
            last = fan[-1]
            nxt = None
            for c in range(ncol):
                w = at[x].get(c)
                if w is not None and w not in used and free(last, c):
                    nxt = w
                    break
            if nxt is None:
                break
            fan.append(nxt)
            used.add(nxt)
        c = first_free(x)
        d = first_free(fan[-1])
        # invert the cd-path starting at x
        if not free(x, d):
            path = [x]
            cur, want = x, d
            while want in at[cur]:
                nb = at[cur][want]
                path.append(nb)
                cur = nb
                want = c if want == d else d
            segs = [(path[t], path[t + 1], color[(min(path[t], path[t + 1]), max(path[t], path[t + 1]))])
                    for t in range(len(path) - 1)]
            for a, b, _ in segs:
                set_color(a, b, None)
            for a, b, col in segs:
                set_color(a, b, d if col == c else c)
        # w: first fan vertex with d free such that the prefix is still a fan
        w_idx = None
        for t, f in enumerate(fan):
            if t > 0:
                prev, cur = fan[t - 1], fan[t]
                cc = color.get((min(x, cur), max(x, cur)))
                if cc is None or not free(prev, cc):
                    break
            if free(f, d):
                w_idx = t
                break
        if w_idx is None:
            raise RuntimeError("Misra-Gries invariant violated")
        # rotate the fan prefix
        for t in range(w_idx):
            a, b = fan[t], fan[t + 1]
            nc = color[(min(x, b), max(x, b))]
            set_color(x, b, None)
            set_color(x, a, nc)
        set_color(x, fan[w_idx], d)

    layers = [sorted(e for e, col in color.items() if col == c) for c in range(ncol)]
    return [layer for layer in layers if layer]


def edge_coloring(k: int, edges: Sequence[Edge], kind: str = "custom") -> list[list[Edge]]:
    """Partition ``edges`` into matchings.

    Rings get the even/odd(/last) split, lines the alternating split and
    complete graphs a round-robin factorisation; anything else goes through
    Misra-Gries.
    """
    edges = _canonical(edges)
    if not edges:
        raise ValueError("edge colouring needs at least one edge")
    if kind == "ring" and k >= 3:
        return _ring_coloring(k)
    if kind == "line":
        return _line_coloring(k)
    if kind == "complete" and k >= 2:
        return _complete_coloring(k)
    if _is_matching(edges):
        return [sorted(edges)]
    return misra_gries(k, edges)


@dataclass(frozen=True)
class BlockTopology:
    k: int
    edges: tuple[Edge, ...]
    coloring: tuple[tuple[Edge, ...], ...]
    kind: str = "custom"

    @classmethod
    def build(cls, k: int, edges: Sequence[Edge], kind: str = "custom") -> "BlockTopology":
        edges = _canonical(edges)
        if k < 2:
            raise ValueError("blocks need k >= 2")
        if not edges:
            raise ValueError("mixer topology needs at least one edge")
        if any(v >= k for e in edges for v in e):
            raise ValueError("edge endpoint outside block")
        layers = edge_coloring(k, edges, kind)
        return cls(k, tuple(sorted(edges)), tuple(tuple(layer) for layer in layers), kind)

    @classmethod
    def complete(cls, k: int) -> "BlockTopology":
        return cls.build(k, list(itertools.combinations(range(k), 2)), "complete")

    @classmethod
    def ring(cls, k: int) -> "BlockTopology":
        if k <= 2:
            return cls.line(k)
        return cls.build(k, [(i, i + 1) for i in range(k - 1)] + [(0, k - 1)], "ring")

    @classmethod
    def line(cls, k: int) -> "BlockTopology":
        return cls.build(k, [(i, i + 1) for i in range(k - 1)], "line")

    @classmethod
    def named(cls, name: str, k: int) -> "BlockTopology":
        try:
            return {"complete": cls.complete, "ring": cls.ring, "line": cls.line}[name](k)
        except KeyError:
            raise ValueError(f"unknown topology {name!r}") from None

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.k, dtype=int)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max())

    @property
    def num_colors(self) -> int:
        return len(self.coloring)

    def is_connected(self) -> bool:
        adj = {v: set() for v in range(self.k)}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        seen, stack = {0}, [0]
        while stack:
            for w in adj[stack.pop()] - seen:
                seen.add(w)
                stack.append(w)
        return len(seen) == self.k


@dataclass(frozen=True)
class MixerTopology:
    blocks: tuple[BlockTopology, ...] = field(default_factory=tuple)

    @classmethod
    def uniform(cls, sizes: Sequence[int], name: str = "complete") -> "MixerTopology":
        return cls(tuple(BlockTopology.named(name, k) for k in sizes))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(b.k for b in self.blocks)

    def check_layout(self, layout: BlockLayout) -> None:
        if self.sizes != layout.sizes:
            raise LayoutError(f"topology sizes {self.sizes} do not match layout {layout.sizes}")


# --------------------------------------------------------------------------- #
# Hamiltonians
# --------------------------------------------------------------------------- #

def pair_hamiltonian(q: float, scaled: bool = False) -> np.ndarray:
    """Two-level block of H_ij(q) (or its scaled/shifted variant) in (e_i, e_j)."""
    s = np.sqrt(q * (1 - q))
    h = np.array([[1 - 2 * q, -2 * s], [-2 * s, 2 * q - 1]], dtype=np.float64)
    if scaled:
        f = 1.0 / (2 * s)
        h = f * (h + np.eye(2)) - np.eye(2)
    return h


def build_ws_hamiltonian(topo: BlockTopology, probs: Sequence[float], scaled: bool = False) -> np.ndarray:
    """Dense ``k x k`` warm-started mixer with degree correction for irregular graphs."""
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != (topo.k,):
        raise LayoutError(f"{p.size} probabilities for block of size {topo.k}")
    if not topo.edges:
        raise ValueError("empty edge set")
    delta = topo.max_degree
    m = np.diag((topo.degrees - delta).astype(np.float64))
    for i, j in topo.edges:
        h = pair_hamiltonian(p[i] / (p[i] + p[j]), scaled)
        m[np.ix_([i, j], [i, j])] += h
    return m / delta


def standard_xy_hamiltonian(k: int) -> np.ndarray:
    """Fully connected XY mixer restricted to the single-excitation sector."""
    return -(np.ones((k, k)) - np.eye(k)) / (k - 1)


def exact_mixer_evolution(m: np.ndarray, beta: float) -> np.ndarray:
    """``exp(-1j * beta * m)`` through the eigendecomposition of Hermitian ``m``."""
    w, v = np.linalg.eigh(m)
    return (v * np.exp(-1j * beta * w)) @ v.conj().T


# --------------------------------------------------------------------------- #
# circuit-level blocks
# --------------------------------------------------------------------------- #

def _check_q(q: float) -> None:
    if not Q_GUARD <= q <= 1 - Q_GUARD:
        raise ValueError(f"bias q={q} outside ({Q_GUARD}, {1 - Q_GUARD})")


def ws_xy_block_angles(q: float, beta: float) -> tuple[float, float]:
    """Angles of exp(-i beta H(q)) = (RZ(phi1) x I) U_XY(2 phi2) (I x RZ(-phi1))."""
    _check_q(q)
    y, x = (1 - 2 * q) * np.sin(beta), np.cos(beta)
    phi1 = 0.0 if (abs(x) < 1e-300 and abs(y) < 1e-300) else float(np.arctan2(y, x))
    phi2 = float(np.arcsin(np.clip(2 * np.sqrt(q * (1 - q)) * np.sin(beta), -1.0, 1.0)))
    return phi1, phi2


def scaled_block_params(q: float, beta: float) -> tuple[float, float]:
    """Rescaled angle and sector phase of the scaled block.

    exp(-i beta H~(q)) equals the unscaled block at ``beta_scaled`` followed by
    the phase ``exp(+i phi_sector)`` on both single-excitation states, i.e. a
    ``Phase(phi_sector)`` gate on each qubit.
    """
    _check_q(q)
    f = 1.0 / (2 * np.sqrt(q * (1 - q)))
    return float(beta * f), float((1 - f) * beta)


def block_from_angles(phi1: float, phi2: float) -> np.ndarray:
    return np.array([[np.exp(-1j * phi1) * np.cos(phi2), 1j * np.sin(phi2)],
                     [1j * np.sin(phi2), np.exp(1j * phi1) * np.cos(phi2)]])


def ws_block_unitary(q: float, beta: float, scaled: bool = False) -> np.ndarray:
    """2x2 sector action of the (optionally scaled) warm-start XY block."""
    if scaled:
        beta, phase = scaled_block_params(q, beta)
        return np.exp(1j * phase) * block_from_angles(*ws_xy_block_angles(q, beta))
    return block_from_angles(*ws_xy_block_angles(q, beta))


def trotter_layers(topo: BlockTopology, probs: Sequence[float], beta: float, trotter_steps: int = 1):
    """Yield the elementary operations of one block's Trotterised mixer.

    Items are ``("global", angle)`` for a global phase ``exp(1j*angle)``,
    ``("pair", i, j, q, dt)`` for a block exp(-i dt H_ij(q)) and
    ``("phase", i, dt)`` for ``exp(+1j*dt)`` on ``|e_i>``.
    """
    if trotter_steps < 1:
        raise ValueError("trotter_steps must be >= 1")
    p = np.asarray(probs, dtype=np.float64)
    delta = topo.max_degree
    dt = beta / (trotter_steps * delta)
    lead = -dt * (topo.num_colors - delta)
    for _ in range(trotter_steps):
        if lead != 0.0:
            yield ("global", lead)
        for layer in topo.coloring:
            matched = set()
            for i, j in layer:
                matched.update((i, j))
                yield ("pair", i, j, float(p[i] / (p[i] + p[j])), dt)
            for i in range(topo.k):
                if i not in matched:
                    yield ("phase", i, dt)


def block_mixer_unitary(topo: BlockTopology, probs: Sequence[float], beta: float,
                        trotter_steps: int = 1, scaled: bool = True) -> np.ndarray:
    """Compose the Trotterised mixer of one block into a ``k x k`` unitary."""
    u = np.eye(topo.k, dtype=np.complex128)
    for op in trotter_layers(topo, probs, beta, trotter_steps):
        if op[0] == "global":
            u *= np.exp(1j * op[1])
        elif op[0] == "pair":
            _, i, j, q, dt = op
            u[[i, j], :] = ws_block_unitary(q, dt, scaled) @ u[[i, j], :]
        else:
            u[op[1], :] *= np.exp(1j * op[2])
    return u


def apply_ws_mixer(state: SubspaceState, topology: MixerTopology, probs, beta: float,
                   trotter_steps: int = 1, scaled: bool = True) -> SubspaceState:
    topology.check_layout(state.layout)
    if len(probs) != len(topology.blocks):
        raise LayoutError("probability table and topology disagree on block count")
    for l, topo in enumerate(topology.blocks):
        apply_block_unitary(state, l, block_mixer_unitary(topo, probs[l], beta, trotter_steps, scaled))
    return state
