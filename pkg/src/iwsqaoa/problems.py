"""Problem families with one-hot structure and brute-force oracles.

A :class:`OneHotProblem` carries a quadratic objective over the *free*
variables ``0..n-1``, their block layout, and the fixed variables that were
substituted away to break symmetry.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .subspace import BlockLayout, CostDiagonal, indices_to_bitstrings

DIAG_CAP = 2 ** 26
WEIGHT_LEVELS = 21  # {-1.0, -0.9, ..., 1.0}


def sample_weights(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform draws from {-1.0, -0.9, ..., 1.0} via integers 0..20."""
    return (rng.integers(0, WEIGHT_LEVELS, size=size) - 10) / 10.0


@dataclass
class QuadraticObjective:
    constant: float = 0.0
    linear: dict[int, float] = field(default_factory=dict)
    quadratic: dict[tuple[int, int], float] = field(default_factory=dict)

    def add_linear(self, i: int, w: float) -> None:
        self.linear[i] = self.linear.get(i, 0.0) + w

    def add_quadratic(self, i: int, j: int, w: float) -> None:
        if i == j:
            self.add_linear(i, w)  # x^2 = x for binaries
            return
        key = (min(i, j), max(i, j))
        self.quadratic[key] = self.quadratic.get(key, 0.0) + w

    def arrays(self, n: int) -> tuple[float, np.ndarray, np.ndarray]:
        """``(constant, linear vector, strictly upper-triangular matrix)``."""
        lin = np.zeros(n)
        for i, w in self.linear.items():
            lin[i] += w
        quad = np.zeros((n, n))
        for (i, j), w in self.quadratic.items():
            quad[i, j] += w
        return self.constant, lin, quad

    def folded(self, fixed: Mapping[int, int], keep: Sequence[int]) -> "QuadraticObjective":
        """Substitute fixed values and renumber the kept variables to 0..len(keep)-1."""
        new_index = {v: t for t, v in enumerate(keep)}
        out = QuadraticObjective(self.constant)
        for i, w in self.linear.items():
            if i in fixed:
                out.constant += w * fixed[i]
            else:
                out.add_linear(new_index[i], w)
        for (i, j), w in self.quadratic.items():
            if i in fixed and j in fixed:
                out.constant += w * fixed[i] * fixed[j]
            elif i in fixed:
                if fixed[i]:
                    out.add_linear(new_index[j], w)
            elif j in fixed:
                if fixed[j]:
                    out.add_linear(new_index[i], w)
            else:
                out.add_quadratic(new_index[i], new_index[j], w)
        return out


@dataclass
class OneHotProblem:
    objective: QuadraticObjective
    layout: BlockLayout
    variables: list[str]
    fixed: dict[str, int] = field(default_factory=dict)
    family: str = "custom"
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.variables) != self.layout.num_qubits:
            raise ValueError("every free variable must belong to exactly one block")
        if set(self.variables) & set(self.fixed):
            raise ValueError("a variable cannot be both free and fixed")
        self._arrays = None

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    def arrays(self):
        if self._arrays is None:
            self._arrays = self.objective.arrays(self.num_vars)
        return self._arrays

    # ---------------------------------------------------------------- json
    def to_dict(self) -> dict:
        obj = self.objective
        return {
            "family": self.family,
            "variables": self.variables,
            "blocks": [list(b) for b in self.layout.blocks],
            "fixed": self.fixed,
            "objective": {
                "constant": obj.constant,
                "linear": [[i, w] for i, w in sorted(obj.linear.items())],
                "quadratic": [[i, j, w] for (i, j), w in sorted(obj.quadratic.items())],
            },
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "OneHotProblem":
        o = d["objective"]
        obj = QuadraticObjective(float(o.get("constant", 0.0)))
        for i, w in o.get("linear", []):
            obj.add_linear(int(i), float(w))
        for i, j, w in o.get("quadratic", []):
            obj.add_quadratic(int(i), int(j), float(w))
        return cls(obj, BlockLayout(tuple(tuple(b) for b in d["blocks"])), list(d["variables"]),
                   {k: int(v) for k, v in d.get("fixed", {}).items()}, d.get("family", "custom"),
                   dict(d.get("provenance", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "OneHotProblem":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------- #
# evaluation
# --------------------------------------------------------------------------- #

def evaluate_bitstring(problem: OneHotProblem, x) -> float | np.ndarray:
    """Objective of a free-variable bitstring, or of each row of a 2-D batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != problem.num_vars:
        raise ValueError(f"bitstring length {x.shape[-1]} != {problem.num_vars} free variables")
    c, lin, quad = problem.arrays()
    vals = c + x @ lin + np.einsum("...i,...i->...", x @ quad, x)
    return float(vals) if vals.ndim == 0 else vals


def block_violations(problem: OneHotProblem, x) -> np.ndarray:
    """Number of violated one-hot blocks per bitstring."""
    x = np.atleast_2d(np.asarray(x))
    sums = np.stack([x[:, list(b)].sum(axis=1) for b in problem.layout.blocks], axis=1)
    return (sums != 1).sum(axis=1)


def build_cost_diagonal(problem: OneHotProblem, cap: int = DIAG_CAP) -> CostDiagonal:
    """Objective over all feasible states by broadcasting block contributions.

    Quadratic terms within a block vanish on one-hot states, so the diagonal
    is a sum of one-body tables per block and two-body tables per block pair.
    """
    layout = problem.layout
    if layout.dim > cap:
        raise MemoryError(f"feasible dimension {layout.dim} exceeds cap {cap}")
    c, lin, quad = problem.arrays()
    sym = quad + quad.T
    L = layout.num_blocks
    diag = np.full(layout.shape, c, dtype=np.float64)
    for l, bl in enumerate(layout.blocks):
        shape = [1] * L
        shape[l] = len(bl)
        diag += lin[list(bl)].reshape(shape)
    for l, m in itertools.combinations(range(L), 2):
        table = sym[np.ix_(layout.blocks[l], layout.blocks[m])]
        if not table.any():
            continue
        shape = [1] * L
        shape[l], shape[m] = table.shape
        diag += table.reshape(shape)
    return CostDiagonal(diag.reshape(-1))


def brute_force_optimum(problem: OneHotProblem, cap: int = DIAG_CAP, chunk: int = 1 << 16):
    """Exhaustive scan through :func:`evaluate_bitstring`; returns ``(E_opt, optima)``.

    ``optima`` holds flat (row-major) multi-indices of every minimiser.
    """
    layout = problem.layout
    if layout.dim > cap:
        raise MemoryError(f"feasible dimension {layout.dim} exceeds cap {cap}")
    best, optima = np.inf, []
    for start in range(0, layout.dim, chunk):
        flat = np.arange(start, min(start + chunk, layout.dim))
        idx = np.stack(np.unravel_index(flat, layout.shape), axis=1)
        vals = evaluate_bitstring(problem, indices_to_bitstrings(layout, idx))
        m = vals.min()
        if m < best - 1e-9:
            best, optima = m, []
        if m <= best + 1e-9:
            optima.extend(flat[vals <= best + 1e-9].tolist())
    return float(best), np.asarray(optima, dtype=np.int64)


# --------------------------------------------------------------------------- #
# Max-k-Cut
# --------------------------------------------------------------------------- #

def gen_max_k_cut(n_nodes: int, k: int, seed: int) -> OneHotProblem:
    """Weighted Max-k-Cut on K_N as a minimisation of monochromatic edge weight.

    Node 0 is fixed to colour 0; its edges become linear terms.
    """
    if n_nodes < 3 or k < 2:
        raise ValueError("Max-k-Cut needs N >= 3 and k >= 2")
    rng = np.random.default_rng(seed)
    edges = list(itertools.combinations(range(n_nodes), 2))
    weights = sample_weights(rng, len(edges))

    def var(u, i):
        return u * k + i

    full = QuadraticObjective()
    for (u, v), w in zip(edges, weights):
        for i in range(k):
            full.add_quadratic(var(u, i), var(v, i), float(w))
    fixed = {var(0, i): int(i == 0) for i in range(k)}
    keep = [var(u, i) for u in range(1, n_nodes) for i in range(k)]
    names = [f"x[{u},{i}]" for u in range(1, n_nodes) for i in range(k)]
    layout = BlockLayout.from_sizes([k] * (n_nodes - 1))
    return OneHotProblem(
        full.folded(fixed, keep), layout, names, {f"x[0,{i}]": int(i == 0) for i in range(k)},
        "max_k_cut",
        {"N": n_nodes, "k": k, "seed": seed,
         "weights": [[u, v, float(w)] for (u, v), w in zip(edges, weights)]},
    )


# --------------------------------------------------------------------------- #
# TSP
# --------------------------------------------------------------------------- #

def tsp_geometry(n_cities: int, rng: np.random.Generator, radius: float = 2.0, min_radius: float = 0.1):
    angles = 2 * np.pi * np.arange(n_cities) / n_cities
    radii = radius + rng.normal(0.0, 1.0, n_cities)
    clamped = radii < min_radius
    radii = np.maximum(radii, min_radius)
    coords = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    dist = np.linalg.norm(coords[:, None] - coords[None], axis=-1)
    return coords, dist, clamped


def gen_tsp(n_cities: int, seed: int, lam: float = 2.0) -> OneHotProblem:
    """TSP with per-city blocks over times 1..N-1 and a quadratic per-time penalty.

    City 0 is fixed at time 0.
    """
    if n_cities < 4:
        raise ValueError("TSP needs N >= 4")
    rng = np.random.default_rng(seed)
    coords, dist, clamped = tsp_geometry(n_cities, rng)
    n = n_cities

    def var(v, t):
        return v * n + t

    full = QuadraticObjective()
    for u in range(n):
        for v in range(n):
            if u != v:
                for t in range(n):
                    full.add_quadratic(var(u, t), var(v, (t + 1) % n), float(dist[u, v]))
    # lambda * (sum_v x[v,t] - 1)^2 over free cities, expanded with x^2 = x
    for t in range(1, n):
        full.constant += lam
        for v in range(1, n):
            full.add_linear(var(v, t), -lam)
        for u, v in itertools.combinations(range(1, n), 2):
            full.add_quadratic(var(u, t), var(v, t), 2 * lam)
    fixed = {var(0, t): int(t == 0) for t in range(n)}
    fixed.update({var(v, 0): 0 for v in range(1, n)})
    keep = [var(v, t) for v in range(1, n) for t in range(1, n)]
    names = [f"x[{v},{t}]" for v in range(1, n) for t in range(1, n)]
    fixed_named = {f"x[0,{t}]": int(t == 0) for t in range(n)}
    fixed_named.update({f"x[{v},0]": 0 for v in range(1, n)})
    return OneHotProblem(
        full.folded(fixed, keep), BlockLayout.from_sizes([n - 1] * (n - 1)), names, fixed_named, "tsp",
        {"N": n, "seed": seed, "lambda": lam, "coords": coords.tolist(), "distances": dist.tolist(),
         "radius_clamped": [int(c) for c in np.flatnonzero(clamped)]},
    )


def tour_from_index(problem: OneHotProblem, multi_index: Sequence[int]) -> list[int]:
    """City visited at each time (time 0 is city 0); ``-1`` marks an empty slot."""
    n = problem.provenance["N"]
    tour = [0] + [-1] * (n - 1)
    for v, t in enumerate(multi_index, start=1):
        if tour[t + 1] == -1:
            tour[t + 1] = v
    return tour


# --------------------------------------------------------------------------- #
# hardware-tailored instances
# --------------------------------------------------------------------------- #

Triplet = tuple[int, int, int]


@dataclass
class HardwareMap:
    """Coupling graph with two-qubit gate errors per edge and readout errors per node."""

    edge_errors: dict[tuple[int, int], float]
    readout_errors: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.edge_errors = {(min(u, v), max(u, v)): float(w) for (u, v), w in self.edge_errors.items()}

    @property
    def nodes(self) -> list[int]:
        ns = set(self.readout_errors)
        for u, v in self.edge_errors:
            ns.update((u, v))
        return sorted(ns)

    def neighbors(self, u: int) -> list[int]:
        return sorted({b if a == u else a for a, b in self.edge_errors if u in (a, b)})

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edge_errors

    def error(self, u: int, v: int) -> float:
        return self.edge_errors[(min(u, v), max(u, v))]

    def filtered(self, cz_max: float = 0.05, readout_max: float = 0.30) -> "HardwareMap":
        bad = {q for q, e in self.readout_errors.items() if e > readout_max}
        edges = {e: w for e, w in self.edge_errors.items()
                 if w <= cz_max and e[0] not in bad and e[1] not in bad}
        return HardwareMap(edges, {q: e for q, e in self.readout_errors.items() if q not in bad})

    def triplets(self) -> list[Triplet]:
        """All 3-vertex paths ``(a, centre, c)`` with ``a < c``."""
        out = []
        for b in self.nodes:
            for a, c in itertools.combinations(self.neighbors(b), 2):
                out.append((a, b, c))
        return sorted(out)

    def internal_error(self, t: Triplet) -> float:
        return sum(self.error(u, v) for u, v in itertools.combinations(sorted(t), 2) if self.has_edge(u, v))

    def interconnection(self, t: Triplet, l: Triplet) -> float | None:
        """Error of the cheapest coupler joining two disjoint triplets, ``None`` if none."""
        if set(t) & set(l):
            return None
        errs = [self.error(u, v) for u in t for v in l if self.has_edge(u, v)]
        return min(errs) if errs else None

    # ---------------------------------------------------------------- json
    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": q, "readout_error": self.readout_errors.get(q, 0.0)} for q in self.nodes],
            "edges": [{"u": u, "v": v, "error": w} for (u, v), w in sorted(self.edge_errors.items())],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "HardwareMap":
        return cls({(int(e["u"]), int(e["v"])): float(e.get("error", 0.0)) for e in d["edges"]},
                   {int(n["id"]): float(n.get("readout_error", 0.0)) for n in d.get("nodes", [])})

    @classmethod
    def load(cls, path) -> "HardwareMap":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def heavy_hex_map(rows: int = 2, cols: int = 2, seed: int = 0, max_nodes: int | None = None,
                  error_range=(0.002, 0.03), readout_range=(0.005, 0.05)) -> HardwareMap:
    """Synthetic heavy-hex coupling map: a subdivided hexagonal lattice with random errors."""
    import networkx as nx

    hexes = nx.convert_node_labels_to_integers(nx.hexagonal_lattice_graph(rows, cols), ordering="sorted")
    g = nx.Graph()
    nxt = hexes.number_of_nodes()
    for u, v in sorted(hexes.edges()):
        g.add_edge(u, nxt)
        g.add_edge(nxt, v)
        nxt += 1
    if max_nodes is not None and g.number_of_nodes() > max_nodes:
        order = list(nx.bfs_tree(g, min(g.nodes)).nodes)[:max_nodes]
        g = g.subgraph(order).copy()
    g = nx.convert_node_labels_to_integers(g, ordering="sorted")
    rng = np.random.default_rng(seed)
    edges = sorted((min(u, v), max(u, v)) for u, v in g.edges())
    errs = rng.uniform(*error_range, len(edges))
    ro = rng.uniform(*readout_range, g.number_of_nodes())
    return HardwareMap(dict(zip(edges, errs.tolist())), dict(enumerate(ro.tolist())))


@dataclass
class TripletSelection:
    triplets: list[Triplet]
    objective: float
    mode: str  # "exact" or "beam"


class _SelectionModel:
    def __init__(self, hw: HardwareMap):
        self.cands = hw.triplets()
        w_max = max(hw.edge_errors.values(), default=0.0)
        scale = 1.0 / (2 * w_max) if w_max > 0 else 0.0
        m = len(self.cands)
        self.cost = np.array([hw.internal_error(t) * scale for t in self.cands])
        self.pair = np.zeros((m, m))
        self.overlap = np.zeros((m, m), dtype=bool)
        for a, b in itertools.combinations(range(m), 2):
            ta, tb = self.cands[a], self.cands[b]
            if set(ta) & set(tb):
                self.overlap[a, b] = self.overlap[b, a] = True
                continue
            w = hw.interconnection(ta, tb)
            if w is not None:
                self.pair[a, b] = self.pair[b, a] = 1.0 - w * scale
        np.fill_diagonal(self.overlap, True)

    def value(self, chosen: Sequence[int]) -> float:
        chosen = list(chosen)
        return float(self.pair[np.ix_(chosen, chosen)].sum() / 2 - self.cost[chosen].sum())


def exhaustive_triplet_selection(hw: HardwareMap, n: int) -> TripletSelection:
    """Enumerate every set of ``n`` disjoint triplets; reference for the optimiser."""
    model = _SelectionModel(hw)
    best, best_set = -np.inf, None
    for combo in itertools.combinations(range(len(model.cands)), n):
        if model.overlap[np.ix_(combo, combo)].sum() > n:
            continue
        v = model.value(combo)
        if v > best + 1e-12:
            best, best_set = v, combo
    if best_set is None:
        raise ValueError(f"no {n} disjoint triplets exist")
    return TripletSelection([model.cands[i] for i in best_set], best, "exhaustive")


def select_triplets(hw: HardwareMap, n: int, exact_limit: int = 60, beam_width: int = 64) -> TripletSelection:
    """Choose ``n`` disjoint qubit triplets maximising inter-triplet couplers minus error.

    Branch and bound is exact up to ``exact_limit`` candidates; larger maps use
    a beam search and report ``mode="beam"``.
    """
    model = _SelectionModel(hw)
    m = len(model.cands)
    if n < 1:
        raise ValueError("need n >= 1")
    if m <= exact_limit:
        chosen = _branch_and_bound(model, n)
        mode = "exact"
    else:
        chosen = _beam_search(model, n, beam_width)
        mode = "beam"
    if chosen is None:
        raise ValueError(f"no {n} disjoint triplets exist")
    return TripletSelection([model.cands[i] for i in chosen], model.value(chosen), mode)


def _branch_and_bound(model: _SelectionModel, n: int):
    m = len(model.cands)
    pos_pair = np.clip(model.pair, 0, None)
    best = {"val": -np.inf, "set": None}

    def bound(chosen, allowed, remaining):
        if remaining == 0:
            return 0.0
        idx = np.flatnonzero(allowed)
        if idx.size < remaining:
            return -np.inf
        gain = -model.cost[idx]
        if chosen:
            gain = gain + model.pair[np.ix_(idx, chosen)].sum(axis=1)
        if remaining > 1:
            sub = pos_pair[np.ix_(idx, idx)]
            top = -np.sort(-sub, axis=1)[:, : remaining - 1].sum(axis=1)
            gain = gain + 0.5 * top
        return float(np.sort(gain)[::-1][:remaining].sum())

    def rec(start, chosen, allowed, val):
        remaining = n - len(chosen)
        if remaining == 0:
            if val > best["val"] + 1e-12:
                best["val"], best["set"] = val, list(chosen)
            return
        allowed = allowed.copy()
        allowed[:start] = False
        if val + bound(chosen, allowed, remaining) <= best["val"] + 1e-12:
            return
        for c in np.flatnonzero(allowed):
            if allowed[c:].sum() < remaining:
                break
            gain = -model.cost[c] + (model.pair[c, chosen].sum() if chosen else 0.0)
            rec(c + 1, chosen + [int(c)], allowed & ~model.overlap[c], val + gain)

    rec(0, [], np.ones(m, dtype=bool), 0.0)
    return best["set"]


def _beam_search(model: _SelectionModel, n: int, width: int):
    beam = [((), 0.0, np.ones(len(model.cands), dtype=bool))]
    for _ in range(n):
        nxt = {}
        for chosen, val, allowed in beam:
            for c in np.flatnonzero(allowed):
                key = tuple(sorted(chosen + (int(c),)))
                if key in nxt:
                    continue
                gain = -model.cost[c] + (model.pair[c, list(chosen)].sum() if chosen else 0.0)
                nxt[key] = (key, val + gain, allowed & ~model.overlap[c])
        if not nxt:
            return None
        beam = sorted(nxt.values(), key=lambda s: -s[1])[:width]
    return list(beam[0][0])


def swap_slot_sequence(swap_layers: int) -> list[tuple[int, int]]:
    """Slot pairs swapped inside each triplet: (0,1), (1,2), (0,1), ..."""
    return [(0, 1) if s % 2 == 0 else (1, 2) for s in range(swap_layers)]


def gen_hardware_instance(hw: HardwareMap, n_triplets: int, swap_layers: int = 3, seed: int = 0,
                          cz_max: float = 0.05, readout_max: float = 0.30,
                          selection: TripletSelection | None = None) -> OneHotProblem:
    """Constrained spin glass whose couplings are realisable with in-triplet SWAP layers.

    Triplet ``t`` holds variables ``3t, 3t+1, 3t+2``, initially on the path
    slots ``(a, centre, c)``.  Each inter-triplet coupler contributes the
    logical pair currently sitting on its end points, once per SWAP phase;
    pairs already used in an earlier phase are skipped.
    """
    hw = hw.filtered(cz_max, readout_max)
    if selection is None:
        selection = select_triplets(hw, n_triplets)
    trips = selection.triplets
    slot_of = {}
    for t, path in enumerate(trips):
        for s, q in enumerate(path):
            slot_of[q] = (t, s)
    couplers = sorted((u, v) for (u, v) in hw.edge_errors
                      if u in slot_of and v in slot_of and slot_of[u][0] != slot_of[v][0])
    perm = [0, 1, 2]  # perm[slot] = logical position currently on that slot
    seen: dict[tuple[int, int], int] = {}
    for phase in range(swap_layers + 1):
        for u, v in couplers:
            (tu, su), (tv, sv) = slot_of[u], slot_of[v]
            a, b = 3 * tu + perm[su], 3 * tv + perm[sv]
            key = (min(a, b), max(a, b))
            if key not in seen:
                seen[key] = phase
        if phase < swap_layers:
            i, j = swap_slot_sequence(swap_layers)[phase]
            perm[i], perm[j] = perm[j], perm[i]
    rng = np.random.default_rng(seed)
    pairs = list(seen)
    weights = sample_weights(rng, len(pairs))
    obj = QuadraticObjective()
    for (a, b), w in zip(pairs, weights):
        obj.add_quadratic(a, b, float(w))
    n = len(trips)
    names = [f"x[{t},{j}]" for t in range(n) for j in range(3)]
    return OneHotProblem(
        obj, BlockLayout.from_sizes([3] * n), names, {}, "hardware",
        {"n_triplets": n, "seed": seed, "swap_layers": swap_layers,
         "triplets": [list(t) for t in trips], "selection_mode": selection.mode,
         "selection_objective": selection.objective, "couplers": [list(c) for c in couplers],
         "interactions": [[a, b, phase] for (a, b), phase in seen.items()],
         "final_slot_order": perm},
    )
