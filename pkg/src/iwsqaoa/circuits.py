"""Gate-level WS-QAOA circuits, a dense statevector oracle and OpenQASM 3 export.

Bit order: qubit 0 is the leftmost character of a printed bitstring and the
most significant bit of a dense statevector index, so ``X`` on qubit 0 of a
2-qubit register yields ``|10>`` (index 2).

Gate conventions::

    RX/RY/RZ(t)     exp(-i t P / 2)
    Phase(t)        diag(1, e^{it})
    CRY(t) c, t     RY(t) on the target when the control is 1
    XXplusYY(t) a,b exp(+i t (XX + YY) / 4); on span{|01>,|10>} this is
                    [[cos t/2, i sin t/2], [i sin t/2, cos t/2]]
    RZZ(t)          exp(-i t ZZ / 2)
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mixers import (MixerTopology, ProbabilityTable, scaled_block_params, trotter_layers,
                     ws_xy_block_angles)
from .problems import OneHotProblem

MAX_DENSE_QUBITS = 20

ARITY = {"RX": 1, "RY": 1, "RZ": 1, "Phase": 1, "X": 1,
         "CNOT": 2, "SWAP": 2, "CRY": 2, "XXplusYY": 2, "RZZ": 2}
NUM_PARAMS = {"RX": 1, "RY": 1, "RZ": 1, "Phase": 1, "X": 0,
              "CNOT": 0, "SWAP": 0, "CRY": 1, "XXplusYY": 1, "RZZ": 1}


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(a) for a in self.params))
        if len(self.qubits) != ARITY[self.kind] or len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{self.kind} needs {ARITY[self.kind]} distinct qubits, got {self.qubits}")
        if len(self.params) != NUM_PARAMS[self.kind]:
            raise ValueError(f"{self.kind} takes {NUM_PARAMS[self.kind]} parameters")
        if not all(math.isfinite(a) for a in self.params):
            raise ValueError("gate angles must be finite")

    def matrix(self) -> np.ndarray:
        return gate_matrix(self.kind, self.params)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "qubits": list(self.qubits), "params": list(self.params)}


def gate_matrix(kind: str, params: Sequence[float] = ()) -> np.ndarray:
    t = params[0] if params else 0.0
    c, s = math.cos(t / 2), math.sin(t / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])
    if kind == "Phase":
        return np.diag([1, np.exp(1j * t)])
    if kind == "X":
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if kind == "CNOT":
        return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    if kind == "SWAP":
        return np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
    if kind == "CRY":
        m = np.eye(4, dtype=complex)
        m[2:, 2:] = gate_matrix("RY", params)
        return m
    if kind == "XXplusYY":
        m = np.eye(4, dtype=complex)
        m[1:3, 1:3] = [[c, 1j * s], [1j * s, c]]
        return m
    if kind == "RZZ":
        return np.diag(np.exp(-0.5j * t * np.array([1, -1, -1, 1])))
    raise ValueError(f"unknown gate kind {kind!r}")


@dataclass
class Circuit:
    num_qubits: int
    gates: list[Gate] = field(default_factory=list)
    global_phase: float = 0.0

    def append(self, kind: str, qubits, params=()) -> "Circuit":
        g = Gate(kind, tuple(qubits) if not isinstance(qubits, int) else (qubits,), tuple(params))
        if any(not 0 <= q < self.num_qubits for q in g.qubits):
            raise ValueError(f"gate {g} targets a qubit outside 0..{self.num_qubits - 1}")
        self.gates.append(g)
        return self

    def extend(self, other: "Circuit", qubit_map: Sequence[int] | None = None) -> "Circuit":
        qmap = list(range(other.num_qubits)) if qubit_map is None else list(qubit_map)
        for g in other.gates:
            self.append(g.kind, [qmap[q] for q in g.qubits], g.params)
        self.global_phase += other.global_phase
        return self

    # ------------------------------------------------------------- metrics
    def depth(self, two_qubit_only: bool = False) -> int:
        level = [0] * self.num_qubits
        for g in self.gates:
            if two_qubit_only and len(g.qubits) < 2:
                continue
            d = max(level[q] for q in g.qubits) + 1
            for q in g.qubits:
                level[q] = d
        return max(level, default=0)

    @property
    def two_qubit_depth(self) -> int:
        return self.depth(two_qubit_only=True)

    def counts(self) -> dict[str, int]:
        return dict(sorted(Counter(g.kind for g in self.gates).items()))

    def metrics(self) -> dict:
        return {"num_qubits": self.num_qubits, "gates": len(self.gates), "depth": self.depth(),
                "two_qubit_depth": self.two_qubit_depth, "counts": self.counts()}

    # ------------------------------------------------------------- json
    def to_dict(self) -> dict:
        return {"num_qubits": self.num_qubits, "global_phase": self.global_phase,
                "gates": [g.to_dict() for g in self.gates]}

    @classmethod
    def from_dict(cls, d) -> "Circuit":
        c = cls(int(d["num_qubits"]), global_phase=float(d.get("global_phase", 0.0)))
        for g in d["gates"]:
            c.append(g["kind"], g["qubits"], g.get("params", ()))
        return c

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# --------------------------------------------------------------------------- #
# dense oracle
# --------------------------------------------------------------------------- #

def dense_simulate(circuit: Circuit, initial: np.ndarray | None = None, max_qubits: int = MAX_DENSE_QUBITS) -> np.ndarray:
    """Full ``2**n`` statevector of ``circuit`` applied to ``initial`` (default ``|0...0>``)."""
    n = circuit.num_qubits
    if n > max_qubits:
        raise ValueError(f"dense simulation limited to {max_qubits} qubits, circuit has {n}")
    if initial is None:
        psi = np.zeros(2 ** n, dtype=np.complex128)
        psi[0] = 1.0
    else:
        psi = np.asarray(initial, dtype=np.complex128).copy()
    psi = psi.reshape((2,) * n) if n else psi
    for g in circuit.gates:
        k = len(g.qubits)
        m = g.matrix().reshape((2,) * (2 * k))
        psi = np.tensordot(m, psi, axes=(list(range(k, 2 * k)), list(g.qubits)))
        psi = np.moveaxis(psi, list(range(k)), list(g.qubits))
    return psi.reshape(-1) * np.exp(1j * circuit.global_phase)


def bitstring_of(index: int, n: int) -> str:
    return format(index, f"0{n}b")


def sector_indices(blocks: Sequence[Sequence[int]], n: int) -> np.ndarray:
    """Dense indices of the one-hot product states, in row-major multi-index order."""
    idx = np.zeros(1, dtype=np.int64)
    for b in blocks:
        bits = np.array([1 << (n - 1 - q) for q in b], dtype=np.int64)
        idx = (idx[:, None] + bits[None, :]).reshape(-1)
    return idx


# --------------------------------------------------------------------------- #
# synthesis
# --------------------------------------------------------------------------- #

PREP_STYLES = ("linear", "center", "tree")


def _b_gate(c: Circuit, src: int, dst: int, keep: float, plain: bool) -> None:
    """Move weight ``1 - keep`` of the excitation on ``src`` onto ``dst``."""
    theta = 2 * math.acos(math.sqrt(min(max(keep, 0.0), 1.0)))
    if plain:
        c.append("RY", dst, (theta,))
    else:
        c.append("CRY", (src, dst), (theta,))
    c.append("CNOT", (dst, src))


def synth_wp_preparation(probs: Sequence[float], style: str = "linear",
                         qubits: Sequence[int] | None = None, num_qubits: int | None = None) -> Circuit:
    """Prepare ``sum_i sqrt(P_i) |e_i>`` from ``|0...0>``.

    ``linear`` excites qubit 0 and passes weight down a chain; ``center``
    excites qubit ``k // 2`` and grows two chains outward, the first move
    using a plain RY because the centre is still definitely excited.
    """
    p = np.asarray(probs, dtype=np.float64)
    k = p.size
    if k < 2:
        raise ValueError("W_P preparation needs k >= 2")
    if np.any(p <= 0) or abs(p.sum() - 1) > 1e-9:
        raise ValueError("probabilities must be positive and sum to 1")
    if style == "tree":
        raise NotImplementedError("log-depth tree preparation needs all-to-all connectivity and is not provided")
    if style not in PREP_STYLES:
        raise ValueError(f"unknown preparation style {style!r}")
    qs = list(range(k)) if qubits is None else list(qubits)
    c = Circuit(num_qubits if num_qubits is not None else max(qs) + 1)

    if style == "linear":
        c.append("X", qs[0])
        rest = 1.0
        for i in range(k - 1):
            _b_gate(c, qs[i], qs[i + 1], p[i] / rest, plain=False)
            rest -= p[i]
        return c

    m = k // 2
    left = float(p[:m].sum())
    c.append("X", qs[m])
    if m > 0:
        _b_gate(c, qs[m], qs[m - 1], 1.0 - left, plain=True)
    centre_mass = 1.0 - left
    if m < k - 1:
        _b_gate(c, qs[m], qs[m + 1], p[m] / centre_mass, plain=(m == 0))
    rest = left
    for i in range(m - 1, 0, -1):
        _b_gate(c, qs[i], qs[i - 1], p[i] / rest, plain=False)
        rest -= p[i]
    rest = centre_mass - p[m]
    for i in range(m + 1, k - 1):
        _b_gate(c, qs[i], qs[i + 1], p[i] / rest, plain=False)
        rest -= p[i]
    return c


def _ws_block_gates(c: Circuit, qi: int, qj: int, q: float, beta: float, scaled: bool) -> None:
    """Pair block on (|e_i>, |e_j>) where ``|e_i>`` carries weight ``q``."""
    phase = 0.0
    if scaled:
        beta, phase = scaled_block_params(q, beta)
    phi1, phi2 = ws_xy_block_angles(q, beta)
    c.append("RZ", qi, (-phi1,))
    c.append("XXplusYY", (qj, qi), (2 * phi2,))
    c.append("RZ", qj, (phi1,))
    if scaled:
        c.append("Phase", qi, (phase,))
        c.append("Phase", qj, (phase,))


def synth_ws_xy_block(q: float, beta: float, scaled: bool = False) -> Circuit:
    """Two-qubit warm-started XY block; weight ``q`` sits on the excitation of qubit 1.

    On the basis ``(|01>, |10>)`` the circuit equals the mixer block unitary.
    """
    c = Circuit(2)
    _ws_block_gates(c, 1, 0, q, beta, scaled)
    return c


def append_block_mixer(c: Circuit, qubits: Sequence[int], topo, probs, beta: float,
                       trotter_steps: int = 1, scaled: bool = True) -> None:
    for op in trotter_layers(topo, probs, beta, trotter_steps):
        if op[0] == "global":
            c.global_phase += op[1]
        elif op[0] == "pair":
            _, i, j, q, dt = op
            _ws_block_gates(c, qubits[i], qubits[j], q, dt, scaled)
        else:
            c.append("Phase", qubits[op[1]], (op[2],))


def append_cost_layer(c: Circuit, problem: OneHotProblem, gamma: float, qubit_of: Sequence[int],
                      pairs: Sequence[tuple[int, int]] | None = None, include_single: bool = True) -> None:
    """``exp(-i gamma C)`` via ``x = (1 - Z)/2``: RZZ for pairs, merged RZ per qubit, rest as global phase.

    ``pairs`` restricts the quadratic terms emitted (used for SWAP phases).
    """
    obj = problem.objective
    z = np.zeros(problem.num_vars)
    phase = 0.0
    keys = obj.quadratic.keys() if pairs is None else pairs
    for i, j in keys:
        w = obj.quadratic[(i, j)]
        if w == 0:
            continue
        c.append("RZZ", (qubit_of[i], qubit_of[j]), (gamma * w / 2,))
        z[i] -= gamma * w / 2
        z[j] -= gamma * w / 2
        phase -= gamma * w / 4
    if include_single:
        for i, w in obj.linear.items():
            z[i] -= gamma * w
            phase -= gamma * w / 2
        phase -= gamma * obj.constant
    for i in np.flatnonzero(z):
        c.append("RZ", qubit_of[i], (z[i],))
    c.global_phase += phase


def synth_ws_qaoa(problem: OneHotProblem, topology: MixerTopology, probs, schedule,
                  prep_style: str = "linear", mixer_probs=None, scaled: bool = True,
                  trotter_steps: int = 1, swap_routing: bool = False) -> Circuit:
    """Measurement-free WS-QAOA circuit over the free variables (variable ``v`` on qubit ``v``).

    With ``swap_routing`` (hardware instances) the quadratic terms are emitted
    phase by phase between in-triplet SWAP layers, walking the phases forward
    on even layers and backward on odd ones; a final SWAP layer restores the
    original order when needed.
    """
    topology.check_layout(problem.layout)
    sizes = problem.layout.sizes
    probs = probs if isinstance(probs, ProbabilityTable) else (
        ProbabilityTable.uniform(sizes) if probs is None else ProbabilityTable(list(probs)))
    mix = probs if mixer_probs is None else (
        mixer_probs if isinstance(mixer_probs, ProbabilityTable) else ProbabilityTable(list(mixer_probs)))
    n = problem.num_vars
    c = Circuit(n)
    for b, p in zip(problem.layout.blocks, probs):
        c.extend(synth_wp_preparation(p, prep_style, b, n))
    steps = schedule.expand() if schedule is not None else []

    if not swap_routing:
        for beta, gamma in steps:
            append_cost_layer(c, problem, gamma, list(range(n)))
            for b, topo, p in zip(problem.layout.blocks, topology.blocks, mix):
                append_block_mixer(c, b, topo, p, beta, trotter_steps, scaled)
        return c

    from .problems import swap_slot_sequence

    prov = problem.provenance
    if problem.family != "hardware" or "interactions" not in prov:
        raise ValueError("swap routing needs a hardware instance with recorded interaction phases")
    if set(sizes) != {3}:
        raise ValueError("swap routing expects size-3 blocks")
    n_swaps = int(prov["swap_layers"])
    swaps = swap_slot_sequence(n_swaps)
    by_phase: dict[int, list[tuple[int, int]]] = {}
    for a, b, ph in prov["interactions"]:
        by_phase.setdefault(int(ph), []).append((int(a), int(b)))
    qubit_of = list(range(n))  # logical variable -> physical qubit

    def swap_layer(i, j):
        for t in range(n // 3):
            qa, qb = 3 * t + i, 3 * t + j
            c.append("SWAP", (qa, qb))
            va, vb = qubit_of.index(qa), qubit_of.index(qb)
            qubit_of[va], qubit_of[vb] = qb, qa

    for layer, (beta, gamma) in enumerate(steps):
        forward = layer % 2 == 0
        order = range(n_swaps + 1) if forward else range(n_swaps, -1, -1)
        for step, ph in enumerate(order):
            append_cost_layer(c, problem, gamma, qubit_of, by_phase.get(ph, []), include_single=(step == 0))
            if step < n_swaps:
                i, j = swaps[ph] if forward else swaps[ph - 1]
                swap_layer(i, j)
        for b, topo, p in zip(problem.layout.blocks, topology.blocks, mix):
            append_block_mixer(c, [qubit_of[v] for v in b], topo, p, beta, trotter_steps, scaled)
    if qubit_of != list(range(n)):
        for ph in range(n_swaps - 1, -1, -1):
            swap_layer(*swaps[ph])
    return c


def block_mixer_circuit(topo, probs, beta: float, trotter_steps: int = 1, scaled: bool = True) -> Circuit:
    c = Circuit(topo.k)
    append_block_mixer(c, list(range(topo.k)), topo, probs, beta, trotter_steps, scaled)
    return c


def sector_unitary(circuit: Circuit, blocks: Sequence[Sequence[int]]) -> np.ndarray:
    """Matrix of ``circuit`` restricted to the one-hot product sector (columns = sector states)."""
    n = circuit.num_qubits
    idx = sector_indices(blocks, n)
    cols = []
    for s in idx:
        e = np.zeros(2 ** n, dtype=np.complex128)
        e[s] = 1.0
        cols.append(dense_simulate(circuit, e)[idx])
    return np.stack(cols, axis=1)


# --------------------------------------------------------------------------- #
# OpenQASM 3
# --------------------------------------------------------------------------- #

def _expand_for_qasm(g: Gate) -> list[tuple[str, tuple[int, ...], tuple[float, ...]]]:
    a = g.qubits
    if g.kind == "RZZ":
        (t,) = g.params
        return [("cx", a, ()), ("rz", (a[1],), (t,)), ("cx", a, ())]
    if g.kind == "XXplusYY":
        (t,) = g.params
        h = math.pi / 2
        out = []
        # exp(i t XX / 4) = RXX(-t/2): basis change Z -> X by RY(-pi/2) on both qubits
        xx = [("ry", (a[0],), (-h,)), ("ry", (a[1],), (-h,)), ("cx", a, ()), ("rz", (a[1],), (-t / 2,)),
              ("cx", a, ()), ("ry", (a[0],), (h,)), ("ry", (a[1],), (h,))]
        out += xx
        # exp(i t YY / 4): conjugate the XX rotation by RZ(-pi/2)
        out += [("rz", (a[0],), (-h,)), ("rz", (a[1],), (-h,))]
        out += xx
        out += [("rz", (a[0],), (h,)), ("rz", (a[1],), (h,))]
        return out
    name = {"RX": "rx", "RY": "ry", "RZ": "rz", "Phase": "p", "X": "x",
            "CNOT": "cx", "SWAP": "swap", "CRY": "cry"}[g.kind]
    return [(name, a, g.params)]


_QASM_KIND = {"rx": "RX", "ry": "RY", "rz": "RZ", "p": "Phase", "x": "X",
              "cx": "CNOT", "swap": "SWAP", "cry": "CRY", "rzz": "RZZ"}


def export_qasm(circuit: Circuit) -> str:
    """OpenQASM 3 text; XXplusYY and RZZ are expanded into rz/ry/cx."""
    lines = ["OPENQASM 3.0;", 'include "stdgates.inc";', f"qubit[{circuit.num_qubits}] q;"]
    if circuit.global_phase:
        lines.append(f"gphase({circuit.global_phase!r});")
    for g in circuit.gates:
        for name, qs, ps in _expand_for_qasm(g):
            args = f"({', '.join(repr(float(x)) for x in ps)})" if ps else ""
            lines.append(f"{name}{args} {', '.join(f'q[{q}]' for q in qs)};")
    return "\n".join(lines) + "\n"


_LINE = re.compile(r"^(\w+)\s*(?:\(([^)]*)\))?\s*(.*?);$")


def parse_qasm(text: str) -> Circuit:
    """Read the subset of OpenQASM 3 written by :func:`export_qasm`."""
    circuit = None
    phase = 0.0
    for raw in text.splitlines():
        line = raw.split("//")[0].strip()
        if not line or line.startswith(("OPENQASM", "include")):
            continue
        decl = re.match(r"^qubit\[(\d+)\]\s+q;$", line)
        if decl:
            circuit = Circuit(int(decl.group(1)))
            continue
        m = _LINE.match(line)
        if not m:
            raise ValueError(f"cannot parse line: {raw!r}")
        name, params, targets = m.groups()
        ps = tuple(float(x) for x in params.split(",")) if params else ()
        if name == "gphase":
            phase += ps[0]
            continue
        if circuit is None:
            raise ValueError("gate before qubit declaration")
        if name not in _QASM_KIND:
            raise ValueError(f"unsupported gate {name!r}")
        qs = [int(t) for t in re.findall(r"q\[(\d+)\]", targets)]
        circuit.append(_QASM_KIND[name], qs, ps)
    if circuit is None:
        raise ValueError("no qubit declaration found")
    circuit.global_phase = phase
    return circuit
