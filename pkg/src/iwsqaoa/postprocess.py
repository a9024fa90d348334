"""Greedy repair of constraint-violating bitstrings and violation emulation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .problems import OneHotProblem, block_violations

IMPROVE_TOL = 1e-12


@dataclass
class RepairTrace:
    x: np.ndarray
    flips: list[int] = field(default_factory=list)
    costs: list[float] = field(default_factory=list)  # penalised cost before and after each flip


class _Penalised:
    def __init__(self, problem: OneHotProblem, lam: float):
        c, lin, quad = problem.arrays()
        self.c, self.lin = c, lin
        self.sym = quad + quad.T
        self.lam = lam
        n = problem.num_vars
        self.block_of = np.empty(n, dtype=np.int64)
        for l, b in enumerate(problem.layout.blocks):
            self.block_of[list(b)] = l
        self.num_blocks = problem.layout.num_blocks

    def max_flip_gain(self) -> float:
        return float(np.max(np.abs(self.lin) + np.abs(self.sym).sum(axis=1)))

    def cost(self, x: np.ndarray) -> float:
        sums = np.bincount(self.block_of, weights=x, minlength=self.num_blocks)
        return float(self.c + x @ self.lin + 0.5 * x @ self.sym @ x + self.lam * ((1 - sums) ** 2).sum())


def penalised_cost(problem: OneHotProblem, x, lam: float = 10.0) -> float:
    """``C(x) + lam * sum_blocks (1 - sum x)^2``."""
    return _Penalised(problem, lam).cost(np.asarray(x, dtype=np.float64))


def lambda_is_adequate(problem: OneHotProblem, lam: float) -> bool:
    """True when ``lam`` exceeds every single-flip objective change bound."""
    return lam > _Penalised(problem, lam).max_flip_gain()


def greedy_repair_trace(problem: OneHotProblem, x, lam: float = 10.0, check: bool = True) -> RepairTrace:
    """Steepest single-bit descent on the penalised objective, recording each flip.

    Ties go to the lowest variable index; the loop stops when no flip lowers
    the cost by more than ``1e-12``.
    """
    pen = _Penalised(problem, lam)
    if check and lam <= pen.max_flip_gain():
        warnings.warn(f"lambda={lam} <= max single-flip objective change {pen.max_flip_gain():.3g}; "
                      "repaired strings may stay infeasible", RuntimeWarning, stacklevel=2)
    x = np.asarray(x, dtype=np.float64).copy()
    if x.shape != (problem.num_vars,):
        raise ValueError(f"bitstring length {x.size} != {problem.num_vars}")
    field_ = pen.lin + pen.sym @ x
    sums = np.bincount(pen.block_of, weights=x, minlength=pen.num_blocks)
    trace = RepairTrace(x, costs=[pen.cost(x)])
    for _ in range(x.size * x.size + 1):
        d = 1.0 - 2.0 * x
        delta = d * field_ + lam * (1.0 - 2.0 * d * (1.0 - sums[pen.block_of]))
        i = int(np.argmin(delta))
        if delta[i] >= -IMPROVE_TOL:
            break
        x[i] += d[i]
        field_ += pen.sym[:, i] * d[i]
        sums[pen.block_of[i]] += d[i]
        trace.flips.append(i)
        trace.costs.append(trace.costs[-1] + float(delta[i]))
    trace.x = x.astype(np.uint8)
    return trace


def greedy_repair(problem: OneHotProblem, x, lam: float = 10.0) -> np.ndarray:
    return greedy_repair_trace(problem, x, lam).x


def repair_batch(problem: OneHotProblem, xs, lam: float = 10.0) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs))
    if xs.shape[0] and not lambda_is_adequate(problem, lam):
        warnings.warn(f"lambda={lam} may be too small for guaranteed feasibility", RuntimeWarning, stacklevel=2)
    return np.stack([greedy_repair_trace(problem, x, lam, check=False).x for x in xs]) if xs.size else xs


def corrupt_sample(x, f_bit: float, rng: np.random.Generator) -> np.ndarray:
    """Flip each bit independently with probability ``f_bit``."""
    if not 0.0 <= f_bit < 1.0:
        raise ValueError("f_bit must lie in [0, 1)")
    x = np.asarray(x, dtype=np.uint8)
    return x ^ (rng.random(x.shape) < f_bit).astype(np.uint8)


def one_hot_survival(k: int, f_bit: float) -> float:
    """Probability a one-hot block of size ``k`` is still one-hot after independent flips."""
    f = f_bit
    return (1 - f) ** k + f * (k - 1) * f * (1 - f) ** (k - 2)


def f_bit_for_violation_rate(k: int, rate: float) -> float:
    """Flip probability giving a per-block violation probability of ``rate``."""
    if not 0.0 < rate < 1.0 - one_hot_survival(k, 0.5):
        raise ValueError("rate out of reachable range")
    return float(brentq(lambda f: 1.0 - one_hot_survival(k, f) - rate, 0.0, 0.5))


def violation_histogram(problem: OneHotProblem, xs) -> np.ndarray:
    """``hist[v]`` counts samples with exactly ``v`` violated blocks."""
    v = block_violations(problem, xs)
    return np.bincount(v, minlength=problem.layout.num_blocks + 1)
