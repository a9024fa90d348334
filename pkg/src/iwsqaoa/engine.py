"""WS-QAOA execution on the subspace simulator, schedule optimisation and landscapes."""
from __future__ import annotations

import csv
import math
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .mixers import MixerTopology, ProbabilityTable, block_mixer_unitary
from .problems import OneHotProblem, build_cost_diagonal
from .subspace import (CostDiagonal, SubspaceState, apply_block_unitary, apply_cost_phase,
                       expectation, init_wp_state, sample)

BETA_BOUNDS = (0.0, math.pi)
GAMMA_BOUNDS = (0.0, 2.0)
FD_STEP = 1e-6
MIXER_MODES = ("aligned", "unaligned", "none")


class _Counter:
    """Thread-safe count of subspace simulations, for instrumentation."""

    def __init__(self):
        self._n = 0
        self._lock = threading.Lock()

    def bump(self) -> None:
        with self._lock:
            self._n += 1

    @property
    def value(self) -> int:
        return self._n


SIMULATIONS = _Counter()


@dataclass(frozen=True)
class LinearSchedule:
    beta0: float
    dbeta: float
    gamma0: float
    dgamma: float
    p: int = 1

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")

    def expand(self) -> list[tuple[float, float]]:
        return schedule_expand(self)

    def to_dict(self) -> dict:
        return {"beta0": self.beta0, "dbeta": self.dbeta, "gamma0": self.gamma0,
                "dgamma": self.dgamma, "p": self.p}

    @classmethod
    def from_dict(cls, d) -> "LinearSchedule":
        return cls(float(d["beta0"]), float(d.get("dbeta", 0.0)), float(d["gamma0"]),
                   float(d.get("dgamma", 0.0)), int(d.get("p", 1)))

    @classmethod
    def from_landscape(cls, dbeta: float, dgamma: float, p: int) -> "LinearSchedule":
        """Ramp with ``beta0 = dbeta (p - 1/2) / p`` and ``gamma0 = dgamma / (2p)``."""
        return cls(dbeta * (p - 0.5) / p, dbeta, dgamma / (2 * p), dgamma, p)

    # free parameters: (beta0, gamma0) at p=1, all four otherwise
    def vector(self) -> np.ndarray:
        if self.p == 1:
            return np.array([self.beta0, self.gamma0])
        return np.array([self.beta0, self.dbeta, self.gamma0, self.dgamma])

    @classmethod
    def from_vector(cls, x: Sequence[float], p: int) -> "LinearSchedule":
        if p == 1:
            return cls(float(x[0]), 0.0, float(x[1]), 0.0, 1)
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]), p)

    @staticmethod
    def bounds(p: int) -> list[tuple[float, float]]:
        if p == 1:
            return [BETA_BOUNDS, GAMMA_BOUNDS]
        return [BETA_BOUNDS, BETA_BOUNDS, GAMMA_BOUNDS, GAMMA_BOUNDS]


def schedule_expand(s: LinearSchedule) -> list[tuple[float, float]]:
    """``beta_i = beta0 - i*dbeta/p`` and ``gamma_i = gamma0 + i*dgamma/p`` for i < p."""
    return [(s.beta0 - i * s.dbeta / s.p, s.gamma0 + i * s.dgamma / s.p) for i in range(s.p)]


@dataclass
class QaoaOutcome:
    state: SubspaceState
    expectation: float
    schedule: LinearSchedule
    samples: np.ndarray | None = None
    wall_time: float = 0.0


def _probs_as_table(sizes, probs) -> ProbabilityTable:
    if probs is None:
        return ProbabilityTable.uniform(sizes)
    if isinstance(probs, ProbabilityTable):
        return probs
    return ProbabilityTable([np.asarray(p, dtype=np.float64) for p in probs])


def mixer_probs_for(mode: str, probs: ProbabilityTable) -> tuple[ProbabilityTable, ProbabilityTable]:
    """``(initial-state P, mixer P)`` for a mixer mode.

    ``aligned`` uses P for both, ``unaligned`` keeps the biased state under the
    uniform mixer, ``none`` drops the warm start altogether.
    """
    uniform = ProbabilityTable.uniform(probs.sizes)
    if mode == "aligned":
        return probs, probs
    if mode == "unaligned":
        return probs, uniform
    if mode == "none":
        return uniform, uniform
    raise ValueError(f"unknown mixer mode {mode!r}; expected one of {MIXER_MODES}")


class WsQaoaSimulator:
    """Reusable evaluator for one (problem, topology, P) combination."""

    def __init__(self, problem: OneHotProblem, topology: MixerTopology, probs=None,
                 diag: CostDiagonal | None = None, mixer_probs=None,
                 trotter_steps: int = 1, scaled: bool = True):
        topology.check_layout(problem.layout)
        self.problem = problem
        self.topology = topology
        self.diag = diag if diag is not None else build_cost_diagonal(problem)
        if len(self.diag) != problem.layout.dim:
            raise ValueError("cost diagonal does not match the problem layout")
        self.probs = _probs_as_table(problem.layout.sizes, probs)
        self.mixer_probs = self.probs if mixer_probs is None else _probs_as_table(problem.layout.sizes, mixer_probs)
        self.trotter_steps = trotter_steps
        self.scaled = scaled
        self._init = init_wp_state(problem.layout, self.probs.blocks).amplitudes

    def state(self, schedule: LinearSchedule) -> SubspaceState:
        SIMULATIONS.bump()
        st = SubspaceState(self.problem.layout, self._init.copy())
        for beta, gamma in schedule.expand():
            apply_cost_phase(st, self.diag, gamma)
            for l, topo in enumerate(self.topology.blocks):
                u = block_mixer_unitary(topo, self.mixer_probs[l], beta, self.trotter_steps, self.scaled)
                apply_block_unitary(st, l, u)
        return st

    def energy(self, schedule: LinearSchedule) -> float:
        return expectation(self.state(schedule), self.diag)

    def run(self, schedule: LinearSchedule, shots: int = 0, rng: np.random.Generator | None = None) -> QaoaOutcome:
        t0 = time.perf_counter()
        st = self.state(schedule)
        samples = sample(st, shots, rng if rng is not None else np.random.default_rng()) if shots else None
        return QaoaOutcome(st, expectation(st, self.diag), schedule, samples, time.perf_counter() - t0)


def run_ws_qaoa_state(problem: OneHotProblem, topology: MixerTopology, probs, schedule: LinearSchedule,
                      diag: CostDiagonal | None = None, mixer_probs=None, trotter_steps: int = 1,
                      scaled: bool = True, shots: int = 0, rng: np.random.Generator | None = None) -> QaoaOutcome:
    """WS-QAOA state: p rounds of cost phase then warm-started mixer on ``|W_P>``."""
    sim = WsQaoaSimulator(problem, topology, probs, diag, mixer_probs, trotter_steps, scaled)
    return sim.run(schedule, shots, rng)


# --------------------------------------------------------------------------- #
# optimisation
# --------------------------------------------------------------------------- #

@dataclass
class OptimizationResult:
    schedule: LinearSchedule
    energy: float
    converged: bool
    message: str = ""
    evaluations: int = 0
    starts: list[dict] = field(default_factory=list)


def _central_gradient(f, x: np.ndarray, lo: np.ndarray, hi: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] = min(x[i] + h, hi[i])
        xm[i] = max(x[i] - h, lo[i])
        g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i])
    return g


def seed_grid(p: int, resolution: int) -> list[LinearSchedule]:
    """Coarse starting grid: (beta0, gamma0) at p=1, landscape ramps otherwise."""
    bs = np.linspace(*BETA_BOUNDS, resolution)
    gs = np.linspace(*GAMMA_BOUNDS, resolution)
    if p == 1:
        return [LinearSchedule(b, 0.0, g, 0.0, 1) for b in bs for g in gs]
    return [LinearSchedule.from_landscape(b, g, p) for b in bs for g in gs]


def optimize_parameters(problem: OneHotProblem, topology: MixerTopology, probs=None, p: int = 1,
                        multistart: int = 10, seed: int = 0, diag: CostDiagonal | None = None,
                        mixer_probs=None, grid_resolution: int = 33, scaled: bool = True,
                        simulator: WsQaoaSimulator | None = None) -> OptimizationResult:
    """Bounded quasi-Newton (L-BFGS-B) on the expectation with central-difference gradients.

    Starts are ``multistart`` uniform draws inside the bounds plus the best
    point of a coarse seed grid; the lowest final energy wins.
    """
    sim = simulator or WsQaoaSimulator(problem, topology, probs, diag, mixer_probs, scaled=scaled)
    bounds = LinearSchedule.bounds(p)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    count = [0]

    def f(x):
        count[0] += 1
        return sim.energy(LinearSchedule.from_vector(np.clip(x, lo, hi), p))

    grid = seed_grid(p, grid_resolution)
    grid_vals = [sim.energy(s) for s in grid]
    count[0] += len(grid)
    rng = np.random.default_rng(seed)
    starts = [grid[int(np.argmin(grid_vals))].vector()]
    starts += [rng.uniform(lo, hi) for _ in range(multistart)]

    best, log = None, []
    for x0 in starts:
        res = minimize(f, x0, jac=lambda x: _central_gradient(f, x, lo, hi), method="L-BFGS-B", bounds=bounds)
        e = float(res.fun)
        log.append({"x0": np.asarray(x0).tolist(), "x": res.x.tolist(), "energy": e, "success": bool(res.success)})
        if best is None or e < best[1]:
            best = (res.x, e, bool(res.success), str(res.message))
    x, e, ok, msg = best
    # the grid point itself is a valid fallback
    if min(grid_vals) < e:
        x, e = starts[0], float(min(grid_vals))
    return OptimizationResult(LinearSchedule.from_vector(np.clip(x, lo, hi), p), e, ok, msg, count[0], log)


# --------------------------------------------------------------------------- #
# landscapes
# --------------------------------------------------------------------------- #

@dataclass
class Landscape:
    dbetas: np.ndarray
    dgammas: np.ndarray
    ratios: np.ndarray  # shape (len(dbetas), len(dgammas))
    e_opt: float

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max())

    def argmax(self) -> tuple[int, int]:
        i, j = np.unravel_index(int(np.argmax(self.ratios)), self.ratios.shape)
        return int(i), int(j)

    def rows(self):
        for i, db in enumerate(self.dbetas):
            for j, dg in enumerate(self.dgammas):
                yield float(db), float(dg), float(self.ratios[i, j])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dbeta", "dgamma", "r"])
            for row in self.rows():
                w.writerow([repr(v) for v in row])


def landscape_axes(resolution: int, beta_max: float = BETA_BOUNDS[1], gamma_max: float = GAMMA_BOUNDS[1]):
    if resolution < 2:
        raise ValueError("grid resolution must be >= 2")
    return np.linspace(0.0, beta_max, resolution), np.linspace(0.0, gamma_max, resolution)


def landscape_grid(problem: OneHotProblem, topology: MixerTopology, probs, p: int,
                   dbetas: Sequence[float], dgammas: Sequence[float], mode: str = "aligned",
                   diag: CostDiagonal | None = None, scaled: bool = True) -> Landscape:
    """Approximation ratio over a (dbeta, dgamma) grid of landscape ramps."""
    from .metrics import approximation_ratio

    if len(dbetas) < 2 or len(dgammas) < 2:
        raise ValueError("grid resolutions must be >= 2")
    table = _probs_as_table(problem.layout.sizes, probs)
    init_p, mix_p = mixer_probs_for(mode, table)
    sim = WsQaoaSimulator(problem, topology, init_p, diag, mix_p, scaled=scaled)
    ratios = np.empty((len(dbetas), len(dgammas)))
    for i, db in enumerate(dbetas):
        for j, dg in enumerate(dgammas):
            e = sim.energy(LinearSchedule.from_landscape(float(db), float(dg), p))
            ratios[i, j] = approximation_ratio(e, sim.diag.e_opt)
    return Landscape(np.asarray(dbetas, float), np.asarray(dgammas, float), ratios, sim.diag.e_opt)
