"""Iterative warm-starting: Boltzmann updates, clamping and the sampling loop."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .mixers import MixerTopology, ProbabilityTable
from .problems import OneHotProblem, evaluate_bitstring
from .subspace import BlockLayout, CostDiagonal, indices_to_bitstrings

SAMPLERS = ("quantum", "random")
CLAMP_MODES = ("project", "rescale")


@dataclass
class IwsConfig:
    eps: float = 0.2
    beta_temp: float = 15.0
    shots: int = 100  # M, per iteration
    total_shots: int = 3000  # M-bar, overall budget
    p: int = 1
    sampler: str = "quantum"
    seed: int = 0
    multistart: int = 10
    clamp_mode: str = "project"
    scaled: bool = True

    def validate(self, sizes: Sequence[int] | None = None) -> None:
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.clamp_mode not in CLAMP_MODES:
            raise ValueError(f"clamp_mode must be one of {CLAMP_MODES}, got {self.clamp_mode!r}")
        if not 1 <= self.shots <= self.total_shots:
            raise ValueError("need 1 <= shots <= total_shots")
        if self.beta_temp <= 0:
            raise ValueError("beta_temp must be > 0")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        for k in sizes or ():
            if self.eps > 1 - 1 / k + 1e-15:
                raise ValueError(f"eps={self.eps} exceeds 1 - 1/k for a block of size {k}")

    @property
    def iterations(self) -> int:
        return math.ceil(self.total_shots / self.shots)


# --------------------------------------------------------------------------- #
# probability updates
# --------------------------------------------------------------------------- #

def boltzmann_update(samples, energies, beta_temp: float, layout: BlockLayout) -> ProbabilityTable:
    """Per-block marginals of the samples under weights ``exp(-beta_temp * E / spread)``.

    ``samples`` are ``(M, L)`` multi-indices.  A zero energy spread gives every
    sample weight 1.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.int64))
    energies = np.asarray(energies, dtype=np.float64).reshape(-1)
    if samples.shape[0] == 0:
        raise ValueError("empty sample set")
    if samples.shape[0] != energies.size:
        raise ValueError("samples and energies are not aligned")
    if samples.shape[1] != layout.num_blocks:
        raise ValueError(f"samples have {samples.shape[1]} blocks, layout has {layout.num_blocks}")
    spread = float(energies.max() - energies.min())
    if spread == 0.0:
        w = np.ones_like(energies)
    else:
        # shifting by the minimum cancels in the normalisation and avoids underflow
        w = np.exp(-beta_temp * (energies - energies.min()) / spread)
    blocks = [np.bincount(samples[:, l], weights=w, minlength=k) / w.sum()
              for l, k in enumerate(layout.sizes)]
    return ProbabilityTable(blocks)


def clamp_bounds(k: int, eps: float) -> tuple[float, float]:
    lo, hi = eps / (k - 1), 1.0 - eps
    if k * lo > 1 + 1e-12 or lo > hi + 1e-12:
        raise ValueError(f"eps={eps} infeasible for a block of size {k}")
    return lo, hi


def _project_block(p: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Euclidean projection onto {x : lo <= x <= hi, sum x = 1}."""
    if np.all(p >= lo) and np.all(p <= hi) and abs(p.sum() - 1.0) <= 1e-12:
        return p.copy()
    # g(tau) = sum clip(p - tau, lo, hi) is piecewise linear and non-increasing
    knots = np.unique(np.concatenate([p - lo, p - hi]))
    g = np.array([np.clip(p - t, lo, hi).sum() for t in knots])
    # g is non-increasing in tau; find the segment where it crosses 1
    idx = np.searchsorted(-g, -1.0, side="left")
    if idx == 0:
        tau = knots[0]
    elif idx == knots.size:
        tau = knots[-1]
    else:
        t0, t1, g0, g1 = knots[idx - 1], knots[idx], g[idx - 1], g[idx]
        tau = t0 if g0 == g1 else t0 + (g0 - 1.0) * (t1 - t0) / (g0 - g1)
    return np.clip(p - tau, lo, hi)


def _rescale_block(p: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Clip, then shrink the slack toward the violated side so the sum is 1."""
    x = np.clip(p, lo, hi)
    s, k = x.sum(), x.size
    if s > 1.0:
        x = lo + (x - lo) * (1.0 - k * lo) / (s - k * lo)
    elif s < 1.0:
        x = hi - (hi - x) * (k * hi - 1.0) / (k * hi - s)
    return np.clip(x, lo, hi)


def clamp(probs: ProbabilityTable, eps: float, mode: str = "project") -> ProbabilityTable:
    """Force every entry into ``[eps/(k-1), 1-eps]`` while keeping block sums at 1.

    ``project`` (default) is the Euclidean projection onto the clipped simplex;
    ``rescale`` clips and then rescales the slack, kept for sensitivity checks.
    """
    if mode not in CLAMP_MODES:
        raise ValueError(f"unknown clamp mode {mode!r}")
    fn = _project_block if mode == "project" else _rescale_block
    out = []
    for l, p in enumerate(probs):
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"block {l} is not normalised (sum {p.sum()})")
        lo, hi = clamp_bounds(p.size, eps)
        out.append(fn(np.asarray(p, dtype=np.float64), lo, hi))
    return ProbabilityTable(out, eps)


# --------------------------------------------------------------------------- #
# samplers
# --------------------------------------------------------------------------- #

class QuantumSampler:
    """Samples the WS-QAOA state built from the current warm start."""

    kind = "quantum"

    def __init__(self, problem: OneHotProblem, topology: MixerTopology, diag: CostDiagonal,
                 schedule, scaled: bool = True):
        self.problem, self.topology, self.diag = problem, topology, diag
        self.schedule = schedule
        self.scaled = scaled
        self.last_state = None

    def draw(self, probs: ProbabilityTable, shots: int, rng: np.random.Generator):
        from .engine import WsQaoaSimulator
        from .subspace import sample_flat

        sim = WsQaoaSimulator(self.problem, self.topology, probs, self.diag, scaled=self.scaled)
        self.last_state = sim.state(self.schedule)
        flat = sample_flat(self.last_state, shots, rng)
        idx = np.stack(np.unravel_index(flat, self.problem.layout.shape), axis=1)
        return idx, self.diag.values[flat]


class RandomSampler:
    """Classical baseline: each block drawn independently from its warm-start distribution."""

    kind = "random"

    def __init__(self, problem: OneHotProblem):
        self.problem = problem
        self.last_state = None

    def draw(self, probs: ProbabilityTable, shots: int, rng: np.random.Generator):
        cols = []
        for p in probs:
            cdf = np.cumsum(p)
            u = rng.random(shots) * cdf[-1]
            cols.append(np.minimum(np.searchsorted(cdf, u, side="right"), p.size - 1))
        idx = np.stack(cols, axis=1)
        bits = indices_to_bitstrings(self.problem.layout, idx)
        return idx, np.asarray(evaluate_bitstring(self.problem, bits)).reshape(-1)


# --------------------------------------------------------------------------- #
# the loop
# --------------------------------------------------------------------------- #

@dataclass
class IwsIteration:
    iteration: int
    probs: list[list[float]]
    shots: int
    samples: np.ndarray
    energies: np.ndarray
    spread: float
    best_energy: float
    p_opt: float | None = None

    def record(self) -> dict:
        e = self.energies
        return {"iter": self.iteration, "probs": self.probs, "shots": self.shots,
                "energy_min": float(e.min()), "energy_max": float(e.max()), "energy_mean": float(e.mean()),
                "spread": self.spread, "best_energy": self.best_energy, "p_opt": self.p_opt}


@dataclass
class IwsRun:
    config: IwsConfig
    schedule: dict | None
    iterations: list[IwsIteration] = field(default_factory=list)
    final_probs: list[list[float]] | None = None
    final_p_opt: float | None = None
    e_opt: float | None = None

    @property
    def total_shots(self) -> int:
        return sum(it.shots for it in self.iterations)

    @property
    def best_energy(self) -> float:
        return self.iterations[-1].best_energy

    def energy_stream(self) -> np.ndarray:
        return np.concatenate([it.energies for it in self.iterations])

    def shots_to_optimum(self, atol: float = 1e-9) -> int | None:
        from .metrics import shots_to_target

        if self.e_opt is None:
            raise ValueError("E_opt unknown for this run")
        return shots_to_target(self.energy_stream(), self.e_opt, atol)

    @property
    def initial_p_opt(self) -> float | None:
        return self.iterations[0].p_opt if self.iterations else None

    def records(self) -> Iterator[dict]:
        for it in self.iterations:
            yield {"type": "iteration", **it.record()}
        yield {"type": "summary", "config": asdict(self.config), "schedule": self.schedule,
               "total_shots": self.total_shots, "best_energy": self.best_energy, "e_opt": self.e_opt,
               "initial_p_opt": self.initial_p_opt, "final_p_opt": self.final_p_opt,
               "final_probs": self.final_probs}

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records())


def _p_opt_of(sampler, probs: ProbabilityTable, diag: CostDiagonal | None, shape) -> float | None:
    from .metrics import p_opt, p_opt_product

    if diag is None:
        return None
    if sampler.last_state is not None:
        return p_opt(sampler.last_state, diag)
    return p_opt_product(probs, diag, shape)


def run_iws(problem: OneHotProblem, topology: MixerTopology | None, config: IwsConfig,
            diag: CostDiagonal | None = None, schedule=None) -> IwsRun:
    """Sample, weight, update and clamp until the shot budget is spent.

    The quantum sampler optimises its schedule once at the uniform start
    (or takes ``schedule``) and reuses it for every iteration.  The random
    sampler never builds a state; a ``diag`` is then only used to report
    P_opt of the product distribution.
    """
    from .engine import WsQaoaSimulator, optimize_parameters
    from .problems import build_cost_diagonal

    layout = problem.layout
    config.validate(layout.sizes)
    rng = np.random.default_rng(config.seed)
    probs = ProbabilityTable.uniform(layout.sizes)

    if config.sampler == "quantum":
        if topology is None:
            raise ValueError("the quantum sampler needs a mixer topology")
        diag = diag if diag is not None else build_cost_diagonal(problem)
        if schedule is None:
            schedule = optimize_parameters(problem, topology, probs, config.p, config.multistart,
                                           config.seed, diag, scaled=config.scaled).schedule
        sampler = QuantumSampler(problem, topology, diag, schedule, config.scaled)
    else:
        sampler = RandomSampler(problem)

    run = IwsRun(config, schedule.to_dict() if schedule is not None else None,
                 e_opt=diag.e_opt if diag is not None else None)
    used, best = 0, math.inf
    for t in range(config.iterations):
        m = min(config.shots, config.total_shots - used)
        idx, energies = sampler.draw(probs, m, rng)
        used += m
        best = min(best, float(energies.min()))
        spread = float(energies.max() - energies.min())
        run.iterations.append(IwsIteration(t, probs.to_list(), m, idx, energies, spread, best,
                                           _p_opt_of(sampler, probs, diag, layout.shape)))
        probs = clamp(boltzmann_update(idx, energies, config.beta_temp, layout), config.eps, config.clamp_mode)

    run.final_probs = probs.to_list()
    if diag is not None:
        if config.sampler == "quantum":
            sim = WsQaoaSimulator(problem, topology, probs, diag, scaled=config.scaled)
            sampler.last_state = sim.state(schedule)
        run.final_p_opt = _p_opt_of(sampler, probs, diag, layout.shape)
    return run


def write_jsonl(path, runs: Sequence[IwsRun]) -> None:
    with open(path, "w") as fh:
        for rep, r in enumerate(runs):
            for rec in r.records():
                fh.write(json.dumps({"rep": rep, **rec}) + "\n")
