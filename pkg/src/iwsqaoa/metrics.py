"""Solution-quality metrics over states and sample streams."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .subspace import CostDiagonal, SubspaceState


class UndefinedRatioError(ValueError):
    pass


def approximation_ratio(energy, e_opt: float):
    """``r = 1 - |E - E_opt| / |E_opt|``; works element-wise on arrays."""
    if e_opt == 0:
        raise UndefinedRatioError("approximation ratio is undefined for E_opt = 0")
    r = 1.0 - np.abs(np.asarray(energy, dtype=np.float64) - e_opt) / abs(e_opt)
    return float(r) if np.ndim(r) == 0 else r


def p_opt(state: SubspaceState, diag: CostDiagonal) -> float:
    return float(state.probabilities()[diag.optima].sum())


def p_opt_product(probs, diag: CostDiagonal, shape: Sequence[int]) -> float:
    """Mass a product distribution (one categorical per block) puts on the optima."""
    idx = np.unravel_index(diag.optima, tuple(shape))
    mass = np.ones(diag.optima.size)
    for l, p in enumerate(probs):
        mass *= np.asarray(p)[idx[l]]
    return float(mass.sum())


def expected_best_trace(state: SubspaceState | np.ndarray, diag: CostDiagonal, shots: int):
    """Expected best energy after ``s = 1..shots`` independent draws.

    ``E_0`` is the expectation and ``E_s = sum_x p_x min(C_x, E_{s-1})``.
    Returns ``(E, r)`` arrays of length ``shots`` (``r`` is ``None`` when
    ``E_opt = 0``).
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = state.probabilities() if isinstance(state, SubspaceState) else np.asarray(state, float)
    order = np.argsort(diag.values, kind="stable")
    c = diag.values[order]
    pc = probs[order]
    cum_p = np.cumsum(pc)
    cum_pc = np.cumsum(pc * c)
    e = float(np.dot(probs, diag.values))
    out = np.empty(shots)
    for s in range(shots):
        # states below e contribute their own energy, the rest contribute e
        n = int(np.searchsorted(c, e, side="left"))
        if n == 0:
            out[s:] = e
            break
        e = min(e, cum_pc[n - 1] + (cum_p[-1] - cum_p[n - 1]) * e)
        out[s] = e
    r = None if diag.e_opt == 0 else approximation_ratio(out, diag.e_opt)
    return out, r


def empirical_best_trace(energies: Sequence[float]) -> np.ndarray:
    return np.minimum.accumulate(np.asarray(energies, dtype=np.float64))


def shots_to_target(energies: Sequence[float], target: float, atol: float = 1e-9) -> int | None:
    """1-based shot index of the first energy within ``atol`` of ``target``."""
    hits = np.flatnonzero(np.asarray(energies) <= target + atol)
    return int(hits[0]) + 1 if hits.size else None


@dataclass
class MetricsReport:
    energy: float
    e_opt: float
    ratio: float | None
    p_opt: float
    expected_best: np.ndarray
    expected_ratio: np.ndarray | None

    @classmethod
    def from_state(cls, state: SubspaceState, diag: CostDiagonal, shots: int = 1000) -> "MetricsReport":
        e = float(np.dot(state.probabilities(), diag.values))
        trace, rtrace = expected_best_trace(state, diag, shots)
        ratio = None if diag.e_opt == 0 else approximation_ratio(e, diag.e_opt)
        return cls(e, diag.e_opt, ratio, p_opt(state, diag), trace, rtrace)


def write_best_energy_csv(path, energies: Sequence[float]) -> None:
    trace = empirical_best_trace(energies)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shot", "best_energy"])
        for s, e in enumerate(trace, start=1):
            w.writerow([s, repr(float(e))])


def write_ratio_trace_csv(path, ratios: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "r"])
        for s, r in enumerate(ratios, start=1):
            w.writerow([s, repr(float(r))])
