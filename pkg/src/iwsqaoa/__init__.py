"""Warm-started XY-mixer QAOA and iterative warm-starting on one-hot constrained problems."""
from .engine import LinearSchedule, optimize_parameters, run_ws_qaoa_state, schedule_expand
from .iws import IwsConfig, boltzmann_update, clamp, run_iws
from .mixers import BlockTopology, MixerTopology, ProbabilityTable
from .problems import (HardwareMap, OneHotProblem, QuadraticObjective, brute_force_optimum,
                       build_cost_diagonal, evaluate_bitstring, gen_hardware_instance, gen_max_k_cut,
                       gen_tsp, select_triplets)
from .subspace import BlockLayout, CostDiagonal, SubspaceState, init_wp_state

__version__ = "0.1.0"

__all__ = [
    "BlockLayout", "BlockTopology", "CostDiagonal", "HardwareMap", "IwsConfig", "LinearSchedule",
    "MixerTopology", "OneHotProblem", "ProbabilityTable", "QuadraticObjective", "SubspaceState",
    "boltzmann_update", "brute_force_optimum", "build_cost_diagonal", "clamp", "evaluate_bitstring",
    "gen_hardware_instance", "gen_max_k_cut", "gen_tsp", "init_wp_state", "optimize_parameters",
    "run_iws", "run_ws_qaoa_state", "schedule_expand", "select_triplets",
]
