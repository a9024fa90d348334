"""Batch command-line driver: ``iwsqaoa {gen,run-iws,landscape,synth,repair}``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import circuits, engine, iws, metrics, postprocess, problems
from .mixers import MixerTopology, ProbabilityTable


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _topology(problem, name: str) -> MixerTopology:
    return MixerTopology.uniform(problem.layout.sizes, name)


def _load_problem(path) -> problems.OneHotProblem:
    return problems.OneHotProblem.load(path)


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# --------------------------------------------------------------------------- #
# gen
# --------------------------------------------------------------------------- #

def cmd_gen(args) -> dict:
    if args.family == "mkc":
        if args.k is None:
            raise CliError("mkc needs --k")
        prob = problems.gen_max_k_cut(args.n, args.k, args.seed)
    elif args.family == "tsp":
        prob = problems.gen_tsp(args.n, args.seed, args.lam)
    else:
        if args.map:
            hw = problems.HardwareMap.load(args.map)
        else:
            hw = problems.heavy_hex_map(args.hex_rows, args.hex_cols, args.map_seed, args.fragment)
        prob = problems.gen_hardware_instance(hw, args.n, args.swap_layers, args.seed,
                                              args.cz_max, args.readout_max)
    prob.save(args.out)
    return {"out": str(args.out), "family": prob.family, "blocks": list(prob.layout.sizes),
            "feasible_states": prob.layout.dim}


# --------------------------------------------------------------------------- #
# run-iws
# --------------------------------------------------------------------------- #

_IWS_FLAGS = {"eps": "eps", "beta_temp": "beta_temp", "m": "shots", "m_total": "total_shots", "p": "p",
              "sampler": "sampler", "seed": "seed", "multistart": "multistart", "clamp_mode": "clamp_mode"}


def resolve_iws_config(args) -> iws.IwsConfig:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    values = asdict(iws.IwsConfig())
    if args.config:
        loaded = json.loads(Path(args.config).read_text())
        unknown = set(loaded) - {f.name for f in fields(iws.IwsConfig)}
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for flag, key in _IWS_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            values[key] = v
    return iws.IwsConfig(**values)


def cmd_run_iws(args) -> dict:
    prob = _load_problem(args.problem)
    cfg = resolve_iws_config(args)
    cfg.validate(prob.layout.sizes)
    if args.reps < 1:
        raise CliError("--reps must be >= 1")
    topo = _topology(prob, args.topology)
    diag = problems.build_cost_diagonal(prob)
    schedule = None
    if cfg.sampler == "quantum":
        schedule = engine.optimize_parameters(prob, topo, None, cfg.p, cfg.multistart, cfg.seed, diag,
                                              scaled=cfg.scaled).schedule
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(cfg.seed).spawn(args.reps)]
    before = engine.SIMULATIONS.value

    def one(rep_seed):
        rep_cfg = iws.IwsConfig(**{**asdict(cfg), "seed": rep_seed})
        return iws.run_iws(prob, topo if cfg.sampler == "quantum" else None, rep_cfg, diag, schedule)

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        runs = list(pool.map(one, seeds))
    sims = engine.SIMULATIONS.value - before

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    iws.write_jsonl(out / "runs.jsonl", runs)
    for rep, r in enumerate(runs):
        metrics.write_best_energy_csv(out / f"best_energy_rep{rep}.csv", r.energy_stream())
        with open(out / f"probs_rep{rep}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "block", "pos", "prob"])
            for it in r.iterations:
                for l, block in enumerate(it.probs):
                    for i, p in enumerate(block):
                        w.writerow([it.iteration, l, i, repr(p)])
    gains = [r.final_p_opt / r.initial_p_opt for r in runs if r.initial_p_opt]
    return {"out_dir": str(out), "reps": args.reps, "iterations": len(runs[0].iterations),
            "simulator_calls": sims, "e_opt": diag.e_opt,
            "best_energies": [r.best_energy for r in runs],
            "median_p_opt_gain": float(np.median(gains)) if gains else None}


# --------------------------------------------------------------------------- #
# landscape
# --------------------------------------------------------------------------- #

def _warm_start(prob, diag, eps: float | None, probs_file) -> ProbabilityTable:
    if probs_file:
        return ProbabilityTable(json.loads(Path(probs_file).read_text()))
    if eps is None:
        return ProbabilityTable.uniform(prob.layout.sizes)
    best = prob.layout.multi_index(int(diag.optima[0]))
    return ProbabilityTable.from_solution(prob.layout.sizes, best, eps)


def cmd_landscape(args) -> dict:
    prob = _load_problem(args.problem)
    diag = problems.build_cost_diagonal(prob)
    table = _warm_start(prob, diag, args.eps, args.probs)
    betas, gammas = engine.landscape_axes(args.res, args.beta_max, args.gamma_max)
    ls = engine.landscape_grid(prob, _topology(prob, args.topology), table, args.p, betas, gammas,
                               args.mode, diag)
    ls.write_csv(args.out)
    i, j = ls.argmax()
    return {"out": str(args.out), "rows": ls.ratios.size, "max_r": ls.max_ratio,
            "argmax": {"dbeta": float(betas[i]), "dgamma": float(gammas[j])}}


# --------------------------------------------------------------------------- #
# synth
# --------------------------------------------------------------------------- #

def cmd_synth(args) -> dict:
    prob = _load_problem(args.problem)
    sizes = prob.layout.sizes
    table = ProbabilityTable(json.loads(Path(args.probs).read_text())) if args.probs else ProbabilityTable.uniform(sizes)
    topo = _topology(prob, args.topology)
    sched = engine.LinearSchedule(args.beta0, args.dbeta, args.gamma0, args.dgamma, args.p) if args.p > 0 else None
    circ = circuits.synth_ws_qaoa(prob, topo, table, sched, args.prep_style, swap_routing=args.swap_routing)
    text = circuits.export_qasm(circ)
    if args.qasm:
        Path(args.qasm).write_text(text)
    if args.gates_json:
        Path(args.gates_json).write_text(circ.to_json() + "\n")
    report = {"metrics": circ.metrics()}
    if args.verify:
        if prob.num_vars > 12:
            raise CliError("--verify supports at most 12 qubits")
        psi = circuits.dense_simulate(circuits.parse_qasm(text))
        idx = circuits.sector_indices(prob.layout.blocks, prob.num_vars)
        if sched is None:
            from .subspace import init_wp_state
            ref = init_wp_state(prob.layout, table.blocks).vector
        else:
            ref = engine.run_ws_qaoa_state(prob, topo, table, sched).state.vector
        err = float(np.abs(psi[idx] - ref).max())
        leak = float(1.0 - np.sum(np.abs(psi[idx]) ** 2))
        report["verify"] = {"max_amplitude_error": err, "leakage": leak, "ok": err < 1e-9 and abs(leak) < 1e-12}
        if not report["verify"]["ok"]:
            raise CliError(f"verification failed: {report['verify']}")
    return report


# --------------------------------------------------------------------------- #
# repair
# --------------------------------------------------------------------------- #

def read_bitstrings(path) -> np.ndarray:
    rows = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    if not rows or any(set(r) - {"0", "1"} for r in rows):
        raise CliError("samples file must hold one 0/1 string per line")
    return np.array([[int(ch) for ch in r] for r in rows], dtype=np.uint8)


def cmd_repair(args) -> dict:
    prob = _load_problem(args.problem)
    xs = read_bitstrings(args.samples)
    if xs.shape[1] != prob.num_vars:
        raise CliError(f"samples have {xs.shape[1]} bits, problem has {prob.num_vars} free variables")
    rng = np.random.default_rng(args.seed)
    if args.f_bit:
        xs = postprocess.corrupt_sample(xs, args.f_bit, rng)
    hist = postprocess.violation_histogram(prob, xs)
    fixed = postprocess.repair_batch(prob, xs, args.lam)
    _write_text(args.out, "".join("".join(map(str, r)) + "\n" for r in fixed))
    with open(args.hist, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["violations", "count"])
        for v, n in enumerate(hist):
            w.writerow([v, int(n)])
    after = postprocess.violation_histogram(prob, fixed)
    return {"samples": int(xs.shape[0]), "feasible_before": int(hist[0]), "feasible_after": int(after[0])}


# --------------------------------------------------------------------------- #
# entry point
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="iwsqaoa", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a problem instance")
    g.add_argument("family", choices=["mkc", "tsp", "hardware"])
    g.add_argument("--n", type=int, required=True, help="nodes, cities, or triplets")
    g.add_argument("--k", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lam", type=float, default=2.0, help="TSP time-penalty weight")
    g.add_argument("--map", help="coupling-map JSON for hardware instances")
    g.add_argument("--hex-rows", type=int, default=2)
    g.add_argument("--hex-cols", type=int, default=2)
    g.add_argument("--map-seed", type=int, default=0)
    g.add_argument("--fragment", type=int, default=None, help="keep this many nodes of the synthetic map")
    g.add_argument("--swap-layers", type=int, default=3)
    g.add_argument("--cz-max", type=float, default=0.05)
    g.add_argument("--readout-max", type=float, default=0.30)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run-iws", help="run iterative warm-start repetitions")
    r.add_argument("problem")
    r.add_argument("--config", help="JSON file with IwsConfig keys")
    r.add_argument("--p", type=int)
    r.add_argument("--m", type=int, help="shots per iteration")
    r.add_argument("--m-total", type=int, help="total shot budget")
    r.add_argument("--eps", type=float)
    r.add_argument("--beta-temp", type=float)
    r.add_argument("--sampler", choices=iws.SAMPLERS)
    r.add_argument("--clamp-mode", choices=iws.CLAMP_MODES)
    r.add_argument("--multistart", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--reps", type=int, default=1)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--topology", default="complete", choices=["complete", "ring", "line"])
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_run_iws)

    ls = sub.add_parser("landscape", help="sweep a (dbeta, dgamma) grid")
    ls.add_argument("problem")
    ls.add_argument("--res", type=int, default=16)
    ls.add_argument("--p", type=int, default=1)
    ls.add_argument("--beta-max", type=float, default=engine.BETA_BOUNDS[1])
    ls.add_argument("--gamma-max", type=float, default=engine.GAMMA_BOUNDS[1])
    mode = ls.add_mutually_exclusive_group()
    mode.add_argument("--aligned", dest="mode", action="store_const", const="aligned")
    mode.add_argument("--unaligned", dest="mode", action="store_const", const="unaligned")
    mode.add_argument("--no-warm-start", dest="mode", action="store_const", const="none")
    ls.set_defaults(mode="aligned")
    ls.add_argument("--eps", type=float, default=None, help="warm start on the optimum clamped by eps")
    ls.add_argument("--probs", help="JSON warm-start table instead of --eps")
    ls.add_argument("--topology", default="complete", choices=["complete", "ring", "line"])
    ls.add_argument("--out", required=True)
    ls.set_defaults(func=cmd_landscape)

    s = sub.add_parser("synth", help="synthesise and export a WS-QAOA circuit")
    s.add_argument("problem")
    s.add_argument("--probs", help="JSON warm-start table (default uniform)")
    s.add_argument("--p", type=int, default=1)
    s.add_argument("--beta0", type=float, default=0.5)
    s.add_argument("--dbeta", type=float, default=0.0)
    s.add_argument("--gamma0", type=float, default=0.5)
    s.add_argument("--dgamma", type=float, default=0.0)
    s.add_argument("--prep-style", default="linear", choices=["linear", "center", "tree"])
    s.add_argument("--topology", default="complete", choices=["complete", "ring", "line"])
    s.add_argument("--swap-routing", action="store_true")
    s.add_argument("--qasm")
    s.add_argument("--gates-json")
    s.add_argument("--verify", action="store_true")
    s.set_defaults(func=cmd_synth)

    rp = sub.add_parser("repair", help="greedy repair of sampled bitstrings")
    rp.add_argument("problem")
    rp.add_argument("samples", help="one 0/1 string per line")
    rp.add_argument("--lambda", dest="lam", type=float, default=10.0)
    rp.add_argument("--f-bit", type=float, default=0.0)
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--out", default="-")
    rp.add_argument("--hist", required=True)
    rp.set_defaults(func=cmd_repair)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        result = args.func(args)
    except (CliError, ValueError, NotImplementedError, MemoryError, OSError, KeyError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    if result is not None:
        # repair may stream bitstrings on stdout; keep its summary off that channel
        to_stderr = args.command == "repair" and args.out in (None, "-")
        (sys.stderr if to_stderr else sys.stdout).write(json.dumps(result) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
