import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import iwsqaoa.engine as engine
from iwsqaoa.engine import SIMULATIONS, optimize_parameters
from iwsqaoa.iws import IwsConfig, boltzmann_update, clamp, clamp_bounds, run_iws, write_jsonl
from iwsqaoa.mixers import MixerTopology, ProbabilityTable
from iwsqaoa.problems import brute_force_optimum, build_cost_diagonal, gen_max_k_cut
from iwsqaoa.subspace import BlockLayout


def projection_oracle(p, lo, hi):
    # every coordinate of the projection sits at lo, at hi, or at p_i - tau for a shared tau
    best, best_d = None, math.inf
    for labels in itertools.product("lhf", repeat=p.size):
        x = np.where(np.array(labels) == "l", lo, np.where(np.array(labels) == "h", hi, np.nan))
        free = np.isnan(x)
        fixed_sum = x[~free].sum()
        if free.any():
            tau = (p[free].sum() + fixed_sum - 1.0) / free.sum()
            x[free] = p[free] - tau
        if abs(x.sum() - 1) > 1e-9 or (x < lo - 1e-12).any() or (x > hi + 1e-12).any():
            continue
        d = np.sum((x - p) ** 2)
        if d < best_d:
            best, best_d = x, d
    return best


class TestBoltzmann:
    def test_single_sample(self):
        lay = BlockLayout.from_sizes([3, 2])
        t = boltzmann_update([[2, 0]], [1.3], 15.0, lay)
        assert t.to_list() == [[0.0, 0.0, 1.0], [1.0, 0.0]]

    def test_equal_energies(self):
        lay = BlockLayout.from_sizes([3])
        t = boltzmann_update([[0], [1]], [4.0, 4.0], 15.0, lay)
        assert t.to_list() == [[0.5, 0.5, 0.0]]

    def test_worked_example(self):
        t = boltzmann_update([[0], [1]], [-2.0, -1.0], 1.0, BlockLayout.from_sizes([3]))
        e = math.e
        assert np.allclose(t[0], [e / (e + 1), 1 / (e + 1), 0])
        assert np.allclose(t[0], [0.7311, 0.2689, 0], atol=1e-4)

    def test_direct_formula(self):
        rng = np.random.default_rng(0)
        lay = BlockLayout.from_sizes([3, 4])
        x = np.stack([rng.integers(0, 3, 30), rng.integers(0, 4, 30)], axis=1)
        e = rng.normal(size=30)
        w = np.exp(-7.0 * e / (e.max() - e.min()))
        t = boltzmann_update(x, e, 7.0, lay)
        for l, k in enumerate((3, 4)):
            ref = np.array([w[x[:, l] == i].sum() for i in range(k)]) / w.sum()
            assert np.allclose(t[l], ref, atol=1e-14)

    def test_errors(self):
        lay = BlockLayout.from_sizes([2])
        with pytest.raises(ValueError):
            boltzmann_update(np.zeros((0, 1), int), [], 1.0, lay)
        with pytest.raises(ValueError):
            boltzmann_update([[0], [1]], [1.0], 1.0, lay)


class TestClamp:
    def test_interior_unchanged(self):
        t = ProbabilityTable([[0.3, 0.3, 0.4]])
        assert clamp(t, 0.2).to_list() == [[0.3, 0.3, 0.4]]

    def test_three_level_example(self):
        assert np.allclose(clamp(ProbabilityTable([[0.95, 0.04, 0.01]]), 0.2)[0], [0.8, 0.1, 0.1])

    def test_two_level_example(self):
        assert np.allclose(clamp(ProbabilityTable([[1.0, 0.0]]), 0.2)[0], [0.8, 0.2])

    def test_infeasible(self):
        with pytest.raises(ValueError):
            clamp(ProbabilityTable([[0.5, 0.5]]), 0.6)
        with pytest.raises(ValueError):
            IwsConfig(eps=0.7).validate((3,))

    @settings(max_examples=80, deadline=None)
    @given(k=st.integers(2, 5), eps=st.floats(0.01, 0.49), seed=st.integers(0, 2 ** 31))
    def test_projection_matches_oracle(self, k, eps, seed):
        eps = min(eps, 1 - 1 / k)
        p = np.random.default_rng(seed).dirichlet(np.full(k, 0.3))
        got = clamp(ProbabilityTable([p]), eps)[0]
        lo, hi = clamp_bounds(k, eps)
        assert abs(got.sum() - 1) < 1e-12
        assert (got >= lo).all() and (got <= hi).all()
        assert np.allclose(got, projection_oracle(p, lo, hi), atol=1e-9)
        assert np.allclose(clamp(ProbabilityTable([got]), eps)[0], got, atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(k=st.integers(2, 6), eps=st.floats(0.01, 0.49), seed=st.integers(0, 2 ** 31))
    def test_rescale_mode_bounds(self, k, eps, seed):
        eps = min(eps, 1 - 1 / k)
        p = np.random.default_rng(seed).dirichlet(np.full(k, 0.3))
        got = clamp(ProbabilityTable([p]), eps, mode="rescale")[0]
        lo, hi = clamp_bounds(k, eps)
        assert abs(got.sum() - 1) < 1e-12
        assert (got >= lo).all() and (got <= hi).all()

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            clamp(ProbabilityTable([[0.5, 0.5]]), 0.1, mode="other")


@pytest.fixture(scope="module")
def mkc8():
    p = gen_max_k_cut(8, 3, 0)
    diag = build_cost_diagonal(p)
    top = MixerTopology.uniform(p.layout.sizes)
    sched = optimize_parameters(p, top, None, 1, 10, 0, diag).schedule
    return p, diag, top, sched


class TestRun:
    def test_single_iteration_when_budget_equals_batch(self, mkc8):
        p, diag, top, sched = mkc8
        run = run_iws(p, top, IwsConfig(shots=50, total_shots=50), diag, sched)
        assert len(run.iterations) == 1 and run.total_shots == 50
        assert run.final_probs is not None

    def test_budget_and_partial_batch(self, mkc8):
        p, diag, top, sched = mkc8
        run = run_iws(p, top, IwsConfig(shots=40, total_shots=100), diag, sched)
        assert [it.shots for it in run.iterations] == [40, 40, 20]

    def test_invariants(self, mkc8):
        p, diag, top, sched = mkc8
        run = run_iws(p, top, IwsConfig(seed=3, total_shots=1000), diag, sched)
        best = [it.best_energy for it in run.iterations]
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
        assert run.iterations[0].probs == ProbabilityTable.uniform(p.layout.sizes).to_list()
        lo, hi = clamp_bounds(3, 0.2)
        for it in run.iterations[1:]:
            for blk in it.probs:
                assert abs(sum(blk) - 1) < 1e-12 and min(blk) >= lo and max(blk) <= hi
        for it in run.iterations:
            assert np.allclose(it.energies, diag.values[np.ravel_multi_index(it.samples.T, p.layout.shape)])

    def test_schedule_optimised_once(self, monkeypatch):
        p = gen_max_k_cut(5, 3, 1)
        calls = []
        real = engine.optimize_parameters

        def spy(*a, **k):
            calls.append(1)
            return real(*a, **k)

        monkeypatch.setattr(engine, "optimize_parameters", spy)
        run_iws(p, MixerTopology.uniform(p.layout.sizes), IwsConfig(shots=20, total_shots=100, multistart=1))
        assert len(calls) == 1

    def test_random_sampler_is_classical(self, monkeypatch):
        p = gen_max_k_cut(6, 3, 1)

        def boom(*a, **k):
            raise AssertionError("state machinery used")

        monkeypatch.setattr(engine, "WsQaoaSimulator", boom)
        before = SIMULATIONS.value
        run = run_iws(p, None, IwsConfig(sampler="random", total_shots=500))
        assert SIMULATIONS.value == before
        assert run.schedule is None and run.total_shots == 500

    def test_random_sampler_low_temperature_limit(self):
        p = gen_max_k_cut(6, 3, 2)
        cfg = IwsConfig(sampler="random", beta_temp=1e-12, shots=200, total_shots=400, seed=4)
        run = run_iws(p, None, cfg)
        x = run.iterations[0].samples
        marg = ProbabilityTable([np.bincount(x[:, l], minlength=3) / len(x) for l in range(p.layout.num_blocks)])
        assert np.allclose(np.array(run.iterations[1].probs), np.array(clamp(marg, 0.2).to_list()), atol=1e-9)

    def test_seeded_reproducible(self, mkc8):
        p, diag, top, sched = mkc8
        a = run_iws(p, top, IwsConfig(seed=9, total_shots=300), diag, sched)
        b = run_iws(p, top, IwsConfig(seed=9, total_shots=300), diag, sched)
        assert a.to_jsonl() == b.to_jsonl()

    def test_reaches_optimum_in_majority(self, mkc8):
        p, diag, top, sched = mkc8
        e_opt = brute_force_optimum(p)[0]
        hits = 0
        for seed in range(10):
            run = run_iws(p, top, IwsConfig(seed=seed), diag, sched)
            hits += abs(run.best_energy - e_opt) < 1e-9
        assert hits >= 6

    def test_jsonl(self, mkc8, tmp_path):
        p, diag, top, sched = mkc8
        run = run_iws(p, top, IwsConfig(shots=50, total_shots=150), diag, sched)
        write_jsonl(tmp_path / "r.jsonl", [run, run])
        recs = [json.loads(l) for l in (tmp_path / "r.jsonl").read_text().splitlines()]
        assert len(recs) == 8 and recs[-1]["type"] == "summary" and recs[-1]["rep"] == 1
        assert {"iter", "probs", "best_energy", "spread", "p_opt"} <= set(recs[0])

    def test_invalid_config(self):
        for cfg in (IwsConfig(shots=10, total_shots=5), IwsConfig(beta_temp=0), IwsConfig(sampler="annealer")):
            with pytest.raises(ValueError):
                cfg.validate()
