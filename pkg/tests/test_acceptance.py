"""Acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL`` line with its runtime (run with ``-s``
or read the terminal summary).  The measured values are part of the line so
a failure shows how far off it was.
"""

import contextlib
import math
import time

import numpy as np
import pytest

from oracles import bpr_mp, brute_force_np, central_diff, cycle_corpus, second_order_corpus
from tdmrec.cli import main
from tdmrec.demand import OdMatrix, assign_od_to_links
from tdmrec.ingest import build_trajectories
from tdmrec.network import BprParams, RoadLink, bpr_time
from tdmrec.nextloc import RnnParams, evaluate, fit_rnn
from tdmrec.nextloc.lstm import init_weights, loss_and_grad
from tdmrec.optimizer import greedy, is_feasible, lp_bound, objective, random_problem, solve
from tdmrec.pipeline import (candidate_scores, fit_preferences, infer_demand, make_travelers, mean_sweep,
                             recommend, tourists)
from tdmrec.preference import Hyperparams, confidence, fit, gradient, loss, rmse
from tdmrec.scenario import ScenarioConfig, simulate, sweep_theta
from tdmrec.synthetic import SyntheticSpec, generate

RHO_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
THETA_GRID = tuple(i / 10 for i in range(11))


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(name, budget_s=None):
        info = {}
        t0 = time.perf_counter()
        ok = False
        try:
            yield info
            ok = True
        finally:
            dt = time.perf_counter() - t0
            within = budget_s is None or dt < budget_s
            detail = " ".join(f"{k}={v}" for k, v in info.items())
            limit = f"<{budget_s}s" if budget_s else "no limit"
            with capsys.disabled():
                print(f"\n{'PASS' if ok and within else 'FAIL'} {name} [{dt:.1f}s, {limit}] {detail}")
        assert within, f"{name} took {dt:.1f}s (budget {budget_s}s)"
    return run


@pytest.fixture(scope="module")
def city():
    """The bundled synthetic city at default settings, run through every stage in memory."""
    spec = SyntheticSpec()
    ds = generate(spec)
    trajs = build_trajectories(ds.records, ds.towers)
    demand = infer_demand(trajs, ds.network, ds.counts, spec.home_country)
    tt = tourists(trajs, spec.home_country)
    travelers = make_travelers(tt, ds.network.node_of_tower, spec.slots)
    model = fit_preferences(tt, travelers, ds.network, Hyperparams(), seed=0)
    scores = candidate_scores(model, travelers)
    plans = recommend(travelers, scores, ds.network, demand.background, spec.slots, theta=0.0)
    return spec, ds, demand, plans


def test_bpr_exactness(criterion):
    with criterion("BPR exactness", 1.0) as info:
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(1000):
            t, v, c = rng.uniform(0.1, 120), rng.uniform(0, 5000), rng.uniform(50, 4000)
            a, b = rng.uniform(0.01, 1.0), rng.uniform(1.0, 8.0)
            got = bpr_time(RoadLink("l", "x", "y", 1, c, t), v, BprParams(a, b))
            want = bpr_mp(t, v, c, a, b)
            worst = max(worst, float(abs((got - want) / want)))
        info["max_rel_err"] = f"{worst:.2e}"
        assert worst < 1e-12
        link = RoadLink("l", "x", "y", 1, 300.0, 7.25)
        assert bpr_time(link, 0.0) == 7.25


def test_flow_scaling_and_additivity(criterion):
    with criterion("Flow scaling", 5.0) as info:
        ds = generate(SyntheticSpec(n_travelers=300, n_residents=150, seed=3))
        trajs = build_trajectories(ds.records, ds.towers)
        demand = infer_demand(trajs, ds.network, ds.counts, "AD")
        worst = 0.0
        for c in ds.counts:
            key = (c.link_id, c.time_bin)
            got = demand.cdr_flows[key] * demand.betas[key]
            worst = max(worst, abs(got - c.counted_vehicles) / c.counted_vehicles)
        info["counted_links"] = len(ds.counts)
        info["max_rel_err"] = f"{worst:.2e}"
        assert worst < 1e-12

        rng = np.random.default_rng(1)
        nodes = list(ds.network.nodes)
        for _ in range(100):
            full = {}
            for _ in range(int(rng.integers(1, 15))):
                o, d = rng.choice(len(nodes), 2, replace=False)
                full[(nodes[o], nodes[d])] = full.get((nodes[o], nodes[d]), 0) + int(rng.integers(1, 40))
            part = {k: int(rng.integers(0, v + 1)) for k, v in full.items()}
            rest = {k: full[k] - part[k] for k in full}
            t = int(rng.integers(24))
            a = assign_od_to_links(OdMatrix(t, part), ds.network)
            b = assign_od_to_links(OdMatrix(t, rest), ds.network)
            whole = assign_od_to_links(OdMatrix(t, full), ds.network)
            summed = {k: a.get(k, 0) + b.get(k, 0) for k in set(a) | set(b)}
            assert {k: v for k, v in whole.items() if v} == {k: v for k, v in summed.items() if v}
        info["splits"] = 100


def test_mf_correctness(criterion):
    with criterion("MF correctness", 60.0) as info:
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(100):
            n, m, k = (int(x) for x in rng.integers(2, 7, size=3))
            P = rng.poisson(1.5, size=(n, m)).astype(float)
            C = confidence(P, float(rng.uniform(0, 2)), rng.random((n, m)) > 0.2)
            U, L = rng.normal(size=(n, k)), rng.normal(size=(m, k))
            reg = float(rng.uniform(0, 1))
            gU, gL = gradient(U, L, P, C, reg)
            for g, x in ((gU, U), (gL, L)):
                num = central_diff(lambda: loss(U, L, P, C, reg), x, 1e-6)
                worst = max(worst, float(np.linalg.norm(g - num) / max(np.linalg.norm(g), np.linalg.norm(num))))
        info["grad_rel_err"] = f"{worst:.2e}"
        assert worst < 1e-5

        exact = 0.0
        for r in (1, 2, 3):
            for k in (r, r + 2):
                P = rng.uniform(0.2, 1.5, (20, r)) @ rng.uniform(0.2, 1.5, (12, r)).T
                model = fit(P, Hyperparams(k=k, reg=0.0, w0=0.0, epochs=300), seed=r * 10 + k)
                exact = max(exact, rmse(model.reconstruction(), P))
        info["exact_rank_rmse"] = f"{exact:.2e}"
        assert exact < 1e-3

        sigma = 0.01
        truth = rng.uniform(0.2, 1.5, (40, 3)) @ rng.uniform(0.2, 1.5, (25, 3)).T
        noisy = truth + rng.normal(0, sigma, truth.shape)
        train = rng.random(truth.shape) >= 0.2
        model = fit(np.where(train, noisy, 0.0), Hyperparams(k=3, reg=1e-4, w0=0.0, epochs=300), seed=1,
                    observed=train)
        held = rmse(model.reconstruction(), noisy, ~train)
        info["heldout_rmse"] = f"{held:.4f}"
        assert held < 5 * sigma


def test_optimizer_optimality(criterion):
    with criterion("Optimizer optimality", 120.0) as info:
        rng = np.random.default_rng(2024)
        exact_hits = infeasible = 0
        for i in range(200):
            p = random_problem(rng, max_travelers=10, max_bundles=5, allow_null=i % 4 != 0)
            want, _ = brute_force_np(p.scores, p.uses, p.capacity, p.allow_null)
            if want == -math.inf:
                assert not solve(p).feasible
                infeasible += 1
                continue
            res = solve(p)
            assert res.objective == want, i
            assert is_feasible(p, res.assignment)
            g = greedy(p)
            if g is not None and None not in g:
                assert objective(p, g) <= res.objective
            assert res.objective <= lp_bound(p) + 1e-9 * (1 + abs(res.objective))
            exact_hits += 1
        info["matched_oracle"] = exact_hits
        info["infeasible_rejected"] = infeasible
        assert exact_hits >= 150


def test_tradeoff_shape(city, criterion):
    spec, ds, demand, plans = city
    with criterion("Trade-off shape", 300.0) as info:
        cfg = ScenarioConfig(slots=spec.slots)
        base = simulate(ScenarioConfig(compliance_rate=0.0, slots=spec.slots), plans.optimized, plans.baseline,
                        plans.travelers, ds.network, demand.background, plans.scores)
        max_voc = max(s.voc for s in base.links)
        info["pref_only_max_voc"] = f"{max_voc:.2f}"
        assert max_voc > 1.0
        rows = mean_sweep(plans, ds.network, demand.background, cfg, RHO_GRID, range(20))
        delays = [d for _, d, _ in rows]
        sat = [s for _, _, s in rows]
        reduction = 1 - delays[-1] / delays[0]
        info["delay"] = "/".join(f"{d:.2f}" for d in delays)
        info["reduction"] = f"{reduction:.1%}"
        assert all(b <= a for a, b in zip(delays, delays[1:]))
        assert all(b <= a for a, b in zip(sat, sat[1:]))
        assert reduction >= 0.25


def test_concavity_shape(city, criterion):
    spec, ds, demand, plans = city
    with criterion("Concavity shape") as info:
        rows = sweep_theta(ScenarioConfig(slots=spec.slots), THETA_GRID, plans.travelers, ds.network,
                           demand.background, plans.scores)
        vals = [score for _, score, _ in rows]
        diffs = np.diff(vals)
        cells = len(diffs) - 1
        good = sum(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(diffs, diffs[1:]))
        info["non_increasing"] = f"{good}/{cells}"
        counts = np.diff([n for _, _, n in rows])
        info["count_variant"] = f"{sum(b <= a for a, b in zip(counts, counts[1:]))}/{cells}"
        assert good >= 0.8 * cells


def test_next_location(criterion):
    with criterion("Next-location predictors", 180.0) as info:
        rows = {r.model: r.accuracy for r in evaluate(cycle_corpus(users=5), ("naive", "markov", "rnn"),
                                                      RnnParams(epochs=30), seed=0)}
        info["cycle_markov"], info["cycle_rnn"] = rows["markov"], rows["rnn"]
        assert rows["markov"] == 1.0 and rows["rnn"] == 1.0

        rows = {r.model: r.accuracy for r in evaluate(second_order_corpus(), ("naive", "markov", "rnn"),
                                                      RnnParams(), seed=0)}
        info.update({f"second_order_{k}": f"{v:.3f}" for k, v in rows.items()})
        assert rows["rnn"] >= 0.95
        assert rows["markov"] <= rows["naive"] + 0.10

        rng = np.random.default_rng(7)
        worst = 0.0
        for vocab in (2, 4, 7):
            W = init_weights(vocab, RnnParams(embed_dim=3, hidden=4), rng)
            for k in W:
                W[k] = W[k] + rng.normal(0, 0.3, W[k].shape)
            X, Y = rng.integers(0, vocab, (3, 5)), rng.integers(0, vocab, (3, 5))
            mask = (rng.random((3, 5)) > 0.2).astype(float)
            _, G, _ = loss_and_grad(W, X, Y, mask)
            for k in W:
                num = central_diff(lambda: loss_and_grad(W, X, Y, mask, need_grad=False)[0], W[k], 1e-5)
                worst = max(worst, float(np.linalg.norm(G[k] - num)
                                         / max(np.linalg.norm(G[k]), np.linalg.norm(num), 1e-12)))
        info["rnn_grad_rel_err"] = f"{worst:.2e}"
        assert worst < 1e-4

        model = fit_rnn(list(second_order_corpus(n_users=60).values()), RnnParams(epochs=5), seed=0)
        assert all(b <= a for a, b in zip(model.loss_history, model.loss_history[1:]))


def test_end_to_end_determinism(tmp_path, criterion):
    stages = ["gen-synthetic", "ingest", "od", "assign", "fit-pref", "recommend", "sweep"]
    with criterion("End-to-end determinism") as info:
        for name in ("a", "b"):
            for stage in stages:
                with contextlib.redirect_stdout(None):
                    assert main([stage, "--seed", "11", "--out", str(tmp_path / name)]) == 0
        for f in ("results.csv", "plan.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
        info["compared"] = "results.csv,plan.json"
