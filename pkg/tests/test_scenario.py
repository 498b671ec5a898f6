import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdmrec.network import BprParams, RoadLink, RoadNetwork, delay
from tdmrec.optimizer import CapacityProfile, Traveler, optimize, preference_only
from tdmrec.scenario import (ScenarioConfig, average_delay, compliers, link_profile, links_csv, peak_slot,
                             results_csv, simulate, sweep_compliance, sweep_theta, tradeoff_curve)

SLOTS = (9, 10)


@pytest.fixture(scope="module")
def city():
    nodes = {"H": "hub", "A": "", "B": "", "C": ""}
    links = [RoadLink(f"h{x}", "H", x, 1, 3.0, 10.0) for x in "ABC"]
    net = RoadNetwork(nodes, links)
    rng = np.random.default_rng(0)
    travelers = [Traveler(f"t{i:02d}", "H", SLOTS[i % 4 == 0]) for i in range(12)]
    pop = np.array([3.0, 1.5, 0.5])
    scores = {t.user_id: dict(zip("ABC", (pop * rng.uniform(0.5, 1.5, 3)).tolist())) for t in travelers}
    background = {("hA", 9): 2.0, ("hB", 9): 1.0, ("hA", 10): 1.0}
    base = preference_only(travelers, scores, net, 1.0, background)
    plan = optimize(travelers, scores, net, CapacityProfile.from_network(net, SLOTS), SLOTS, background)
    return net, travelers, scores, background, base, plan


def cfg(**kw):
    return ScenarioConfig(slots=SLOTS, **kw)


def test_endpoints_equal_pure_plans(city):
    net, travelers, scores, bg, base, plan = city
    r0 = simulate(cfg(compliance_rate=0.0), plan, base, travelers, net, bg, scores)
    r1 = simulate(cfg(compliance_rate=1.0), plan, base, travelers, net, bg, scores)
    assert r0.compliers == 0 and r1.compliers == len(travelers)
    assert r0.idealized_score == base.objective and r0.idealized_count == base.satisfied_count
    assert r1.idealized_score == plan.objective and r1.idealized_count == plan.satisfied_count
    peak = peak_slot(bg, SLOTS)
    for res, p in ((r0, base), (r1, plan)):
        assert {(s.link_id, s.slot): s.volume for s in res.links if s.volume} == \
               {k: v for k, v in p.flows.items() if k[1] == peak and v}
    assert r1.avg_delay < r0.avg_delay


def test_reproducible_bitwise(city):
    net, travelers, scores, bg, base, plan = city
    two = travelers[:2]
    a = simulate(cfg(compliance_rate=0.5, seed=11), plan, base, two, net, bg, scores)
    b = simulate(cfg(compliance_rate=0.5, seed=11), plan, base, two, net, bg, scores)
    assert results_csv([a]) == results_csv([b]) and links_csv([a]) == links_csv([b])


def test_missing_traveler_rejected(city):
    net, travelers, scores, bg, base, plan = city
    with pytest.raises(KeyError):
        simulate(cfg(), plan, base, travelers + [Traveler("ghost", "H", 9)], net, bg, scores)
    with pytest.raises(ValueError):
        ScenarioConfig(compliance_rate=1.5)
    with pytest.raises(ValueError):
        sweep_compliance(cfg(), [], plan, base, travelers, net, bg, scores)


@given(st.integers(0, 2**31), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=100, deadline=None)
def test_compliance_sets_nested(seed, r1, r2):
    travelers = [Traveler(f"u{i}", "H", 9) for i in range(40)]
    lo, hi = sorted((r1, r2))
    assert compliers(travelers, lo, seed) <= compliers(travelers, hi, seed)
    assert compliers(list(reversed(travelers)), lo, seed) == compliers(travelers, lo, seed)


def test_delay_consistency_from_profile(city):
    net, travelers, scores, bg, base, plan = city
    for res in sweep_compliance(cfg(seed=3), [0.0, 0.3, 0.7, 1.0], plan, base, travelers, net, bg, scores):
        num = den = 0.0
        for s in res.links:
            link = RoadLink(s.link_id, "x", "y", 1, s.capacity, s.free_flow)
            d = delay(link, s.volume)
            assert math.isclose(d, s.delay, rel_tol=1e-12, abs_tol=0.0)
            assert s.voc == s.volume / s.capacity
            num += s.volume * d
            den += s.volume
        want = num / den if den else 0.0
        assert math.isclose(res.avg_delay, want, rel_tol=1e-9)
        assert res.avg_delay >= 0


def test_average_delay_empty_network():
    net = RoadNetwork({"a": "", "b": ""}, [RoadLink("l", "a", "b", 1, 10, 1)])
    assert average_delay(link_profile({}, net, [9], BprParams())) == 0.0


def test_sweep_theta_examples(city):
    net, travelers, scores, bg, base, plan = city
    rows = sweep_theta(cfg(), [-1.0, 0.0, 0.5, 1.0, 50.0], travelers, net, bg, scores)
    vals = [score for _, score, _ in rows]
    assert vals[0] == 0.0
    assert vals == sorted(vals)
    assert rows[-1][1] == base.objective and rows[-1][2] == len(travelers)
    with pytest.raises(ValueError):
        sweep_theta(cfg(), [1.0, 0.0], travelers, net, bg, scores)


def test_tradeoff_curve(city):
    net, travelers, scores, bg, base, plan = city
    results = sweep_compliance(cfg(), [1.0, 0.0], plan, base, travelers, net, bg, scores)
    rows = tradeoff_curve(results)
    assert len(rows) == 2 and rows[0][0] == 0.0
    assert sum(r[4] for r in rows) == sum(r.idealized_score for r in results)
    assert rows[1][2] <= rows[0][2] and rows[1][4] <= rows[0][4]
    with pytest.raises(ValueError):
        tradeoff_curve(results[:1])
    text = results_csv(results)
    assert text.splitlines()[0] == "rho,theta,avg_delay_min,idealized_count,idealized_score"
    assert len(text.splitlines()) == 3


def test_peak_slot():
    assert peak_slot({("a", 9): 5.0, ("b", 10): 3.0, ("c", 10): 3.0}, (9, 10)) == 10
    assert peak_slot({}, (9, 10)) == 9
