"""Delay versus satisfaction as more travelers follow the plan."""
from tdmrec.ingest import build_trajectories
from tdmrec.pipeline import (candidate_scores, fit_preferences, infer_demand, make_travelers, mean_sweep,
                             recommend, tourists)
from tdmrec.preference import Hyperparams
from tdmrec.scenario import ScenarioConfig
from tdmrec.synthetic import SyntheticSpec, generate

spec = SyntheticSpec()
ds = generate(spec)
trajs = build_trajectories(ds.records, ds.towers)
demand = infer_demand(trajs, ds.network, ds.counts, spec.home_country)
tt = tourists(trajs, spec.home_country)
travelers = make_travelers(tt, ds.network.node_of_tower, spec.slots)
model = fit_preferences(tt, travelers, ds.network, Hyperparams(), seed=0)
plans = recommend(travelers, candidate_scores(model, travelers), ds.network, demand.background,
                  spec.slots, theta=0.0)

rows = mean_sweep(plans, ds.network, demand.background, ScenarioConfig(slots=spec.slots),
                  [0.0, 0.2, 0.4, 0.6, 0.8, 1.0], seeds=range(10))
print(" rho  delay(min)  satisfaction")
for rho, d, s in rows:
    print(f"{rho:4.1f}  {d:9.2f}  {s:12.1f}")
