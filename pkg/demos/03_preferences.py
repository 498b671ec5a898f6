"""Recover travelers' destination preferences from visit counts."""
import numpy as np

from tdmrec.ingest import build_trajectories
from tdmrec.pipeline import candidate_scores, fit_preferences, make_travelers, tourists
from tdmrec.preference import Hyperparams
from tdmrec.synthetic import SyntheticSpec, generate

spec = SyntheticSpec(n_travelers=400, seed=2)
ds = generate(spec)
tt = tourists(build_trajectories(ds.records, ds.towers), spec.home_country)
travelers = make_travelers(tt, ds.network.node_of_tower, spec.slots)
model = fit_preferences(tt, travelers, ds.network, Hyperparams(k=3, epochs=100), seed=0)
print(f"ALS loss {model.loss_history[0]:.1f} -> {model.loss_history[-1]:.1f} in {len(model.loss_history)} epochs")

scores = candidate_scores(model, travelers)
truth = {uid: ds.true_preferences[i] for i, uid in enumerate(ds.tourist_ids)}
rho = []
for t in travelers:
    locs = [loc for loc in ds.attractions if loc in scores[t.user_id]]
    est = [scores[t.user_id][loc] for loc in locs]
    true = [truth[t.user_id][ds.attractions.index(loc)] for loc in locs]
    if len(locs) > 2 and np.std(est) > 0:
        rho.append(np.corrcoef(est, true)[0, 1])
print(f"mean correlation with the generating preferences: {np.mean(rho):.3f} over {len(rho)} travelers")
