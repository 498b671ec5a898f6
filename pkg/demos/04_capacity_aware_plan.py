"""Preference-only versus capacity-aware recommendations on one small instance."""
import numpy as np

from tdmrec.network import RoadLink, RoadNetwork
from tdmrec.optimizer import CapacityProfile, Traveler, optimize, preference_only

nodes = {"H": "hub", "Beach": "", "Castle": "", "Market": ""}
links = [RoadLink(f"to{x}", "H", x, 1, 4.0, 15.0) for x in ("Beach", "Castle", "Market")]
net = RoadNetwork(nodes, links)
slots = (9, 10, 11)

rng = np.random.default_rng(1)
travelers = [Traveler(f"p{i:02d}", "H", 10) for i in range(16)]
pop = np.array([3.0, 1.6, 0.8])
scores = {t.user_id: dict(zip(("Beach", "Castle", "Market"), (pop * rng.uniform(0.6, 1.4, 3)).tolist()))
          for t in travelers}

base = preference_only(travelers, scores, net)
for theta in (0.0, 0.5):
    plan = optimize(travelers, scores, net, CapacityProfile.from_network(net, slots, theta), slots)
    print(f"theta={theta}: score {plan.objective:.2f} vs {base.objective:.2f} unconstrained, "
          f"exact={plan.exact}")
    for (lid, t), v in sorted(plan.flows.items()):
        print(f"   {lid:9s} {t}h  {v:3.0f} veh  (preference-only {base.flows.get((lid, t), 0):3.0f})")
