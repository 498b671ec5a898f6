"""End-to-end wiring: CDR -> demand -> preferences -> plans -> scenarios."""

from __future__ import annotations

import zlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .demand import (LinkFlow, OdMatrix, TrafficCount, assign_od_to_links, calibrate_scale,
                     extract_od, link_flows)
from .ingest import Trajectory, build_profiles, filter_tourists
from .network import BprParams, RoadNetwork
from .optimizer import CapacityProfile, RecommendationPlan, Traveler, optimize, preference_only
from .preference import Hyperparams, PreferenceModel, build_matrix, fit
from .scenario import ScenarioConfig, ScenarioResult, sweep_compliance


def substream(root_seed: int, name: str) -> int:
    """Stable per-module seed derived from the root seed and a stage name."""
    ss = np.random.SeedSequence([int(root_seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class DemandResult:
    od: list[OdMatrix]
    cdr_flows: dict[tuple[str, int], float]
    betas: dict[tuple[str, int], float]
    flows: list[LinkFlow]
    background: dict[tuple[str, int], float]
    unroutable: list = field(default_factory=list)
    calibration_errors: list = field(default_factory=list)


def infer_demand(trajectories: Sequence[Trajectory], network: RoadNetwork,
                 counts: Sequence[TrafficCount], home_country: str) -> DemandResult:
    """Calibrate CDR link flows on all users; background traffic is residents only."""
    od = extract_od(trajectories, network.node_of_tower)
    unroutable: list = []
    R = assign_od_to_links(od, network, unroutable)
    errors: list = []
    betas = calibrate_scale(R, counts, errors)
    residents = [t for t in trajectories if t.nationality == home_country]
    R_res = assign_od_to_links(extract_od(residents, network.node_of_tower), network, [])
    background = {k: r * betas[k] for k, r in R_res.items()}
    return DemandResult(od, R, betas, link_flows(R, betas), background, unroutable, errors)


def departure_hours(traj: Trajectory, node_of_tower: Mapping[str, str], origin: str) -> list[int]:
    hours = []
    prev = prev_t = None
    for tower, ts in traj.visits:
        node = node_of_tower[tower]
        if prev == origin and node != prev:
            hours.append(int(prev_t // 3600 % 24))
        prev, prev_t = node, ts
    return hours


def make_travelers(trajectories: Sequence[Trajectory], node_of_tower: Mapping[str, str],
                   slots: Sequence[int]) -> list[Traveler]:
    """Origin is the most visited node; preferred slot the modal departure hour.

    Departure hours outside ``slots`` snap to the nearest slot.
    """
    out = []
    for traj in trajectories:
        nodes = Counter(node_of_tower[t] for t in traj.towers)
        top = max(nodes.values())
        origin = min(n for n, c in nodes.items() if c == top)
        hours = Counter(departure_hours(traj, node_of_tower, origin))
        if hours:
            h_top = max(hours.values())
            hour = min(h for h, c in hours.items() if c == h_top)
        else:
            hour = slots[0]
        slot = min(slots, key=lambda s: (abs(s - hour), s))
        out.append(Traveler(traj.user_id, origin, slot))
    return out


def fit_preferences(trajectories: Sequence[Trajectory], travelers: Sequence[Traveler],
                    network: RoadNetwork, hyperparams: Hyperparams, seed: int) -> PreferenceModel:
    """Factorise node-level visit counts; each traveler's origin cell is held out."""
    by_id = {t.user_id: t for t in trajectories}
    trajs = [by_id[tr.user_id] for tr in travelers]
    locations = list(network.nodes)
    P = build_matrix(build_profiles(trajs, network.node_of_tower), locations)
    observed = np.ones(P.counts.shape, dtype=bool)
    for u, tr in enumerate(travelers):
        observed[u, P.location_index[tr.origin]] = False
    k = min(hyperparams.k, len(travelers), len(locations))
    if k != hyperparams.k:
        hyperparams = Hyperparams(**{**hyperparams.__dict__, "k": k})
    return fit(P, hyperparams, seed, observed=observed)


def candidate_scores(model: PreferenceModel, travelers: Sequence[Traveler]) -> dict[str, dict[str, float]]:
    """Clamped predicted preference per destination, excluding the traveler's origin."""
    S = model.scores()
    out = {}
    for tr in travelers:
        u = model.user_index[tr.user_id]
        out[tr.user_id] = {loc: float(S[u, j]) for j, loc in enumerate(model.locations) if loc != tr.origin}
    return out


@dataclass
class Plans:
    travelers: list[Traveler]
    scores: dict[str, dict[str, float]]
    baseline: RecommendationPlan
    optimized: RecommendationPlan


def recommend(travelers: Sequence[Traveler], scores, network: RoadNetwork, background, slots,
              theta: float, trips_per_traveler: float = 1.0, off_slot_factor: float = 0.5,
              allow_null: bool = True) -> Plans:
    travelers = list(travelers)
    baseline = preference_only(travelers, scores, network, trips_per_traveler, background)
    cap = CapacityProfile.from_network(network, slots, theta)
    plan = optimize(travelers, scores, network, cap, slots, background, trips_per_traveler,
                    off_slot_factor, allow_null=allow_null)
    return Plans(travelers, scores, baseline, plan)


def tourists(trajectories: Sequence[Trajectory], home_country: str, min_towers: bool = True) -> list[Trajectory]:
    keep = {p.user_id for p in filter_tourists(build_profiles(trajectories), home_country, min_towers)}
    return [t for t in trajectories if t.user_id in keep]


def compliance_sweep(plans: Plans, network: RoadNetwork, background, config: ScenarioConfig,
                     rho_grid: Sequence[float]) -> list[ScenarioResult]:
    return sweep_compliance(config, rho_grid, plans.optimized, plans.baseline, plans.travelers,
                            network, background, plans.scores)


def mean_sweep(plans: Plans, network: RoadNetwork, background, config: ScenarioConfig,
               rho_grid: Sequence[float], seeds: Sequence[int]) -> list[tuple[float, float, float]]:
    """Average ``(rho, avg_delay, idealized_score)`` over several compliance seeds."""
    acc = {r: [[], []] for r in rho_grid}
    for s in seeds:
        cfg = ScenarioConfig(**{**config.__dict__, "seed": int(s)})
        for res in compliance_sweep(plans, network, background, cfg, rho_grid):
            acc[res.rho][0].append(res.avg_delay)
            acc[res.rho][1].append(res.idealized_score)
    return [(float(r), float(np.mean(acc[r][0])), float(np.mean(acc[r][1]))) for r in rho_grid]


__all__ = ["BprParams", "DemandResult", "Plans", "candidate_scores", "compliance_sweep",
           "departure_hours", "fit_preferences", "infer_demand", "make_travelers", "mean_sweep",
           "recommend", "substream", "tourists"]
