"""Capacity-constrained recommendation as a generalized assignment problem.

Every traveler receives exactly one bundle (a location and a time slot, or
the null "stay" bundle when enabled).  A bundle consumes one traveler unit
of residual capacity on every ``(link, slot)`` resource along the
traveler's free-flow route.  The objective is the total satisfied
preference score.

Small instances are solved exactly by depth-first branch and bound.  Larger
ones fall back to a greedy construction refined by local search; the
linear relaxation gives an upper bound on the gap either way.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleError, InstanceTooLargeError
from .network import RoadNetwork

NULL = -1
ORACLE_LIMIT = 10**7
_UNLIMITED = 1 << 40


@dataclass
class AssignmentProblem:
    """Bundle scores and resource usage per traveler.

    ``scores[u][b]`` is the score of bundle ``b`` for traveler ``u`` and
    ``uses[u][b]`` the tuple of resource indices it occupies (one unit each).
    ``capacity[r]`` is the number of units resource ``r`` can still accept.
    With ``allow_null`` every traveler may also take the score-0 bundle
    ``NULL`` that occupies nothing.
    """

    scores: list[list[float]]
    uses: list[list[tuple[int, ...]]]
    capacity: list[int]
    allow_null: bool = True

    def __post_init__(self):
        if len(self.scores) != len(self.uses):
            raise ValueError("scores and uses disagree on the number of travelers")
        for s, us in zip(self.scores, self.uses):
            if len(s) != len(us):
                raise ValueError("scores and uses disagree on the number of bundles")
            for rs in us:
                if len(set(rs)) != len(rs):
                    raise ValueError("a bundle may use each resource at most once")
        self.capacity = [int(c) for c in self.capacity]

    @property
    def n_travelers(self) -> int:
        return len(self.scores)

    def options(self, u: int) -> list[int]:
        opts = list(range(len(self.scores[u])))
        return opts + [NULL] if self.allow_null else opts

    def score(self, u: int, b: int) -> float:
        return 0.0 if b == NULL else self.scores[u][b]

    def use(self, u: int, b: int) -> tuple[int, ...]:
        return () if b == NULL else self.uses[u][b]


def objective(problem: AssignmentProblem, assignment: Sequence[int]) -> float:
    """Exactly rounded total score, independent of summation order."""
    return math.fsum(problem.score(u, b) for u, b in enumerate(assignment))


def usage(problem: AssignmentProblem, assignment: Sequence[int]) -> list[int]:
    load = [0] * len(problem.capacity)
    for u, b in enumerate(assignment):
        for r in problem.use(u, b):
            load[r] += 1
    return load


def is_feasible(problem: AssignmentProblem, assignment: Sequence[int]) -> bool:
    if len(assignment) != problem.n_travelers:
        return False
    for u, b in enumerate(assignment):
        if b == NULL and not problem.allow_null:
            return False
    return all(l <= c for l, c in zip(usage(problem, assignment), problem.capacity) if l)


# -- greedy + local search ---------------------------------------------------

class _State:
    def __init__(self, problem, assignment=None):
        self.p = problem
        self.residual = list(problem.capacity)
        self.assign = [None] * problem.n_travelers
        if assignment is not None:
            for u, b in enumerate(assignment):
                if b is not None:
                    self.place(u, b)

    def fits(self, u, b, freed=()):
        return all(self.residual[r] >= 1 or r in freed for r in self.p.use(u, b))

    def place(self, u, b):
        for r in self.p.use(u, b):
            self.residual[r] -= 1
        self.assign[u] = b

    def remove(self, u):
        b = self.assign[u]
        if b is not None:
            for r in self.p.use(u, b):
                self.residual[r] += 1
        self.assign[u] = None
        return b


def _ordered_options(problem, u):
    # best score first; ties keep the caller's bundle order, null last
    opts = sorted(range(len(problem.scores[u])), key=lambda b: (-problem.scores[u][b], b))
    return opts + [NULL] if problem.allow_null else opts


def greedy(problem: AssignmentProblem) -> list[int | None]:
    """Greedy construction by score per unit of scarce capacity.

    Pairs are taken in decreasing ``score / (1 + sum_r 1/capacity_r)``
    order.  Travelers left without a fitting bundle get ``NULL`` when
    allowed and ``None`` otherwise.
    """
    state = _State(problem)
    pairs = []
    for u in range(problem.n_travelers):
        for b in range(len(problem.scores[u])):
            weight = sum(1.0 / max(problem.capacity[r], 1) for r in problem.uses[u][b])
            pairs.append((-problem.scores[u][b] / (1.0 + weight), -problem.scores[u][b], u, b))
    pairs.sort()
    for _, _, u, b in pairs:
        if state.assign[u] is None and state.fits(u, b):
            state.place(u, b)
    if problem.allow_null:
        for u in range(problem.n_travelers):
            if state.assign[u] is None:
                state.place(u, NULL)
    return state.assign


def local_search(problem: AssignmentProblem, assignment: Sequence[int | None],
                 max_passes: int = 50) -> list[int | None]:
    """Improve an assignment with single moves and two-traveler ejections.

    A single move switches one traveler to a better bundle that fits.  An
    ejection lets traveler ``u`` take a better but blocked bundle by moving
    one traveler ``v`` that occupies every blocking resource to another
    bundle, when the combined score change is positive.  Only strict
    improvements are accepted, so feasibility is preserved.
    """
    p = problem
    state = _State(p, assignment)
    order = [_ordered_options(p, u) for u in range(p.n_travelers)]

    def cur_score(u):
        b = state.assign[u]
        return -math.inf if b is None else p.score(u, b)

    for _ in range(max_passes):
        improved = False
        for u in range(p.n_travelers):
            cur = state.assign[u]
            freed = p.use(u, cur) if cur is not None else ()
            for b in order[u]:
                if p.score(u, b) <= cur_score(u) or b == cur:
                    break
                if state.fits(u, b, freed):
                    state.remove(u)
                    state.place(u, b)
                    improved = True
                    break

        # resource -> travelers currently holding it
        holders: dict[int, list[int]] = {}
        for v in range(p.n_travelers):
            if state.assign[v] is not None:
                for r in p.use(v, state.assign[v]):
                    holders.setdefault(r, []).append(v)

        for u in range(p.n_travelers):
            cur = state.assign[u]
            base = cur_score(u)
            freed_u = p.use(u, cur) if cur is not None else ()
            move = None
            for b in order[u]:
                gain_u = p.score(u, b) - base
                if gain_u <= 0:
                    break
                blocked = [r for r in p.use(u, b) if state.residual[r] < 1 and r not in freed_u]
                if blocked:
                    move = _ejection(state, order, holders, u, b, gain_u, blocked)
                if move is not None:
                    break
            if move is None:
                continue
            v, alt, b = move
            old_v = state.assign[v]
            state.remove(u)
            state.remove(v)
            state.place(v, alt)
            state.place(u, b)
            for w, old, new in ((v, old_v, alt), (u, cur, b)):
                if old is not None:
                    for r in p.use(w, old):
                        holders[r].remove(w)
                for r in p.use(w, new):
                    holders.setdefault(r, []).append(w)
            improved = True
        if not improved:
            break
    return state.assign


def _ejection(state, order, holders, u, b, gain_u, blocked):
    """First traveler ``v`` holding all ``blocked`` resources whose move pays off."""
    p = state.p
    cands = set(holders.get(blocked[0], ()))
    for r in blocked[1:]:
        cands &= set(holders.get(r, ()))
    cands.discard(u)
    for v in sorted(cands):
        vb = state.assign[v]
        for alt in order[v]:
            if alt == vb:
                continue
            if gain_u - (p.score(v, vb) - p.score(v, alt)) <= 1e-12 * max(1.0, abs(gain_u)):
                break
            if _try_pair(state, u, b, v, alt):
                return v, alt, b
    return None


def _try_pair(state, u, b, v, alt):
    """Would moving ``v`` to ``alt`` and ``u`` to ``b`` stay feasible?"""
    p = state.p
    delta: dict[int, int] = {}
    for w, new in ((u, b), (v, alt)):
        old = state.assign[w]
        if old is not None:
            for r in p.use(w, old):
                delta[r] = delta.get(r, 0) + 1
        for r in p.use(w, new):
            delta[r] = delta.get(r, 0) - 1
    return all(state.residual[r] + d >= 0 for r, d in delta.items())


# -- exact search --------------------------------------------------------------

def branch_and_bound(problem: AssignmentProblem, incumbent: Sequence[int | None] | None = None,
                     node_limit: int = 200_000):
    """Depth-first exact search.

    Returns ``(assignment, proven)``; ``proven`` is False when the node
    budget ran out, in which case the best assignment seen is returned.
    The bound adds, for every unassigned traveler, the best score among
    bundles that still fit on their own.
    """
    p = problem
    n = p.n_travelers
    travelers = sorted(range(n), key=lambda u: (-max(p.scores[u], default=0.0), u))
    opts = [_ordered_options(p, u) for u in range(n)]
    residual = list(p.capacity)
    current: list[int | None] = [None] * n

    best_assign = None
    best_val = -math.inf
    if incumbent is not None and all(b is not None for b in incumbent) and is_feasible(p, incumbent):
        best_assign = list(incumbent)
        best_val = objective(p, best_assign)

    nodes = 0
    exhausted = False

    def fits(u, b):
        return all(residual[r] >= 1 for r in p.use(u, b))

    def bound(depth, acc):
        total = acc
        for u in travelers[depth:]:
            top = None
            for b in opts[u]:
                if fits(u, b):
                    top = p.score(u, b)
                    break
            if top is None:
                return -math.inf
            total += top
        return total

    def dfs(depth, acc):
        nonlocal best_assign, best_val, nodes, exhausted
        nodes += 1
        if nodes > node_limit:
            exhausted = True
            return
        if depth == n:
            val = objective(p, current)
            if val > best_val:
                best_val = val
                best_assign = list(current)
            return
        bnd = bound(depth, acc)
        if bnd == -math.inf:
            return
        # prune unless a strict improvement is still possible; the slack covers
        # rounding in the float accumulation of ``bnd``
        if best_assign is not None and bnd + 1e-12 * (1.0 + abs(bnd)) <= best_val:
            return
        u = travelers[depth]
        for b in opts[u]:
            if not fits(u, b):
                continue
            for r in p.use(u, b):
                residual[r] -= 1
            current[u] = b
            dfs(depth + 1, acc + p.score(u, b))
            current[u] = None
            for r in p.use(u, b):
                residual[r] += 1
            if exhausted:
                return

    dfs(0, 0.0)
    return best_assign, not exhausted


def oracle(problem: AssignmentProblem, limit: int = ORACLE_LIMIT):
    """Exhaustive enumeration of every assignment.

    Returns ``(objective, assignment)`` for the optimum, preferring the
    lexicographically smallest assignment over option lists ordered as
    ``[0, 1, ..., NULL]``.  Returns ``(-inf, None)`` when no assignment is
    feasible.  Raises :class:`InstanceTooLargeError` beyond ``limit``
    combinations.
    """
    p = problem
    n = p.n_travelers
    if n == 0:
        return 0.0, []
    opts = [p.options(u) for u in range(n)]
    sizes = [len(o) for o in opts]
    total = math.prod(sizes)
    if total > limit:
        raise InstanceTooLargeError(f"{total} assignments exceed the enumeration limit {limit}")
    if total == 0:
        return -math.inf, None

    width = max(sizes)
    R = max(len(p.capacity), 1)
    S = np.full((n, width), -np.inf)
    A = np.zeros((n, width, R), dtype=np.int32)
    for u in range(n):
        for i, b in enumerate(opts[u]):
            S[u, i] = p.score(u, b)
            for r in p.use(u, b):
                A[u, i, r] += 1
    cap = np.array(p.capacity + [0] * (R - len(p.capacity)), dtype=np.int64)

    radix = [math.prod(sizes[u + 1:]) for u in range(n)]
    best_val, best_idx = -math.inf, None
    chunk = 1 << 18
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        val = np.zeros(idx.shape)
        load = np.zeros((idx.size, R), dtype=np.int32)
        for u in range(n):
            d = (idx // radix[u]) % sizes[u]
            val += S[u, d]
            load += A[u, d]
        ok = np.all(load <= cap, axis=1)
        if not ok.any():
            continue
        approx_best = val[ok].max()
        thresh = max(approx_best, best_val) - 1e-9 * (1.0 + abs(approx_best))
        for j in np.flatnonzero(ok & (val >= thresh)):
            combo = int(idx[j])
            digits = [(combo // radix[u]) % sizes[u] for u in range(n)]
            exact = math.fsum(S[u, digits[u]] for u in range(n))
            if exact > best_val:
                best_val, best_idx = exact, digits
    if best_idx is None:
        return -math.inf, None
    return best_val, [opts[u][d] for u, d in enumerate(best_idx)]


def lp_relaxation(problem: AssignmentProblem):
    """Solve the linear relaxation; returns ``(value, x)`` with ``x`` per traveler.

    Raises :class:`InfeasibleError` when even the relaxation is infeasible.
    """
    p = problem
    cols = [(u, b) for u in range(p.n_travelers) for b in p.options(u)]
    if not cols:
        return 0.0, []
    c = np.array([-p.score(u, b) for u, b in cols])
    A_eq = np.zeros((p.n_travelers, len(cols)))
    rows: dict[int, dict[int, float]] = {}
    for i, (u, b) in enumerate(cols):
        A_eq[u, i] = 1.0
        for r in p.use(u, b):
            rows.setdefault(r, {})
            rows[r][i] = rows[r].get(i, 0.0) + 1.0
    A_ub = b_ub = None
    if rows:
        rs = sorted(rows)
        A_ub = np.zeros((len(rs), len(cols)))
        for k, r in enumerate(rs):
            for i, v in rows[r].items():
                A_ub[k, i] = v
        b_ub = np.array([float(p.capacity[r]) for r in rs])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=np.ones(p.n_travelers),
                  bounds=(0.0, 1.0), method="highs")
    if res.status == 2:
        raise InfeasibleError(f"linear relaxation infeasible: {res.message}")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    x = [dict() for _ in range(p.n_travelers)]
    for i, (u, b) in enumerate(cols):
        if res.x[i] > 1e-9:
            x[u][b] = float(res.x[i])
    return float(-res.fun), x


def lp_bound(problem: AssignmentProblem) -> float:
    """Upper bound on the integer optimum from the linear relaxation.

    The LP value is padded by ``1e-8 * max(1, |value|)`` to absorb solver
    tolerances, so it is safe to compare against exact objectives.
    """
    value, _ = lp_relaxation(problem)
    return value + 1e-8 * max(1.0, abs(value))


def _lp_round(problem, x):
    p = problem
    state = _State(p)
    order = sorted(range(p.n_travelers), key=lambda u: (-max(x[u].values(), default=0.0), u))
    for u in order:
        prefs = sorted(x[u], key=lambda b: (-x[u][b], -p.score(u, b), b == NULL, b))
        prefs += [b for b in _ordered_options(p, u) if b not in x[u]]
        for b in prefs:
            if state.fits(u, b):
                state.place(u, b)
                break
    return state.assign


@dataclass
class SolveResult:
    assignment: list[int | None]
    objective: float
    feasible: bool
    exact: bool
    upper_bound: float | None
    greedy_objective: float


def solve(problem: AssignmentProblem, exact_limit: int = 40, node_limit: int = 200_000,
          use_lp: bool = True) -> SolveResult:
    """Best assignment found by greedy, LP rounding, local search and B&B.

    Branch and bound runs when there are at most ``exact_limit`` travelers;
    if it finishes within ``node_limit`` nodes the result is optimal.
    """
    p = problem
    g = greedy(p)
    g_obj = objective(p, g) if all(b is not None for b in g) else -math.inf
    best = local_search(p, g)

    ub = None
    if use_lp and p.n_travelers:
        try:
            value, x = lp_relaxation(p)
            ub = value + 1e-8 * max(1.0, abs(value))
            cand = local_search(p, _lp_round(p, x))
            if _better(p, cand, best):
                best = cand
        except InfeasibleError:
            ub = -math.inf

    exact = False
    if p.n_travelers <= exact_limit:
        bb, proven = branch_and_bound(p, best if all(b is not None for b in best) else None,
                                      node_limit=node_limit)
        if bb is not None and _better(p, bb, best):
            best = bb
        exact = proven

    complete = all(b is not None for b in best)
    feasible = complete and is_feasible(p, best)
    obj = objective(p, best) if complete else math.fsum(
        p.score(u, b) for u, b in enumerate(best) if b is not None)
    return SolveResult(best, obj, feasible, exact, ub, g_obj)


def _better(p, a, b):
    ca = sum(x is not None for x in a)
    cb = sum(x is not None for x in b)
    if ca != cb:
        return ca > cb
    sa = math.fsum(p.score(u, x) for u, x in enumerate(a) if x is not None)
    sb = math.fsum(p.score(u, x) for u, x in enumerate(b) if x is not None)
    return sa > sb


# -- traveler-level API ------------------------------------------------------------

@dataclass(frozen=True)
class Traveler:
    user_id: str
    origin: str
    preferred_slot: int


@dataclass(frozen=True)
class ChoiceBundle:
    traveler: str
    location: str | None
    time_slot: int | None

    @property
    def is_stay(self) -> bool:
        return self.location is None


@dataclass
class CapacityProfile:
    """Per ``(link, slot)`` ceiling ``C_link * (1 + theta)`` in vehicles/hour."""

    theta: float
    caps: dict[tuple[str, int], float]

    @classmethod
    def from_network(cls, network: RoadNetwork, slots: Iterable[int], theta: float = 0.0):
        if theta < -1:
            raise ValueError("theta must be >= -1")
        factor = 1.0 + theta
        caps = {(l.link_id, t): l.capacity * factor for l in network.links for t in slots}
        return cls(theta, caps)


@dataclass
class RecommendationPlan:
    assignment: dict[str, ChoiceBundle]
    flows: dict[tuple[str, int], float]
    objective: float
    satisfied_count: int
    feasible: bool
    theta: float | None = None
    lp_bound: float | None = None
    exact: bool = False
    capacity: dict[tuple[str, int], float] = field(default_factory=dict)

    def to_json(self, network: RoadNetwork | None = None) -> str:
        links = []
        for (lid, t), v in sorted(self.flows.items()):
            row = {"link_id": lid, "slot": t, "volume": v}
            if network is not None:
                row["voc"] = v / network.link_by_id[lid].capacity
            if (lid, t) in self.capacity:
                cap = self.capacity[(lid, t)]
                row["cap"] = cap if math.isfinite(cap) else None
            links.append(row)
        doc = {
            "theta": None if self.theta is None or not math.isfinite(self.theta) else self.theta,
            "objective": self.objective,
            "satisfied_count": self.satisfied_count,
            "feasible": self.feasible,
            "exact": self.exact,
            "lp_bound": None if self.lp_bound is None or not math.isfinite(self.lp_bound) else self.lp_bound,
            "assignment": [
                {"traveler": u, "location": b.location, "slot": b.time_slot}
                for u, b in sorted(self.assignment.items())
            ],
            "links": links,
        }
        return json.dumps(doc, indent=1, sort_keys=True)


def plan_from_json(text: str) -> RecommendationPlan:
    """Inverse of :meth:`RecommendationPlan.to_json`."""
    doc = json.loads(text)
    assignment = {a["traveler"]: ChoiceBundle(a["traveler"], a["location"], a["slot"])
                  for a in doc["assignment"]}
    flows, caps = {}, {}
    for row in doc["links"]:
        key = (row["link_id"], row["slot"])
        flows[key] = row["volume"]
        if "cap" in row:
            caps[key] = math.inf if row["cap"] is None else row["cap"]
    theta = doc["theta"]
    lp = doc["lp_bound"]
    return RecommendationPlan(assignment, flows, doc["objective"], doc["satisfied_count"],
                              doc["feasible"], theta, lp, doc["exact"], caps)


def bundle_score(base: float, slot: int, preferred_slot: int, off_slot_factor: float) -> float:
    return base if slot == preferred_slot else base * off_slot_factor


def _location_scores(scores, locations):
    if isinstance(scores, Mapping):
        return scores
    arr = np.asarray(scores, dtype=float)
    return {loc: arr[..., j] for j, loc in enumerate(locations)}


def preferred_bundle(traveler: Traveler, row: Mapping[str, float]) -> ChoiceBundle:
    """Unconstrained best location (ties to the smallest id) at the preferred slot."""
    loc = min(row, key=lambda j: (-row[j], j))
    return ChoiceBundle(traveler.user_id, loc, traveler.preferred_slot)


def induced_flows(assignment: Mapping[str, ChoiceBundle], travelers: Sequence[Traveler],
                  network: RoadNetwork, trips_per_traveler: float = 1.0,
                  background: Mapping[tuple[str, int], float] | None = None) -> dict[tuple[str, int], float]:
    counts: dict[tuple[str, int], int] = {}
    for tr in travelers:
        b = assignment[tr.user_id]
        if b.is_stay:
            continue
        for lid in network.route(tr.origin, b.location):
            counts[(lid, b.time_slot)] = counts.get((lid, b.time_slot), 0) + 1
    flows = dict(background or {})
    for key, n in counts.items():
        flows[key] = flows.get(key, 0.0) + n * trips_per_traveler
    return dict(sorted(flows.items()))


def preference_only(travelers: Sequence[Traveler], scores: Mapping[str, Mapping[str, float]],
                    network: RoadNetwork | None = None, trips_per_traveler: float = 1.0,
                    background: Mapping[tuple[str, int], float] | None = None) -> RecommendationPlan:
    """Baseline: every traveler gets their own argmax, capacity ignored.

    ``scores`` maps traveler id to ``{location: score}``.
    """
    assignment = {}
    total = []
    for tr in travelers:
        row = scores[tr.user_id]
        b = preferred_bundle(tr, row)
        assignment[tr.user_id] = b
        total.append(row[b.location])
    flows = induced_flows(assignment, travelers, network, trips_per_traveler, background) if network else {}
    return RecommendationPlan(assignment, flows, math.fsum(total), len(travelers), feasible=True)


@dataclass
class Instance:
    """A traveler-level problem lowered to an :class:`AssignmentProblem`."""

    problem: AssignmentProblem
    travelers: list[Traveler]
    bundles: list[list[ChoiceBundle]]
    resources: list[tuple[str, int]]
    capacity: CapacityProfile
    background: dict[tuple[str, int], float]
    overloaded: list[tuple[str, int]]


def build_instance(travelers: Sequence[Traveler], scores: Mapping[str, Mapping[str, float]],
                   network: RoadNetwork, capacity: CapacityProfile, slots: Sequence[int],
                   background: Mapping[tuple[str, int], float] | None = None,
                   trips_per_traveler: float = 1.0, off_slot_factor: float = 0.5,
                   candidates: int | None = None, allow_null: bool = True) -> Instance:
    """Enumerate (location, slot) bundles and the resources each one uses.

    Residual capacity per ``(link, slot)`` is converted to whole traveler
    units: ``floor((cap - background) / trips_per_traveler)``.
    """
    background = dict(background or {})
    travelers = list(travelers)
    resources: list[tuple[str, int]] = []
    res_index: dict[tuple[str, int], int] = {}
    all_scores, all_uses, all_bundles = [], [], []
    for tr in travelers:
        row = scores[tr.user_id]
        locs = sorted(row, key=lambda j: (-row[j], j))
        if candidates is not None:
            locs = locs[:candidates]
        ordered_slots = [tr.preferred_slot] + [t for t in slots if t != tr.preferred_slot]
        s, us, bs = [], [], []
        for loc in locs:
            path = network.route(tr.origin, loc)
            for t in ordered_slots:
                ids = []
                for lid in path:
                    key = (lid, t)
                    if key not in res_index:
                        res_index[key] = len(resources)
                        resources.append(key)
                    ids.append(res_index[key])
                s.append(bundle_score(row[loc], t, tr.preferred_slot, off_slot_factor))
                us.append(tuple(ids))
                bs.append(ChoiceBundle(tr.user_id, loc, t))
        all_scores.append(s)
        all_uses.append(us)
        all_bundles.append(bs)

    units, overloaded = [], []
    for key in resources:
        cap = capacity.caps.get(key, math.inf)
        spare = cap - background.get(key, 0.0)
        if spare < 0:
            overloaded.append(key)
        if math.isinf(spare):
            units.append(_UNLIMITED)
        else:
            units.append(int(math.floor(spare / trips_per_traveler + 1e-9)) if spare >= 0 else -1)
    problem = AssignmentProblem(all_scores, all_uses, units, allow_null)
    return Instance(problem, travelers, all_bundles, resources, capacity, background, overloaded)


def plan_from_assignment(inst: Instance, assignment: Sequence[int | None], network: RoadNetwork,
                         scores: Mapping[str, Mapping[str, float]], trips_per_traveler: float = 1.0,
                         lp_value: float | None = None, exact: bool = False) -> RecommendationPlan:
    if any(b is None for b in assignment):
        missing = [inst.travelers[u].user_id for u, b in enumerate(assignment) if b is None]
        raise InfeasibleError(f"no feasible bundle for {len(missing)} traveler(s), e.g. {missing[:5]}")
    out = {}
    for u, b in enumerate(assignment):
        tr = inst.travelers[u]
        out[tr.user_id] = (ChoiceBundle(tr.user_id, None, None) if b == NULL else inst.bundles[u][b])
    flows = induced_flows(out, inst.travelers, network, trips_per_traveler, inst.background)
    feasible = is_feasible(inst.problem, assignment)
    satisfied = sum(out[tr.user_id] == preferred_bundle(tr, scores[tr.user_id]) for tr in inst.travelers)
    return RecommendationPlan(out, flows, objective(inst.problem, assignment), satisfied, feasible,
                              inst.capacity.theta, lp_value, exact, dict(inst.capacity.caps))


def optimize(travelers: Sequence[Traveler], scores: Mapping[str, Mapping[str, float]],
             network: RoadNetwork, capacity: CapacityProfile, slots: Sequence[int],
             background: Mapping[tuple[str, int], float] | None = None,
             trips_per_traveler: float = 1.0, off_slot_factor: float = 0.5,
             candidates: int | None = None, allow_null: bool = True,
             exact_limit: int = 40) -> RecommendationPlan:
    """Capacity-feasible plan maximising total satisfied preference.

    With ``allow_null`` travelers that cannot be served are told to stay
    (score 0); otherwise an unservable traveler raises
    :class:`InfeasibleError`.
    """
    inst = build_instance(travelers, scores, network, capacity, slots, background,
                          trips_per_traveler, off_slot_factor, candidates, allow_null)
    res = solve(inst.problem, exact_limit=exact_limit)
    if not res.feasible:
        raise InfeasibleError("no capacity-feasible plan found"
                              + (f"; overloaded background on {inst.overloaded[:5]}" if inst.overloaded else ""))
    return plan_from_assignment(inst, res.assignment, network, scores, trips_per_traveler,
                                res.upper_bound, res.exact)


def score_table(model, travelers: Iterable[Traveler]) -> dict[str, dict[str, float]]:
    """Clamped model scores keyed by traveler then location."""
    S = model.scores()
    out = {}
    for tr in travelers:
        u = model.user_index[tr.user_id]
        out[tr.user_id] = {loc: float(S[u, j]) for j, loc in enumerate(model.locations)}
    return out


def random_problem(rng: np.random.Generator, max_travelers: int = 10, max_bundles: int = 5,
                   n_resources: int = 6, allow_null: bool = True) -> AssignmentProblem:
    """Random small instance for cross-checking solvers against the oracle."""
    n = int(rng.integers(1, max_travelers + 1))
    scores, uses = [], []
    for _ in range(n):
        nb = int(rng.integers(1, max_bundles + 1 - (1 if allow_null else 0))) if max_bundles > 1 else 1
        scores.append([float(x) for x in rng.uniform(0, 10, nb)])
        us = []
        for _ in range(nb):
            k = int(rng.integers(0, 3))
            us.append(tuple(sorted(int(r) for r in rng.choice(n_resources, size=k, replace=False))))
        uses.append(us)
    cap = [int(c) for c in rng.integers(0, max(2, n // 2) + 1, n_resources)]
    return AssignmentProblem(scores, uses, cap, allow_null)

