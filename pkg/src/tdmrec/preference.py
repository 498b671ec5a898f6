"""Latent-factor preference model over realized visit counts.

Visit counts act as implicit feedback.  The fitted model minimises

    sum_uj c_uj * (p_uj - U_u . L_j)**2 + reg * (|U|^2 + |L|^2)

with confidence ``c_uj = 1 + w0 * p_uj`` on every cell (unvisited cells
are targets of 0 with weight 1).  An optional boolean ``observed`` mask
zeroes the weight of held-out cells.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import TrainingError
from .ingest import UserProfile


@dataclass(frozen=True)
class Hyperparams:
    k: int = 16
    reg: float = 0.1
    epochs: int = 200
    w0: float = 1.0
    learning_rate: float = 0.01
    solver: str = "als"
    tol: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.reg < 0:
            raise ValueError("reg must be >= 0")
        if self.solver not in ("als", "gd"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass
class RealizedTrips:
    """Dense user x location visit-count matrix with its id indexes."""

    counts: np.ndarray
    users: list[str]
    locations: list[str]

    def __post_init__(self):
        self.counts = np.array(self.counts, dtype=float)
        self.counts.setflags(write=False)
        if self.counts.shape != (len(self.users), len(self.locations)):
            raise ValueError("count matrix shape does not match indexes")
        self.user_index = {u: i for i, u in enumerate(self.users)}
        self.location_index = {j: i for i, j in enumerate(self.locations)}


@dataclass
class PreferenceModel:
    user_factors: np.ndarray
    location_factors: np.ndarray
    users: list[str]
    locations: list[str]
    hyperparams: Hyperparams
    seed: int
    realized: np.ndarray | None = None
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.user_index = {u: i for i, u in enumerate(self.users)}
        self.location_index = {j: i for i, j in enumerate(self.locations)}

    @property
    def k(self) -> int:
        return self.user_factors.shape[1]

    def reconstruction(self) -> np.ndarray:
        return self.user_factors @ self.location_factors.T

    def scores(self) -> np.ndarray:
        """Predicted preferences clamped at zero, as used by the optimizer."""
        return np.maximum(self.reconstruction(), 0.0)


def build_matrix(profiles: Iterable[UserProfile], locations: Sequence[str]) -> RealizedTrips:
    profiles = list(profiles)
    loc_index = {j: i for i, j in enumerate(locations)}
    P = np.zeros((len(profiles), len(locations)))
    for r, prof in enumerate(profiles):
        for loc, n in prof.visit_counts.items():
            if loc not in loc_index:
                raise KeyError(f"user {prof.user_id!r}: unknown location {loc!r}")
            P[r, loc_index[loc]] = n
    return RealizedTrips(P, [p.user_id for p in profiles], list(locations))


def confidence(P: np.ndarray, w0: float, observed: np.ndarray | None = None) -> np.ndarray:
    C = 1.0 + w0 * P
    if observed is not None:
        C = np.where(observed, C, 0.0)
    return C


def loss(U, L, P, C, reg) -> float:
    E = P - U @ L.T
    return float(np.sum(C * E * E) + reg * (np.sum(U * U) + np.sum(L * L)))


def gradient(U, L, P, C, reg):
    """Analytic gradient of :func:`loss` with respect to ``(U, L)``."""
    W = C * (P - U @ L.T)
    return -2.0 * W @ L + 2.0 * reg * U, -2.0 * W.T @ U + 2.0 * reg * L


def _als_half(F, P, C, reg):
    # rows of the result solve (F' diag(c) F + reg I) x = F' diag(c) p
    k = F.shape[1]
    A = np.einsum("uj,jk,jl->ukl", C, F, F)
    b = (C * P) @ F
    if reg > 0:
        A += reg * np.eye(k)
        return np.linalg.solve(A, b[..., None])[..., 0]
    return np.einsum("ukl,ul->uk", np.linalg.pinv(A, hermitian=True), b)


def fit(P, hyperparams: Hyperparams = Hyperparams(), seed: int = 0,
        observed: np.ndarray | None = None) -> PreferenceModel:
    """Fit user and location factors to a realized-trips matrix.

    ``P`` is a :class:`RealizedTrips` or a plain 2-D array.  The default
    alternating least squares solver minimises the loss exactly in each
    half-step, so the per-epoch loss never increases; ``solver="gd"`` runs
    full-batch gradient descent instead.  Raises :class:`TrainingError` on a
    non-finite loss.
    """
    if isinstance(P, RealizedTrips):
        users, locations, M = P.users, P.locations, P.counts
    else:
        M = np.asarray(P, dtype=float)
        users = [str(i) for i in range(M.shape[0])]
        locations = [str(j) for j in range(M.shape[1])]
    hp = hyperparams
    n_users, n_locs = M.shape
    if hp.k > min(n_users, n_locs):
        raise ValueError(f"k={hp.k} exceeds min(|users|, |locations|)={min(n_users, n_locs)}")

    rng = np.random.default_rng(seed)
    U = rng.uniform(-0.01, 0.01, size=(n_users, hp.k))
    L = rng.uniform(-0.01, 0.01, size=(n_locs, hp.k))
    C = confidence(M, hp.w0, observed)

    history = [loss(U, L, M, C, hp.reg)]
    for _ in range(hp.epochs):
        if hp.solver == "als":
            U = _als_half(L, M, C, hp.reg)
            L = _als_half(U, M.T, C.T, hp.reg)
        else:
            gU, gL = gradient(U, L, M, C, hp.reg)
            U = U - hp.learning_rate * gU
            L = L - hp.learning_rate * gL
        cur = loss(U, L, M, C, hp.reg)
        if not np.isfinite(cur):
            raise TrainingError("loss diverged to a non-finite value; try a smaller learning rate")
        history.append(cur)
        if hp.tol > 0 and history[-2] - cur <= hp.tol * max(history[-2], 1e-300):
            break
    return PreferenceModel(U, L, list(users), list(locations), hp, seed,
                           realized=np.array(M), loss_history=history)


def predict(model: PreferenceModel, user: str, location: str) -> float:
    u = model.user_index[user]
    j = model.location_index[location]
    return float(model.user_factors[u] @ model.location_factors[j])


def top_candidates(model: PreferenceModel, user: str, n: int,
                   exclude_visited: bool = False) -> list[tuple[str, float]]:
    """Best ``n`` locations for ``user`` by clamped score.

    Ties go to the location listed first in the model index.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    u = model.user_index[user]
    scores = np.maximum(model.location_factors @ model.user_factors[u], 0.0)
    order = sorted(range(len(model.locations)), key=lambda j: (-scores[j], j))
    if exclude_visited and model.realized is not None:
        order = [j for j in order if model.realized[u, j] <= 0]
    return [(model.locations[j], float(scores[j])) for j in order[:n]]


def rmse(A, B, mask=None) -> float:
    D = np.asarray(A, dtype=float) - np.asarray(B, dtype=float)
    if mask is not None:
        D = D[mask]
    return float(np.sqrt(np.mean(D * D)))


# -- persistence -----------------------------------------------------------

def save_model(model: PreferenceModel, path) -> None:
    doc = {
        "format": "tdmrec.preference/1",
        "k": model.k,
        "n_users": len(model.users),
        "n_locations": len(model.locations),
        "seed": model.seed,
        "hyperparams": asdict(model.hyperparams),
        "users": model.users,
        "locations": model.locations,
        "user_factors": model.user_factors.ravel().tolist(),
        "location_factors": model.location_factors.ravel().tolist(),
        "realized": None if model.realized is None else model.realized.ravel().tolist(),
        "loss_history": model.loss_history,
    }
    if hasattr(path, "write"):
        json.dump(doc, path)
        return
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> PreferenceModel:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    k, nu, nl = doc["k"], doc["n_users"], doc["n_locations"]
    realized = doc.get("realized")
    return PreferenceModel(
        np.array(doc["user_factors"], dtype=float).reshape(nu, k),
        np.array(doc["location_factors"], dtype=float).reshape(nl, k),
        doc["users"], doc["locations"], Hyperparams(**doc["hyperparams"]), doc["seed"],
        realized=None if realized is None else np.array(realized, dtype=float).reshape(nu, nl),
        loss_history=doc.get("loss_history", []),
    )
