import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_diff
from tdmrec.errors import TrainingError
from tdmrec.ingest import UserProfile
from tdmrec.preference import (Hyperparams, PreferenceModel, build_matrix, confidence, fit, gradient,
                               load_model, loss, predict, rmse, save_model, top_candidates)


def profile(uid, counts):
    return UserProfile(uid, "FR", counts, "FR")


def test_build_matrix():
    P = build_matrix([profile("u", {"A": 2})], ["A", "B", "C"])
    assert P.counts.tolist() == [[2, 0, 0]]
    P = build_matrix([profile("u", {"A": 2, "C": 1}), profile("v", {"A": 2, "C": 1})], ["A", "B", "C"])
    assert (P.counts[0] == P.counts[1]).all() and P.counts.sum() == 6
    with pytest.raises(KeyError):
        build_matrix([profile("u", {"Z": 1})], ["A"])
    with pytest.raises(ValueError):
        P.counts[0, 0] = 1.0


def test_rank_one_example():
    m = fit(np.array([[2.0, 4.0], [1.0, 2.0]]), Hyperparams(k=1, reg=0.0, epochs=100), seed=0)
    assert rmse(m.reconstruction(), [[2, 4], [1, 2]]) < 1e-3


def test_all_zero_with_regularisation():
    m = fit(np.zeros((5, 4)), Hyperparams(k=2, reg=0.5, epochs=50), seed=3)
    assert np.abs(m.reconstruction()).max() < 1e-6


def test_predict_examples():
    m = PreferenceModel(np.array([[1.0, 2.0], [0.0, 0.0]]), np.array([[3.0, 4.0]]), ["u", "z"], ["j"],
                        Hyperparams(k=2), 0)
    assert predict(m, "u", "j") == 11.0
    assert predict(m, "z", "j") == 0.0
    with pytest.raises(KeyError):
        predict(m, "nobody", "j")
    fitted = fit(np.random.default_rng(0).random((6, 5)), Hyperparams(k=3, epochs=20), seed=1)
    R = fitted.reconstruction()
    assert all(predict(fitted, u, j) == R[a, b] for a, u in enumerate(fitted.users)
               for b, j in enumerate(fitted.locations))


def test_top_candidates():
    m = PreferenceModel(np.array([[1.0]]), np.array([[2.0], [1.0], [1.0]]), ["u"], ["A", "B", "C"],
                        Hyperparams(k=1), 0, realized=np.array([[3.0, 0.0, 0.0]]))
    assert top_candidates(m, "u", 1) == [("A", 2.0)]
    assert top_candidates(m, "u", 2, exclude_visited=True) == [("B", 1.0), ("C", 1.0)]
    assert [x for x, _ in top_candidates(m, "u", 3)] == ["A", "B", "C"]


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_k_bound_and_divergence():
    with pytest.raises(ValueError):
        fit(np.ones((2, 3)), Hyperparams(k=3))
    with pytest.raises(TrainingError):
        fit(np.random.default_rng(0).random((8, 8)) * 100, Hyperparams(k=4, solver="gd", learning_rate=10.0, epochs=50))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        n, m, k = rng.integers(2, 6, size=3)
        P = rng.poisson(1.5, size=(n, m)).astype(float)
        C = confidence(P, float(rng.uniform(0, 2)), rng.random((n, m)) > 0.2)
        U, L = rng.normal(size=(n, k)), rng.normal(size=(m, k))
        reg = float(rng.uniform(0, 1))
        gU, gL = gradient(U, L, P, C, reg)
        nU = central_diff(lambda: loss(U, L, P, C, reg), U, 1e-6)
        nL = central_diff(lambda: loss(U, L, P, C, reg), L, 1e-6)
        for a, b in ((gU, nU), (gL, nL)):
            worst = max(worst, float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b))))
    assert worst < 1e-5


@pytest.mark.parametrize("solver,epochs", [("als", 60), ("gd", 300)])
def test_loss_non_increasing(solver, epochs):
    rng = np.random.default_rng(2)
    P = rng.poisson(2.0, size=(15, 8)).astype(float)
    m = fit(P, Hyperparams(k=3, epochs=epochs, solver=solver, learning_rate=0.002), seed=0)
    diffs = np.diff(m.loss_history)
    assert (diffs <= 1e-9 * np.abs(np.array(m.loss_history[:-1]))).all()


def test_deterministic_given_seed():
    P = np.random.default_rng(5).poisson(1.0, size=(10, 6)).astype(float)
    a = fit(P, Hyperparams(k=3, epochs=30), seed=7)
    b = fit(P, Hyperparams(k=3, epochs=30), seed=7)
    assert a.user_factors.tobytes() == b.user_factors.tobytes()
    assert a.location_factors.tobytes() == b.location_factors.tobytes()


def test_regularisation_monotone():
    # the weighted data term of the objective (reg switched off) is what must not improve
    P = np.random.default_rng(9).poisson(2.0, size=(20, 8)).astype(float)
    C = confidence(P, 1.0)
    errs = []
    for lam in (0.0, 0.1, 1.0, 10.0):
        m = fit(P, Hyperparams(k=3, reg=lam, epochs=150), seed=0)
        errs.append(loss(m.user_factors, m.location_factors, P, C, 0.0))
    assert all(a <= b + 1e-9 for a, b in zip(errs, errs[1:]))


@given(st.integers(1, 3), st.integers(0, 2), st.integers(0, 10**6))
@settings(max_examples=15, deadline=None)
def test_exact_rank_recovery(r, extra, seed):
    rng = np.random.default_rng(seed)
    P = rng.uniform(0.2, 1.5, (12, r)) @ rng.uniform(0.2, 1.5, (9, r)).T
    m = fit(P, Hyperparams(k=r + extra, reg=0.0, w0=0.0, epochs=300), seed=seed)
    assert rmse(m.reconstruction(), P) < 1e-3


def test_save_load_round_trip(tmp_path):
    P = build_matrix([profile("u", {"A": 2}), profile("v", {"B": 1})], ["A", "B"])
    m = fit(P, Hyperparams(k=2, epochs=5), seed=4)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.users == m.users and back.locations == m.locations and back.seed == 4
    assert np.array_equal(back.reconstruction(), m.reconstruction())
    assert back.hyperparams == m.hyperparams
