"""Leave-last-out accuracy comparison of next-location predictors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .baselines import fit_markov, predict_frequent, predict_markov
from .lstm import RnnParams, fit_rnn, predict_rnn

MODELS = ("naive", "markov", "rnn")


@dataclass(frozen=True)
class AccuracyRow:
    model: str
    accuracy: float
    improvement: float | None
    n_users: int


def leave_last_out(corpus: Mapping[str, Sequence[str]]):
    """Split each user's sequence into (history, held-out last token).

    Users with fewer than two tokens are skipped.
    """
    train, test = {}, {}
    for user in sorted(corpus):
        seq = list(corpus[user])
        if len(seq) < 2:
            continue
        train[user] = seq[:-1]
        test[user] = seq[-1]
    return train, test


def evaluate(corpus: Mapping[str, Sequence[str]], models: Sequence[str] = MODELS,
             rnn_params: RnnParams = RnnParams(), seed: int = 0) -> list[AccuracyRow]:
    """Fit every model on the histories and score the held-out last tokens.

    Improvement is relative to the naive model: ``(acc - naive) / naive``.
    """
    train, test = leave_last_out(corpus)
    if not test:
        raise ValueError("empty test set: no user has two or more locations")
    histories = [train[u] for u in test]

    predictors = {}
    for name in models:
        if name == "naive":
            predictors[name] = predict_frequent
        elif name == "markov":
            mk = fit_markov(histories)
            predictors[name] = lambda h, mk=mk: predict_markov(mk, h)
        elif name == "rnn":
            rn = fit_rnn(histories, rnn_params, seed)
            predictors[name] = lambda h, rn=rn: predict_rnn(rn, h)
        else:
            raise ValueError(f"unknown model {name!r}")

    acc = {}
    for name, fn in predictors.items():
        hits = sum(fn(train[u]) == test[u] for u in test)
        acc[name] = hits / len(test)
    base = acc.get("naive")
    rows = []
    for name in models:
        imp = None
        if name != "naive" and base:
            imp = (acc[name] - base) / base
        rows.append(AccuracyRow(name, acc[name], imp, len(test)))
    return rows


def to_resolution(corpus: Mapping[str, Sequence[str]], mapping: Mapping[str, str]) -> dict[str, list[str]]:
    """Re-express tower sequences at a coarser level, merging repeats."""
    out = {}
    for user, seq in corpus.items():
        merged = []
        for tok in seq:
            m = mapping.get(tok, tok)
            if not merged or merged[-1] != m:
                merged.append(m)
        out[user] = merged
    return out


def evaluate_resolutions(corpus: Mapping[str, Sequence[str]], merged: Mapping[str, str],
                         models: Sequence[str] = MODELS, rnn_params: RnnParams = RnnParams(),
                         seed: int = 0) -> dict[str, list[AccuracyRow]]:
    return {
        "tower": evaluate(corpus, models, rnn_params, seed),
        "merged": evaluate(to_resolution(corpus, merged), models, rnn_params, seed),
    }


# Published reference accuracies (Andorra CDR); documentation only.
REFERENCE = {
    "tower": {"naive": 0.50, "markov": 0.54, "rnn": 0.67},
    "merged": {"naive": 0.63, "markov": 0.57, "rnn": 0.78},
}
