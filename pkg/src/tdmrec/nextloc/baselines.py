"""Most-frequent and first-order Markov next-location baselines."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


def predict_frequent(history: Sequence[str]) -> str:
    """Modal location of the history; among tied modes, the most recent one."""
    if len(history) == 0:
        raise ValueError("history must not be empty")
    counts = Counter(history)
    top = max(counts.values())
    for tok in reversed(history):
        if counts[tok] == top:
            return tok


@dataclass
class MarkovModel:
    transitions: dict[str, Counter]
    vocab: list[str]
    global_mode: str
    smoothing: float = 0.1
    order: int = 1
    token_counts: Counter = field(default_factory=Counter)

    def probabilities(self, token: str) -> dict[str, float]:
        """Laplace-smoothed next-token distribution after ``token``."""
        row = self.transitions.get(token, Counter())
        denom = sum(row.values()) + self.smoothing * len(self.vocab)
        return {b: (row.get(b, 0) + self.smoothing) / denom for b in self.vocab}


def fit_markov(corpus: Iterable[Sequence[str]], smoothing: float = 0.1) -> MarkovModel:
    transitions: dict[str, Counter] = {}
    tokens: Counter = Counter()
    n_trans = 0
    for seq in corpus:
        tokens.update(seq)
        for a, b in zip(seq, seq[1:]):
            transitions.setdefault(a, Counter())[b] += 1
            n_trans += 1
    if n_trans == 0:
        raise ValueError("corpus contains no transition")
    vocab = sorted(tokens)
    top = max(tokens.values())
    mode = min(t for t in vocab if tokens[t] == top)
    return MarkovModel(transitions, vocab, mode, smoothing, 1, tokens)


def predict_markov(model: MarkovModel, history: Sequence[str]) -> str:
    """Most likely successor of the last token, lowest id on ties.

    A last token never seen with a successor falls back to the corpus mode.
    """
    if len(history) == 0:
        raise ValueError("history must not be empty")
    row = model.transitions.get(history[-1])
    if not row:
        return model.global_mode
    top = max(row.values())
    return min(b for b, n in row.items() if n == top)


def should_send(predicted: str, recommended: str, resolution: Mapping[str, str] | None = None) -> bool:
    """Send a recommendation only if the prediction disagrees with it.

    With ``resolution`` (e.g. tower -> merged group) both ids are compared
    after mapping.
    """
    if resolution is not None:
        predicted = resolution.get(predicted, predicted)
        recommended = resolution.get(recommended, recommended)
    return predicted != recommended
