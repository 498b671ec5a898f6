"""Next-location language model: embedding -> LSTM -> softmax, in numpy.

Locations are tokens and each user's trace is a sentence.  Training uses
truncated backpropagation through time on next-token cross-entropy, in
float64 so the analytic gradient can be checked against finite
differences.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..errors import TrainingError

UNK = "<unk>"
PARAM_NAMES = ("embed", "w_x", "w_h", "b", "w_y", "b_y")


@dataclass(frozen=True)
class RnnParams:
    embed_dim: int = 16
    hidden: int = 32
    epochs: int = 30
    learning_rate: float = 0.05
    clip_norm: float = 5.0
    bptt: int = 20
    batch_size: int = 32
    optimizer: str = "adam"


@dataclass
class RecurrentModel:
    vocab: list[str]
    weights: dict[str, np.ndarray]
    params: RnnParams = field(default_factory=RnnParams)
    seed: int = 0
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.index = {tok: i for i, tok in enumerate(self.vocab)}

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        unk = self.index[UNK]
        return np.array([self.index.get(t, unk) for t in tokens], dtype=np.int64)

    def to_json(self) -> str:
        doc = {
            "format": "tdmrec.rnn/1",
            "vocab": self.vocab,
            "params": asdict(self.params),
            "seed": self.seed,
            "shapes": {k: list(v.shape) for k, v in self.weights.items()},
            "weights": {k: v.ravel().tolist() for k, v in self.weights.items()},
            "loss_history": self.loss_history,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "RecurrentModel":
        doc = json.loads(text)
        weights = {k: np.array(v, dtype=float).reshape(doc["shapes"][k]) for k, v in doc["weights"].items()}
        return cls(doc["vocab"], weights, RnnParams(**doc["params"]), doc["seed"], doc.get("loss_history", []))


def init_weights(vocab_size: int, params: RnnParams, rng: np.random.Generator) -> dict[str, np.ndarray]:
    h, e = params.hidden, params.embed_dim
    s_x, s_h = 1.0 / np.sqrt(e), 1.0 / np.sqrt(h)
    b = np.zeros(4 * h)
    b[h:2 * h] = 1.0  # forget gate starts open
    return {
        "embed": rng.uniform(-0.1, 0.1, (vocab_size, e)),
        "w_x": rng.uniform(-s_x, s_x, (e, 4 * h)),
        "w_h": rng.uniform(-s_h, s_h, (h, 4 * h)),
        "b": b,
        "w_y": rng.uniform(-s_h, s_h, (h, vocab_size)),
        "b_y": np.zeros(vocab_size),
    }


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(W, X, h0=None, c0=None):
    """Run the network over token ids ``X`` of shape ``(batch, steps)``.

    Returns ``(probs, cache, (h, c))`` with ``probs`` of shape
    ``(batch, steps, vocab)``.
    """
    B, T = X.shape
    H = W["w_h"].shape[0]
    h = np.zeros((B, H)) if h0 is None else h0
    c = np.zeros((B, H)) if c0 is None else c0
    cache = []
    probs = np.empty((B, T, W["w_y"].shape[1]))
    for t in range(T):
        x = W["embed"][X[:, t]]
        z = x @ W["w_x"] + h @ W["w_h"] + W["b"]
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        o = _sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        probs[:, t] = softmax(h @ W["w_y"] + W["b_y"])
        cache.append((x, h_prev, c_prev, i, f, o, g, tc, h))
    return probs, cache, (h, c)


def loss_and_grad(W, X, Y, mask, h0=None, c0=None, need_grad=True):
    """Mean masked cross-entropy of predicting ``Y`` from ``X`` and its gradient."""
    probs, cache, state = forward(W, X, h0, c0)
    B, T = X.shape
    n = mask.sum()
    if n == 0:
        return 0.0, {k: np.zeros_like(v) for k, v in W.items()}, state
    picked = probs[np.arange(B)[:, None], np.arange(T)[None, :], Y]
    loss = -float(np.sum(mask * np.log(np.maximum(picked, 1e-300)))) / n
    if not need_grad:
        return loss, None, state

    G = {k: np.zeros_like(v) for k, v in W.items()}
    H = W["w_h"].shape[0]
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        x, h_prev, c_prev, i, f, o, g, tc, h = cache[t]
        dlogits = probs[:, t].copy()
        dlogits[np.arange(B), Y[:, t]] -= 1.0
        dlogits *= (mask[:, t] / n)[:, None]
        G["w_y"] += h.T @ dlogits
        G["b_y"] += dlogits.sum(axis=0)
        dh = dlogits @ W["w_y"].T + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g * g)], axis=1)
        G["w_x"] += x.T @ dz
        G["w_h"] += h_prev.T @ dz
        G["b"] += dz.sum(axis=0)
        np.add.at(G["embed"], X[:, t], dz @ W["w_x"].T)
        dh_next = dz @ W["w_h"].T
    return loss, G, state


def _batches(seqs, batch_size, rng):
    order = rng.permutation(len(seqs))
    for s in range(0, len(order), batch_size):
        group = [seqs[i] for i in order[s:s + batch_size]]
        T = max(len(q) for q in group) - 1
        X = np.zeros((len(group), T), dtype=np.int64)
        Y = np.zeros((len(group), T), dtype=np.int64)
        M = np.zeros((len(group), T))
        for r, q in enumerate(group):
            X[r, :len(q) - 1] = q[:-1]
            Y[r, :len(q) - 1] = q[1:]
            M[r, :len(q) - 1] = 1.0
        yield X, Y, M


def fit_rnn(corpus: Sequence[Sequence[str]], params: RnnParams = RnnParams(), seed: int = 0) -> RecurrentModel:
    """Train on every sequence of length >= 2 in ``corpus``.

    Deterministic for a given seed.  Raises :class:`TrainingError` if the
    loss becomes non-finite.
    """
    seqs_raw = [list(s) for s in corpus if len(s) >= 2]
    if not seqs_raw:
        raise ValueError("corpus has no sequence of length >= 2")
    vocab = [UNK] + sorted({t for s in seqs_raw for t in s})
    rng = np.random.default_rng(seed)
    W = init_weights(len(vocab), params, rng)
    model = RecurrentModel(vocab, W, params, seed)
    seqs = [model.encode(s) for s in seqs_raw]

    m = {k: np.zeros_like(v) for k, v in W.items()}
    v2 = {k: np.zeros_like(v) for k, v in W.items()}
    step = 0
    for _ in range(params.epochs):
        total, count = 0.0, 0.0
        for X, Y, M in _batches(seqs, params.batch_size, rng):
            h = c = None
            for s in range(0, X.shape[1], params.bptt):
                sl = slice(s, s + params.bptt)
                loss, G, (h, c) = loss_and_grad(W, X[:, sl], Y[:, sl], M[:, sl], h, c)
                if not np.isfinite(loss):
                    raise TrainingError("non-finite loss; lower the learning rate")
                n = M[:, sl].sum()
                total += loss * n
                count += n
                norm = np.sqrt(sum(float(np.sum(g * g)) for g in G.values()))
                if norm > params.clip_norm:
                    for g in G.values():
                        g *= params.clip_norm / norm
                step += 1
                _update(W, G, m, v2, step, params)
        model.loss_history.append(total / max(count, 1.0))
    return model


def _update(W, G, m, v, step, params):
    lr = params.learning_rate
    if params.optimizer == "sgd":
        for k in W:
            W[k] -= lr * G[k]
        return
    b1, b2, eps = 0.9, 0.999, 1e-8
    for k in W:
        m[k] = b1 * m[k] + (1 - b1) * G[k]
        v[k] = b2 * v[k] + (1 - b2) * G[k] * G[k]
        mh = m[k] / (1 - b1 ** step)
        vh = v[k] / (1 - b2 ** step)
        W[k] -= lr * mh / (np.sqrt(vh) + eps)


def next_distribution(model: RecurrentModel, history: Sequence[str]) -> np.ndarray:
    if len(history) == 0:
        raise ValueError("history must not be empty")
    X = model.encode(history)[None, :]
    probs, _, _ = forward(model.weights, X)
    return probs[0, -1]


def predict_rnn(model: RecurrentModel, history: Sequence[str]) -> str:
    """Most probable next token; ties go to the lowest token id, never ``<unk>``."""
    p = next_distribution(model, history).copy()
    if len(model.vocab) > 1:
        p[model.index[UNK]] = -np.inf
    return model.vocab[int(np.argmax(p))]
