"""Naive, Markov and LSTM next-location accuracy on two toy corpora."""
import numpy as np

from tdmrec.nextloc import RnnParams, evaluate


def second_order(n_users=300, k=8, seed=0):
    rng = np.random.default_rng(seed)
    out = {}
    for u in range(n_users):
        seq = [int(x) for x in rng.integers(k, size=2)]
        while len(seq) < int(rng.integers(12, 31)):
            seq.append((seq[-1] + seq[-2]) % k)
        out[f"u{u}"] = [f"L{x}" for x in seq]
    return out


corpora = {"cycle": {f"u{i}": list("ABC") * 30 for i in range(5)}, "second-order": second_order()}
for name, corpus in corpora.items():
    print(name)
    for row in evaluate(corpus, ("naive", "markov", "rnn"), RnnParams(), seed=0):
        print(f"  {row.model:6s} {row.accuracy:.3f}")
