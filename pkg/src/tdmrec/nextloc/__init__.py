"""Next-location prediction: naive mode, Markov chain and an LSTM."""

from .baselines import MarkovModel, fit_markov, predict_frequent, predict_markov, should_send
from .evaluate import AccuracyRow, evaluate, evaluate_resolutions, leave_last_out, to_resolution
from .lstm import RecurrentModel, RnnParams, fit_rnn, next_distribution, predict_rnn

__all__ = [
    "AccuracyRow", "MarkovModel", "RecurrentModel", "RnnParams", "evaluate", "evaluate_resolutions",
    "fit_markov", "fit_rnn", "leave_last_out", "next_distribution", "predict_frequent",
    "predict_markov", "predict_rnn", "should_send", "to_resolution",
]
