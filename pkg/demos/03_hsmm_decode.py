"""
Durations, transitions and Viterbi decoding
===========================================

An explicit-duration HSMM stays in a state for a sampled number of steps,
then jumps to a different state. We sample from a known model, rebuild it
from the labeled sequences and decode a fresh sequence.
"""
import numpy as np

from mobhsmm.hsmm import (HsmmConfig, build_hsmm, predict_next, run_length_encode,
                          sample, viterbi)
from mobhsmm.synthetic import three_state_model

truth = three_state_model()
print(truth.A)

###############################################################################
# A sampled path is a sequence of runs. Run-length encoding turns it into
# ``(state, duration)`` segments, the raw material for the sojourn pmfs.

states, obs = sample(truth, 60, seed=0)
print(run_length_encode(states)[:5])

###############################################################################
# Rebuilding from many labeled sequences. With smoothing switched off the
# transition matrix is the plain frequency of observed jumps.

seqs = [sample(truth, 500, seed=s) for s in range(100)]
model = build_hsmm(seqs, 3, HsmmConfig(transition_smoothing=0.0))
print(np.round(model.A, 3))
print("emission means", np.round(model.mu, 3), "sd", np.round(model.sigma, 3))
print("sojourn modes", model.sojourn.argmax(axis=1) + 1)

###############################################################################
# Viterbi returns the most probable segmentation of a new sequence.

new_states, new_obs = sample(truth, 150, seed=99)
path, loglik = viterbi(model, new_obs)
print("agreement with the hidden path:", np.mean(path == new_states))
print("log-likelihood:", loglik)

###############################################################################
# The next state after a run ends is read off the transition row.

print(predict_next(model, current_state=1, k=2))
