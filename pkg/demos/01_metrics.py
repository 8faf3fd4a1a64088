"""
Probabilities, logits and ranking metrics
=========================================

The student tree is fit on the logit scale and read back through the
sigmoid. This script walks through the clipping rule and the two scores
used throughout: cross-entropy against soft targets and AUROC.
"""
import numpy as np

from mobhsmm.metrics import EPS, auroc, cross_entropy, logit, sigmoid

###############################################################################
# Probabilities are clipped to ``[EPS, 1 - EPS]`` before taking logits, so a
# hard label of 1 maps to a large but finite number.

print(EPS, logit(0.5), logit(0.8), logit(1.0))
print(sigmoid(logit(0.8)))

###############################################################################
# Cross-entropy compares a reference probability (the teacher) with a
# prediction. It is smallest when the two agree, and even then it is not
# zero: what remains is the teacher's own entropy.

teacher = np.array([0.9, 0.1, 0.6])
print("self-entropy", cross_entropy(teacher, teacher))
print("flat guess  ", cross_entropy(teacher, np.full(3, 0.5)))

###############################################################################
# AUROC counts correctly ordered (positive, negative) pairs, with ties
# counting one half.

scores = [0.9, 0.6, 0.4, 0.1]
labels = [1, 0, 1, 0]
print(auroc(scores, labels))  # 3 of 4 pairs in order
print(auroc([0.3, 0.3, 0.3], [1, 0, 1]))
