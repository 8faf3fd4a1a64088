"""Teacher-to-student distillation helpers.

The student tree regresses the teacher's soft targets on the logit scale
and is read back through the sigmoid, so its probabilities never leave
``(0, 1)``.
"""
import warnings

import numpy as np

from .exceptions import DataError
from .metrics import auroc, cross_entropy, logit, sigmoid
from .mobtree import TreeParams, grow_tree

__all__ = ["student_targets", "fit_student", "student_proba", "soft_or_hard", "score_student"]


def student_targets(data, target="soft"):
    """Regression targets for the student tree.

    ``target="soft"`` takes the logit of the teacher column. ``"outcome"``
    takes the logit of the clipped 0/1 labels, which only makes sense as a
    fallback and is warned about.
    """
    if target == "soft":
        if data.soft_target_col is None:
            raise DataError("no soft_target column; use target='outcome' to fit raw labels")
        return logit(data.frame[data.soft_target_col].to_numpy(dtype=float))
    if target == "outcome":
        warnings.warn("fitting logit of hard 0/1 labels: targets saturate at +-13.8",
                      stacklevel=2)
        return logit(data.frame[data.outcome_col].to_numpy(dtype=float))
    raise DataError(f"unknown target {target!r}")


def fit_student(data, params: TreeParams | None = None, target="soft"):
    return grow_tree(data, params or TreeParams(), target=student_targets(data, target))


def student_proba(tree, data) -> np.ndarray:
    return sigmoid(tree.predict(data.frame))


def soft_or_hard(data) -> np.ndarray:
    """Reference probabilities for cross-entropy: teacher if present, else labels."""
    col = data.soft_target_col or data.outcome_col
    return data.frame[col].to_numpy(dtype=float)


def score_student(tree, data):
    """``(cross_entropy, auroc)`` of the student on ``data``; AUROC is NaN when undefined."""
    p = student_proba(tree, data)
    ce = cross_entropy(soft_or_hard(data), p)
    y = data.frame[data.outcome_col].to_numpy()
    try:
        auc = auroc(p, y)
    except DataError:
        auc = float("nan")
    return ce, auc
