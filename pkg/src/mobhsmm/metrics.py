"""Probability transforms and the distillation metrics.

Students are fit on the logit scale and read back through the sigmoid, so
both transforms share one clipping constant ``EPS``.
"""
import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .exceptions import DataError

__all__ = ["EPS", "logit", "sigmoid", "cross_entropy", "auroc"]

EPS = 1e-6


def _clip(p):
    return np.clip(p, EPS, 1.0 - EPS)


def logit(p):
    """Log-odds of ``p`` after clipping to ``[EPS, 1 - EPS]``.

    Accepts scalars or arrays; scalars come back as Python floats.
    """
    arr = np.asarray(p, dtype=float)
    if np.isnan(arr).any():
        raise DataError("logit of NaN")
    q = _clip(arr)
    out = np.log(q) - np.log1p(-q)
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    """Logistic function, the inverse of :func:`logit` on the clipped range."""
    arr = np.asarray(x, dtype=float)
    out = expit(arr)
    return float(out) if out.ndim == 0 else out


def cross_entropy(y_soft, y_hat):
    """Mean binary cross-entropy of predictions ``y_hat`` against soft targets.

    ``y_hat`` is clipped at ``EPS`` before taking logs; ``y_soft`` is used as is.
    """
    ys = np.asarray(y_soft, dtype=float).ravel()
    yh = np.asarray(y_hat, dtype=float).ravel()
    if ys.shape != yh.shape:
        raise DataError(f"length mismatch: {ys.size} targets vs {yh.size} predictions")
    if ys.size == 0:
        raise DataError("cross_entropy needs at least one pair")
    q = _clip(yh)
    terms = -(ys * np.log(q) + (1.0 - ys) * np.log1p(-q))
    return float(terms.mean())


def auroc(scores, labels):
    """Area under the ROC curve via the Mann-Whitney U statistic.

    Ties between a positive and a negative score count one half. Average
    ranks are multiples of 1/2, so the rank sum (and hence U) is exact in
    floating point for any realistic sample size.

    Raises
    ------
    DataError
        If ``labels`` holds a single class.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise DataError(f"length mismatch: {s.size} scores vs {y.size} labels")
    if np.isnan(s).any():
        raise DataError("scores contain NaN")
    pos = y == 1
    if not np.all(pos | (y == 0)):
        raise DataError("labels must be 0/1")
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUROC undefined: labels contain a single class")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
