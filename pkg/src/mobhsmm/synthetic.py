"""Synthetic data with known ground truth.

``planted_partition`` gives a regression problem with a known three-leaf
tree; ``icu_like`` gives per-subject sequences whose teacher probabilities
come from a known logistic tree, with gaps that imputation can undo.
"""
import numpy as np
import pandas as pd

from .dataio import ColumnSchema
from .hsmm import Hsmm
from .metrics import sigmoid

__all__ = ["PLANTED_LEAVES", "planted_partition", "ICU_SCHEMA", "teacher_logit",
           "icu_like", "three_state_model", "random_hsmm"]

# (intercept, slope) of the planted leaves, left to right
PLANTED_LEAVES = [(0.0, 2.0), (1.0, -2.0), (-1.0, 0.0)]


def planted_partition(n=5000, noise=0.1, seed=0):
    """``y = a + b x + noise`` with (a, b) set by ``z1 <= 0`` / ``z2 <= 0.5``.

    Leaf 1: ``z1 <= 0``; leaf 2: ``z1 > 0 & z2 <= 0.5``; leaf 3: the rest.
    Returns a DataFrame with columns ``x, z1, z2, y, leaf, outcome``.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    z1 = rng.uniform(-1, 1, n)
    z2 = rng.uniform(0, 1, n)
    leaf = np.where(z1 <= 0, 0, np.where(z2 <= 0.5, 1, 2))
    a = np.array([p[0] for p in PLANTED_LEAVES])[leaf]
    b = np.array([p[1] for p in PLANTED_LEAVES])[leaf]
    y = a + b * x + rng.normal(0, noise, n)
    outcome = (rng.random(n) < sigmoid(y)).astype(int)
    return pd.DataFrame({"x": x, "z1": z1, "z2": z2, "y": y, "leaf": leaf + 1,
                         "outcome": outcome})


ICU_SCHEMA = [
    ColumnSchema("subject", "subject_id"),
    ColumnSchema("t", "time_index"),
    ColumnSchema("peep", ["partition_var", "carried"]),
    ColumnSchema("sex", ["partition_var", "carried"], "categorical"),
    ColumnSchema("fluid", ["leaf_regressor", "accumulated"]),
    ColumnSchema("risk", "soft_target"),
    ColumnSchema("death", "outcome"),
]


def teacher_logit(peep, sex, fluid):
    """Known teacher: a three-leaf logistic tree on PEEP, sex and fluid balance."""
    peep = np.asarray(peep, dtype=float)
    sex = np.asarray(sex).astype(str)
    fluid = np.asarray(fluid, dtype=float)
    low = peep <= 6
    return np.where(
        low & (sex == "0"), -3.0 + 1.0 * fluid,
        np.where(low, -2.0 - 1.0 * fluid, -1.0 + 2.0 * fluid))


def icu_like(n_subjects=200, min_len=40, max_len=80, positive_tail=8, gap_rate=0.1,
             seed=0):
    """Per-subject ICU-style sequences with a known teacher.

    PEEP is a step function (settings change occasionally), fluid balance
    is linear in time within a subject, sex is fixed. A subject dies with
    probability equal to its mean teacher risk; the last ``positive_tail``
    observations of a deceased subject carry outcome 1. Cells are blanked
    at ``gap_rate`` only where LOCF (PEEP, sex) or linear interpolation
    (fluid) restores them exactly.

    Returns
    -------
    raw : DataFrame with gaps (missing cells are NaN)
    complete : DataFrame without gaps
    """
    rng = np.random.default_rng(seed)
    parts = []
    for i in range(n_subjects):
        L = int(rng.integers(min_len, max_len + 1))
        t = np.arange(1, L + 1)
        changes = np.flatnonzero(rng.random(L) < 0.05)
        levels = rng.integers(4, 11, size=changes.size + 1)
        peep = levels[np.searchsorted(changes, np.arange(L), side="right")].astype(float)
        sex = str(int(rng.integers(0, 2)))
        fluid = rng.uniform(-1, 1) + rng.uniform(-0.02, 0.02) * t
        risk = sigmoid(teacher_logit(peep, np.full(L, sex), fluid))
        died = rng.random() < risk.mean() * 3
        death = np.zeros(L, dtype=int)
        if died:
            death[L - positive_tail:] = 1
        parts.append(pd.DataFrame({
            "subject": f"p{i:04d}", "t": t, "peep": peep, "sex": sex,
            "fluid": fluid, "risk": risk, "death": death}))
    complete = pd.concat(parts, ignore_index=True)
    raw = complete.copy()
    raw["sex"] = raw["sex"].astype(object)
    same_subject_prev = raw["subject"].eq(raw["subject"].shift())
    same_subject_next = raw["subject"].eq(raw["subject"].shift(-1))
    # LOCF restores a cell exactly when the previous value is equal
    peep_gap = (rng.random(len(raw)) < gap_rate) & same_subject_prev & \
        raw["peep"].eq(raw["peep"].shift())
    sex_gap = (rng.random(len(raw)) < gap_rate) & same_subject_prev
    # interpolation restores interior points of a linear series
    fluid_gap = (rng.random(len(raw)) < gap_rate) & same_subject_prev & same_subject_next
    raw.loc[peep_gap, "peep"] = np.nan
    raw.loc[sex_gap, "sex"] = np.nan
    raw.loc[fluid_gap, "fluid"] = np.nan
    return raw, complete


def three_state_model():
    """Three-state HSMM with emission means 0 / 0.5 / 1 and sigma 0.1."""
    grid = np.arange(1, 21)
    centers, spread = [5.0, 8.0, 12.0], [1.5, 2.0, 2.5]
    soj = np.array([np.exp(-0.5 * ((grid - c) / s) ** 2) for c, s in zip(centers, spread)])
    soj /= soj.sum(axis=1, keepdims=True)
    A = np.array([[0.0, 0.7, 0.3],
                  [0.4, 0.0, 0.6],
                  [0.5, 0.5, 0.0]])
    return Hsmm(pi=[0.5, 0.3, 0.2], A=A, mu=[0.0, 0.5, 1.0], sigma=[0.1, 0.1, 0.1],
                sojourn=soj).validate()


def random_hsmm(S, dmax, rng):
    """Random valid HSMM with strictly positive parameters."""
    pi = rng.dirichlet(np.ones(S))
    A = np.zeros((S, S))
    for i in range(S):
        if S > 1:
            A[i, np.arange(S) != i] = rng.dirichlet(np.ones(S - 1))
    soj = rng.dirichlet(np.ones(dmax), size=S)
    mu = rng.normal(0, 1, S)
    sigma = rng.uniform(0.3, 1.5, S)
    return Hsmm(pi, A, mu, sigma, soj).validate()
