"""Prequential (growing-window) evaluation of the distilled student.

Every subject's sequence is cut into ``n_folds`` contiguous, time-ordered
chunks. Window ``k`` trains on chunks ``1..k`` of every training subject,
validates on chunk ``k + 1`` and scores the whole held-out test set.
"""
from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dataio import Dataset
from .distill import fit_student, score_student
from .exceptions import DataError
from .mobtree import TreeParams

__all__ = ["FoldPlan", "PrequentialConfig", "PerformanceReport", "fold_sizes",
           "make_folds", "window_datasets", "run_prequential"]

COLUMNS = ["window", "train_ce", "valid_ce", "test_ce", "train_auroc", "valid_auroc",
           "test_auroc"]


def fold_sizes(length, n_folds):
    """Chunk lengths for one subject: ``ceil``/``floor`` of ``length / n_folds``,
    longer chunks first. Subjects shorter than ``n_folds`` leave trailing
    folds empty."""
    q, r = divmod(int(length), int(n_folds))
    return [q + 1 if k < r else q for k in range(n_folds)]


@dataclass
class FoldPlan:
    """Fold number (1-based) of every row of the dataset it was made for."""

    n_folds: int
    fold: np.ndarray

    def rows(self, folds) -> np.ndarray:
        return np.flatnonzero(np.isin(self.fold, list(folds)))


def make_folds(d: Dataset, n_folds=5) -> FoldPlan:
    if n_folds < 2:
        raise DataError("n_folds must be at least 2")
    fold = np.empty(len(d), dtype=int)
    for _, idx in d.frame.groupby(d.subject_col, sort=False).indices.items():
        # rows of a subject are stored in time order
        fold[idx] = np.repeat(np.arange(1, n_folds + 1), fold_sizes(idx.size, n_folds))
    return FoldPlan(n_folds, fold)


@dataclass
class PrequentialConfig:
    tree_params: TreeParams = field(default_factory=TreeParams)
    n_folds: int = 5
    single_window: bool = False
    target: str = "soft"


@dataclass
class PerformanceReport:
    rows: pd.DataFrame

    @property
    def mean(self) -> pd.Series:
        """Column means over windows, skipping undefined (NaN) cells."""
        return self.rows[COLUMNS[1:]].mean(axis=0, skipna=True)

    def to_frame(self) -> pd.DataFrame:
        mean = self.mean.to_dict()
        mean["window"] = "mean"
        return pd.concat([self.rows.astype({"window": object}), pd.DataFrame([mean])],
                         ignore_index=True)[COLUMNS]

    def to_csv(self, path=None):
        text = self.to_frame().to_csv(index=False)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_text(self, digits=4) -> str:
        """Aligned table: Cross-Entropy and AUROC, each over Train/Valid/Test."""
        frame = self.to_frame()
        out = io.StringIO()
        w = 9
        out.write(f"{'Window':<8}" + f"{'Cross-Entropy':^{3 * w}}" + f"{'AUROC':^{3 * w}}\n")
        out.write(f"{'':<8}" + "".join(f"{h:>{w}}" for h in ["Train", "Valid", "Test"] * 2)
                  + "\n")
        for _, r in frame.iterrows():
            cells = []
            for c in COLUMNS[1:]:
                v = r[c]
                cells.append(f"{'NA':>{w}}" if pd.isna(v) else f"{v:>{w}.{digits}f}")
            out.write(f"{str(r['window']):<8}" + "".join(cells) + "\n")
        return out.getvalue()


def window_datasets(train: Dataset, plan: FoldPlan, k: int):
    """Training (folds ``1..k``) and validation (fold ``k + 1``) parts for window ``k``."""
    fit = train.with_frame(train.frame.iloc[plan.rows(range(1, k + 1))],
                           f"{train.provenance} | folds<= {k}")
    valid = train.with_frame(train.frame.iloc[plan.rows([k + 1])],
                             f"{train.provenance} | fold {k + 1}")
    return fit, valid


def run_prequential(train: Dataset, test: Dataset, config: PrequentialConfig | None = None
                    ) -> PerformanceReport:
    """Fit the student per window and tabulate cross-entropy and AUROC.

    AUROC cells of windows whose split holds a single class are NaN, left
    out of the mean, and warned about.
    """
    config = config or PrequentialConfig()
    if [c.name for c in train.schema] != [c.name for c in test.schema]:
        raise DataError("train and test datasets must share a schema")
    plan = make_folds(train, config.n_folds)
    windows = [config.n_folds - 1] if config.single_window else range(1, config.n_folds)
    rows = []
    for k in windows:
        fit, valid = window_datasets(train, plan, k)
        tree = fit_student(fit, config.tree_params, config.target)
        row = {"window": k}
        for name, part in (("train", fit), ("valid", valid), ("test", test)):
            if len(part) == 0:
                raise DataError(f"window {k}: empty {name} set")
            ce, auc = score_student(tree, part)
            if np.isnan(auc):
                warnings.warn(f"window {k}: AUROC undefined on {name} (single class)",
                              stacklevel=2)
            row[f"{name}_ce"] = ce
            row[f"{name}_auroc"] = auc
        rows.append(row)
    return PerformanceReport(pd.DataFrame(rows, columns=COLUMNS))
