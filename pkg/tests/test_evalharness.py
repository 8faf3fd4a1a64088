import numpy as np
import pandas as pd
import pytest

from mobhsmm.dataio import Dataset, split_subjects
from mobhsmm.distill import fit_student, score_student
from mobhsmm.evalharness import (COLUMNS, PerformanceReport, PrequentialConfig, fold_sizes,
                                 make_folds, run_prequential, window_datasets)
from mobhsmm.exceptions import DataError
from mobhsmm.mobtree import TreeParams
from mobhsmm.synthetic import ICU_SCHEMA, icu_like

PARAMS = TreeParams(alpha=0.05, min_node_size=40, max_depth=3, n_permutations=19)


@pytest.fixture(scope="module")
def icu():
    _, complete = icu_like(60, min_len=20, max_len=40, seed=3)
    # scatter outcomes over time so every window sees both classes
    rng = np.random.default_rng(0)
    complete["death"] = (rng.random(len(complete)) < complete["risk"]).astype(int)
    return split_subjects(Dataset.from_frame(complete, ICU_SCHEMA), 0.25, seed=0)


class TestFolds:
    def test_even(self):
        assert fold_sizes(10, 5) == [2, 2, 2, 2, 2]

    def test_remainder_first(self):
        assert fold_sizes(7, 5) == [2, 2, 1, 1, 1]

    def test_short_subject(self):
        assert fold_sizes(3, 5) == [1, 1, 1, 0, 0]

    def test_plan_time_ordered(self, icu):
        train, _ = icu
        plan = make_folds(train, 5)
        for _, idx in train.frame.groupby("subject", sort=False).indices.items():
            f = plan.fold[idx]
            assert (np.diff(f) >= 0).all()
            assert np.bincount(f, minlength=6)[1:].tolist() == fold_sizes(idx.size, 5)

    def test_needs_two_folds(self, icu):
        with pytest.raises(DataError):
            make_folds(icu[0], 1)


class TestWindows:
    def test_temporal_integrity(self, icu):
        train, _ = icu
        plan = make_folds(train, 5)
        for k in range(1, 5):
            fit, valid = window_datasets(train, plan, k)
            vmin = valid.frame.groupby("subject")["t"].min()
            fmax = fit.frame.groupby("subject")["t"].max()
            common = vmin.index.intersection(fmax.index)
            assert len(common) == len(vmin)
            assert (fmax[common] < vmin[common]).all()

    def test_report_shape_and_mean(self, icu):
        train, test = icu
        report = run_prequential(train, test, PrequentialConfig(PARAMS))
        assert report.rows["window"].tolist() == [1, 2, 3, 4]
        assert list(report.rows.columns) == COLUMNS
        np.testing.assert_allclose(report.mean.to_numpy(),
                                   report.rows[COLUMNS[1:]].to_numpy().mean(axis=0))
        frame = report.to_frame()
        assert frame["window"].iloc[-1] == "mean"

    def test_cells_match_direct_scoring(self, icu):
        train, test = icu
        report = run_prequential(train, test, PrequentialConfig(PARAMS, single_window=True))
        assert report.rows["window"].tolist() == [4]
        fit, valid = window_datasets(train, make_folds(train, 5), 4)
        tree = fit_student(fit, PARAMS)
        ce, auc = score_student(tree, test)
        assert report.rows["test_ce"].iloc[0] == ce
        assert report.rows["test_auroc"].iloc[0] == auc

    def test_deterministic(self, icu):
        train, test = icu
        a = run_prequential(train, test, PrequentialConfig(PARAMS)).to_csv()
        b = run_prequential(train, test, PrequentialConfig(PARAMS)).to_csv()
        assert a == b

    def test_undefined_auroc_excluded(self):
        _, complete = icu_like(40, min_len=20, max_len=30, positive_tail=3, seed=1)
        train, test = split_subjects(Dataset.from_frame(complete, ICU_SCHEMA), 0.25, seed=0)
        with pytest.warns(UserWarning, match="AUROC undefined"):
            report = run_prequential(train, test, PrequentialConfig(PARAMS, n_folds=3))
        rows = report.rows
        # positives sit in the final fold only, so training windows see one class
        assert rows["train_auroc"].isna().all()
        assert np.isnan(report.mean["train_auroc"])
        assert report.mean["valid_auroc"] == pytest.approx(rows["valid_auroc"].dropna().mean())

    def test_text_layout(self):
        rows = pd.DataFrame([[1, 0.1, 0.2, 0.3, 0.9, np.nan, 0.7]], columns=COLUMNS)
        text = PerformanceReport(rows).to_text().splitlines()
        assert "Cross-Entropy" in text[0] and "AUROC" in text[0]
        assert text[2].split() == ["1", "0.1000", "0.2000", "0.3000", "0.9000", "NA", "0.7000"]
        assert text[3].split()[0] == "mean"


def _stationary(rng, n_sub, L):
    """Observations i.i.d. over time; the teacher is a four-leaf logistic tree."""
    from mobhsmm.dataio import ColumnSchema
    from mobhsmm.metrics import sigmoid

    schema = [ColumnSchema("id", "subject_id"), ColumnSchema("t", "time_index"),
              ColumnSchema("z1", "partition_var"), ColumnSchema("z2", "partition_var"),
              ColumnSchema("x", "leaf_regressor"), ColumnSchema("p", "soft_target"),
              ColumnSchema("y", "outcome")]
    n = n_sub * L
    z1, z2, x = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), rng.normal(size=n)
    lg = np.where(z1 <= 0, np.where(z2 <= 0, -3 + 2 * x, 1 - 2 * x),
                  np.where(z2 <= 0.5, 2 + x, -1 - x))
    p = sigmoid(lg)
    frame = pd.DataFrame({"id": np.repeat([f"s{i}" for i in range(n_sub)], L),
                          "t": np.tile(np.arange(1, L + 1), n_sub), "z1": z1, "z2": z2,
                          "x": x, "p": p, "y": (rng.random(n) < p).astype(int)})
    return Dataset.from_frame(frame, schema)


def test_valid_ce_improves_with_data():
    curves = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        train, test = _stationary(rng, 40, 25), _stationary(rng, 10, 25)
        params = TreeParams(min_node_size=30, n_permutations=19, max_depth=3, seed=seed)
        report = run_prequential(train, test, PrequentialConfig(params))
        curves.append(report.rows["valid_ce"].to_numpy())
    median = np.median(curves, axis=0)
    # "plateau" allows a rise of at most 0.005 nats between consecutive windows
    assert (np.diff(median) <= 0.005).all(), median
    assert median[-1] < median[0]


def test_test_subjects_never_trained_on(icu):
    train, test = icu
    plan = make_folds(train, 5)
    for k in range(1, 5):
        fit, valid = window_datasets(train, plan, k)
        assert set(fit.subjects).isdisjoint(test.subjects)
        assert set(valid.subjects).isdisjoint(test.subjects)


def test_mean_row_exact(icu):
    train, test = icu
    report = run_prequential(train, test, PrequentialConfig(PARAMS))
    for col in COLUMNS[1:]:
        assert abs(report.mean[col] - report.rows[col].sum() / 4) <= 1e-12
