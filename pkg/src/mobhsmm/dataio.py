"""Loading, imputing, splitting and oversampling per-subject sequence data.

A :class:`Dataset` wraps a :class:`pandas.DataFrame` with one row per
observation. Rows of a subject are contiguous and strictly increasing in
the time index; missing cells are ``NaN``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .exceptions import DataError, ModelFormatError

__all__ = [
    "ROLES",
    "ColumnSchema",
    "Dataset",
    "OversampleWarning",
    "load_schema",
    "save_schema",
    "load_dataset",
    "save_dataset",
    "impute_locf",
    "impute_linear",
    "impute_dataset",
    "split_subjects",
    "oversample_crops",
    "save_model",
    "load_model",
    "FORMAT_VERSION",
]

ROLES = (
    "subject_id",
    "time_index",
    "outcome",
    "soft_target",
    "partition_var",
    "leaf_regressor",
    "accumulated",
    "carried",
)
_SINGLE_ROLES = ("subject_id", "time_index", "outcome")
NA_VALUES = ["", "NA"]
FORMAT_VERSION = "1"


class OversampleWarning(UserWarning):
    """The requested positive ratio could not be reached."""


@dataclass(frozen=True)
class ColumnSchema:
    """One column of the input table.

    ``roles`` is a set because imputation roles (``accumulated``,
    ``carried``) ride along with a modeling role such as ``partition_var``.
    """

    name: str
    roles: frozenset
    kind: str = "numeric"

    def __post_init__(self):
        roles = frozenset([self.roles] if isinstance(self.roles, str) else self.roles)
        object.__setattr__(self, "roles", roles)
        unknown = roles.difference(ROLES)
        if unknown:
            raise DataError(f"column {self.name!r}: unknown role(s) {sorted(unknown)}")
        if self.kind not in ("numeric", "categorical"):
            raise DataError(f"column {self.name!r}: kind must be numeric or categorical")
        if "accumulated" in roles and self.kind != "numeric":
            raise DataError(f"column {self.name!r}: accumulated columns must be numeric")
        if len(roles & set(_SINGLE_ROLES + ("soft_target",))) and len(roles) > 1:
            raise DataError(f"column {self.name!r}: key columns take a single role")
        if "accumulated" in roles and "carried" in roles:
            raise DataError(f"column {self.name!r}: pick one imputation role")

    def has(self, role):
        return role in self.roles

    def to_dict(self):
        roles = sorted(self.roles, key=ROLES.index)
        return {"name": self.name, "role": roles[0] if len(roles) == 1 else roles,
                "kind": self.kind}


def _validate_schema(schema: Sequence[ColumnSchema]):
    names = [c.name for c in schema]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise DataError(f"duplicate column names in schema: {sorted(dupes)}")
    for role in _SINGLE_ROLES:
        n = sum(c.has(role) for c in schema)
        if n != 1:
            raise DataError(f"schema needs exactly one {role} column, found {n}")
    if sum(c.has("soft_target") for c in schema) > 1:
        raise DataError("schema allows at most one soft_target column")
    for role in ("partition_var", "leaf_regressor"):
        if not any(c.has(role) for c in schema):
            raise DataError(f"schema needs at least one {role} column")
    for c in schema:
        if c.has("leaf_regressor") and c.kind != "numeric":
            raise DataError(f"leaf_regressor {c.name!r} must be numeric")


def load_schema(path) -> list[ColumnSchema]:
    """Read a schema sidecar ``{"columns": [{"name", "role", "kind"}, ...]}``."""
    with open(path) as fh:
        raw = json.load(fh)
    try:
        schema = [
            ColumnSchema(c["name"], c["role"], c.get("kind", "numeric"))
            for c in raw["columns"]
        ]
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed schema file {path}: {exc}") from None
    _validate_schema(schema)
    return schema


def save_schema(schema: Sequence[ColumnSchema], path):
    with open(path, "w") as fh:
        json.dump({"columns": [c.to_dict() for c in schema]}, fh, indent=2)


@dataclass(frozen=True)
class Dataset:
    """Ordered per-subject observations plus their schema.

    Build with :meth:`from_frame`, which validates every invariant; the
    frame should be treated as read-only afterwards.
    """

    schema: tuple
    frame: pd.DataFrame = field(repr=False)
    provenance: str = ""

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, schema, provenance=""):
        schema = tuple(schema)
        _validate_schema(schema)
        frame = _coerce_frame(frame, schema)
        return cls(schema, frame, provenance)

    def _col(self, role):
        for c in self.schema:
            if c.has(role):
                return c.name
        return None

    @property
    def subject_col(self):
        return self._col("subject_id")

    @property
    def time_col(self):
        return self._col("time_index")

    @property
    def outcome_col(self):
        return self._col("outcome")

    @property
    def soft_target_col(self):
        return self._col("soft_target")

    def columns_with(self, role) -> list[str]:
        return [c.name for c in self.schema if c.has(role)]

    @property
    def partition_vars(self):
        return self.columns_with("partition_var")

    @property
    def regressors(self):
        return self.columns_with("leaf_regressor")

    @property
    def modeling_columns(self):
        return [c.name for c in self.schema
                if c.has("partition_var") or c.has("leaf_regressor")]

    def kind_of(self, name):
        for c in self.schema:
            if c.name == name:
                return c.kind
        raise KeyError(name)

    @property
    def subjects(self) -> list[str]:
        return list(pd.unique(self.frame[self.subject_col]))

    def __len__(self):
        return len(self.frame)

    def groups(self):
        """Yield ``(subject, sub_frame)`` in stored order."""
        yield from self.frame.groupby(self.subject_col, sort=False)

    def subject_labels(self) -> pd.Series:
        """Subject-level outcome: 1 iff any observation of the subject is 1."""
        return self.frame.groupby(self.subject_col, sort=False)[self.outcome_col].max()

    def select_subjects(self, subjects: Iterable, provenance=None) -> "Dataset":
        keep = set(subjects)
        mask = self.frame[self.subject_col].isin(keep)
        return self.with_frame(self.frame[mask], provenance)

    def with_frame(self, frame, provenance=None) -> "Dataset":
        prov = self.provenance if provenance is None else provenance
        return replace(self, frame=frame.reset_index(drop=True), provenance=prov)

    def positive_ratio(self) -> float:
        return float(self.frame[self.outcome_col].mean())

    def missing_modeling_cells(self) -> dict:
        cols = self.modeling_columns
        counts = self.frame[cols].isna().sum()
        return {k: int(v) for k, v in counts.items() if v}


def _coerce_frame(frame: pd.DataFrame, schema) -> pd.DataFrame:
    names = [c.name for c in schema]
    missing = [n for n in names if n not in frame.columns]
    if missing:
        raise DataError(f"schema mismatch: column {missing[0]!r} not found in data")
    extra = [n for n in frame.columns if n not in names]
    if extra:
        raise DataError(f"schema mismatch: column {extra[0]!r} not declared in schema")
    frame = frame[names].copy()
    by_name = {c.name: c for c in schema}
    subj = next(c.name for c in schema if c.has("subject_id"))
    tcol = next(c.name for c in schema if c.has("time_index"))
    ycol = next(c.name for c in schema if c.has("outcome"))
    if frame[subj].isna().any():
        raise DataError("subject_id column has missing cells")
    frame[subj] = frame[subj].astype(str)

    t = pd.to_numeric(frame[tcol], errors="coerce")
    if t.isna().any() or not np.all(np.equal(np.mod(t, 1), 0)):
        raise DataError(f"time index {tcol!r} must hold integers")
    frame[tcol] = t.astype(np.int64)

    y = pd.to_numeric(frame[ycol], errors="coerce")
    if y.isna().any() or not y.isin([0, 1]).all():
        raise DataError(f"outcome {ycol!r} outside {{0,1}}")
    frame[ycol] = y.astype(np.int64)

    for c in schema:
        if c.has("soft_target"):
            s = pd.to_numeric(frame[c.name], errors="coerce").astype(float)
            if s.isna().any() or ((s < 0) | (s > 1)).any():
                raise DataError("soft_target out of [0,1]")
            frame[c.name] = s
        elif c.name in (subj, tcol, ycol):
            continue
        elif by_name[c.name].kind == "numeric":
            col = pd.to_numeric(frame[c.name], errors="coerce")
            bad = col.isna() & frame[c.name].notna()
            if bad.any():
                raise DataError(f"column {c.name!r} holds non-numeric values")
            frame[c.name] = col.astype(float)
        else:
            col = frame[c.name].astype(object)
            frame[c.name] = col.where(col.isna(), col.astype(str))

    # subjects must be contiguous with strictly increasing time
    codes = pd.factorize(frame[subj])[0]
    if np.any(np.diff(codes) < 0):
        raise DataError("rows of a subject must be contiguous")
    tv = frame[tcol].to_numpy()
    same = codes[1:] == codes[:-1]
    bad = same & (np.diff(tv) <= 0)
    if bad.any():
        sid = frame[subj].iloc[int(np.argmax(bad)) + 1]
        raise DataError(f"time index not strictly increasing for subject {sid!r}")
    return frame.reset_index(drop=True)


def load_dataset(path, schema, provenance=None) -> Dataset:
    """Parse a CSV file into a validated :class:`Dataset`.

    Empty cells and the literal ``NA`` are read as missing. ``schema`` may be
    a list of :class:`ColumnSchema` or a path to a schema sidecar.
    """
    if isinstance(schema, (str, Path)):
        schema = load_schema(schema)
    frame = pd.read_csv(path, keep_default_na=False, na_values=NA_VALUES, dtype=str)
    return Dataset.from_frame(frame, schema, provenance or f"load:{Path(path).name}")


def save_dataset(d: Dataset, path):
    d.frame.to_csv(path, index=False, na_rep="NA")


# ---------------------------------------------------------------- imputation

def impute_locf(series):
    """Carry the last observed value forward; back-fill a leading gap.

    >>> impute_locf([5, None, None, 7, None])
    [5, 5, 5, 7, 7]
    """
    values = list(series)
    if not values:
        raise DataError("cannot impute an empty series")
    observed = [v for v in values if not pd.isna(v)]
    if not observed:
        raise DataError("no observed value to carry")
    last = observed[0]
    out = []
    for v in values:
        if not pd.isna(v):
            last = v
        out.append(last)
    return out


def impute_linear(series, t):
    """Linear interpolation in ``t`` between observed neighbors.

    Gaps at either end take the nearest observed value.
    """
    v = np.asarray(series, dtype=float)
    tt = np.asarray(t, dtype=float)
    if v.size == 0:
        raise DataError("cannot impute an empty series")
    if v.shape != tt.shape:
        raise DataError("values and time indices differ in length")
    if np.any(np.diff(tt) <= 0):
        raise DataError("time indices must be strictly increasing")
    obs = ~np.isnan(v)
    if not obs.any():
        raise DataError("no observed value to interpolate")
    out = v.copy()
    out[~obs] = np.interp(tt[~obs], tt[obs], v[obs])
    return out


def impute_dataset(d: Dataset) -> Dataset:
    """Per subject: interpolate ``accumulated`` columns, LOCF ``carried`` ones."""
    frame = d.frame.copy()
    tcol = d.time_col
    acc = d.columns_with("accumulated")
    car = d.columns_with("carried")
    if not acc and not car:
        return d
    for subject, idx in frame.groupby(d.subject_col, sort=False).indices.items():
        t = frame[tcol].to_numpy()[idx]
        for col in acc:
            vals = frame[col].to_numpy(dtype=float)[idx]
            if np.isnan(vals).any():
                try:
                    frame.loc[frame.index[idx], col] = impute_linear(vals, t)
                except DataError as exc:
                    raise DataError(f"column {col!r}, subject {subject!r}: {exc}") from None
        for col in car:
            vals = frame[col].to_numpy()[idx]
            if pd.isna(vals).any():
                try:
                    filled = impute_locf(vals)
                except DataError as exc:
                    raise DataError(f"column {col!r}, subject {subject!r}: {exc}") from None
                frame.loc[frame.index[idx], col] = pd.Series(filled, dtype=frame[col].dtype).to_numpy()
    prov = f"{d.provenance} | impute" if d.provenance else "impute"
    return d.with_frame(frame, prov)


# --------------------------------------------------------------- resampling

def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split_subjects(d: Dataset, test_fraction=0.2, seed=0):
    """Subject-level train/test split stratified on subject outcome.

    Within each stratum ``round(test_fraction * count)`` subjects go to the
    test side, chosen by a seeded shuffle. A stratum holding a single
    subject stays in training.

    Returns
    -------
    train, test : Dataset
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must lie in (0, 1)")
    labels = d.subject_labels()
    rng = np.random.default_rng(seed)
    test_ids = []
    for stratum in (0, 1):
        ids = np.array(labels.index[labels.to_numpy() == stratum], dtype=object)
        name = "deceased" if stratum else "survivor"
        if ids.size == 0:
            raise DataError(f"no {name} subjects to stratify")
        order = rng.permutation(ids.size)
        if ids.size == 1:
            warnings.warn(f"single {name} subject kept in training", stacklevel=2)
            continue
        n_test = _round_half_up(test_fraction * ids.size)
        if n_test == 0 or n_test == ids.size:
            warnings.warn(f"{name} stratum leaves one side empty "
                          f"({n_test} of {ids.size} in test)", stacklevel=2)
        test_ids.extend(ids[order[:n_test]])
    test_set = set(test_ids)
    train_ids = [s for s in labels.index if s not in test_set]
    test_ids = [s for s in labels.index if s in test_set]
    tag = f"split(fraction={test_fraction}, seed={seed})"
    train = d.select_subjects(train_ids, f"{d.provenance} | {tag}:train")
    test = d.select_subjects(test_ids, f"{d.provenance} | {tag}:test")
    return train, test


def oversample_crops(train: Dataset, target_positive_ratio, max_copies_per_subject=100,
                     seed=0) -> Dataset:
    """Append suffix crops of deceased subjects until the positive ratio is met.

    Copies are added round-robin over deceased subjects (copy 1 of every
    subject, then copy 2, ...). Each copy keeps the last ``n`` observations
    of the subject with ``n`` uniform on ``[min(2, L), L]`` and is renamed
    ``"<subject>#<k>"``. If the target cannot be reached an
    :class:`OversampleWarning` is issued and the best effort returned.
    """
    if not 0.0 < target_positive_ratio < 1.0:
        raise DataError("target_positive_ratio must lie in (0, 1)")
    frame = train.frame
    y = frame[train.outcome_col].to_numpy()
    n_pos, n_tot = int(y.sum()), y.size
    if n_pos == 0:
        raise DataError("no positive observation to oversample")
    if n_pos / n_tot >= target_positive_ratio:
        return train

    labels = train.subject_labels()
    groups = frame.groupby(train.subject_col, sort=False).indices
    deceased = [s for s in labels.index if labels[s] == 1]
    # cumulative positives from the end of each sequence
    tail_pos = {s: np.cumsum(y[groups[s]][::-1]) for s in deceased}
    rng = np.random.default_rng(seed)

    pieces = []
    reached = False
    for k in range(1, max_copies_per_subject + 1):
        for s in deceased:
            if n_pos / n_tot >= target_positive_ratio:
                reached = True
                break
            idx = groups[s]
            L = idx.size
            n = int(rng.integers(min(2, L), L + 1))
            pieces.append((s, k, idx[L - n:]))
            n_pos += int(tail_pos[s][n - 1])
            n_tot += n
        if reached:
            break
    else:
        reached = n_pos / n_tot >= target_positive_ratio

    scol = train.subject_col
    if pieces:
        rows = np.concatenate([idx for _, _, idx in pieces])
        crops = frame.iloc[rows].copy()
        crops[scol] = np.repeat([f"{s}#{k}" for s, k, _ in pieces],
                                [idx.size for _, _, idx in pieces])
        out = pd.concat([frame, crops], ignore_index=True)
    else:
        out = frame
    tag = (f"oversample(target={target_positive_ratio}, "
           f"max_copies={max_copies_per_subject}, seed={seed})")
    if not reached:
        tag += ":best_effort"
        warnings.warn(
            f"positive ratio {n_pos / n_tot:.4f} short of target "
            f"{target_positive_ratio} after {max_copies_per_subject} copies per subject",
            OversampleWarning, stacklevel=2)
    return train.with_frame(out, f"{train.provenance} | {tag}")


# ---------------------------------------------------------- model persistence

def save_model(model, path, meta=None):
    """Write a tree, an HSMM, or a ``{"tree", "hsmm"}`` bundle as JSON.

    Floats are written with ``repr``, the shortest decimal string that
    reads back to the identical double.
    """
    from .hsmm import Hsmm
    from .mobtree import MobTree

    if isinstance(model, MobTree):
        doc = {"format_version": FORMAT_VERSION, "kind": "mobtree", **model.to_dict()}
    elif isinstance(model, Hsmm):
        doc = {"format_version": FORMAT_VERSION, "kind": "hsmm", **model.to_dict()}
    elif isinstance(model, dict) and set(model) == {"tree", "hsmm"}:
        doc = {"format_version": FORMAT_VERSION, "kind": "bundle",
               "tree": model["tree"].to_dict(), "hsmm": model["hsmm"].to_dict()}
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    if meta is not None:
        doc["meta"] = meta
    text = json.dumps(doc, indent=1, allow_nan=False)
    Path(path).write_text(text + "\n")


def load_model(path, with_meta=False):
    """Inverse of :func:`save_model`.

    Returns a :class:`~mobhsmm.mobtree.MobTree`, an
    :class:`~mobhsmm.hsmm.Hsmm`, or a ``{"tree", "hsmm"}`` dict.
    """
    from .hsmm import Hsmm
    from .mobtree import MobTree

    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: truncated or invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: top level must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format_version {version!r} not supported (expected {FORMAT_VERSION!r})")
    kind = doc.get("kind")
    try:
        if kind == "mobtree":
            model = MobTree.from_dict(doc)
        elif kind == "hsmm":
            model = Hsmm.from_dict(doc)
        elif kind == "bundle":
            model = {"tree": MobTree.from_dict(doc["tree"]), "hsmm": Hsmm.from_dict(doc["hsmm"])}
        else:
            raise ModelFormatError(f"{path}: unknown model kind {kind!r}")
    except (KeyError, TypeError, IndexError) as exc:
        raise ModelFormatError(f"{path}: missing or malformed field {exc}") from None
    if with_meta:
        return model, doc.get("meta")
    return model
