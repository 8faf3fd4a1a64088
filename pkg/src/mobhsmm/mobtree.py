"""Model-based recursive partitioning with linear leaf models.

Each node carries an OLS fit of the target on the leaf regressors. A node
is split when a permutation sup-LM test finds the fitted coefficients
unstable along some partition variable; the split point is the one that
minimizes the summed residual sums of squares of the two child fits.
Leaves are numbered left to right and double as HSMM states.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import DataError, ModelFormatError, NoAdmissibleSplit

__all__ = [
    "LinearModel",
    "TreeParams",
    "Split",
    "Leaf",
    "MobTree",
    "StateDefinition",
    "fit_leaf_model",
    "instability_test",
    "best_split",
    "grow_tree",
    "grow_tree_arrays",
    "predict",
    "assign_state",
    "export_rules",
    "rules_table",
    "parse_rule",
    "evaluate_rule",
]

_RANK_TOL = 1e-10
_TIE_TOL = 1e-10


@dataclass
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    residual_variance: float
    n: int
    rss: float = 0.0

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None] if self.coefficients.size == 1 else X[None, :]
        return self.intercept + X @ self.coefficients


def fit_leaf_model(X, y) -> LinearModel:
    """Ordinary least squares with an intercept.

    Regressors that are (numerically) linear combinations of the intercept
    and earlier regressors get a zero coefficient and the reduced model is
    fit instead, so a node never fails on collinear data.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if n != y.size:
        raise DataError(f"X has {n} rows but y has {y.size}")
    if n < k + 1:
        raise DataError(f"node too small to fit model ({n} rows, {k + 1} parameters)")
    if np.isnan(X).any() or np.isnan(y).any():
        raise DataError("leaf model inputs contain missing values")

    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    keep = _independent_columns(Xc, np.linalg.norm(X, axis=0))
    coef = np.zeros(k)
    if keep:
        sol, *_ = np.linalg.lstsq(Xc[:, keep], y - ym, rcond=None)
        coef[keep] = sol
    intercept = float(ym - xm @ coef)
    resid = y - intercept - X @ coef
    rss = float(resid @ resid)
    dof = n - (len(keep) + 1)
    var = rss / dof if dof > 0 else 0.0
    return LinearModel(intercept, coef, var, n, rss)


def _independent_columns(Xc, raw_norms):
    """Greedy Gram-Schmidt pass over centered columns; returns kept indices."""
    keep = []
    basis = []
    for j in range(Xc.shape[1]):
        v = Xc[:, j].copy()
        scale = np.linalg.norm(v)
        if scale <= _RANK_TOL * max(raw_norms[j], 1.0):
            continue
        for b in basis:
            v -= (b @ v) * b
        if np.linalg.norm(v) <= _RANK_TOL * scale:
            continue
        basis.append(v / np.linalg.norm(v))
        keep.append(j)
    return keep


# ---------------------------------------------------------------- testing

def _scores(X, y, model):
    resid = y - model.intercept - X @ model.coefficients
    return resid[:, None] * np.column_stack([np.ones(len(y)), X])


def _lm_statistic(psi_ordered, J_inv, cut_mask, n):
    """sup over admissible cuts of W(k)' J^-1 W(k) / (t (1 - t)).

    ``psi_ordered`` has shape (..., n, p); ``cut_mask[k-1]`` is True when a
    cut after position ``k`` is admissible.
    """
    W = np.cumsum(psi_ordered, axis=-2)[..., :-1, :] / np.sqrt(n)
    Wc = W[..., cut_mask, :]
    t = (np.flatnonzero(cut_mask) + 1) / n
    quad = np.einsum("...kp,pq,...kq->...k", Wc, J_inv, Wc)
    return (quad / (t * (1.0 - t))).max(axis=-1)


def _category_statistic(psi, z, cats, J_inv, min_size, n):
    best = None
    for c in cats:
        m = z == c
        nc = int(m.sum())
        if nc < min_size or n - nc < min_size:
            continue
        t = nc / n
        W = psi[..., m, :].sum(axis=-2) / np.sqrt(n)
        stat = np.einsum("...p,pq,...q->...", W, J_inv, W) / (t * (1.0 - t))
        best = stat if best is None else np.maximum(best, stat)
    return best


def instability_test(X, y, z, model=None, n_permutations=199, seed=0,
                     min_node_size=1, categorical=False) -> float:
    """Permutation p-value for coefficient instability along ``z``.

    The score contributions ``resid_i * [1, x_i]`` of the node fit are
    cumulated in the order of ``z``; the statistic is the supremum of the
    standardized squared cumulative score (sup-LM) over cut points that
    fall between distinct ``z`` values and leave ``min_node_size`` rows on
    each side. For categorical ``z`` the cut points are one-vs-rest
    groupings. The reference distribution comes from ``n_permutations``
    seeded random reorderings of the scores.

    Returns 1.0 when ``z`` admits no cut (e.g. it is constant).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z)
    n = y.size
    if model is None:
        model = fit_leaf_model(X, y)
    psi = _scores(X, y, model)
    J = psi.T @ psi / n
    J_inv = np.linalg.pinv(J, rcond=1e-12)
    rng = np.random.default_rng(seed)

    if categorical:
        cats = sorted(pd.unique(z).tolist(), key=str)
        if len(cats) < 2:
            return 1.0
        observed = _category_statistic(psi, z, cats, J_inv, min_node_size, n)
        if observed is None:
            return 1.0
        def stat(block):
            return _category_statistic(block, z, cats, J_inv, min_node_size, n)
    else:
        z = z.astype(float)
        order = np.argsort(z, kind="stable")
        zs = z[order]
        k = np.arange(1, n)
        cut_mask = (zs[1:] > zs[:-1]) & (k >= min_node_size) & (n - k >= min_node_size)
        if not cut_mask.any():
            return 1.0
        observed = _lm_statistic(psi[order], J_inv, cut_mask, n)

        def stat(block):
            return _lm_statistic(block, J_inv, cut_mask, n)

    null = np.empty(n_permutations)
    # chunk the replicates to bound memory at about 4e6 doubles per block
    chunk = max(1, int(4e6 // (n * psi.shape[1])))
    done = 0
    while done < n_permutations:
        m = min(chunk, n_permutations - done)
        perms = np.stack([rng.permutation(n) for _ in range(m)])
        null[done:done + m] = stat(psi[perms])
        done += m
    exceed = np.count_nonzero(null >= observed * (1.0 - 1e-12))
    return (1.0 + exceed) / (n_permutations + 1.0)


# --------------------------------------------------------------- splitting

def _prefix_rss(Xd, y):
    """RSS of OLS fits on every prefix of the rows (with intercept column in Xd).

    Uses prefix sums of the sufficient statistics on centered data.
    """
    xtx = np.cumsum(Xd[:, :, None] * Xd[:, None, :], axis=0)
    xty = np.cumsum(Xd * y[:, None], axis=0)
    yty = np.cumsum(y * y)
    beta = np.einsum("kpq,kq->kp", np.linalg.pinv(xtx, rcond=1e-12, hermitian=True), xty)
    return np.maximum(yty - np.einsum("kp,kp->k", beta, xty), 0.0)


def _split_objectives(X, y, order):
    Xd = np.column_stack([np.ones(len(y)), X - X.mean(axis=0)])[order]
    ys = (y - y.mean())[order]
    left = _prefix_rss(Xd, ys)
    right = _prefix_rss(Xd[::-1], ys[::-1])[::-1]
    # cut after position k (1-based) -> left rows [:k], right rows [k:]
    return left[:-1] + right[1:]


def best_split(X, y, z, min_node_size, categorical=False):
    """Best binary split of a node on variable ``z``.

    Numeric ``z``: candidate thresholds are midpoints between consecutive
    distinct values, rows with ``z <= threshold`` go left. Categorical
    ``z``: one category against the rest. The objective is the sum of the
    two children's OLS residual sums of squares; ties go to the smallest
    threshold (or category).

    Returns
    -------
    threshold : float or str
    objective : float
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z)
    n = y.size

    if categorical:
        cats = sorted(pd.unique(z).tolist(), key=str)
        if len(cats) < 2:
            raise NoAdmissibleSplit("variable is constant in node")
        best = None
        for c in cats:
            m = z == c
            nc = int(m.sum())
            if nc < min_node_size or n - nc < min_node_size:
                continue
            obj = fit_leaf_model(X[m], y[m]).rss + fit_leaf_model(X[~m], y[~m]).rss
            if best is None or obj < best[1] - _TIE_TOL * (1.0 + abs(best[1])):
                best = (c, obj)
            if len(cats) == 2:
                break
        if best is None:
            raise NoAdmissibleSplit("no admissible split")
        return best

    z = z.astype(float)
    order = np.argsort(z, kind="stable")
    zs = z[order]
    if zs[0] == zs[-1]:
        raise NoAdmissibleSplit("variable is constant in node")
    k = np.arange(1, n)
    ok = (zs[1:] > zs[:-1]) & (k >= min_node_size) & (n - k >= min_node_size)
    if not ok.any():
        raise NoAdmissibleSplit("no admissible split")
    obj = _split_objectives(X, y, order)
    cand = np.flatnonzero(ok)
    vals = obj[cand]
    lo = vals.min()
    first = cand[np.flatnonzero(vals <= lo + _TIE_TOL * (1.0 + abs(lo)))[0]]
    threshold = 0.5 * (zs[first] + zs[first + 1])
    # exact objective at the chosen cut
    left = z <= threshold
    exact = fit_leaf_model(X[left], y[left]).rss + fit_leaf_model(X[~left], y[~left]).rss
    return float(threshold), float(exact)


# ------------------------------------------------------------------- tree

@dataclass
class TreeParams:
    alpha: float = 0.05
    min_node_size: int = 50
    max_depth: int = 5
    n_permutations: int = 199
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DataError("alpha must lie in (0, 1)")
        if self.max_depth < 1:
            raise DataError("max_depth must be at least 1")
        if self.n_permutations < 1:
            raise DataError("n_permutations must be positive")

    @property
    def p_floor(self):
        """Smallest p-value the permutation test can return."""
        return 1.0 / (self.n_permutations + 1)

    def to_dict(self):
        return {"alpha": self.alpha, "min_node_size": self.min_node_size,
                "max_depth": self.max_depth, "n_permutations": self.n_permutations,
                "seed": self.seed}


@dataclass
class Leaf:
    model: LinearModel
    mu_y: float
    state_id: int = 0
    p_value: float = 1.0


@dataclass
class Split:
    var: str
    threshold: object
    left: object
    right: object
    categorical: bool = False
    p_value: float = float("nan")

    def goes_left(self, value):
        if self.categorical:
            return str(value) == self.threshold
        return float(value) <= self.threshold


@dataclass
class StateDefinition:
    state_id: int
    mu_y: float
    intercept: float
    coefficients: dict
    rule: list = field(default_factory=list)

    @property
    def rule_string(self):
        return format_rule(self.rule)


def _float_or_nan(v):
    return float("nan") if v is None else float(v)


@dataclass
class MobTree:
    """A fitted tree. Leaves carry ``state_id`` 1..S in left-to-right order."""

    root: object
    regressors: list
    partition_vars: list
    categories: dict
    params: TreeParams

    # -- structure
    def leaves(self) -> list[Leaf]:
        out = []

        def walk(node):
            if isinstance(node, Leaf):
                out.append(node)
            else:
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out

    @property
    def n_states(self):
        return len(self.leaves())

    def _number_leaves(self):
        for i, leaf in enumerate(self.leaves(), start=1):
            leaf.state_id = i

    def splits(self):
        out = []

        def walk(node):
            if isinstance(node, Split):
                out.append(node)
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out

    # -- routing
    def _check_row(self, x):
        for col in self.partition_vars + self.regressors:
            if col not in x:
                raise DataError(f"feature row lacks required column {col!r}")

    def _route(self, x) -> Leaf:
        node = self.root
        while isinstance(node, Split):
            v = x[node.var]
            if node.categorical and str(v) not in self.categories[node.var]:
                raise DataError(f"unknown category {v!r} for {node.var!r}")
            node = node.left if node.goes_left(v) else node.right
        return node

    def leaf_for(self, x: Mapping) -> Leaf:
        self._check_row(x)
        return self._route(x)

    def predict(self, x):
        """Linear response (logit scale) for a row mapping or a DataFrame."""
        if isinstance(x, pd.DataFrame):
            return self._apply(x, lambda leaf, rows: leaf.model.predict(
                rows[self.regressors].to_numpy(dtype=float)))
        leaf = self.leaf_for(x)
        xr = np.array([float(x[c]) for c in self.regressors])
        return float(leaf.model.intercept + xr @ leaf.model.coefficients)

    def assign_state(self, x):
        """State id for a row mapping, or an int array for a DataFrame."""
        if isinstance(x, pd.DataFrame):
            out = self._apply(x, lambda leaf, rows: np.full(len(rows), leaf.state_id))
            return out.astype(int)
        return self.leaf_for(x).state_id

    def _apply(self, frame, fn):
        for col in self.partition_vars + self.regressors:
            if col not in frame.columns:
                raise DataError(f"feature table lacks required column {col!r}")
        out = np.empty(len(frame))
        pos = np.arange(len(frame))

        def walk(node, idx):
            if idx.size == 0:
                return
            if isinstance(node, Leaf):
                out[idx] = fn(node, frame.iloc[idx])
                return
            col = frame[node.var].to_numpy()[idx]
            if node.categorical:
                col = np.array([str(v) for v in col], dtype=object)
                unknown = ~np.isin(col, list(self.categories[node.var]))
                if unknown.any():
                    raise DataError(f"unknown category {col[unknown][0]!r} for {node.var!r}")
                left = col == node.threshold
            else:
                col = col.astype(float)
                if np.isnan(col).any():
                    raise DataError(f"missing value in partition variable {node.var!r}")
                left = col <= node.threshold
            walk(node.left, idx[left])
            walk(node.right, idx[~left])

        walk(self.root, pos)
        return out

    # -- serialization
    def to_dict(self):
        def _opt(v):
            # JSON has no NaN; an unknown p-value is stored as null
            return None if v is None or np.isnan(v) else float(v)

        def enc(node):
            if isinstance(node, Leaf):
                m = node.model
                return {"leaf": {
                    "state": node.state_id,
                    "intercept": m.intercept,
                    "coef": {r: float(c) for r, c in zip(self.regressors, m.coefficients)},
                    "mu_y": node.mu_y,
                    "n": m.n,
                    "residual_variance": m.residual_variance,
                    "rss": m.rss,
                    "p_value": _opt(node.p_value),
                }}
            split = {"var": node.var, "threshold": node.threshold,
                     "categorical": node.categorical, "p_value": _opt(node.p_value)}
            return {"split": split, "left": enc(node.left), "right": enc(node.right)}

        return {
            "regressors": list(self.regressors),
            "partition_vars": list(self.partition_vars),
            "categories": {k: sorted(v) for k, v in self.categories.items()},
            "params": self.params.to_dict(),
            "root": enc(self.root),
        }

    @classmethod
    def from_dict(cls, doc):
        regressors = list(doc["regressors"])

        def dec(obj):
            if "leaf" in obj:
                lf = obj["leaf"]
                coef = np.array([float(lf["coef"][r]) for r in regressors])
                model = LinearModel(float(lf["intercept"]), coef,
                                    float(lf.get("residual_variance", 0.0)), int(lf["n"]),
                                    float(lf.get("rss", 0.0)))
                return Leaf(model, float(lf["mu_y"]), int(lf["state"]),
                            _float_or_nan(lf.get("p_value", 1.0)))
            if "split" not in obj:
                raise ModelFormatError("tree node is neither split nor leaf")
            sp = obj["split"]
            cat = bool(sp.get("categorical", False))
            thr = str(sp["threshold"]) if cat else float(sp["threshold"])
            return Split(sp["var"], thr, dec(obj["left"]), dec(obj["right"]), cat,
                         _float_or_nan(sp.get("p_value")))

        tree = cls(
            root=dec(doc["root"]),
            regressors=regressors,
            partition_vars=list(doc["partition_vars"]),
            categories={k: frozenset(v) for k, v in doc.get("categories", {}).items()},
            params=TreeParams(**doc["params"]),
        )
        ids = [lf.state_id for lf in tree.leaves()]
        if ids != list(range(1, len(ids) + 1)):
            raise ModelFormatError("leaf state ids must be 1..S in left-to-right order")
        return tree


def predict(tree: MobTree, x):
    return tree.predict(x)


def assign_state(tree: MobTree, x):
    return tree.assign_state(x)


# ------------------------------------------------------------------ growth

def _node_seed(seed, heap_index, var_index):
    # seeds depend on the node's position only, so pruning one branch never
    # reshuffles the permutations drawn elsewhere in the tree
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, heap_index, var_index])


def grow_tree_arrays(X, y, Z, outcome, params: TreeParams, regressors=None,
                     partition_vars=None, categorical=None) -> MobTree:
    """Grow a tree from plain arrays.

    Parameters
    ----------
    X : array, shape (n, k)
        Leaf regressors.
    y : array, shape (n,)
        Real-valued targets (logits of soft targets when distilling).
    Z : DataFrame or array, shape (n, m)
        Partition variables.
    outcome : array, shape (n,)
        Binary outcome used only for the per-leaf mean ``mu_y``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    outcome = np.asarray(outcome, dtype=float).ravel()
    if not isinstance(Z, pd.DataFrame):
        Z = np.asarray(Z)
        if Z.ndim == 1:
            Z = Z[:, None]
        names = partition_vars or [f"z{j + 1}" for j in range(Z.shape[1])]
        Z = pd.DataFrame(Z, columns=names)
    partition_vars = list(partition_vars or Z.columns)
    regressors = list(regressors or [f"x{j + 1}" for j in range(X.shape[1])])
    categorical = set(categorical or ())
    n = y.size
    if not (X.shape[0] == n == len(Z) == outcome.size):
        raise DataError("X, y, Z and outcome must have the same number of rows")
    if n < 2 * params.min_node_size:
        raise DataError(f"root node too small: {n} rows < 2 * min_node_size "
                        f"({2 * params.min_node_size})")
    if np.isnan(X).any() or np.isnan(y).any():
        raise DataError("missing values in regressors or targets; impute first")

    zcols = {}
    categories = {}
    for v in partition_vars:
        col = Z[v].to_numpy()
        if v in categorical:
            if pd.isna(col).any():
                raise DataError(f"missing values in partition variable {v!r}")
            col = np.array([str(c) for c in col], dtype=object)
            categories[v] = frozenset(col.tolist())
        else:
            col = col.astype(float)
            if np.isnan(col).any():
                raise DataError(f"missing values in partition variable {v!r}")
        zcols[v] = col

    def build(idx, depth, heap):
        model = fit_leaf_model(X[idx], y[idx])
        mu = float(outcome[idx].mean())
        if depth >= params.max_depth or idx.size < 2 * params.min_node_size:
            return Leaf(model, mu)
        pvals = []
        for j, v in enumerate(partition_vars):
            p = instability_test(X[idx], y[idx], zcols[v][idx], model,
                                 n_permutations=params.n_permutations,
                                 seed=_node_seed(params.seed, heap, j),
                                 min_node_size=params.min_node_size,
                                 categorical=v in categorical)
            pvals.append(p)
        m = len(partition_vars)
        adjusted = [min(1.0, p * m) for p in pvals]
        # alpha below the smallest attainable adjusted p means "beat every replicate"
        threshold = max(params.alpha, min(1.0, m * params.p_floor))
        ranked = sorted(range(m), key=lambda j: (adjusted[j], j))
        for j in ranked:
            if adjusted[j] > threshold:
                break
            v = partition_vars[j]
            try:
                thr, _ = best_split(X[idx], y[idx], zcols[v][idx], params.min_node_size,
                                    categorical=v in categorical)
            except NoAdmissibleSplit:
                continue
            zc = zcols[v][idx]
            go_left = (zc == thr) if v in categorical else (zc <= thr)
            left = build(idx[go_left], depth + 1, 2 * heap)
            right = build(idx[~go_left], depth + 1, 2 * heap + 1)
            return Split(v, thr, left, right, v in categorical, adjusted[j])
        leaf = Leaf(model, mu)
        leaf.p_value = min(adjusted) if adjusted else 1.0
        return leaf

    root = build(np.arange(n), 0, 1)
    tree = MobTree(root, regressors, partition_vars, categories, params)
    tree._number_leaves()
    return tree


def grow_tree(data, params: TreeParams | None = None, target=None) -> MobTree:
    """Grow a tree on a :class:`~mobhsmm.dataio.Dataset`.

    ``target`` defaults to the logit of the soft-target column; pass an
    array to fit anything else. ``mu_y`` always comes from the binary
    outcome column.
    """
    from .metrics import logit

    params = params or TreeParams()
    frame = data.frame
    if target is None:
        if data.soft_target_col is None:
            raise DataError("dataset has no soft_target column; pass target explicitly")
        target = logit(frame[data.soft_target_col].to_numpy())
    missing = data.missing_modeling_cells()
    if missing:
        col = next(iter(missing))
        raise DataError(f"column {col!r} still has {missing[col]} missing cells; impute first")
    cats = [v for v in data.partition_vars if data.kind_of(v) == "categorical"]
    return grow_tree_arrays(
        frame[data.regressors].to_numpy(dtype=float),
        target,
        frame[data.partition_vars],
        frame[data.outcome_col].to_numpy(),
        params,
        regressors=data.regressors,
        partition_vars=data.partition_vars,
        categorical=cats,
    )


# ------------------------------------------------------------------- rules

def _fmt_value(v):
    if isinstance(v, str):
        return v
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def format_rule(terms) -> str:
    if not terms:
        return "TRUE"
    return " & ".join(f"{var} {op} {_fmt_value(val)}" for var, op, val in terms)


def _path_terms(tree: MobTree):
    out = {}

    def walk(node, terms):
        if isinstance(node, Leaf):
            out[node.state_id] = list(terms)
            return
        if node.categorical:
            others = sorted(tree.categories[node.var] - {node.threshold})
            left = (node.var, "=", node.threshold)
            right = (node.var, "=", others[0]) if len(others) == 1 \
                else (node.var, "≠", node.threshold)
        else:
            left = (node.var, "≤", node.threshold)
            right = (node.var, ">", node.threshold)
        walk(node.left, terms + [left])
        walk(node.right, terms + [right])

    walk(tree.root, [])
    return out


def export_rules(tree: MobTree) -> list[StateDefinition]:
    """One IF-THEN state definition per leaf, in state order."""
    paths = _path_terms(tree)
    defs = []
    for leaf in tree.leaves():
        coefs = {r: float(c) for r, c in zip(tree.regressors, leaf.model.coefficients)}
        defs.append(StateDefinition(leaf.state_id, leaf.mu_y, leaf.model.intercept,
                                    coefs, paths[leaf.state_id]))
    return defs


def rules_table(defs: Sequence[StateDefinition], fmt="csv", digits=4) -> str:
    """Render state definitions as CSV or a Markdown table.

    Columns: State, μY, Intercept, Coefficient (one per regressor when there
    are several), State Rule. CSV keeps full precision; Markdown rounds to
    ``digits`` decimals.
    """
    regs = list(defs[0].coefficients) if defs else []
    coef_cols = ["Coefficient"] if len(regs) == 1 else [f"Coefficient[{r}]" for r in regs]
    header = ["State", "μY", "Intercept", *coef_cols, "State Rule"]
    rows = []
    for d in defs:
        if fmt == "csv":
            num = [repr(float(d.mu_y)), repr(float(d.intercept))] + \
                  [repr(float(d.coefficients[r])) for r in regs]
        else:
            num = [f"{d.mu_y:.{digits}f}", f"{d.intercept:.{digits}f}"] + \
                  [f"{d.coefficients[r]:.{digits}f}" for r in regs]
        rows.append([f"s{d.state_id}", *num, d.rule_string])
    if fmt == "csv":
        import csv
        import io

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join("---" for _ in header) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


_TERM = re.compile(r"^\s*(.+?)\s*(<=|>=|!=|≤|≥|≠|>|<|=)\s*(.+?)\s*$")
_OP_ALIASES = {"<=": "≤", ">=": "≥", "!=": "≠"}


def parse_rule(rule: str) -> list[tuple]:
    """Parse ``"PEEP ≤ 6 & SEX = 0"`` into ``[(var, op, value), ...]``.

    Values of ``≤``/``>`` terms become floats; ``=``/``≠`` values stay strings.
    """
    if rule.strip() == "TRUE":
        return []
    terms = []
    for part in rule.split("&"):
        m = _TERM.match(part)
        if not m:
            raise ValueError(f"cannot parse rule term {part!r}")
        var, op, val = m.groups()
        op = _OP_ALIASES.get(op, op)
        terms.append((var, op, val if op in ("=", "≠") else float(val)))
    return terms


def evaluate_rule(terms, x: Mapping) -> bool:
    for var, op, val in terms:
        v = x[var]
        if op == "≤":
            ok = float(v) <= val
        elif op == ">":
            ok = float(v) > val
        elif op == "<":
            ok = float(v) < val
        elif op == "≥":
            ok = float(v) >= val
        elif op == "=":
            ok = _cat_equal(v, val)
        else:
            ok = not _cat_equal(v, val)
        if not ok:
            return False
    return True


def _cat_equal(v, val):
    if str(v) == str(val):
        return True
    try:
        return math.isclose(float(v), float(val), rel_tol=0.0, abs_tol=0.0)
    except (TypeError, ValueError):
        return False
