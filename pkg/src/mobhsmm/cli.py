"""Command-line front end: one subcommand per pipeline stage.

Every artifact records the command, its full flag set and the seed: JSON
models under a ``meta`` key, CSV outputs in a ``<file>.meta.json`` sidecar.
Exit status is 0 on success, 1 on a user or data error and 2 when an
internal invariant fails.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .dataio import (FORMAT_VERSION, NA_VALUES, Dataset, impute_dataset, load_dataset,
                     load_model, load_schema, oversample_crops, save_dataset, save_model,
                     split_subjects)
from .distill import fit_student, score_student, student_proba
from .evalharness import PrequentialConfig, run_prequential
from .exceptions import DataError, InvariantError, MobHsmmError
from .hsmm import Hsmm, HsmmConfig, build_hsmm, predict_next, run_length_encode, sample, viterbi
from .mobtree import MobTree, TreeParams, export_rules, rules_table

__all__ = ["main", "build_parser"]


def _meta(args):
    flags = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    return {"format_version": FORMAT_VERSION, "command": args.command, "flags": flags,
            "seed": getattr(args, "seed", None), "version": __version__}


def _write_sidecar(path, args):
    Path(f"{path}.meta.json").write_text(json.dumps(_meta(args), indent=1) + "\n")


def _tree_params(args):
    return TreeParams(alpha=args.alpha, min_node_size=args.min_node_size,
                      max_depth=args.max_depth, n_permutations=args.n_permutations,
                      seed=args.seed)


def _hsmm_config(args):
    return HsmmConfig(transition_smoothing=args.transition_smoothing, dmax=args.dmax,
                      bandwidth=args.bandwidth)


def _load_tree(path) -> MobTree:
    model = load_model(path)
    if isinstance(model, dict):
        model = model["tree"]
    if not isinstance(model, MobTree):
        raise DataError(f"{path} does not hold a tree")
    return model


def _load_hsmm(path) -> Hsmm:
    model = load_model(path)
    if isinstance(model, dict):
        model = model["hsmm"]
    if not isinstance(model, Hsmm):
        raise DataError(f"{path} does not hold an HSMM")
    return model


# ------------------------------------------------------------ subcommands

def cmd_impute(args):
    schema = load_schema(args.schema)
    d = load_dataset(args.input, schema)
    filled = impute_dataset(d)
    # untouched cells keep their original text
    raw = pd.read_csv(args.input, keep_default_na=False, na_values=NA_VALUES, dtype=str)
    raw = raw[[c.name for c in schema]]
    out = raw.copy()
    for col in raw.columns:
        gaps = raw[col].isna().to_numpy()
        if gaps.any():
            vals = filled.frame[col].to_numpy()[gaps]
            out.loc[gaps, col] = [v if isinstance(v, str) else repr(float(v)) for v in vals]
    out.to_csv(args.output, index=False, na_rep="NA")
    _write_sidecar(args.output, args)
    left = filled.missing_modeling_cells()
    print(f"imputed {int(raw.isna().to_numpy().sum())} cells; "
          f"{sum(left.values())} modeling cells still missing")
    return 0


def cmd_split(args):
    d = load_dataset(args.input, args.schema)
    train, test = split_subjects(d, args.test_fraction, args.seed)
    save_dataset(train, args.train_out)
    save_dataset(test, args.test_out)
    _write_sidecar(args.train_out, args)
    _write_sidecar(args.test_out, args)
    for name, part in (("train", train), ("test", test)):
        lab = part.subject_labels()
        print(f"{name}: {len(lab)} subjects ({int(lab.sum())} positive), {len(part)} rows")
    return 0


def cmd_oversample(args):
    d = load_dataset(args.input, args.schema)
    before = d.positive_ratio()
    out = oversample_crops(d, args.target_ratio, args.max_copies, args.seed)
    save_dataset(out, args.output)
    _write_sidecar(args.output, args)
    print(f"positive ratio {before:.4f} -> {out.positive_ratio():.4f} "
          f"({len(out) - len(d)} rows appended)")
    return 0


def cmd_fit_tree(args):
    d = load_dataset(args.train, args.schema)
    if args.target == "soft" and d.soft_target_col is None:
        raise DataError("training data has no soft_target column; pass --target outcome")
    tree = fit_student(d, _tree_params(args), args.target)
    save_model(tree, args.output, meta=_meta(args))
    defs = export_rules(tree)
    if args.rules_out:
        fmt = "markdown" if str(args.rules_out).endswith(".md") else "csv"
        Path(args.rules_out).write_text(rules_table(defs, fmt))
        _write_sidecar(args.rules_out, args)
    ce, auc = score_student(tree, d)
    print(f"leaves: {tree.n_states}")
    print(f"train cross-entropy: {ce!r}")
    print(f"train AUROC: {auc!r}")
    return 0


def _risk_series(d: Dataset, column, tree=None):
    if column == "student":
        if tree is None:
            raise DataError("risk column 'student' needs a tree (use a bundle model)")
        return student_proba(tree, d)
    if column == "teacher":
        if d.soft_target_col is None:
            raise DataError("no soft_target column for risk 'teacher'")
        column = d.soft_target_col
    if column not in d.frame.columns:
        raise DataError(f"risk column {column!r} not found")
    return d.frame[column].to_numpy(dtype=float)


def cmd_build_hsmm(args):
    d = load_dataset(args.train, args.schema)
    if len(d) == 0:
        raise DataError("training file has no rows")
    tree = _load_tree(args.tree)
    states = tree.assign_state(d.frame)
    risk = _risk_series(d, args.risk, tree)
    seqs, seg_rows = [], []
    for subject, idx in d.frame.groupby(d.subject_col, sort=False).indices.items():
        seqs.append((states[idx], risk[idx]))
        for seg in run_length_encode(states[idx]):
            seg_rows.append((subject, seg.state, seg.duration))
    model = build_hsmm(seqs, tree.n_states, _hsmm_config(args))
    if args.bundle:
        save_model({"tree": tree, "hsmm": model}, args.output, meta=_meta(args))
    else:
        save_model(model, args.output, meta=_meta(args))
    if args.segments_out:
        pd.DataFrame(seg_rows, columns=["subject", "state", "duration"]).to_csv(
            args.segments_out, index=False)
        _write_sidecar(args.segments_out, args)
    if args.show_segments:
        print("segments: " + ", ".join(f"({s},{d})" for _, s, d in seg_rows))
    for j in np.flatnonzero(model.unvisited):
        print(f"warning: state s{j + 1} never visited; defaults used", file=sys.stderr)

    y = d.frame[d.outcome_col].to_numpy()
    print(f"{'State':<6}{'rows':>8}{'runs':>7}{'muY':>9}{'emit_mu':>10}{'emit_sd':>10}"
          f"{'Intercept':>11}  Rule")
    for sd in export_rules(tree):
        j = sd.state_id - 1
        rows = int((states == sd.state_id).sum())
        mu_y = float(y[states == sd.state_id].mean()) if rows else float("nan")
        print(f"s{sd.state_id:<5}{rows:>8}{int(model.segment_counts[j]):>7}{mu_y:>9.4f}"
              f"{model.mu[j]:>10.4f}{model.sigma[j]:>10.4f}{sd.intercept:>11.4f}  "
              f"{sd.rule_string}")
    return 0


def cmd_decode(args):
    model = load_model(args.model)
    tree = model["tree"] if isinstance(model, dict) else None
    hsmm = model["hsmm"] if isinstance(model, dict) else model
    if not isinstance(hsmm, Hsmm):
        raise DataError(f"{args.model} does not hold an HSMM")
    if args.schema:
        d = load_dataset(args.input, args.schema)
        frame, scol, tcol = d.frame, d.subject_col, d.time_col
        risk = _risk_series(d, args.risk_column, tree)
    else:
        frame = pd.read_csv(args.input, keep_default_na=False, na_values=NA_VALUES)
        scol, tcol = args.subject_column, args.time_column
        for col in (scol, tcol, args.risk_column):
            if col not in frame.columns:
                raise DataError(f"column {col!r} not found in {args.input}")
        frame[scol] = frame[scol].astype(str)
        risk = pd.to_numeric(frame[args.risk_column], errors="coerce").to_numpy(dtype=float)
    out, summary = [], []
    elapsed = 0.0
    for subject, idx in frame.groupby(scol, sort=False).indices.items():
        t = frame[tcol].to_numpy()[idx]
        r = risk[idx]
        if np.isnan(r).any():
            bad = t[np.flatnonzero(np.isnan(r))[0]]
            raise DataError(f"missing risk for subject {subject!r} at t={bad}")
        start = time.perf_counter()
        path, ll = viterbi(hsmm, r)
        elapsed += time.perf_counter() - start
        out.append(pd.DataFrame({"subject": subject, "t": t, "observed_value": r,
                                 "decoded_state": path}))
        summary.append((subject, len(idx), ll))
    pd.concat(out, ignore_index=True).to_csv(args.output, index=False)
    _write_sidecar(args.output, args)
    if args.loglik_out:
        pd.DataFrame(summary, columns=["subject", "length", "log_likelihood"]).to_csv(
            args.loglik_out, index=False)
        _write_sidecar(args.loglik_out, args)
    for subject, n, ll in summary:
        print(f"{subject} {n} {ll!r}")
    print(f"decoded {len(summary)} sequences in {elapsed * 1e3:.1f} ms", file=sys.stderr)
    return 0


def cmd_predict_next(args):
    model = _load_hsmm(args.model)
    for state, p in predict_next(model, args.state, args.k):
        print(f"{state} {p:.12g}")
    return 0


def cmd_simulate(args):
    model = _load_hsmm(args.model)
    seeds = np.random.SeedSequence(args.seed).spawn(args.n_sequences)
    parts = []
    for i, ss in enumerate(seeds):
        states, obs = sample(model, args.T, np.random.default_rng(ss))
        parts.append(pd.DataFrame({"subject": f"sim{i:04d}", "t": np.arange(1, args.T + 1),
                                   "state": states, "risk": obs}))
    pd.concat(parts, ignore_index=True).to_csv(args.output, index=False)
    _write_sidecar(args.output, args)
    return 0


def cmd_evaluate(args):
    train = load_dataset(args.train, args.schema)
    test = load_dataset(args.test, args.schema)
    config = PrequentialConfig(_tree_params(args), args.n_folds, args.single_window,
                               args.target)
    report = run_prequential(train, test, config)
    if args.report_out:
        report.to_csv(args.report_out)
        _write_sidecar(args.report_out, args)
    print(report.to_text(), end="")
    return 0


# ------------------------------------------------------------------ parser

def _add_tree_flags(p):
    d = TreeParams()
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--min-node-size", type=int, default=d.min_node_size)
    p.add_argument("--max-depth", type=int, default=d.max_depth)
    p.add_argument("--n-permutations", type=int, default=d.n_permutations)
    p.add_argument("--target", choices=["soft", "outcome"], default="soft",
                   help="regress logit(soft_target) or logit of clipped labels")


def _add_hsmm_flags(p):
    d = HsmmConfig()
    p.add_argument("--dmax", type=int, default=None,
                   help="sojourn support; default ceil(1.2 x longest run)")
    p.add_argument("--bandwidth", type=float, default=None,
                   help="KDE bandwidth; default Silverman's rule")
    p.add_argument("--transition-smoothing", type=float, default=d.transition_smoothing)


def build_parser():
    parser = argparse.ArgumentParser(prog="mobhsmm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0)
        return p

    p = add("impute", cmd_impute, "fill gaps: interpolate accumulated, LOCF carried columns")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--output", required=True)

    p = add("split", cmd_split, "subject-level train/test split stratified on outcome")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)

    p = add("oversample", cmd_oversample, "append suffix crops of positive subjects")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--target-ratio", type=float, default=0.173)
    p.add_argument("--max-copies", type=int, default=100)
    p.add_argument("--output", required=True)

    p = add("fit-tree", cmd_fit_tree, "distill soft targets into a model-based tree")
    p.add_argument("--train", required=True)
    p.add_argument("--schema", required=True)
    _add_tree_flags(p)
    p.add_argument("--output", required=True, help="tree JSON")
    p.add_argument("--rules-out", help="state rules table (.csv or .md)")

    p = add("build-hsmm", cmd_build_hsmm, "turn tree leaves into HSMM states")
    p.add_argument("--train", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--tree", required=True)
    p.add_argument("--risk", default="student",
                   help="observed series: 'student', 'teacher' or a column name")
    _add_hsmm_flags(p)
    p.add_argument("--output", required=True)
    p.add_argument("--bundle", action="store_true", help="store tree and HSMM together")
    p.add_argument("--segments-out")
    p.add_argument("--show-segments", action="store_true")

    p = add("decode", cmd_decode, "Viterbi state paths per subject")
    p.add_argument("--model", required=True, help="HSMM or bundle JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", help="read --input as a schema'd dataset")
    p.add_argument("--risk-column", default="risk",
                   help="column to decode; with --schema also 'student' or 'teacher'")
    p.add_argument("--subject-column", default="subject")
    p.add_argument("--time-column", default="t")
    p.add_argument("--output", required=True)
    p.add_argument("--loglik-out")

    p = add("predict-next", cmd_predict_next, "most likely successor states")
    p.add_argument("--model", required=True)
    p.add_argument("--state", type=int, required=True)
    p.add_argument("--k", type=int, default=1)

    p = add("simulate", cmd_simulate, "sample sequences from an HSMM")
    p.add_argument("--model", required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--n-sequences", type=int, default=1)
    p.add_argument("--output", required=True)

    p = add("evaluate", cmd_evaluate, "prequential growing-window evaluation")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--schema", required=True)
    _add_tree_flags(p)
    p.add_argument("--n-folds", type=int, default=5)
    p.add_argument("--single-window", action="store_true",
                   help="only train on folds 1..n-1 and validate on fold n")
    p.add_argument("--report-out")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except (MobHsmmError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
