"""Interpretable risk sequences: model-based trees feeding hidden semi-Markov models.

Stage one distills a teacher's probabilities into a model-based
recursive-partitioning tree (:mod:`mobhsmm.mobtree`). Stage two turns the
tree's leaves into the hidden states of an explicit-duration HSMM
(:mod:`mobhsmm.hsmm`) used for decoding and next-state prediction.
"""
from .dataio import (ColumnSchema, Dataset, impute_dataset, impute_linear, impute_locf,
                     load_dataset, load_model, load_schema, oversample_crops, save_model,
                     split_subjects)
from .evalharness import PrequentialConfig, make_folds, run_prequential
from .hsmm import (Hsmm, HsmmConfig, build_hsmm, kde_sojourn, predict_next,
                   run_length_encode, sample, viterbi)
from .metrics import auroc, cross_entropy, logit, sigmoid
from .mobtree import (MobTree, TreeParams, assign_state, export_rules, fit_leaf_model,
                      grow_tree, predict)

__version__ = "0.1.0"

__all__ = [
    "ColumnSchema",
    "Dataset",
    "impute_dataset",
    "impute_linear",
    "impute_locf",
    "load_dataset",
    "load_model",
    "load_schema",
    "oversample_crops",
    "save_model",
    "split_subjects",
    "PrequentialConfig",
    "make_folds",
    "run_prequential",
    "Hsmm",
    "HsmmConfig",
    "build_hsmm",
    "kde_sojourn",
    "predict_next",
    "run_length_encode",
    "sample",
    "viterbi",
    "auroc",
    "cross_entropy",
    "logit",
    "sigmoid",
    "MobTree",
    "TreeParams",
    "assign_state",
    "export_rules",
    "fit_leaf_model",
    "grow_tree",
    "predict",
]
