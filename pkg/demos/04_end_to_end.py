"""
From raw ICU-style records to decoded risk states
=================================================

The full chain: fill gaps, split by subject, oversample deceased
subjects, distill the teacher into a tree, turn the leaves into HSMM
states and decode a held-out subject. The teacher here is a known
logistic function, so the student can match it exactly.
"""
import warnings


from mobhsmm.dataio import Dataset, impute_dataset, oversample_crops, split_subjects
from mobhsmm.distill import fit_student, student_proba
from mobhsmm.evalharness import PrequentialConfig, run_prequential
from mobhsmm.hsmm import build_hsmm, viterbi
from mobhsmm.metrics import cross_entropy
from mobhsmm.mobtree import TreeParams, export_rules
from mobhsmm.synthetic import ICU_SCHEMA, icu_like

raw, _ = icu_like(n_subjects=200, min_len=30, max_len=40, seed=3)
data = Dataset.from_frame(raw, ICU_SCHEMA)
print(data.missing_modeling_cells())

###############################################################################
# Accumulated columns are interpolated, carried columns use LOCF.

data = impute_dataset(data)
train, test = split_subjects(data, test_fraction=0.2, seed=0)
print(len(train.subjects), "train subjects,", len(test.subjects), "test subjects")

###############################################################################
# Deceased subjects are rare, so suffix crops of their sequences are added
# until positives make up about 17% of the rows.

balanced = oversample_crops(train, 0.173, max_copies_per_subject=100, seed=0)
print(f"{train.positive_ratio():.3f} -> {balanced.positive_ratio():.3f}")

###############################################################################
# Distillation: the tree regresses the logit of the teacher's risk.

params = TreeParams(alpha=0.05, min_node_size=50, max_depth=3)
tree = fit_student(balanced, params)
for d in export_rules(tree):
    print(f"s{d.state_id}  muY={d.mu_y:.3f}  {d.rule_string}")

teacher = test.frame["risk"].to_numpy()
print("student CE", cross_entropy(teacher, student_proba(tree, test)))
print("teacher self-entropy", cross_entropy(teacher, teacher))

###############################################################################
# Leaves become HSMM states. The observed series is the student's risk.

risk = student_proba(tree, balanced)
state = tree.assign_state(balanced.frame)
groups = balanced.frame.groupby("subject", sort=False).indices
hsmm = build_hsmm([(state[i], risk[i]) for i in groups.values()], tree.n_states)
print("states", hsmm.S, "max sojourn", hsmm.dmax)

sid = test.subjects[0]
rows = test.frame["subject"].to_numpy() == sid
path, _ = viterbi(hsmm, student_proba(tree, test)[rows])
print(sid, path)

###############################################################################
# Prequential evaluation: grow the training window fold by fold. Positives
# sit at the end of each sequence, so early windows have undefined AUROC.

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    report = run_prequential(train, test, PrequentialConfig(params))
print(report.to_text())
