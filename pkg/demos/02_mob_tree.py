"""
Growing a model-based tree
==========================

A model-based tree fits a small linear model in every node and splits
only where a permutation test says the coefficients are unstable along a
partition variable. Here the data come from a known three-leaf partition,
so we can check what the tree recovers.
"""
from mobhsmm.mobtree import TreeParams, export_rules, grow_tree_arrays, rules_table
from mobhsmm.synthetic import PLANTED_LEAVES, planted_partition

df = planted_partition(n=3000, noise=0.1, seed=1)
print(df.head())

###############################################################################
# ``x`` is the leaf regressor, ``z1`` and ``z2`` are the partition variables.
# The binary ``outcome`` only feeds the per-leaf event rate.

params = TreeParams(alpha=0.01, min_node_size=50, n_permutations=199, seed=0)
tree = grow_tree_arrays(df[["x"]].to_numpy(), df["y"].to_numpy(), df[["z1", "z2"]],
                        df["outcome"].to_numpy(), params, regressors=["x"])
print("leaves:", tree.n_states)
for split in tree.splits():
    print(split.var, round(split.threshold, 4), "adjusted p", split.p_value)

###############################################################################
# Every leaf becomes a state with an IF-THEN rule. The planted
# (intercept, slope) pairs are listed next to the fitted ones.

for d, truth in zip(export_rules(tree), PLANTED_LEAVES):
    print(f"s{d.state_id}: {d.rule_string:<22} fitted ({d.intercept:.3f}, "
          f"{d.coefficients['x']:.3f})  planted {truth}")

print(rules_table(export_rules(tree), fmt="markdown", digits=3))

###############################################################################
# A row is routed to its state with ``assign_state``; ``predict`` returns
# the leaf model's value.

row = {"x": 0.5, "z1": 0.3, "z2": 0.9}
print(tree.assign_state(row), tree.predict(row))
