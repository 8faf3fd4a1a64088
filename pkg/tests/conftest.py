import numpy as np
import pytest

from mobhsmm.mobtree import Leaf, LinearModel, MobTree, Split, TreeParams

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _leaf(intercept, coef, mu_y, n=10):
    return Leaf(LinearModel(intercept, np.array([coef]), 0.0, n), mu_y)


@pytest.fixture
def ward_tree():
    """PEEP <= 6 -> (FiO2 <= 50 -> s1, FiO2 > 50 -> s2); PEEP > 6 -> s3."""
    root = Split("PEEP", 6.0,
                 Split("FiO2", 50.0, _leaf(0.02, -0.06, 0.02), _leaf(0.05, 1.5, 0.05)),
                 _leaf(0.19, 2.26, 0.52))
    tree = MobTree(root, ["fluid"], ["PEEP", "FiO2"], {}, TreeParams())
    tree._number_leaves()
    return tree


# example rows: PEEP, FiO2, fluid balance, expected state
WARD_ROWS = [(7, 60, 0.16, 3), (5, 50, 0.03, 1), (4, 35, 0.02, 1), (5, 60, 0.08, 2)]
