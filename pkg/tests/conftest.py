import itertools

import numpy as np
import pytest

from cocomilp.instance import ConstraintRow, binary_instance


def enumerate_binary(inst, tol=1e-6):
    """Brute-force oracle: (feasible mask, objectives, assignments) over {0,1}^n."""
    n = inst.num_vars
    X = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    A = np.zeros((inst.num_rows, n))
    for k, row in enumerate(inst.rows):
        for j, a in zip(row.cols, row.coefs):
            A[k, j] = a
    b = np.array([row.rhs for row in inst.rows])
    lhs = X @ A.T
    ok = np.ones(len(X), dtype=bool)
    for k, row in enumerate(inst.rows):
        if row.rel == "<=":
            ok &= lhs[:, k] <= b[k] + tol
        elif row.rel == ">=":
            ok &= lhs[:, k] >= b[k] - tol
        else:
            ok &= np.abs(lhs[:, k] - b[k]) <= tol
    return ok, X @ np.asarray(inst.c), X


def brute_force_optimum(inst):
    ok, obj, X = enumerate_binary(inst)
    if not ok.any():
        return None
    return obj[ok].max() if inst.maximize else obj[ok].min()


@pytest.fixture
def tiny():
    """min -3x1 - 2x2 s.t. x1 + x2 <= 1, binary."""
    return binary_instance("tiny", "minimize", [-3.0, -2.0], [ConstraintRow((0, 1), (1.0, 1.0), "<=", 1.0)])


def random_instance(seed, n=6, m=4, density=0.5):
    """Mixed-relation binary instance with random integer coefficients."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(m):
        cols = [j for j in range(n) if rng.random() < density]
        if not cols:
            cols = [int(rng.integers(n))]
        coefs = rng.integers(1, 6, size=len(cols)) * rng.choice([-1, 1], size=len(cols))
        rel = ("<=", ">=", "=")[k % 3]
        rhs = float(rng.integers(-2, 4))
        rows.append(ConstraintRow(tuple(cols), tuple(float(a) for a in coefs), rel, rhs))
    c = rng.integers(-9, 10, size=n).astype(float)
    return binary_instance(f"rand{seed}", "minimize", c, rows)
