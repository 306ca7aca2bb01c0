"""MILP instance model, evaluation, generators and the JSON file format.

An instance is ``min/max c.x  s.t. rows, lower <= x <= upper`` where the
first ``num_binary`` variables are binary.
"""

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .rng import SplitMix64

RELATIONS = ("<=", ">=", "=")
SENSES = ("minimize", "maximize")
FORMAT_TAG = "milp-json"
FORMAT_VERSION = 1


class InstanceError(ValueError):
    pass


class InstanceFormatError(ValueError):
    """Malformed instance document; the message names the line or field."""


def _frozen(values):
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ConstraintRow:
    cols: tuple
    coefs: tuple
    rel: str
    rhs: float

    def __post_init__(self):
        cols = tuple(int(c) for c in self.cols)
        coefs = tuple(float(a) for a in self.coefs)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "coefs", coefs)
        object.__setattr__(self, "rhs", float(self.rhs))
        if self.rel not in RELATIONS:
            raise InstanceError(f"unknown relation {self.rel!r}")
        if len(cols) != len(coefs):
            raise InstanceError("cols and coefs differ in length")
        if not cols:
            raise InstanceError("empty constraint row")
        if any(b <= a for a, b in zip(cols, cols[1:])):
            if len(set(cols)) != len(cols):
                raise InstanceError(f"duplicate column index in row {cols}")
            raise InstanceError(f"row columns not sorted: {cols}")
        if any(a == 0.0 or not math.isfinite(a) for a in coefs):
            raise InstanceError("row coefficients must be finite and nonzero")
        if not math.isfinite(self.rhs):
            raise InstanceError("row rhs must be finite")

    @classmethod
    def from_pairs(cls, pairs, rel, rhs):
        """Build a row from unsorted (col, coef) pairs, dropping zeros."""
        pairs = sorted((int(j), float(a)) for j, a in pairs if a != 0.0)
        return cls(tuple(j for j, _ in pairs), tuple(a for _, a in pairs), rel, rhs)

    def activity(self, x):
        total = 0.0
        for j, a in zip(self.cols, self.coefs):
            total += a * x[j]
        return total

    def violation(self, x):
        lhs = self.activity(x)
        if self.rel == "<=":
            return lhs - self.rhs
        if self.rel == ">=":
            return self.rhs - lhs
        return abs(lhs - self.rhs)


@dataclass(frozen=True)
class MilpInstance:
    name: str
    sense: str
    c: np.ndarray
    rows: tuple
    lower: np.ndarray
    upper: np.ndarray
    num_binary: int

    def __post_init__(self):
        object.__setattr__(self, "c", _frozen(self.c))
        object.__setattr__(self, "lower", _frozen(self.lower))
        object.__setattr__(self, "upper", _frozen(self.upper))
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "num_binary", int(self.num_binary))
        n = self.c.shape[0]
        if self.sense not in SENSES:
            raise InstanceError(f"unknown sense {self.sense!r}")
        if self.c.ndim != 1 or not np.all(np.isfinite(self.c)):
            raise InstanceError("objective must be a finite vector")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise InstanceError("bounds must have one entry per variable")
        if not 0 <= self.num_binary <= n:
            raise InstanceError(f"num_binary={self.num_binary} outside [0, {n}]")
        if np.any(self.lower > self.upper):
            raise InstanceError("lower bound exceeds upper bound")
        p = self.num_binary
        if np.any(self.lower[:p] != 0.0) or np.any(self.upper[:p] != 1.0):
            raise InstanceError("binary variables must have bounds [0, 1]")
        for k, row in enumerate(self.rows):
            if not isinstance(row, ConstraintRow):
                raise InstanceError(f"row {k} is not a ConstraintRow")
            if row.cols[0] < 0 or row.cols[-1] >= n:
                raise InstanceError(f"row {k} references a variable outside [0, {n})")

    @property
    def num_vars(self):
        return self.c.shape[0]

    @property
    def num_rows(self):
        return len(self.rows)

    @property
    def maximize(self):
        return self.sense == "maximize"

    @cached_property
    def dense_matrix(self):
        A = np.zeros((self.num_rows, self.num_vars))
        for k, row in enumerate(self.rows):
            A[k, list(row.cols)] = row.coefs
        A.setflags(write=False)
        return A

    @cached_property
    def rhs(self):
        return _frozen([row.rhs for row in self.rows])

    @cached_property
    def relations(self):
        return tuple(row.rel for row in self.rows)

    def with_rows(self, extra_rows, name=None):
        return MilpInstance(
            name=name or self.name,
            sense=self.sense,
            c=self.c,
            rows=self.rows + tuple(extra_rows),
            lower=self.lower,
            upper=self.upper,
            num_binary=self.num_binary,
        )

    def __eq__(self, other):
        if not isinstance(other, MilpInstance):
            return NotImplemented
        return (
            self.name == other.name
            and self.sense == other.sense
            and self.num_binary == other.num_binary
            and self.rows == other.rows
            and np.array_equal(self.c, other.c)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    __hash__ = None


def binary_instance(name, sense, c, rows):
    """All-binary instance with [0, 1] bounds."""
    n = len(c)
    return MilpInstance(name, sense, c, rows, np.zeros(n), np.ones(n), n)


@dataclass(frozen=True)
class Assignment:
    values: np.ndarray
    objective: float

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


@dataclass
class FeasibilityReport:
    feasible: bool
    violations: list = field(default_factory=list)
    integrality_violations: list = field(default_factory=list)
    bound_violations: list = field(default_factory=list)


def _as_vector(inst, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (inst.num_vars,):
        raise InstanceError(f"expected a vector of length {inst.num_vars}, got shape {x.shape}")
    return x


def evaluate_objective(inst, x):
    """c.x accumulated left to right in index order."""
    x = _as_vector(inst, x)
    total = 0.0
    for cj, xj in zip(inst.c.tolist(), x.tolist()):
        total += cj * xj
    return total


def evaluate(inst, x):
    x = _as_vector(inst, x)
    return Assignment(x, evaluate_objective(inst, x))


def check_feasibility(inst, x, tol=1e-6):
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    x = _as_vector(inst, x)
    violations = []
    for k, row in enumerate(inst.rows):
        amount = row.violation(x)
        if amount > tol:
            violations.append((k, amount))
    integrality = [
        j for j in range(inst.num_binary) if min(abs(x[j]), abs(x[j] - 1.0)) > tol
    ]
    bounds = []
    for j in range(inst.num_vars):
        amount = max(inst.lower[j] - x[j], x[j] - inst.upper[j])
        if amount > tol:
            bounds.append((j, float(amount)))
    ok = not violations and not integrality and not bounds
    return FeasibilityReport(ok, violations, integrality, bounds)


def is_feasible(inst, x, tol=1e-6):
    return check_feasibility(inst, x, tol).feasible


# --- generators -------------------------------------------------------------


def generate_set_cover(rows, cols, density, cost_lo=1, cost_hi=100, seed=0, name=None):
    """Set covering: min c.x with every row covered at least once.

    Coverage guarantee: each column first hits one random row, each row then
    receives two distinct random columns, and the remaining nonzeros are drawn
    uniformly from the empty cells until ``round(rows*cols*density)`` is met.
    """
    m, n = int(rows), int(cols)
    if m < 2 or n < 4:
        raise InstanceError(f"set cover needs rows >= 2 and cols >= 4, got {m}x{n}")
    if not 0.0 < density < 1.0 or density * n < 2:
        raise InstanceError(f"density {density} cannot give two columns per row with {n} columns")
    if cost_lo > cost_hi:
        raise InstanceError("cost_lo exceeds cost_hi")
    rng = SplitMix64(seed)
    cells = set()
    for j in range(n):
        cells.add((rng.randint(0, m - 1), j))
    for r in range(m):
        for j in rng.sample(range(n), 2):
            cells.add((r, j))
    target = int(round(m * n * density))
    missing = target - len(cells)
    if missing > 0:
        empty = [(r, j) for r in range(m) for j in range(n) if (r, j) not in cells]
        cells.update(rng.sample(empty, missing))
    costs = [float(rng.randint(cost_lo, cost_hi)) for _ in range(n)]
    by_row = [[] for _ in range(m)]
    for r, j in cells:
        by_row[r].append(j)
    constraint_rows = [
        ConstraintRow(tuple(sorted(js)), (1.0,) * len(js), ">=", 1.0) for js in by_row
    ]
    name = name or f"sc_{m}x{n}_s{seed}"
    return binary_instance(name, "minimize", costs, constraint_rows)


def generate_comb_auction(items, bids, max_bundle, seed=0, name=None, surplus=0.3):
    """Combinatorial auction as set packing: max bid value, each item sold once.

    Items carry base values uniform in [1, 100]; a bid draws a bundle size in
    [1, max_bundle], a bundle of distinct items, and is worth the bundle's base
    value times (1 + U[0, surplus]).
    """
    items, bids, max_bundle = int(items), int(bids), int(max_bundle)
    if items < 2 or bids < 2 or not 1 <= max_bundle <= items:
        raise InstanceError(
            f"invalid auction size items={items} bids={bids} max_bundle={max_bundle}"
        )
    rng = SplitMix64(seed)
    base = [float(rng.randint(1, 100)) for _ in range(items)]
    values = []
    members = [[] for _ in range(items)]
    for b in range(bids):
        size = rng.randint(1, max_bundle)
        bundle = sorted(rng.sample(range(items), size))
        worth = sum(base[i] for i in bundle) * (1.0 + rng.uniform(0.0, surplus))
        values.append(worth)
        for i in bundle:
            members[i].append(b)
    constraint_rows = [
        ConstraintRow(tuple(bs), (1.0,) * len(bs), "<=", 1.0) for bs in members if bs
    ]
    name = name or f"ca_{items}x{bids}_s{seed}"
    return binary_instance(name, "maximize", values, constraint_rows)


def restrict_columns(inst, keep, name=None):
    """Sub-instance over the variables ``keep`` (renumbered in the given order).

    Rows lose the dropped columns; rows left empty are removed. Only valid for
    all-binary instances.
    """
    if inst.num_binary != inst.num_vars:
        raise InstanceError("restrict_columns supports all-binary instances only")
    keep = list(keep)
    index = {j: k for k, j in enumerate(keep)}
    new_rows = []
    for row in inst.rows:
        pairs = [(index[j], a) for j, a in zip(row.cols, row.coefs) if j in index]
        if pairs:
            new_rows.append(ConstraintRow.from_pairs(pairs, row.rel, row.rhs))
    return binary_instance(
        name or f"{inst.name}[{len(keep)}]", inst.sense, inst.c[keep], new_rows
    )


# --- serialization ----------------------------------------------------------


def _bound_out(v):
    return None if math.isinf(v) else float(v)


def write_instance(inst):
    """Serialize to the ``.milp.json`` document (UTF-8 bytes)."""
    head = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "name": inst.name,
        "sense": inst.sense,
        "num_vars": inst.num_vars,
        "num_binary": inst.num_binary,
        "c": inst.c.tolist(),
        "lower": [_bound_out(v) for v in inst.lower.tolist()],
        "upper": [_bound_out(v) for v in inst.upper.tolist()],
    }
    lines = ["{"]
    for key, value in head.items():
        lines.append(f"  {json.dumps(key)}: {json.dumps(value, allow_nan=False)},")
    lines.append('  "rows": [')
    row_lines = [
        "    "
        + json.dumps(
            {"cols": list(r.cols), "coefs": list(r.coefs), "rel": r.rel, "rhs": r.rhs},
            allow_nan=False,
        )
        for r in inst.rows
    ]
    lines.append(",\n".join(row_lines))
    lines.append("  ]")
    lines.append("}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _field(doc, key, kind, where="document"):
    if key not in doc:
        raise InstanceFormatError(f"{where}: missing field {key!r}")
    value = doc[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise InstanceFormatError(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _numbers(values, key, allow_none=None):
    if not isinstance(values, list):
        raise InstanceFormatError(f"field {key!r} must be a list")
    out = []
    for i, v in enumerate(values):
        if v is None and allow_none is not None:
            out.append(allow_none)
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            out.append(float(v))
        else:
            raise InstanceFormatError(f"field {key}[{i}] is not a number")
    return out


def read_instance(data):
    """Parse a ``.milp.json`` document; raises InstanceFormatError on bad input."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InstanceFormatError(f"not UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InstanceFormatError("top-level value must be an object")
    if doc.get("format") != FORMAT_TAG:
        raise InstanceFormatError(f"field 'format' must be {FORMAT_TAG!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise InstanceFormatError(f"unsupported version {doc.get('version')!r}")
    name = _field(doc, "name", str)
    sense = _field(doc, "sense", str)
    n = _field(doc, "num_vars", int)
    p = _field(doc, "num_binary", int)
    if sense not in SENSES:
        raise InstanceFormatError(f"field 'sense': unknown value {sense!r}")
    if p > n or p < 0:
        raise InstanceFormatError(f"field 'num_binary': {p} not in [0, num_vars={n}]")
    c = _numbers(_field(doc, "c", list), "c")
    lower = _numbers(_field(doc, "lower", list), "lower", allow_none=-math.inf)
    upper = _numbers(_field(doc, "upper", list), "upper", allow_none=math.inf)
    for key, vec in (("c", c), ("lower", lower), ("upper", upper)):
        if len(vec) != n:
            raise InstanceFormatError(f"field {key!r}: length {len(vec)} != num_vars {n}")
    rows = []
    for k, raw in enumerate(_field(doc, "rows", list)):
        where = f"rows[{k}]"
        if not isinstance(raw, dict):
            raise InstanceFormatError(f"{where}: must be an object")
        cols = _field(raw, "cols", list, where)
        if not all(isinstance(j, int) and not isinstance(j, bool) for j in cols):
            raise InstanceFormatError(f"{where}.cols: indices must be integers")
        if len(set(cols)) != len(cols):
            raise InstanceFormatError(f"{where}.cols: duplicate column index")
        coefs = _numbers(_field(raw, "coefs", list, where), f"{where}.coefs")
        rel = _field(raw, "rel", str, where)
        rhs = float(_field(raw, "rhs", float, where))
        if any(j < 0 or j >= n for j in cols):
            raise InstanceFormatError(f"{where}.cols: index outside [0, {n})")
        try:
            rows.append(ConstraintRow(tuple(cols), tuple(coefs), rel, rhs))
        except InstanceError as exc:
            raise InstanceFormatError(f"{where}: {exc}") from None
    try:
        return MilpInstance(name, sense, c, rows, lower, upper, p)
    except InstanceError as exc:
        raise InstanceFormatError(str(exc)) from None


def save_instance(inst, path):
    with open(path, "wb") as fh:
        fh.write(write_instance(inst))


def load_instance(path):
    with open(path, "rb") as fh:
        try:
            return read_instance(fh.read())
        except InstanceFormatError as exc:
            raise InstanceFormatError(f"{path}: {exc}") from None
