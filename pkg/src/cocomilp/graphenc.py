"""Variable/constraint bipartite encoding of a MILP instance."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

VAR_FEATURES = 4
CON_FEATURES = 4
EDGE_FEATURES = 1
_REL_CODE = {"<=": -1.0, "=": 0.0, ">=": 1.0}


def _guard(value):
    return value if value > 0 else 1.0


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    num_var_nodes: int
    num_con_nodes: int
    var_features: np.ndarray
    con_features: np.ndarray
    edge_con: np.ndarray
    edge_var: np.ndarray
    edge_features: np.ndarray
    binary_mask: np.ndarray

    @property
    def num_edges(self):
        return self.edge_con.shape[0]

    @property
    def num_binary(self):
        return int(self.binary_mask.sum())

    @property
    def edges(self):
        return [
            (int(k), int(j), self.edge_features[e].copy())
            for e, (k, j) in enumerate(zip(self.edge_con, self.edge_var))
        ]

    def _scatter(self, targets, size):
        ones = np.ones(self.num_edges)
        return sp.csr_matrix(
            (ones, (targets, np.arange(self.num_edges))), shape=(size, self.num_edges)
        )

    @cached_property
    def con_scatter(self):
        """(m x E) matrix summing edge rows into their constraint."""
        return self._scatter(self.edge_con, self.num_con_nodes)

    @cached_property
    def var_scatter(self):
        """(n x E) matrix summing edge rows into their variable."""
        return self._scatter(self.edge_var, self.num_var_nodes)

    @cached_property
    def con_mean(self):
        """(m x n) row-normalized incidence: mean of a constraint's variables."""
        inc = sp.csr_matrix(
            (np.ones(self.num_edges), (self.edge_con, self.edge_var)),
            shape=(self.num_con_nodes, self.num_var_nodes),
        )
        deg = np.asarray(inc.sum(axis=1)).ravel()
        return sp.diags(1.0 / np.where(deg > 0, deg, 1.0)) @ inc

    @cached_property
    def var_mean(self):
        """(n x m) row-normalized incidence; isolated variables get a zero row."""
        inc = sp.csr_matrix(
            (np.ones(self.num_edges), (self.edge_var, self.edge_con)),
            shape=(self.num_var_nodes, self.num_con_nodes),
        )
        deg = np.asarray(inc.sum(axis=1)).ravel()
        return sp.csr_matrix(sp.diags(1.0 / np.where(deg > 0, deg, 1.0)) @ inc)


def encode(inst):
    n, m, p = inst.num_vars, inst.num_rows, inst.num_binary
    c_scale = _guard(float(np.max(np.abs(inst.c)))) if n else 1.0
    rhs = np.array([row.rhs for row in inst.rows])
    rhs_scale = _guard(float(np.max(np.abs(rhs)))) if m else 1.0

    edge_con, edge_var, edge_feat = [], [], []
    var_deg = np.zeros(n)
    con_feat = np.zeros((m, CON_FEATURES))
    for k, row in enumerate(inst.rows):
        coefs = np.array(row.coefs)
        row_scale = _guard(float(np.max(np.abs(coefs))))
        edge_con.extend([k] * len(row.cols))
        edge_var.extend(row.cols)
        edge_feat.extend((coefs / row_scale).tolist())
        var_deg[list(row.cols)] += 1
        con_feat[k] = [row.rhs / rhs_scale, len(row.cols) / _guard(n), _REL_CODE[row.rel], 1.0]

    var_feat = np.zeros((n, VAR_FEATURES))
    var_feat[:, 0] = inst.c / c_scale
    var_feat[:, 1] = var_deg / _guard(m)
    var_feat[:p, 2] = 1.0
    var_feat[:, 3] = 1.0
    mask = np.zeros(n, dtype=bool)
    mask[:p] = True
    return BipartiteGraph(
        num_var_nodes=n,
        num_con_nodes=m,
        var_features=var_feat,
        con_features=con_feat,
        edge_con=np.array(edge_con, dtype=np.int64),
        edge_var=np.array(edge_var, dtype=np.int64),
        edge_features=np.array(edge_feat, dtype=np.float64).reshape(-1, EDGE_FEATURES),
        binary_mask=mask,
    )
