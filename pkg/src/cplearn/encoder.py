"""Tripartite graph observations of a solver state.

Variables, constraints and values are three node classes.  Variable-constraint
edges follow constraint scopes and stay fixed; value-variable edges follow the
*current* domains and are rebuilt at every call.  Value nodes are shared, one
per distinct integer across all initial domains, and keep their node even when
pruned everywhere so shapes stay constant within an episode.
"""

from __future__ import annotations

import io
import json

import numpy as np

from .cp import Model

VAR_FEATURES = 4  # current size, initial size, assigned flag, objective flag
CON_FEATURES = 5  # one-hot over the four constraint kinds + reduced-domains flag
VAL_FEATURES = 1  # the numeric value

_WIRE_VERSION = 1


class TripartiteGraph:
    """Feature matrices plus the two edge index lists of one observation."""

    __slots__ = (
        "var_features",
        "con_features",
        "val_features",
        "var_con_edges",
        "val_var_edges",
        "node_values",
        "branch_var",
        "candidate_val_indices",
    )

    def __init__(
        self,
        var_features: np.ndarray,
        con_features: np.ndarray,
        val_features: np.ndarray,
        var_con_edges: np.ndarray,
        val_var_edges: np.ndarray,
        node_values: np.ndarray,
        branch_var: int,
        candidate_val_indices: np.ndarray,
    ):
        self.var_features = var_features
        self.con_features = con_features
        self.val_features = val_features
        self.var_con_edges = var_con_edges  # shape (2, |E1|): var row, con row
        self.val_var_edges = val_var_edges  # shape (2, |E2|): val row, var row
        self.node_values = node_values  # integer carried by each value node
        self.branch_var = branch_var
        self.candidate_val_indices = candidate_val_indices

    @property
    def n_var(self) -> int:
        return self.var_features.shape[0]

    @property
    def n_con(self) -> int:
        return self.con_features.shape[0]

    @property
    def n_val(self) -> int:
        return self.val_features.shape[0]

    def candidate_values(self) -> np.ndarray:
        """Integers branchable at this state, ascending."""
        return self.node_values[self.candidate_val_indices]

    # -- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        header = {"format": "tripartite-observation", "version": _WIRE_VERSION}
        np.savez(
            buf,
            header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
            var_features=self.var_features,
            con_features=self.con_features,
            val_features=self.val_features,
            var_con_edges=self.var_con_edges,
            val_var_edges=self.val_var_edges,
            node_values=self.node_values,
            branch_var=np.array([self.branch_var], dtype=np.int64),
            candidate_val_indices=self.candidate_val_indices,
        )
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "TripartiteGraph":
        with np.load(io.BytesIO(raw)) as data:
            header = json.loads(bytes(data["header"]).decode())
            if header.get("version") != _WIRE_VERSION:
                raise ValueError(f"unsupported observation version {header.get('version')}")
            return cls(
                data["var_features"],
                data["con_features"],
                data["val_features"],
                data["var_con_edges"],
                data["val_var_edges"],
                data["node_values"],
                int(data["branch_var"][0]),
                data["candidate_val_indices"],
            )


def encode(model: Model, branch_var: int) -> TripartiteGraph:
    """Build the observation for a non-terminal state (model, branch_var)."""
    dom = model.variables[branch_var].domain
    if dom.size < 2:
        raise ValueError("encode requires an unassigned branching variable")

    all_values = sorted({v for var in model.variables for v in var.domain.initial_values()})
    value_node = {v: i for i, v in enumerate(all_values)}

    f1 = np.zeros((len(model.variables), VAR_FEATURES))
    for var in model.variables:
        f1[var.id] = (
            var.domain.size,
            var.domain.initial_size,
            1.0 if var.domain.size == 1 else 0.0,
            1.0 if var.is_objective else 0.0,
        )

    f2 = np.zeros((len(model.constraints), CON_FEATURES))
    for i, con in enumerate(model.constraints):
        f2[i, int(con.kind)] = 1.0
        f2[i, 4] = 1.0 if model.reduced_flags[i] else 0.0

    f3 = np.asarray(all_values, dtype=np.float64).reshape(-1, 1)

    e1_var, e1_con = [], []
    for i, con in enumerate(model.constraints):
        for vid in sorted(set(con.scope)):
            e1_var.append(vid)
            e1_con.append(i)
    e2_val, e2_var = [], []
    for var in model.variables:
        for v in var.domain.values():
            e2_val.append(value_node[v])
            e2_var.append(var.id)

    candidates = np.asarray([value_node[v] for v in dom.values()], dtype=np.int64)
    return TripartiteGraph(
        f1,
        f2,
        f3,
        np.asarray([e1_var, e1_con], dtype=np.int64).reshape(2, -1),
        np.asarray([e2_val, e2_var], dtype=np.int64).reshape(2, -1),
        np.asarray(all_values, dtype=np.int64),
        branch_var,
        candidates,
    )


def feature_scaling(graph: TripartiteGraph) -> TripartiteGraph:
    """Normalized copy: domain sizes relative to each variable's initial size,
    value features min-max scaled to [0, 1].  Idempotent."""
    f1 = graph.var_features.copy()
    init = f1[:, 1].copy()
    f1[:, 0] = f1[:, 0] / init
    f1[:, 1] = 1.0
    f3 = graph.val_features.copy()
    lo, hi = f3.min(), f3.max()
    if hi > lo:
        f3 = (f3 - lo) / (hi - lo)
    else:
        f3 = np.zeros_like(f3)
    return TripartiteGraph(
        f1,
        graph.con_features,
        f3,
        graph.var_con_edges,
        graph.val_var_edges,
        graph.node_values,
        graph.branch_var,
        graph.candidate_val_indices,
    )
