"""Q-network over tripartite solver-state graphs.

Three node classes (variables, constraints, values) get separate input
embeddings and separate per-layer weights.  Each layer concatenates a skip
projection of the layer-0 embedding, a self projection, and one pooled
projection per neighbouring class, applies a leaky ReLU, and projects back to
the embedding width so every layer is shape-compatible with the next.  No
biases anywhere in the message-passing stack; the decoder MLPs carry biases.

The decoder scores each candidate value of the branching variable: the final
embedding of the branching variable and of the candidate's value node are
mapped through small MLPs, concatenated, and reduced to a scalar Q-value.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor, concat_cols, leaky_relu, no_grad
from .encoder import CON_FEATURES, VAL_FEATURES, VAR_FEATURES, TripartiteGraph, encode, feature_scaling

_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    embed_dim: int = 32
    decoder_dim: int = 32
    layers: int = 3
    hidden: int = 32
    pooling: str = "mean"
    leaky_slope: float = 0.01

    def __post_init__(self):
        if self.pooling not in ("mean", "sum"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        for field in ("embed_dim", "decoder_dim", "layers", "hidden"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be positive")


def parameter_shapes(config):
    """Insertion-ordered name -> (rows, cols) map for one parameter set."""
    d = config.embed_dim
    l = config.decoder_dim
    h = config.hidden
    shapes = {
        "embed.var": (VAR_FEATURES, d),
        "embed.con": (CON_FEATURES, d),
        "embed.val": (VAL_FEATURES, d),
    }
    for k in range(config.layers):
        p = f"layer{k}."
        shapes[p + "var.skip"] = (d, d)
        shapes[p + "var.self"] = (d, d)
        shapes[p + "var.con_agg"] = (d, d)
        shapes[p + "var.val_agg"] = (d, d)
        shapes[p + "var.proj"] = (4 * d, d)
        shapes[p + "con.skip"] = (d, d)
        shapes[p + "con.self"] = (d, d)
        shapes[p + "con.var_agg"] = (d, d)
        shapes[p + "con.proj"] = (3 * d, d)
        shapes[p + "val.skip"] = (d, d)
        shapes[p + "val.self"] = (d, d)
        shapes[p + "val.var_agg"] = (d, d)
        shapes[p + "val.proj"] = (3 * d, d)
    for tower in ("dec.var", "dec.val"):
        shapes[tower + ".w1"] = (d, h)
        shapes[tower + ".b1"] = (1, h)
        shapes[tower + ".w2"] = (h, l)
        shapes[tower + ".b2"] = (1, l)
    shapes["dec.q.w1"] = (2 * l, h)
    shapes["dec.q.b1"] = (1, h)
    shapes["dec.q.w2"] = (h, h)
    shapes["dec.q.b2"] = (1, h)
    shapes["dec.q.w3"] = (h, 1)
    shapes["dec.q.b3"] = (1, 1)
    return shapes


class ParameterSet:
    """Named weight tensors for one network instance."""

    def __init__(self, config, tensors):
        self.config = config
        self.tensors = tensors

    @classmethod
    def init(cls, config=None, seed=0):
        config = config or NetConfig()
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in parameter_shapes(config).items():
            if name.rsplit(".", 1)[-1].startswith("b"):
                data = np.zeros(shape)
            else:
                std = np.sqrt(2.0 / (shape[0] + shape[1]))
                data = rng.normal(0.0, std, size=shape)
            tensors[name] = Tensor(data, requires_grad=True)
        return cls(config, tensors)

    def copy(self):
        return ParameterSet(
            self.config,
            {k: Tensor(t.data.copy(), requires_grad=True) for k, t in self.tensors.items()},
        )

    def load_from(self, other):
        """In-place overwrite from another set (target-network sync)."""
        if other.config != self.config:
            raise ValueError("parameter sets have different configurations")
        for name, t in self.tensors.items():
            t.data[...] = other.tensors[name].data

    def save(self, path):
        meta = {
            "format": "cplearn-qnet",
            "version": _CHECKPOINT_VERSION,
            "config": asdict(self.config),
        }
        arrays = {name: t.data for name, t in self.tensors.items()}
        buf = io.BytesIO()
        np.savez(buf, __meta__=np.array(json.dumps(meta)), **arrays)
        with open(path, "wb") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as archive:
            if "__meta__" not in archive:
                raise ValueError("not a network checkpoint: missing metadata")
            meta = json.loads(str(archive["__meta__"][()]))
            if meta.get("format") != "cplearn-qnet":
                raise ValueError("not a network checkpoint")
            if meta.get("version") != _CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            config = NetConfig(**meta["config"])
            tensors = {}
            for name, shape in parameter_shapes(config).items():
                if name not in archive:
                    raise ValueError(f"checkpoint missing parameter {name}")
                data = archive[name]
                if data.shape != shape:
                    raise ValueError(
                        f"parameter {name} has shape {data.shape}, expected {shape}"
                    )
                tensors[name] = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        return cls(config, tensors)


def _incidence(n_rows, n_cols, rows, cols, mean):
    A = np.zeros((n_rows, n_cols))
    A[rows, cols] = 1.0
    if mean:
        deg = A.sum(axis=1, keepdims=True)
        live = deg[:, 0] > 0.0
        A[live] /= deg[live]
    return A


def q_forward(params, graph):
    """Q-values for the graph's candidate values, as an (m, 1) tensor.

    Records the autodiff graph when called normally; wrap in ``no_grad`` for
    plain inference.  Feature scaling is applied here (it is idempotent, so
    pre-scaled graphs are fine too).
    """
    cfg = params.config
    P = params.tensors
    g = feature_scaling(graph)
    mean = cfg.pooling == "mean"

    e1_var, e1_con = g.var_con_edges
    e2_val, e2_var = g.val_var_edges
    Ax_c = Tensor(_incidence(g.n_var, g.n_con, e1_var, e1_con, mean))
    Ac_x = Tensor(_incidence(g.n_con, g.n_var, e1_con, e1_var, mean))
    Ax_v = Tensor(_incidence(g.n_var, g.n_val, e2_var, e2_val, mean))
    Av_x = Tensor(_incidence(g.n_val, g.n_var, e2_val, e2_var, mean))

    H0x = Tensor(g.var_features) @ P["embed.var"]
    H0c = Tensor(g.con_features) @ P["embed.con"]
    H0v = Tensor(g.val_features) @ P["embed.val"]
    Hx, Hc, Hv = H0x, H0c, H0v
    for k in range(cfg.layers):
        p = f"layer{k}."
        # All three updates read the layer-k embeddings of the other classes,
        # so compute every block before overwriting anything.
        Sx = concat_cols([
            H0x @ P[p + "var.skip"],
            Hx @ P[p + "var.self"],
            Ax_c @ (Hc @ P[p + "var.con_agg"]),
            Ax_v @ (Hv @ P[p + "var.val_agg"]),
        ])
        last = k == cfg.layers - 1
        if not last:
            # The final constraint update would feed nothing (the decoder
            # reads only variable and value embeddings), so skip it.
            Sc = concat_cols([
                H0c @ P[p + "con.skip"],
                Hc @ P[p + "con.self"],
                Ac_x @ (Hx @ P[p + "con.var_agg"]),
            ])
        Sv = concat_cols([
            H0v @ P[p + "val.skip"],
            Hv @ P[p + "val.self"],
            Av_x @ (Hx @ P[p + "val.var_agg"]),
        ])
        Hx = leaky_relu(Sx, cfg.leaky_slope) @ P[p + "var.proj"]
        if not last:
            Hc = leaky_relu(Sc, cfg.leaky_slope) @ P[p + "con.proj"]
        Hv = leaky_relu(Sv, cfg.leaky_slope) @ P[p + "val.proj"]

    hx = Hx.take_rows([graph.branch_var])
    hv = Hv.take_rows(graph.candidate_val_indices)
    ex = leaky_relu(hx @ P["dec.var.w1"] + P["dec.var.b1"], cfg.leaky_slope)
    ex = ex @ P["dec.var.w2"] + P["dec.var.b2"]
    ev = leaky_relu(hv @ P["dec.val.w1"] + P["dec.val.b1"], cfg.leaky_slope)
    ev = ev @ P["dec.val.w2"] + P["dec.val.b2"]

    m = len(graph.candidate_val_indices)
    ex_rows = Tensor(np.ones((m, 1))) @ ex
    z = concat_cols([ex_rows, ev])
    h1 = leaky_relu(z @ P["dec.q.w1"] + P["dec.q.b1"], cfg.leaky_slope)
    h2 = leaky_relu(h1 @ P["dec.q.w2"] + P["dec.q.b2"], cfg.leaky_slope)
    return h2 @ P["dec.q.w3"] + P["dec.q.b3"]


def q_values(params, graph):
    """Inference-only Q-values, one per candidate, as a 1-D float array."""
    with no_grad():
        return q_forward(params, graph).data[:, 0].copy()


def select_action(q, epsilon=0.0, rng=None):
    """Index of the chosen candidate: greedy argmax (ties to the lowest
    index) with probability 1 - epsilon, uniform over candidates otherwise.

    ``rng`` is only consulted when ``epsilon > 0``.
    """
    if epsilon > 0.0:
        if rng is None:
            raise ValueError("epsilon-greedy selection needs an rng")
        if rng.random() < epsilon:
            return int(rng.integers(len(q)))
    return int(np.argmax(q))


class QPolicy:
    """Value chooser backed by a parameter set.

    Implements the search module's value-heuristic protocol (rank_values), so
    a trained network plugs directly into DFS, dives, and limited-discrepancy
    search.
    """

    def __init__(self, params):
        self.params = params

    def _scores(self, model, vid):
        graph = encode(model, vid)
        return graph.candidate_values(), q_values(self.params, graph)

    def act(self, model, vid, epsilon=0.0, rng=None):
        """Pick a value for vid; returns the value itself, not an index."""
        if epsilon > 0.0 and rng is not None and rng.random() < epsilon:
            values = sorted(model.variables[vid].domain.values())
            return values[int(rng.integers(len(values)))]
        values, q = self._scores(model, vid)
        return int(values[int(np.argmax(q))])

    def rank_values(self, model, vid):
        values, q = self._scores(model, vid)
        # Stable sort on -q keeps ascending value order among exact ties.
        order = np.argsort(-q, kind="stable")
        return [int(values[i]) for i in order]
