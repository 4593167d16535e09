"""Graph network: parameters, forward pass, action selection, checkpoints."""

import numpy as np
import pytest

from helpers import build_csp
from cplearn.encoder import CON_FEATURES, TripartiteGraph, encode
from cplearn.network import (
    NetConfig,
    ParameterSet,
    QPolicy,
    parameter_shapes,
    q_forward,
    q_values,
    select_action,
)

SMALL = NetConfig(embed_dim=4, decoder_dim=4, layers=2, hidden=4)


def example_model():
    """Two binary decision vars, their sum as objective, one NotEqual."""
    m = build_csp(
        [[0, 1], [0, 1], list(range(3))],
        [("SUM_EQUALS", (0, 1, 2), (1, 1, -1, 0)), ("NOT_EQUAL", (0, 1), ())],
        2,
    )
    m.enqueue_all()
    assert m.fix_point()
    return m


def example_graph():
    return encode(example_model(), 0)


class TestConfigAndShapes:
    def test_defaults(self):
        cfg = NetConfig()
        assert (cfg.embed_dim, cfg.decoder_dim, cfg.layers, cfg.hidden) == (32, 32, 3, 32)
        assert cfg.pooling == "mean"

    def test_validation(self):
        with pytest.raises(ValueError):
            NetConfig(pooling="max")
        with pytest.raises(ValueError):
            NetConfig(embed_dim=0)
        with pytest.raises(ValueError):
            NetConfig(layers=0)

    def test_shape_table(self):
        d, l, h = SMALL.embed_dim, SMALL.decoder_dim, SMALL.hidden
        shapes = parameter_shapes(SMALL)
        assert shapes["embed.var"] == (4, d)
        assert shapes["embed.con"] == (CON_FEATURES, d)
        assert shapes["embed.val"] == (1, d)
        for k in range(SMALL.layers):
            assert shapes[f"layer{k}.var.proj"] == (4 * d, d)
            assert shapes[f"layer{k}.con.proj"] == (3 * d, d)
            assert shapes[f"layer{k}.val.proj"] == (3 * d, d)
            assert shapes[f"layer{k}.var.con_agg"] == (d, d)
        assert shapes["dec.var.w1"] == (d, h)
        assert shapes["dec.var.w2"] == (h, l)
        assert shapes["dec.q.w1"] == (2 * l, h)
        assert shapes["dec.q.w3"] == (h, 1)

    def test_no_bias_outside_decoder(self):
        for name in parameter_shapes(SMALL):
            base = name.rsplit(".", 1)[-1]
            if base.startswith("b"):
                assert name.startswith("dec."), name


class TestParameterSet:
    def test_init_biases_zero_weights_not(self):
        ps = ParameterSet.init(SMALL, seed=0)
        for name, t in ps.tensors.items():
            if name.rsplit(".", 1)[-1].startswith("b"):
                assert not t.data.any(), name
            else:
                assert t.data.any(), name
            assert t.requires_grad

    def test_init_deterministic(self):
        a = ParameterSet.init(SMALL, seed=7)
        b = ParameterSet.init(SMALL, seed=7)
        c = ParameterSet.init(SMALL, seed=8)
        assert all(np.array_equal(a.tensors[k].data, b.tensors[k].data) for k in a.tensors)
        assert any(not np.array_equal(a.tensors[k].data, c.tensors[k].data) for k in a.tensors)

    def test_copy_is_deep(self):
        a = ParameterSet.init(SMALL, seed=0)
        b = a.copy()
        b.tensors["embed.var"].data[0, 0] += 1.0
        assert a.tensors["embed.var"].data[0, 0] != b.tensors["embed.var"].data[0, 0]

    def test_load_from_syncs_values(self):
        a = ParameterSet.init(SMALL, seed=0)
        b = ParameterSet.init(SMALL, seed=1)
        b.load_from(a)
        for k in a.tensors:
            assert np.array_equal(a.tensors[k].data, b.tensors[k].data)

    def test_load_from_rejects_config_mismatch(self):
        a = ParameterSet.init(SMALL, seed=0)
        other = ParameterSet.init(NetConfig(embed_dim=8, decoder_dim=4, layers=2, hidden=4), 0)
        with pytest.raises(ValueError):
            a.load_from(other)

    def test_checkpoint_round_trip(self, tmp_path):
        path = tmp_path / "net.npz"
        a = ParameterSet.init(SMALL, seed=3)
        a.save(path)
        b = ParameterSet.load(path)
        assert b.config == SMALL
        for k in a.tensors:
            assert np.array_equal(a.tensors[k].data, b.tensors[k].data)

    def test_checkpoint_rejects_tampered_shapes(self, tmp_path):
        import io, json

        path = tmp_path / "net.npz"
        ParameterSet.init(SMALL, seed=0).save(path)
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
        arrays["embed.var"] = np.zeros((2, 2))
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
        with pytest.raises(ValueError):
            ParameterSet.load(path)

    def test_checkpoint_rejects_other_formats(self, tmp_path):
        path = tmp_path / "net.npz"
        np.savez(path, junk=np.zeros(3))
        with pytest.raises(ValueError):
            ParameterSet.load(path)


class TestForward:
    def test_output_length_matches_candidates(self):
        g = example_graph()
        ps = ParameterSet.init(SMALL, seed=0)
        out = q_forward(ps, g)
        assert out.shape == (len(g.candidate_val_indices), 1)
        q = q_values(ps, g)
        assert q.shape == (2,)
        assert np.array_equal(q, out.data[:, 0])

    def test_single_candidate(self):
        m = build_csp([[0, 1], [5, 6, 7]], [], 0)
        m.variables[1].domain.remove(5)
        g = encode(m, 1)
        assert q_values(ParameterSet.init(SMALL, seed=0), g).shape == (2,)

    def test_deterministic_forward(self):
        g = example_graph()
        ps = ParameterSet.init(SMALL, seed=0)
        assert np.array_equal(q_values(ps, g), q_values(ps, g))

    def test_duplicate_value_embeddings_tie(self):
        # Hand-built graph with two identical value nodes on one variable.
        g = TripartiteGraph(
            np.array([[2.0, 2.0, 0.0, 1.0]]),
            np.zeros((0, CON_FEATURES)),
            np.array([[7.0], [7.0]]),
            np.zeros((2, 0), dtype=np.int64),
            np.array([[0, 1], [0, 0]], dtype=np.int64),
            np.array([7, 7], dtype=np.int64),
            0,
            np.array([0, 1], dtype=np.int64),
        )
        q = q_values(ParameterSet.init(SMALL, seed=2), g)
        assert q[0] == q[1]

    def test_gradients_reach_every_live_parameter(self):
        g = example_graph()
        ps = ParameterSet.init(SMALL, seed=0)
        q_forward(ps, g).sum().backward()
        dead_prefix = f"layer{SMALL.layers - 1}.con."
        for name, t in ps.tensors.items():
            if name.startswith(dead_prefix):
                # Final constraint embeddings feed nothing downstream.
                assert t.grad is None, name
                continue
            assert t.grad is not None, name
            assert np.isfinite(t.grad).all(), name
            assert np.abs(t.grad).sum() > 0, name

    def test_pooling_and_slope_are_live_settings(self):
        g = example_graph()
        mean_net = ParameterSet.init(SMALL, seed=0)
        sum_cfg = NetConfig(embed_dim=4, decoder_dim=4, layers=2, hidden=4, pooling="sum")
        sum_net = ParameterSet.init(sum_cfg, seed=0)
        assert not np.allclose(q_values(mean_net, g), q_values(sum_net, g))
        steep_cfg = NetConfig(embed_dim=4, decoder_dim=4, layers=2, hidden=4, leaky_slope=0.5)
        steep_net = ParameterSet.init(steep_cfg, seed=0)
        assert not np.allclose(q_values(mean_net, g), q_values(steep_net, g))

    def test_value_node_permutation_equivariance(self):
        g = example_graph()
        ps = ParameterSet.init(SMALL, seed=1)
        base = q_values(ps, g)
        perm = np.array([2, 0, 1])  # old index -> new index
        inv = np.argsort(perm)
        permuted = TripartiteGraph(
            g.var_features,
            g.con_features,
            g.val_features[inv],
            g.var_con_edges,
            np.vstack([perm[g.val_var_edges[0]], g.val_var_edges[1]]),
            g.node_values[inv],
            g.branch_var,
            perm[g.candidate_val_indices],
        )
        assert np.allclose(q_values(ps, permuted), base, atol=1e-12)

    def test_constraint_node_permutation_equivariance(self):
        g = example_graph()
        ps = ParameterSet.init(SMALL, seed=1)
        base = q_values(ps, g)
        perm = np.array([1, 0])
        inv = np.argsort(perm)
        permuted = TripartiteGraph(
            g.var_features,
            g.con_features[inv],
            g.val_features,
            np.vstack([g.var_con_edges[0], perm[g.var_con_edges[1]]]),
            g.val_var_edges,
            g.node_values,
            g.branch_var,
            g.candidate_val_indices,
        )
        assert np.allclose(q_values(ps, permuted), base, atol=1e-12)

    def test_isolated_value_node_is_inert(self):
        g = example_graph()
        ps = ParameterSet.init(SMALL, seed=4)
        base = q_values(ps, g)
        # Append an edgeless duplicate of an in-range value; global min-max
        # scaling and all neighborhoods are unchanged.
        augmented = TripartiteGraph(
            g.var_features,
            g.con_features,
            np.vstack([g.val_features, [[1.0]]]),
            g.var_con_edges,
            g.val_var_edges,
            np.concatenate([g.node_values, [1]]),
            g.branch_var,
            g.candidate_val_indices,
        )
        assert np.array_equal(q_values(ps, augmented), base)


class TestSelectAction:
    def test_greedy_argmax(self):
        assert select_action(np.array([0.1, 0.9, 0.3]), epsilon=0.0) == 1

    def test_greedy_tie_lowest_index(self):
        assert select_action(np.array([0.5, 0.5]), epsilon=0.0) == 0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            select_action(np.array([]), epsilon=0.0)

    def test_epsilon_bounds_checked(self):
        with pytest.raises(ValueError):
            select_action(np.array([1.0]), epsilon=1.5)

    def test_full_exploration_uniform(self):
        import scipy.stats

        rng = np.random.default_rng(0)
        q = np.array([9.0, 1.0, 5.0, 2.0])
        counts = np.zeros(4)
        for _ in range(100_000):
            counts[select_action(q, epsilon=1.0, rng=rng)] += 1
        stat, p = scipy.stats.chisquare(counts)
        assert p > 1e-3

    def test_seeded_exploration_reproducible(self):
        q = np.array([0.0, 1.0, 2.0])
        a = [select_action(q, 0.7, np.random.default_rng(5)) for _ in range(50)]
        b = [select_action(q, 0.7, np.random.default_rng(5)) for _ in range(50)]
        assert a == b


class TestQPolicy:
    def test_rank_matches_q_order(self):
        m = example_model()
        ps = ParameterSet.init(SMALL, seed=6)
        policy = QPolicy(ps)
        g = encode(m, 0)
        q = q_values(ps, g)
        values = g.candidate_values()
        ranked = policy.rank_values(m, 0)
        assert sorted(ranked) == sorted(values.tolist())
        got_q = [q[values.tolist().index(v)] for v in ranked]
        assert got_q == sorted(got_q, reverse=True)

    def test_act_returns_top_value(self):
        m = example_model()
        ps = ParameterSet.init(SMALL, seed=6)
        policy = QPolicy(ps)
        assert policy.act(m, 0) == policy.rank_values(m, 0)[0]

    def test_policy_drives_greedy_dive(self):
        from cplearn.search import greedy_dive

        res = greedy_dive(example_model(), QPolicy(ParameterSet.init(SMALL, seed=0)))
        assert res.best_objective == 1  # x != y forces sum exactly 1
