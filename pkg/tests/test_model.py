import json
from pathlib import Path

import numpy as np

from lgbg import autograd as ag
from lgbg.config import TrainConfig
from lgbg.gnn import (GnnParams, apply_attributes, compile_graph, edge_embeddings,
                      local_graph_forward, message_passing_layer, semantic_pool,
                      structural_pool)
from lgbg.graphs import (HETEROGENEOUS, HOMOGENEOUS, GraphEdge, LocalContextGraph,
                         build_local_graph)
from lgbg.streams import ACTIVITY, AUDIO, LOCATION, slice_day

from conftest import ev

DATA = Path(__file__).parent / "data"


def mixed_graph(vocab, table):
    """5-node 3-stream graph with both edge kinds and varied weights."""
    streams = {
        ACTIVITY: [ev(ACTIVITY, "walking", 0, 3600), ev(ACTIVITY, "stationary", 3600, 9000),
                   ev(ACTIVITY, "walking", 9000, 12600)],
        AUDIO: [ev(AUDIO, "voice", 0, 5000), ev(AUDIO, "silence", 5400, 12000)],
        LOCATION: [ev(LOCATION, "dorm", 0, 8000), ev(LOCATION, "library", 8200, 12600)],
    }
    return build_local_graph(slice_day(streams, 0), vocab, table)


def dense_layer_oracle(states, graph, layer, nonlinear):
    """Straight per-node evaluation of the update equations."""
    nodes = sorted(range(len(graph.nodes)),
                   key=lambda i: (graph.nodes[i].stream, graph.nodes[i].concept))
    remap = {old: new for new, old in enumerate(nodes)}
    n = len(nodes)
    incoming = {HOMOGENEOUS: [[] for _ in range(n)],
                HETEROGENEOUS: [[] for _ in range(n)]}
    for e in graph.edges:
        incoming[e.kind][remap[e.dst]].append((remap[e.src], e.weight))
    out = np.zeros_like(states)
    for i in range(n):
        stream = graph.nodes[nodes[i]].stream
        w = layer[stream]
        acc = w["self"].data @ states[i]
        for kind, mat in ((HOMOGENEOUS, "homo"), (HETEROGENEOUS, "het")):
            edges_in = incoming[kind][i]
            if not edges_in:
                continue
            total = sum(wt for _, wt in edges_in)
            agg = np.zeros(states.shape[1])
            for j, wt in edges_in:
                agg += (wt / total) * states[j]
            acc = acc + w[mat].data @ agg
        out[i] = acc
    return np.tanh(out) if nonlinear else out


# ---------------------------------------------------------------------------
# attribute scaling


def test_attribute_scaling_identity_at_full_day(vocab, small_table):
    streams = {ACTIVITY: [ev(ACTIVITY, "running", 0, 86400)]}
    graph = build_local_graph(slice_day(streams, 0), vocab, small_table)
    states = apply_attributes(graph, small_table)
    assert np.allclose(states.data[0], small_table.vector("running"), atol=1e-15)


def test_attribute_scaling_ratio(vocab, small_table):
    graph = mixed_graph(vocab, small_table)
    states = apply_attributes(graph, small_table)
    nodes = sorted(graph.nodes, key=lambda n: (n.stream, n.concept))
    for row, node in zip(states.data, nodes):
        ratio = row / small_table.vector(node.concept)
        assert np.allclose(ratio, node.attribute / 24.0, atol=1e-12)


# ---------------------------------------------------------------------------
# message passing


def make_params(config, seed=0):
    return GnnParams(config, np.random.default_rng(seed))


def test_isolated_node_gets_self_term_only(vocab, small_table, small_config):
    streams = {ACTIVITY: [ev(ACTIVITY, "walking", 0, 7200)]}
    graph = build_local_graph(slice_day(streams, 0), vocab, small_table)
    params = make_params(small_config)
    states = apply_attributes(graph, small_table)
    compiled = compile_graph(graph)
    out = message_passing_layer(states, compiled, params.layers[0], nonlinear=False)
    expected = params.layers[0][ACTIVITY]["self"].data @ states.data[0]
    assert np.allclose(out.data[0], expected, atol=1e-12)


def test_single_edge_alpha_is_one_regardless_of_weight(vocab, small_table, small_config):
    params = make_params(small_config)
    results = []
    for weight in (1, 7):
        graph = LocalContextGraph(day_index=0)
        base = build_local_graph(slice_day(
            {AUDIO: [ev(AUDIO, "voice", 0, 3600), ev(AUDIO, "silence", 3600, 7200)]}, 0),
            vocab, small_table)
        graph.nodes = base.nodes
        graph.edges = [GraphEdge(src=e.src, dst=e.dst, kind=e.kind, weight=weight)
                       for e in base.edges]
        states = apply_attributes(graph, small_table)
        out = message_passing_layer(states, compile_graph(graph),
                                    params.layers[0], nonlinear=False)
        results.append(out.data.copy())
    assert np.array_equal(results[0], results[1])


def test_message_passing_matches_dense_oracle(vocab, small_table, small_config):
    graph = mixed_graph(vocab, small_table)
    params = make_params(small_config, seed=5)
    states = apply_attributes(graph, small_table)
    compiled = compile_graph(graph)
    for nonlinear in (False, True):
        got = message_passing_layer(states, compiled, params.layers[0], nonlinear)
        want = dense_layer_oracle(states.data, graph, params.layers[0], nonlinear)
        assert np.allclose(got.data, want, atol=1e-12)


def test_two_layers_match_dense_oracle(vocab, small_table, small_config):
    graph = mixed_graph(vocab, small_table)
    params = make_params(small_config, seed=6)
    states = apply_attributes(graph, small_table)
    compiled = compile_graph(graph)
    got = states
    want = states.data.copy()
    for layer in params.layers:
        got = message_passing_layer(got, compiled, layer, nonlinear=True)
        want = dense_layer_oracle(want, graph, layer, nonlinear=True)
    assert np.allclose(got.data, want, atol=1e-12)


# ---------------------------------------------------------------------------
# edge embeddings


def test_edge_projection_picks_first_half(vocab, small_table, small_config):
    graph = mixed_graph(vocab, small_table)
    compiled = compile_graph(graph)
    d = small_config.d
    w = ag.constant(np.hstack([np.eye(d), np.zeros((d, d))]))
    states = apply_attributes(graph, small_table)
    vecs = edge_embeddings(states, compiled, w)
    assert np.allclose(vecs.data, states.data[compiled.src_idx], atol=1e-15)


def test_zero_states_zero_edges(vocab, small_table, small_config):
    graph = mixed_graph(vocab, small_table)
    compiled = compile_graph(graph)
    params = make_params(small_config)
    states = ag.constant(np.zeros((compiled.n, small_config.d)))
    vecs = edge_embeddings(states, compiled, params.edge_proj)
    assert np.array_equal(vecs.data, np.zeros_like(vecs.data))


def test_edge_embeddings_are_direction_sensitive(vocab, small_table, small_config):
    graph = mixed_graph(vocab, small_table)
    compiled = compile_graph(graph)
    params = make_params(small_config, seed=9)
    states = apply_attributes(graph, small_table)
    vecs = edge_embeddings(states, compiled, params.edge_proj)
    pairs = {(int(s), int(t)): v for s, t, v in
             zip(compiled.src_idx, compiled.dst_idx, vecs.data)}
    flipped = [(k, (k[1], k[0])) for k in pairs if (k[1], k[0]) in pairs and k[0] < k[1]]
    assert flipped
    assert any(not np.allclose(pairs[a], pairs[b]) for a, b in flipped)


# ---------------------------------------------------------------------------
# pooling


def test_semantic_pool_single_node():
    state = np.array([[1.0, -2.0, 0.5]])
    g_s, beta = semantic_pool(ag.constant(state), ag.constant([0.3, 0.1, -0.2]))
    assert np.array_equal(g_s.data, state[0])
    assert beta.tolist() == [1.0]


def test_semantic_pool_identical_states_uniform():
    state = np.tile([0.5, 1.0], (4, 1))
    g_s, beta = semantic_pool(ag.constant(state), ag.constant([1.0, 2.0]))
    assert np.allclose(beta, 0.25, atol=1e-15)
    assert np.allclose(g_s.data, [0.5, 1.0], atol=1e-15)


def test_semantic_pool_matches_two_pass_oracle():
    rng = np.random.default_rng(21)
    states = rng.uniform(-2, 2, (6, 5))
    q = rng.uniform(-1, 1, 5)
    g_s, beta = semantic_pool(ag.constant(states), ag.constant(q))
    scores = states @ q
    w = np.exp(scores - scores.max())
    w /= w.sum()
    assert np.allclose(beta, w, atol=1e-12)
    assert np.allclose(g_s.data, w @ states, atol=1e-12)
    assert abs(beta.sum() - 1.0) <= 1e-12


def test_structural_pool_single_edge():
    vec = np.array([[0.3, -0.7]])
    g_e, beta = structural_pool(ag.constant(vec), ag.constant([1.0, 2.0, 3.0]),
                                ag.constant(np.ones((2, 3))))
    assert np.array_equal(g_e.data, vec[0])
    assert beta.tolist() == [1.0]


def test_structural_pool_identical_edges():
    vec = np.tile([0.2, 0.9], (5, 1))
    g_e, beta = structural_pool(ag.constant(vec), ag.constant([0.5, 0.5]),
                                ag.constant(np.eye(2)))
    assert np.allclose(beta, 0.2, atol=1e-15)
    assert np.allclose(g_e.data, [0.2, 0.9], atol=1e-15)


def test_structural_pool_convex_hull_bounds():
    rng = np.random.default_rng(22)
    vectors = rng.uniform(-3, 3, (7, 4))
    g_e, beta = structural_pool(ag.constant(vectors), ag.constant(rng.uniform(-1, 1, 3)),
                                ag.constant(rng.uniform(-1, 1, (4, 3))))
    assert abs(beta.sum() - 1.0) <= 1e-12
    assert np.all(g_e.data >= vectors.min(axis=0) - 1e-12)
    assert np.all(g_e.data <= vectors.max(axis=0) + 1e-12)


# ---------------------------------------------------------------------------
# full local forward


def test_zero_layers_pools_raw_scaled_embeddings(vocab, small_table):
    config = TrainConfig(d=8, de=6, dp=10, layers=0, span=3, seed=3)
    graph = mixed_graph(vocab, small_table)
    params = make_params(config, seed=4)
    rep = local_graph_forward(graph, small_table, params, config)
    states = apply_attributes(graph, small_table)
    g_s, _ = semantic_pool(states, params.node_query)
    assert np.allclose(rep.g_s.data, g_s.data, atol=1e-15)


def test_empty_graph_uses_empty_day_vector(vocab, small_table, small_config):
    graph = LocalContextGraph(day_index=0)
    params = make_params(small_config)
    rep = local_graph_forward(graph, small_table, params, small_config)
    assert rep.empty
    assert rep.rep is params.empty_day


def test_edgeless_graph_zero_structural(vocab, small_table, small_config):
    streams = {ACTIVITY: [ev(ACTIVITY, "walking", 0, 7200)]}
    graph = build_local_graph(slice_day(streams, 0), vocab, small_table)
    params = make_params(small_config)
    rep = local_graph_forward(graph, small_table, params, small_config)
    assert np.array_equal(rep.g_e.data, np.zeros(small_config.de))
    assert rep.edge_attention is None


def test_node_permutation_invariance_bitwise(vocab, small_table, small_config):
    graph = mixed_graph(vocab, small_table)
    params = make_params(small_config, seed=8)
    rep1 = local_graph_forward(graph, small_table, params, small_config)

    rng = np.random.default_rng(0)
    perm = rng.permutation(len(graph.nodes))
    inverse = np.argsort(perm)
    shuffled = LocalContextGraph(
        day_index=graph.day_index,
        nodes=[graph.nodes[i] for i in perm],
        edges=[GraphEdge(src=int(inverse[e.src]), dst=int(inverse[e.dst]),
                         kind=e.kind, weight=e.weight) for e in graph.edges])
    rep2 = local_graph_forward(shuffled, small_table, params, small_config)
    assert np.array_equal(rep1.g_s.data, rep2.g_s.data)
    assert np.array_equal(rep1.g_e.data, rep2.g_e.data)
    assert np.array_equal(rep1.rep.data, rep2.rep.data)


def test_edge_weight_common_scaling_invariance(vocab, small_table, small_config):
    graph = mixed_graph(vocab, small_table)
    params = make_params(small_config, seed=8)
    rep1 = local_graph_forward(graph, small_table, params, small_config)
    scaled = LocalContextGraph(
        day_index=graph.day_index, nodes=list(graph.nodes),
        edges=[GraphEdge(src=e.src, dst=e.dst, kind=e.kind, weight=3 * e.weight)
               for e in graph.edges])
    rep2 = local_graph_forward(scaled, small_table, params, small_config)
    assert np.array_equal(rep1.rep.data, rep2.rep.data)


def test_attention_weights_sum_to_one(vocab, small_table, small_config):
    graph = mixed_graph(vocab, small_table)
    params = make_params(small_config, seed=8)
    rep = local_graph_forward(graph, small_table, params, small_config)
    assert abs(rep.node_attention.sum() - 1.0) <= 1e-12
    assert abs(rep.edge_attention.sum() - 1.0) <= 1e-12


def full_forward_oracle(graph, table, params, config):
    """Independent straight-line evaluation of the whole local readout."""
    nodes = sorted(graph.nodes, key=lambda n: (n.stream, n.concept))
    states = np.stack([table.vector(n.concept) * (n.attribute / 24.0) for n in nodes])
    for layer in params.layers:
        states = dense_layer_oracle(states, graph, layer,
                                    nonlinear=not config.linear_layers)
    scores = states @ params.node_query.data
    beta = np.exp(scores - scores.max())
    beta /= beta.sum()
    g_s = beta @ states

    order = sorted(range(len(graph.nodes)),
                   key=lambda i: (graph.nodes[i].stream, graph.nodes[i].concept))
    remap = {old: new for new, old in enumerate(order)}
    edges = sorted(graph.edges, key=lambda e: (remap[e.src], remap[e.dst]))
    if edges:
        vecs = np.stack([params.edge_proj.data @ np.concatenate(
            [states[remap[e.src]], states[remap[e.dst]]]) for e in edges])
        key = params.edge_query_proj.data @ g_s
        es = vecs @ key
        be = np.exp(es - es.max())
        be /= be.sum()
        g_e = be @ vecs
    else:
        g_e = np.zeros(config.de)
    return params.rep_proj.data @ np.concatenate([g_e, g_s])


def test_full_forward_matches_oracle_and_golden(vocab, small_table, small_config):
    graph = mixed_graph(vocab, small_table)
    params = make_params(small_config, seed=12)
    rep = local_graph_forward(graph, small_table, params, small_config)
    want = full_forward_oracle(graph, small_table, params, small_config)
    assert np.allclose(rep.rep.data, want, atol=1e-12)

    golden = json.loads((DATA / "golden_forward.json").read_text())
    assert np.allclose(rep.rep.data, golden["rep"], atol=1e-9)
