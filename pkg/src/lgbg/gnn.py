"""Message passing and attention pooling over one day's context graph.

Each layer updates every node simultaneously from pre-update states:

    new_i = W_x x_i + W_homo · sum_j a_ij x_j + W_het · sum_j a_ij x_j

with a separate (W_x, W_homo, W_het) triple per stream and per layer, and
edge weights normalized over each node's incoming edges, separately for the
same-stream and cross-stream kinds. A pointwise tanh follows each layer
unless `linear_layers` is set. Graph readout combines a node-attention pool
(semantic) with an edge-attention pool queried by it (structural).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .config import TrainConfig
from .embeddings import EmbeddingTable
from .errors import DimensionError
from .graphs import HETEROGENEOUS, HOMOGENEOUS, LocalContextGraph
from .streams import STREAMS


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    scale = np.sqrt(2.0 / (rows + cols))
    return rng.standard_normal((rows, cols)) * scale


class GnnParams:
    """Trainable tensors of the per-day graph network, shared by all graphs."""

    def __init__(self, config: TrainConfig, rng: np.random.Generator):
        d, de, dp = config.d, config.de, config.dp
        self.layers: list[dict[str, dict[str, Tensor]]] = []
        for _ in range(config.layers):
            layer = {}
            for stream in STREAMS:
                layer[stream] = {
                    "self": ag.parameter(glorot(rng, d, d)),
                    "homo": ag.parameter(glorot(rng, d, d)),
                    "het": ag.parameter(glorot(rng, d, d)),
                }
            self.layers.append(layer)
        self.edge_proj = ag.parameter(glorot(rng, de, 2 * d))       # W_e
        self.node_query = ag.parameter(rng.standard_normal(d) / np.sqrt(d))  # q
        self.edge_query_proj = ag.parameter(glorot(rng, de, d))     # W_beta
        self.rep_proj = ag.parameter(glorot(rng, dp, d + de))
        self.empty_day = ag.parameter(np.zeros(dp))

    def named(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            for stream in STREAMS:
                for kind, t in layer[stream].items():
                    out[f"gnn.layer{i}.{stream}.{kind}"] = t
        out["gnn.edge_proj"] = self.edge_proj
        out["gnn.node_query"] = self.node_query
        out["gnn.edge_query_proj"] = self.edge_query_proj
        out["gnn.rep_proj"] = self.rep_proj
        out["gnn.empty_day"] = self.empty_day
        return out


@dataclass
class CompiledGraph:
    """Constant structure of one graph, precomputed for fast forward passes."""

    n: int
    node_keys: list[tuple[str, str]]
    blocks: list[tuple[str, int, int]]          # contiguous stream row ranges
    homo_adj: np.ndarray | None                 # row i = normalized incoming
    het_adj: np.ndarray | None
    src_idx: np.ndarray                         # retained directed edges
    dst_idx: np.ndarray
    edge_keys: list[tuple[str, str, str, str, str]]  # (s_src, c_src, s_dst, c_dst, kind)
    homo_blocks: tuple[bool, ...] = ()          # block has incoming homo edges
    het_blocks: tuple[bool, ...] = ()

    def __post_init__(self):
        if not self.homo_blocks:
            self.homo_blocks = tuple(
                self.homo_adj is not None and bool(np.any(self.homo_adj[lo:hi]))
                for _, lo, hi in self.blocks)
        if not self.het_blocks:
            self.het_blocks = tuple(
                self.het_adj is not None and bool(np.any(self.het_adj[lo:hi]))
                for _, lo, hi in self.blocks)


def compile_graph(graph: LocalContextGraph, use_homogeneous: bool = True,
                  use_heterogeneous: bool = True) -> CompiledGraph:
    """Canonicalize node order and precompute adjacency/edge index arrays.

    Disabling a kind removes those edges from the whole forward pass
    (aggregation, edge embedding and structural pooling), which is what the
    mechanism ablations mean by switching a message passing kind off.
    """
    order = sorted(range(len(graph.nodes)),
                   key=lambda i: (graph.nodes[i].stream, graph.nodes[i].concept))
    remap = {old: new for new, old in enumerate(order)}
    nodes = [graph.nodes[i] for i in order]
    n = len(nodes)
    node_keys = [(nd.stream, nd.concept) for nd in nodes]

    blocks = []
    lo = 0
    while lo < n:
        hi = lo
        while hi < n and nodes[hi].stream == nodes[lo].stream:
            hi += 1
        blocks.append((nodes[lo].stream, lo, hi))
        lo = hi

    kept = [e for e in sorted(graph.edges, key=lambda e: (remap[e.src], remap[e.dst]))
            if (e.kind == HOMOGENEOUS and use_homogeneous)
            or (e.kind == HETEROGENEOUS and use_heterogeneous)]

    def adjacency(kind: str) -> np.ndarray | None:
        sel = [e for e in kept if e.kind == kind]
        if not sel:
            return None
        w = np.zeros((n, n))
        for e in sel:
            w[remap[e.dst], remap[e.src]] += e.weight
        totals = w.sum(axis=1, keepdims=True)
        np.divide(w, totals, out=w, where=totals > 0)
        return w

    src = np.array([remap[e.src] for e in kept], dtype=np.intp)
    dst = np.array([remap[e.dst] for e in kept], dtype=np.intp)
    edge_keys = [node_keys[s] + node_keys[t] + (e.kind,)
                 for s, t, e in zip(src, dst, kept)]
    return CompiledGraph(n=n, node_keys=node_keys, blocks=blocks,
                         homo_adj=adjacency(HOMOGENEOUS),
                         het_adj=adjacency(HETEROGENEOUS),
                         src_idx=src, dst_idx=dst, edge_keys=edge_keys)


def compiled_for(graph: LocalContextGraph, config: TrainConfig) -> CompiledGraph:
    """Per-graph cache of compile_graph keyed by the ablation flags."""
    key = (config.use_homogeneous, config.use_heterogeneous)
    cache = getattr(graph, "_compiled", None)
    if cache is None:
        cache = {}
        graph._compiled = cache
    if key not in cache:
        cache[key] = compile_graph(graph, *key)
    return cache[key]


def apply_attributes(graph: LocalContextGraph, table: EmbeddingTable) -> Tensor:
    """Initial states: each concept embedding scaled by its fraction-of-day,
    rows in canonical (stream, concept) order.

    Embeddings and attributes are fixed inputs, so the result is a constant
    with respect to every trainable tensor.
    """
    nodes = sorted(graph.nodes, key=lambda nd: (nd.stream, nd.concept))
    vectors = np.stack([table.vector(nd.concept) for nd in nodes])
    scale = np.array([nd.attribute for nd in nodes])[:, None] / 24.0
    return ag.constant(vectors * scale)


def message_passing_layer(states: Tensor, compiled: CompiledGraph,
                          layer: dict[str, dict[str, Tensor]],
                          nonlinear: bool = True) -> Tensor:
    """One simultaneous update of all node states (Tensor of shape n x d)."""
    if states.data.shape[0] != compiled.n:
        raise DimensionError("states row count differs from node count")
    homo_mix = ag.const_matmul(compiled.homo_adj, states) \
        if compiled.homo_adj is not None else None
    het_mix = ag.const_matmul(compiled.het_adj, states) \
        if compiled.het_adj is not None else None

    parts = []
    for b, (stream, lo, hi) in enumerate(compiled.blocks):
        w = layer[stream]
        new = ag.matmul_t(ag.rows(states, lo, hi), w["self"])
        if compiled.homo_blocks[b]:
            new = ag.add(new, ag.matmul_t(ag.rows(homo_mix, lo, hi), w["homo"]))
        if compiled.het_blocks[b]:
            new = ag.add(new, ag.matmul_t(ag.rows(het_mix, lo, hi), w["het"]))
        parts.append(new)
    out = parts[0] if len(parts) == 1 else ag.concat(parts, axis=0)
    return ag.tanh(out) if nonlinear else out


def edge_embeddings(states: Tensor, compiled: CompiledGraph,
                    edge_proj: Tensor) -> Tensor | None:
    """e_ij = W_e [x_src ; x_dst] for every retained directed edge."""
    if compiled.src_idx.size == 0:
        return None
    pairs = ag.concat([ag.gather_rows(states, compiled.src_idx),
                       ag.gather_rows(states, compiled.dst_idx)], axis=1)
    return ag.matmul_t(pairs, edge_proj)


def semantic_pool(states: Tensor, node_query: Tensor) -> tuple[Tensor, np.ndarray]:
    """Attention-weighted sum of node states; also returns the weights."""
    scores = ag.matmul(states, node_query)
    beta = ag.softmax(scores)
    return ag.matmul(beta, states), beta.data.copy()


def structural_pool(edge_vectors: Tensor, g_s: Tensor,
                    edge_query_proj: Tensor) -> tuple[Tensor, np.ndarray]:
    """Attention-weighted sum of edge embeddings, queried by the semantic pool."""
    key = ag.matmul(edge_query_proj, g_s)
    scores = ag.matmul(edge_vectors, key)
    beta = ag.softmax(scores)
    return ag.matmul(beta, edge_vectors), beta.data.copy()


@dataclass
class LocalGraphRep:
    """Readout of one local graph: pooled vectors plus the projected rep."""

    rep: Tensor                       # dp-dimensional, consumed by the temporal model
    g: Tensor | None                  # [g_e ; g_s] concatenation (d + de)
    g_s: Tensor | None
    g_e: Tensor | None
    node_states: Tensor | None        # final-layer states, n x d
    node_keys: list[tuple[str, str]]
    edge_keys: list[tuple[str, str, str, str, str]]
    node_attention: np.ndarray | None
    edge_attention: np.ndarray | None
    empty: bool = False


def local_graph_forward(graph: LocalContextGraph, table: EmbeddingTable,
                        params: GnnParams, config: TrainConfig) -> LocalGraphRep:
    """Full readout: attributes -> m message passing layers -> pools -> rep.

    Empty graphs (days with no events) return the learned empty-day vector so
    spans containing a silent day stay trainable.
    """
    if graph.is_empty():
        return LocalGraphRep(rep=params.empty_day, g=None, g_s=None, g_e=None,
                             node_states=None, node_keys=[], edge_keys=[],
                             node_attention=None, edge_attention=None, empty=True)
    compiled = compiled_for(graph, config)
    cache = getattr(graph, "_states0", None)
    if cache is None or cache[0] is not table:
        graph._states0 = cache = (table, apply_attributes(graph, table).data)
    states = ag.constant(cache[1])
    for layer in params.layers:
        states = message_passing_layer(states, compiled, layer,
                                       nonlinear=not config.linear_layers)

    g_s, node_att = semantic_pool(states, params.node_query)
    edge_vecs = edge_embeddings(states, compiled, params.edge_proj)
    if edge_vecs is None:
        g_e = ag.constant(np.zeros(config.de))
        edge_att = None
    else:
        g_e, edge_att = structural_pool(edge_vecs, g_s, params.edge_query_proj)
    g = ag.concat([g_e, g_s])
    rep = ag.matmul(params.rep_proj, g)
    return LocalGraphRep(rep=rep, g=g, g_s=g_s, g_e=g_e, node_states=states,
                         node_keys=compiled.node_keys, edge_keys=compiled.edge_keys,
                         node_attention=node_att, edge_attention=edge_att)
