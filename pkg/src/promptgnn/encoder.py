"""GIN-style message-passing encoder with prompt-aware forward passes.

The encoder is GIN-0: each layer computes relu(MLP(H + A @ H)) with a
two-layer perceptron (relu between and after). Prompts are row vectors
multiplied elementwise into the embedding matrix of one chosen layer; the
layer-wise variant runs one prompted pass per layer and fuses the outputs
with learnable scalar coefficients.

Graphs are encoded through :class:`GraphBatch`, a disjoint union with a CSR
adjacency, so a whole collection moves through numpy in a few matrix products
per layer. Expression builders (``*_expr``) return autodiff graphs for
training; the plain functions evaluate them for direct use.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .errors import ShapeError
from .graphs import Graph, Subgraph

CHECKPOINT_MAGIC = b"PGNN"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GraphBatch:
    """Disjoint union of graphs: block features and block-diagonal adjacency."""

    graphs: tuple[Graph, ...]
    features: np.ndarray          # (N, d) stacked node features
    adjacency: sp.csr_matrix      # (N, N) symmetric 0/1
    node_offset: np.ndarray       # (len(graphs)+1,) cumulative node counts
    node_graph: np.ndarray        # (N,) graph position per node

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    def global_id(self, graph_pos: int, node: int) -> int:
        return int(self.node_offset[graph_pos]) + int(node)

    def global_ids(self, graph_pos: int, nodes) -> np.ndarray:
        return np.asarray(nodes, dtype=np.int64) + int(self.node_offset[graph_pos])


def build_batch(graphs: Sequence[Graph]) -> GraphBatch:
    graphs = tuple(graphs)
    counts = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    total = int(offsets[-1])
    feats = np.concatenate([g.features for g in graphs], axis=0) \
        if graphs else np.zeros((0, 0))
    rows, cols = [], []
    for off, g in zip(offsets[:-1], graphs):
        if g.num_edges:
            e = g.edges + off
            rows.append(e[:, 0]); cols.append(e[:, 1])
            rows.append(e[:, 1]); cols.append(e[:, 0])
    if rows:
        r = np.concatenate(rows); c = np.concatenate(cols)
    else:
        r = c = np.zeros(0, dtype=np.int64)
    adj = sp.csr_matrix((np.ones(r.size), (r, c)), shape=(total, total))
    node_graph = np.repeat(np.arange(len(graphs)), counts)
    return GraphBatch(graphs=graphs, features=feats, adjacency=adj,
                      node_offset=offsets, node_graph=node_graph)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GinLayer:
    w1: ad.Parameter
    b1: ad.Parameter
    w2: ad.Parameter
    b2: ad.Parameter

    def leaves(self) -> list[ad.Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]


@dataclass(frozen=True)
class EncoderParams:
    """Per-layer GIN weights; layer 1 maps input_dim -> hidden_dim."""

    input_dim: int
    hidden_dim: int
    layers: tuple[GinLayer, ...]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def parameters(self) -> list[ad.Parameter]:
        return [p for layer in self.layers for p in layer.leaves()]

    def state_arrays(self) -> list[np.ndarray]:
        return [p.value for p in self.parameters()]


def init_encoder_params(input_dim: int, hidden_dim: int = 32,
                        num_layers: int = 3, seed: int = 0) -> EncoderParams:
    """Glorot-uniform weights, zero biases, seeded."""
    rng = np.random.Generator(np.random.PCG64(seed))
    layers = []
    in_dim = input_dim
    for l in range(1, num_layers + 1):
        a1 = np.sqrt(6.0 / (in_dim + hidden_dim))
        a2 = np.sqrt(6.0 / (hidden_dim + hidden_dim))
        layers.append(GinLayer(
            w1=ad.Parameter(rng.uniform(-a1, a1, size=(in_dim, hidden_dim)),
                            name=f"layer{l}.w1"),
            b1=ad.Parameter(np.zeros(hidden_dim), name=f"layer{l}.b1"),
            w2=ad.Parameter(rng.uniform(-a2, a2, size=(hidden_dim, hidden_dim)),
                            name=f"layer{l}.w2"),
            b2=ad.Parameter(np.zeros(hidden_dim), name=f"layer{l}.b2"),
        ))
        in_dim = hidden_dim
    return EncoderParams(input_dim=input_dim, hidden_dim=hidden_dim,
                         layers=tuple(layers))


# ---------------------------------------------------------------------------
# forward passes (expression builders)
# ---------------------------------------------------------------------------

def _check_prompt_width(params: EncoderParams, prompt_layer: int, width: int) -> None:
    expected = params.input_dim if prompt_layer == 0 else params.hidden_dim
    if width != expected:
        raise ShapeError(
            f"prompt at layer {prompt_layer} must have width {expected}, got {width}")


def encode_expr(batch: GraphBatch, params: EncoderParams,
                prompt: Optional[ad.Expr] = None,
                prompt_layer: Optional[int] = None) -> list[ad.Expr]:
    """Forward pass over a batch; returns [H0, ..., HL] expressions.

    When ``prompt`` is given, layer ``prompt_layer``'s embedding matrix is
    replaced by its row-wise product with the prompt before feeding the next
    layer (the final output itself when prompt_layer == L). The op sequence
    is otherwise identical to the unprompted pass.
    """
    if batch.features.shape[1] != params.input_dim:
        raise ShapeError(
            f"feature width {batch.features.shape[1]} != encoder input width "
            f"{params.input_dim}")
    if prompt is not None:
        if not 0 <= prompt_layer <= params.num_layers:
            raise ShapeError(f"prompt layer {prompt_layer} outside [0, {params.num_layers}]")
        _check_prompt_width(params, prompt_layer, prompt.shape[-1])

    h: ad.Expr = ad.Constant(batch.features)
    if prompt is not None and prompt_layer == 0:
        h = ad.mul(h, prompt)
    hs = [h]
    for l, layer in enumerate(params.layers, start=1):
        agg = ad.add(h, ad.spmm(batch.adjacency, h))      # (1+eps) H + A H, eps=0
        z = ad.relu(ad.add(ad.matmul(agg, layer.w1), layer.b1))
        h = ad.relu(ad.add(ad.matmul(z, layer.w2), layer.b2))
        if prompt is not None and prompt_layer == l:
            h = ad.mul(h, prompt)
        hs.append(h)
    return hs


def fused_expr(batch: GraphBatch, params: EncoderParams,
               prompts: Sequence[ad.Expr], weights: Sequence[ad.Expr]) -> ad.Expr:
    """Weighted sum of the L+1 single-layer-prompted forward passes."""
    if len(prompts) != params.num_layers + 1 or len(weights) != len(prompts):
        raise ShapeError(
            f"need {params.num_layers + 1} prompts and weights, got "
            f"{len(prompts)}/{len(weights)}")
    outs = [encode_expr(batch, params, prompt=p, prompt_layer=l)[-1]
            for l, p in enumerate(prompts)]
    return ad.weighted_sum(outs, weights)


def subgraph_readout_expr(h: ad.Expr, memberships: Sequence[np.ndarray],
                          prompt: Optional[ad.Expr] = None) -> ad.Expr:
    """Sum-pool rows of ``h`` for many subgraphs at once -> (len, d) rows.

    ``memberships[i]`` holds the row indices of subgraph i; with a prompt the
    rows are reweighted elementwise before pooling.
    """
    sizes = [np.asarray(m).size for m in memberships]
    members = np.concatenate([np.asarray(m, dtype=np.int64) for m in memberships]) \
        if memberships else np.zeros(0, dtype=np.int64)
    owners = np.repeat(np.arange(len(memberships)), sizes)
    rows = ad.gather_rows(h, members)
    if prompt is not None:
        rows = ad.mul(rows, prompt)
    return ad.segment_sum(rows, owners, len(memberships))


# ---------------------------------------------------------------------------
# direct (evaluated) surface
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmbeddingMatrix:
    """One embedding row per node of an encoded graph, tagged with its layer."""

    rows: np.ndarray
    layer: int


def encode(g: Graph, params: EncoderParams) -> EmbeddingMatrix:
    """Final-layer node embeddings of a single graph."""
    batch = build_batch([g])
    return EmbeddingMatrix(rows=ad.evaluate(encode_expr(batch, params)[-1]),
                           layer=params.num_layers)


def encode_layers(g: Graph, params: EncoderParams) -> list[EmbeddingMatrix]:
    """All intermediate embedding matrices H0..HL."""
    batch = build_batch([g])
    return [EmbeddingMatrix(rows=ad.evaluate(h), layer=l)
            for l, h in enumerate(encode_expr(batch, params))]


def encode_with_layer_prompt(g: Graph, params: EncoderParams,
                             prompt: np.ndarray, layer: int) -> EmbeddingMatrix:
    batch = build_batch([g])
    p = ad.Constant(prompt)
    hs = encode_expr(batch, params, prompt=p, prompt_layer=layer)
    return EmbeddingMatrix(rows=ad.evaluate(hs[-1]), layer=params.num_layers)


def fused_prompt_embeddings(g: Graph, params: EncoderParams,
                            prompts: Sequence[np.ndarray],
                            weights: Sequence[float]) -> EmbeddingMatrix:
    batch = build_batch([g])
    p_exprs = [ad.Constant(p) for p in prompts]
    w_exprs = [ad.Constant(np.asarray(float(w))) for w in weights]
    out = fused_expr(batch, params, p_exprs, w_exprs)
    return EmbeddingMatrix(rows=ad.evaluate(out), layer=params.num_layers)


def _subgraph_rows(h: EmbeddingMatrix, s: Subgraph) -> np.ndarray:
    if s.nodes.max() >= h.rows.shape[0]:
        raise IndexError("subgraph node outside embedding matrix")
    return h.rows[s.nodes]


def readout(h: EmbeddingMatrix, s: Subgraph) -> np.ndarray:
    """Sum pooling of the subgraph's node embeddings."""
    return _subgraph_rows(h, s).sum(axis=0)


def prompted_readout(h: EmbeddingMatrix, s: Subgraph, prompt: np.ndarray) -> np.ndarray:
    """Feature-weighted sum pooling: sum of prompt * row over subgraph nodes."""
    prompt = np.asarray(prompt, dtype=np.float64)
    if prompt.shape != (h.rows.shape[1],):
        raise ShapeError(
            f"prompt width {prompt.shape} does not match embedding width "
            f"{h.rows.shape[1]}")
    return (prompt * _subgraph_rows(h, s)).sum(axis=0)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
# Layout (little-endian): magic "PGNN", u32 version, u32 num_layers,
# u32 input_dim, u32 hidden_dim, then per layer the arrays w1, b1, w2, b2 as
# row-major float64.

def save_checkpoint(params: EncoderParams, path) -> None:
    buf = [CHECKPOINT_MAGIC,
           struct.pack("<III I", CHECKPOINT_VERSION, params.num_layers,
                       params.input_dim, params.hidden_dim)]
    for layer in params.layers:
        for p in layer.leaves():
            buf.append(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(buf))


def load_checkpoint(path) -> EncoderParams:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an encoder checkpoint")
    version, num_layers, input_dim, hidden_dim = struct.unpack_from("<III I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 4 + struct.calcsize("<III I")

    def take(shape):
        nonlocal off
        n = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape)
        off += n * 8
        return arr.astype(np.float64)

    layers = []
    in_dim = input_dim
    for l in range(1, num_layers + 1):
        layers.append(GinLayer(
            w1=ad.Parameter(take((in_dim, hidden_dim)), name=f"layer{l}.w1"),
            b1=ad.Parameter(take((hidden_dim,)), name=f"layer{l}.b1"),
            w2=ad.Parameter(take((hidden_dim, hidden_dim)), name=f"layer{l}.w2"),
            b2=ad.Parameter(take((hidden_dim,)), name=f"layer{l}.b2"),
        ))
        in_dim = hidden_dim
    return EncoderParams(input_dim=input_dim, hidden_dim=hidden_dim,
                         layers=tuple(layers))
