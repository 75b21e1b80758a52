"""Graph attention convolution with edge features.

Per head ``h`` and edge ``j -> i``::

    e_ij  = LeakyReLU_0.2(a_dst . W h_i + a_src . W h_j + a_edge . U x_ij)
    alpha = softmax of e_ij over the in-neighbourhood of i (self-loop included)
    out_i = sum_j alpha_ij W h_j

Heads are concatenated or averaged, then a bias is added. Self-loops carry
zero edge features, so their edge term vanishes.
"""
from dataclasses import dataclass

import numpy as np

from ..errors import GraphError
from .functional import LEAKY_SLOPE


@dataclass(frozen=True)
class GraphBatch:
    """Directed edges (with self-loops) of one or more disjoint graphs.

    Edges are sorted by destination; ``dst_ptr``/``src_ptr`` index the
    segment boundaries used for softmax and scatter-add reductions.
    """

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    edge_attr: np.ndarray
    dst_ptr: np.ndarray
    src_order: np.ndarray
    src_ptr: np.ndarray
    graph_ptr: np.ndarray

    @property
    def n_edges(self):
        return self.src.size

    @property
    def n_graphs(self):
        return len(self.graph_ptr) - 1


def make_graph_batch(n_nodes, edge_index, edge_attr, undirected=True, graph_ptr=None):
    """Build a :class:`GraphBatch`.

    ``edge_index`` is ``(E, 2)`` of ``(src, dst)`` pairs; with ``undirected``
    each pair is mirrored. Self-loops with zero features are appended for
    every node that lacks one.
    """
    edge_index = np.asarray(edge_index, dtype=np.int64).reshape(-1, 2)
    edge_attr = np.asarray(edge_attr)
    if edge_attr.ndim != 2 or edge_attr.shape[0] != edge_index.shape[0]:
        raise GraphError("edge_attr must be (E, f_e) matching edge_index")
    if edge_index.size and (edge_index.min() < 0 or edge_index.max() >= n_nodes):
        raise GraphError(f"edge index out of range for {n_nodes} nodes")
    src, dst = edge_index[:, 0], edge_index[:, 1]
    attr = edge_attr
    if undirected:
        off = src != dst
        src, dst = np.concatenate([src, dst[off]]), np.concatenate([dst, src[off]])
        attr = np.concatenate([attr, attr[off]])
    has_loop = np.zeros(n_nodes, dtype=bool)
    has_loop[src[src == dst]] = True
    loops = np.flatnonzero(~has_loop)
    src = np.concatenate([src, loops])
    dst = np.concatenate([dst, loops])
    attr = np.concatenate([attr, np.zeros((loops.size, attr.shape[1]), dtype=attr.dtype)])

    order = np.lexsort((src, dst))
    src, dst, attr = src[order], dst[order], attr[order]
    dst_ptr = np.searchsorted(dst, np.arange(n_nodes + 1))
    src_order = np.argsort(src, kind="stable")
    src_ptr = np.searchsorted(src[src_order], np.arange(n_nodes + 1))
    if graph_ptr is None:
        graph_ptr = np.array([0, n_nodes])
    return GraphBatch(n_nodes, src, dst, np.ascontiguousarray(attr), dst_ptr, src_order, src_ptr,
                      np.asarray(graph_ptr, dtype=np.int64))


def batch_complete_graphs(node_features, edge_features, pairs):
    """Disjoint union of ``B`` complete graphs sharing the pair list.

    ``node_features`` is ``(B, n, f)``, ``edge_features`` is ``(B, P, f_e)``.
    Returns stacked node features ``(B*n, f)`` and the :class:`GraphBatch`.
    """
    b, n, _ = node_features.shape
    pairs = np.asarray(pairs, dtype=np.int64)
    offsets = (np.arange(b) * n)[:, None, None]
    edges = (pairs[None, :, :] + offsets).reshape(-1, 2)
    attr = edge_features.reshape(-1, edge_features.shape[-1])
    g = make_graph_batch(b * n, edges, attr, undirected=True, graph_ptr=np.arange(b + 1) * n)
    return node_features.reshape(b * n, -1), g


def _seg_sum(values, ptr):
    """Sum rows of ``values`` over segments ``[ptr[k], ptr[k+1])`` (non-empty)."""
    return np.add.reduceat(values, ptr[:-1], axis=0)


def gat_forward(x, graph: GraphBatch, W, a_src, a_dst, U, a_edge, bias, heads, concat):
    n, _ = x.shape
    if n != graph.n_nodes:
        raise GraphError(f"{n} node rows for a graph of {graph.n_nodes} nodes")
    hf = W.shape[1]
    f = hf // heads
    src, dst = graph.src, graph.dst

    wh = (x @ W).reshape(n, heads, f)
    s_src = np.einsum("nhf,hf->nh", wh, a_src)
    s_dst = np.einsum("nhf,hf->nh", wh, a_dst)
    ue = (graph.edge_attr.astype(x.dtype, copy=False) @ U).reshape(-1, heads, f)
    s_edge = np.einsum("ehf,hf->eh", ue, a_edge)
    z = s_src[src] + s_dst[dst] + s_edge
    logit = np.where(z > 0, z, LEAKY_SLOPE * z)

    seg_max = np.maximum.reduceat(logit, graph.dst_ptr[:-1], axis=0)
    ex = np.exp(logit - seg_max[dst])
    alpha = ex / _seg_sum(ex, graph.dst_ptr)[dst]

    msg = alpha[:, :, None] * wh[src]
    agg = _seg_sum(msg, graph.dst_ptr)
    out = agg.reshape(n, hf) if concat else agg.mean(axis=1)
    out = out + bias
    cache = (x, graph, W, a_src, a_dst, U, a_edge, heads, concat, wh, ue, z, alpha)
    return out, cache


def gat_backward(dout, cache):
    """Gradients ``(dx, dW, da_src, da_dst, dU, da_edge, dbias)``."""
    x, graph, W, a_src, a_dst, U, a_edge, heads, concat, wh, ue, z, alpha = cache
    n = x.shape[0]
    f = wh.shape[2]
    src, dst = graph.src, graph.dst

    dbias = dout.sum(axis=0)
    if concat:
        dagg = dout.reshape(n, heads, f)
    else:
        dagg = np.broadcast_to(dout[:, None, :] / heads, (n, heads, f))
    dmsg = dagg[dst]
    dalpha = np.einsum("ehf,ehf->eh", dmsg, wh[src])
    per_src = (alpha[:, :, None] * dmsg)[graph.src_order]
    dwh = _seg_sum(per_src, graph.src_ptr)

    dlogit = alpha * (dalpha - _seg_sum(alpha * dalpha, graph.dst_ptr)[dst])
    dz = dlogit * np.where(z > 0, 1.0, LEAKY_SLOPE).astype(dlogit.dtype)
    ds_src = _seg_sum(dz[graph.src_order], graph.src_ptr)
    ds_dst = _seg_sum(dz, graph.dst_ptr)

    dwh = dwh + ds_src[:, :, None] * a_src + ds_dst[:, :, None] * a_dst
    da_src = np.einsum("nh,nhf->hf", ds_src, wh)
    da_dst = np.einsum("nh,nhf->hf", ds_dst, wh)
    da_edge = np.einsum("eh,ehf->hf", dz, ue)
    due = (dz[:, :, None] * a_edge).reshape(-1, heads * f)
    dU = graph.edge_attr.astype(x.dtype, copy=False).T @ due

    dwh2 = dwh.reshape(n, heads * f)
    dW = x.T @ dwh2
    dx = dwh2 @ W.T
    return dx, dW, da_src, da_dst, dU, da_edge, dbias
