"""The four classifier architectures over polygon graphs.

* polymp   - two message-passing layers (elementwise |x_j - x_i| messages,
             max over the two ring neighbors), mean readout, MLP head.
* deepset  - per-node MLP, sum readout, MLP head; edges are never read.
* gcn      - two graph-convolution layers with normalized-Laplacian weights
             (1/3 everywhere on ring graphs), mean readout, MLP head.
* veercnn  - two 1D convolutions (kernel 3) over zero-padded vertex
             sequences, global average pool, MLP head.

All models consume (x, y, ring_flag) node rows. Latent widths follow the
shared reference configuration {2, 64, 64} ({2, 32, 64} for the CNN); the
nominal input entry 2 is widened to 3 because the ring flag is kept as an
input channel. Head hidden widths are sized per architecture so default
parameter counts match the reference budgets.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tensor as T
from .errors import EmptyGraph, IncompatibleCheckpoint, ShapeMismatch
from .graph import PolyGraph, laplacian_weights, to_padded_sequence
from .tensor import Tensor

ARCHS = ("deepset", "gcn", "polymp", "veercnn")
INPUT_WIDTH = 3  # x, y, ring_flag

_DEFAULT_DIMS = {
    "polymp": (2, 64, 64),
    "deepset": (2, 64, 64),
    "gcn": (2, 64, 64),
    "veercnn": (2, 32, 64),
}
_DEFAULT_HEAD_HIDDEN = {
    "polymp": 32,
    "deepset": 80,
    "gcn": 32,
    "veercnn": 80,
}


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    dims: tuple = ()
    n_classes: int = 26
    pooling: str = "mean"  # readout for polymp/gcn (deepset is sum by design)
    max_seq_len: int = 64  # veercnn only
    msg_reduce: str = "max"  # neighbor-message aggregation inside a polymp layer
    relative_only: bool = False  # drop the raw-coordinate term from polymp layer 1
    head_hidden: int = 0

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}, expected one of {ARCHS}")
        if not self.dims:
            object.__setattr__(self, "dims", _DEFAULT_DIMS[self.arch])
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) != 3:
            raise ValueError(f"dims must have 3 entries, got {self.dims}")
        if self.head_hidden <= 0:
            object.__setattr__(self, "head_hidden", _DEFAULT_HEAD_HIDDEN[self.arch])
        if self.pooling not in ("mean", "max"):
            raise ValueError(f"pooling must be mean or max, got {self.pooling!r}")
        if self.msg_reduce not in ("mean", "max"):
            raise ValueError(f"msg_reduce must be mean or max, got {self.msg_reduce!r}")
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")


def default_config(arch: str, n_classes: int = 26, **overrides) -> ModelConfig:
    return ModelConfig(arch=arch, n_classes=n_classes, **overrides)


@dataclass
class ModelParams:
    """Named, ordered parameter tensors for one architecture."""

    config: ModelConfig
    named: dict = field(default_factory=dict)

    @property
    def arch(self) -> str:
        return self.config.arch

    @property
    def param_count(self) -> int:
        return sum(t.data.size for t in self.named.values())

    def tensors(self) -> list[Tensor]:
        return list(self.named.values())

    def zero_grads(self) -> None:
        for t in self.named.values():
            t.grad = None

    def clone(self) -> "ModelParams":
        out = ModelParams(self.config)
        for name, t in self.named.items():
            c = Tensor(t.data.copy(), requires_grad=t.requires_grad)
            out.named[name] = c
        return out


def _param_shapes(cfg: ModelConfig) -> dict:
    """Shape of every parameter tensor, in canonical order."""
    f = INPUT_WIDTH
    w1, w2 = cfg.dims[1], cfg.dims[2]
    h, c = cfg.head_hidden, cfg.n_classes
    head = {
        "head.hidden.w": (w2, h),
        "head.hidden.b": (h,),
        "head.out.w": (h, c),
        "head.out.b": (c,),
    }
    if cfg.arch == "polymp":
        in1 = f if cfg.relative_only else 2 * f
        shapes = {
            "mp1.w": (in1, w1),
            "mp1.b": (w1,),
            "mp2.w": (2 * w1, w2),
            "mp2.b": (w2,),
        }
    elif cfg.arch == "deepset":
        shapes = {
            "phi1.w": (f, w1),
            "phi1.b": (w1,),
            "phi2.w": (w1, w2),
            "phi2.b": (w2,),
        }
    elif cfg.arch == "gcn":
        shapes = {
            "gc1.w": (f, w1),
            "gc1.b": (w1,),
            "gc2.w": (w1, w2),
            "gc2.b": (w2,),
        }
    else:  # veercnn
        shapes = {
            "conv1.w": (3, f, w1),
            "conv1.b": (w1,),
            "conv2.w": (3, w1, w2),
            "conv2.b": (w2,),
        }
    shapes.update(head)
    return shapes


def _glorot_limit(shape: tuple) -> float:
    if len(shape) == 2:
        fan_in, fan_out = shape
    else:  # conv kernel (k, d_in, d_out)
        k = shape[0]
        fan_in, fan_out = k * shape[1], k * shape[2]
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    params = ModelParams(cfg)
    for name, shape in _param_shapes(cfg).items():
        if name.endswith(".b"):
            data = np.zeros(shape)
        else:
            lim = _glorot_limit(shape)
            data = rng.uniform(-lim, lim, size=shape)
        params.named[name] = Tensor(data, requires_grad=True)
    return params


# --- batching -----------------------------------------------------------------

@dataclass
class GraphBatch:
    """Concatenated node/edge arrays for a list of graphs."""

    x: np.ndarray  # (N, 3)
    seg: np.ndarray  # (N,) graph id per node
    src: np.ndarray  # (E,)
    dst: np.ndarray  # (E,)
    labels: np.ndarray  # (B,)
    w_edge: np.ndarray  # (E,) laplacian edge weights
    w_self: np.ndarray  # (N,) laplacian self-loop weights
    n_graphs: int


def make_graph_batch(graphs: list[PolyGraph]) -> GraphBatch:
    if not graphs:
        raise EmptyGraph("empty batch")
    xs, segs, srcs, dsts, wes, wss, labels = [], [], [], [], [], [], []
    offset = 0
    for gi, g in enumerate(graphs):
        if g.n == 0:
            raise EmptyGraph(f"graph {gi} has no nodes")
        xs.append(g.nodes)
        segs.append(np.full(g.n, gi, dtype=np.int64))
        srcs.append(g.edges[:, 0] + offset)
        dsts.append(g.edges[:, 1] + offset)
        w = laplacian_weights(g)
        wes.append(w.edge)
        wss.append(w.self_loop)
        labels.append(g.label)
        offset += g.n
    return GraphBatch(
        x=np.vstack(xs),
        seg=np.concatenate(segs),
        src=np.concatenate(srcs),
        dst=np.concatenate(dsts),
        labels=np.array(labels, dtype=np.int64),
        w_edge=np.concatenate(wes),
        w_self=np.concatenate(wss),
        n_graphs=len(graphs),
    )


def make_seq_batch(graphs: list[PolyGraph], max_len: int):
    """Zero-padded vertex sequences for the CNN path.

    Graphs longer than max_len are truncated; the count of truncated graphs
    is returned so callers can warn once.
    """
    if not graphs:
        raise EmptyGraph("empty batch")
    out = np.zeros((len(graphs), max_len, INPUT_WIDTH), dtype=np.float64)
    labels = np.empty(len(graphs), dtype=np.int64)
    truncated = 0
    for i, g in enumerate(graphs):
        if g.n > max_len:
            out[i] = g.nodes[:max_len]
            truncated += 1
        else:
            out[i] = to_padded_sequence(g, max_len)
        labels[i] = g.label
    return out, labels, truncated


def default_max_seq_len(vertex_counts) -> int:
    """95th percentile of training vertex counts, rounded up to a multiple of 8."""
    counts = np.asarray(list(vertex_counts), dtype=np.int64)
    if counts.size == 0:
        raise EmptyGraph("no vertex counts supplied")
    p95 = int(np.ceil(np.percentile(counts, 95)))
    return int(np.ceil(p95 / 8.0) * 8)


# --- forward passes -------------------------------------------------------------

def _head(params: ModelParams, pooled: Tensor) -> Tensor:
    p = params.named
    hid = T.relu(T.add(T.matmul(pooled, p["head.hidden.w"]), p["head.hidden.b"]))
    return T.add(T.matmul(hid, p["head.out.w"]), p["head.out.b"])


def _mp_layer(h: Tensor, batch: GraphBatch, w: Tensor, b: Tensor, cfg: ModelConfig,
              drop_self: bool) -> Tensor:
    n = batch.x.shape[0]
    src_f = T.gather_rows(h, batch.src)
    dst_f = T.gather_rows(h, batch.dst)
    msg = T.abs(T.sub(src_f, dst_f))
    m = T.segment_reduce(msg, batch.dst, n, mode=cfg.msg_reduce)
    z = m if drop_self else T.concat_cols(h, m)
    return T.relu(T.add(T.matmul(z, w), b))


def polymp_forward(params: ModelParams, batch) -> tuple[Tensor, Tensor]:
    """Message-passing forward; returns (logits, latent node features)."""
    cfg = params.config
    if isinstance(batch, list):
        batch = make_graph_batch(batch)
    p = params.named
    h = Tensor(batch.x)
    h = _mp_layer(h, batch, p["mp1.w"], p["mp1.b"], cfg, drop_self=cfg.relative_only)
    h = _mp_layer(h, batch, p["mp2.w"], p["mp2.b"], cfg, drop_self=False)
    pooled = T.segment_reduce(h, batch.seg, batch.n_graphs, mode=cfg.pooling)
    return _head(params, pooled), h


def deepset_forward(params: ModelParams, batch) -> Tensor:
    """Per-node MLP then sum readout; the edge list is never consulted."""
    if isinstance(batch, list):
        batch = make_graph_batch(batch)
    p = params.named
    h = Tensor(batch.x)
    h = T.relu(T.add(T.matmul(h, p["phi1.w"]), p["phi1.b"]))
    h = T.relu(T.add(T.matmul(h, p["phi2.w"]), p["phi2.b"]))
    pooled = T.segment_reduce(h, batch.seg, batch.n_graphs, mode="sum")
    return _head(params, pooled)


def _gcn_layer(h: Tensor, batch: GraphBatch, w: Tensor, b: Tensor) -> Tensor:
    n = batch.x.shape[0]
    neigh = T.mul_rows(T.gather_rows(h, batch.src), batch.w_edge)
    agg = T.segment_reduce(neigh, batch.dst, n, mode="sum")
    pre = T.add(agg, T.mul_rows(h, batch.w_self))
    return T.relu(T.add(T.matmul(pre, w), b))


def gcn_forward(params: ModelParams, batch) -> Tensor:
    if isinstance(batch, list):
        batch = make_graph_batch(batch)
    p = params.named
    h = Tensor(batch.x)
    h = _gcn_layer(h, batch, p["gc1.w"], p["gc1.b"])
    h = _gcn_layer(h, batch, p["gc2.w"], p["gc2.b"])
    pooled = T.segment_reduce(h, batch.seg, batch.n_graphs, mode="mean")
    return _head(params, pooled)


def veercnn_forward(params: ModelParams, seqs: np.ndarray) -> Tensor:
    """Conv stack over padded sequences; padding rows stay in the average pool."""
    if seqs.ndim != 3 or seqs.shape[2] != INPUT_WIDTH:
        raise ShapeMismatch(f"expected (b, len, {INPUT_WIDTH}) sequences, got {seqs.shape}")
    p = params.named
    h = Tensor(seqs)
    h = T.relu(T.add(T.conv1d(h, p["conv1.w"]), p["conv1.b"]))
    h = T.relu(T.add(T.conv1d(h, p["conv2.w"]), p["conv2.b"]))
    bsz, length, width = h.shape
    flat = T.reshape(h, (bsz * length, width))
    seg = np.repeat(np.arange(bsz), length)
    pooled = T.segment_reduce(flat, seg, bsz, mode="mean")
    return _head(params, pooled)


def forward_logits(params: ModelParams, graphs: list[PolyGraph]) -> Tensor:
    """Uniform entry point: list of graphs in, logits out, any architecture."""
    arch = params.arch
    if arch == "polymp":
        return polymp_forward(params, graphs)[0]
    if arch == "deepset":
        return deepset_forward(params, graphs)
    if arch == "gcn":
        return gcn_forward(params, graphs)
    seqs, _, _ = make_seq_batch(graphs, params.config.max_seq_len)
    return veercnn_forward(params, seqs)


# --- saliency -----------------------------------------------------------------

def node_latents(params: ModelParams, graph: PolyGraph) -> np.ndarray:
    """Final feature-layer activations per node, before any readout."""
    arch = params.arch
    with T.no_grad():
        if arch == "polymp":
            _, h = polymp_forward(params, [graph])
            return h.data
        if arch in ("deepset", "gcn"):
            batch = make_graph_batch([graph])
            p = params.named
            h = Tensor(batch.x)
            if arch == "deepset":
                h = T.relu(T.add(T.matmul(h, p["phi1.w"]), p["phi1.b"]))
                h = T.relu(T.add(T.matmul(h, p["phi2.w"]), p["phi2.b"]))
            else:
                h = _gcn_layer(h, batch, p["gc1.w"], p["gc1.b"])
                h = _gcn_layer(h, batch, p["gc2.w"], p["gc2.b"])
            return h.data
        # veercnn: per-position activations of the real (unpadded) rows
        max_len = max(params.config.max_seq_len, graph.n)
        seqs, _, _ = make_seq_batch([graph], max_len)
        p = params.named
        h = Tensor(seqs)
        h = T.relu(T.add(T.conv1d(h, p["conv1.w"]), p["conv1.b"]))
        h = T.relu(T.add(T.conv1d(h, p["conv2.w"]), p["conv2.b"]))
        return h.data[0, : graph.n]


def node_saliency(params: ModelParams, graph: PolyGraph) -> np.ndarray:
    """L2 norm of each node's final latent feature, scaled so the per-graph
    maximum is 1 (all zeros stay zero)."""
    if graph.n == 0:
        raise EmptyGraph("graph has no nodes")
    latents = node_latents(params, graph)
    norms = np.sqrt((latents**2).sum(axis=1))
    top = norms.max()
    if top == 0:
        return norms
    return norms / top


# --- checkpoints ---------------------------------------------------------------

def save_checkpoint(params: ModelParams, path: str) -> None:
    blob = {
        "arch": params.arch,
        "config": asdict(params.config),
        "params": {
            name: {"shape": list(t.data.shape), "data": t.data.ravel().tolist()}
            for name, t in params.named.items()
        },
    }
    with open(path, "w") as f:
        json.dump(blob, f)


def load_checkpoint(path: str) -> ModelParams:
    with open(path) as f:
        blob = json.load(f)
    cfg_dict = dict(blob["config"])
    cfg_dict["dims"] = tuple(cfg_dict.get("dims", ()))
    cfg = ModelConfig(**cfg_dict)
    if blob.get("arch") != cfg.arch:
        raise IncompatibleCheckpoint("arch field disagrees with config")
    expected = _param_shapes(cfg)
    stored = blob.get("params", {})
    if set(stored) != set(expected):
        raise IncompatibleCheckpoint(
            f"parameter names {sorted(stored)} do not match config {sorted(expected)}"
        )
    params = ModelParams(cfg)
    for name, shape in expected.items():
        entry = stored[name]
        if tuple(entry["shape"]) != shape:
            raise IncompatibleCheckpoint(
                f"{name}: stored shape {entry['shape']} but config wants {shape}"
            )
        data = np.asarray(entry["data"], dtype=np.float64).reshape(shape)
        if not np.all(np.isfinite(data)):
            raise IncompatibleCheckpoint(f"{name}: non-finite values in checkpoint")
        params.named[name] = Tensor(data, requires_grad=True)
    return params


def with_new_head(params: ModelParams, n_classes: int, seed: int) -> ModelParams:
    """Copy of `params` with a freshly initialized classifier head for
    `n_classes`; feature layers are copied unchanged."""
    cfg = replace(params.config, n_classes=n_classes)
    fresh = init_params(cfg, seed)
    out = ModelParams(cfg)
    for name in _param_shapes(cfg):
        if name.startswith("head."):
            out.named[name] = fresh.named[name]
        else:
            src = params.named[name]
            out.named[name] = Tensor(src.data.copy(), requires_grad=True)
    return out
