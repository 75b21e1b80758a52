"""Models A-D: CNN backbone on spectrograms, optionally fused with ECG
features, the flat fNIRS vector (C) or the GAT-embedded PFC graph (D).

FC1 output is concatenated with the handcrafted/GAT vectors without an
activation in between, then FC2 maps to the three class logits.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InputError, ParameterError
from .fnirs import FC_METRICS, N_CHANNELS, N_TASKS, PAIRS
from .nn import (
    ELU, BatchNorm2d, Conv2d, Dense, Dropout, GATConv, ParamStore, ReLU, batch_complete_graphs,
    load_checkpoint, save_checkpoint,
)
from .nn import functional as F
from .nn.checkpoint import load_into

VARIANTS = ("A", "B", "C", "D")
ECG_DIM = 20
FNIRS_DIM = 136


@dataclass
class ModelConfig:
    variant: str = "D"
    image_size: int = 64
    cnn_layers: int = 4
    cnn_hidden: int = 64
    fc1_out: int = 128
    gat_layers: int = 2
    gat_heads: int = 4
    gat_hidden: int = 8
    gat_out: int = 32
    dropout: float = 0.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"model must be one of {VARIANTS}, got {self.variant!r}")
        if self.image_size % (2 ** self.cnn_layers):
            raise ParameterError("image size must be divisible by 2**cnn_layers")
        if self.gat_layers < 1:
            raise ParameterError("need at least one GAT layer")

    @property
    def uses_ecg(self):
        return self.variant in "BCD"

    @property
    def uses_fnirs_vector(self):
        return self.variant == "C"

    @property
    def uses_graph(self):
        return self.variant == "D"

    @property
    def flat_dim(self):
        side = self.image_size // 2 ** self.cnn_layers
        return self.cnn_hidden * 2 ** (self.cnn_layers - 1) * side * side

    @property
    def gat_dim(self):
        return self.gat_out if self.gat_layers > 1 else self.gat_heads * self.gat_hidden

    @property
    def fc2_in(self):
        width = self.fc1_out
        if self.uses_ecg:
            width += ECG_DIM
        if self.uses_fnirs_vector:
            width += FNIRS_DIM
        if self.uses_graph:
            width += self.gat_dim
        return width

    def to_dict(self):
        return asdict(self)


@dataclass
class Batch:
    """Model inputs for ``b`` samples; ``labels`` are 1-based classes."""

    images: np.ndarray
    ecg: np.ndarray = None
    fnirs: np.ndarray = None
    labels: np.ndarray = None

    def __len__(self):
        return self.images.shape[0]


def graph_inputs(fnirs_vectors):
    """Split ``(b, 136)`` vectors into node ``(b, 8, 3)`` and edge ``(b, 28, 4)`` features."""
    b = fnirs_vectors.shape[0]
    nb = N_TASKS * N_CHANNELS
    nodes = fnirs_vectors[:, :nb].reshape(b, N_TASKS, N_CHANNELS).transpose(0, 2, 1)
    edges = fnirs_vectors[:, nb:].reshape(b, len(FC_METRICS), len(PAIRS)).transpose(0, 2, 1)
    return np.ascontiguousarray(nodes), np.ascontiguousarray(edges)


class GatBackbone:
    """GAT conv1 (concat heads) -> ELU -> dropout -> ... -> last conv
    (single head, averaged) -> global max pool."""

    def __init__(self, store, cfg: ModelConfig, rng):
        self.layers = []
        f_in = N_TASKS
        width = cfg.gat_heads * cfg.gat_hidden
        for i in range(cfg.gat_layers):
            last = i == cfg.gat_layers - 1 and cfg.gat_layers > 1
            if last:
                conv = GATConv(store, f"gat{i + 1}", f_in, cfg.gat_out, heads=1, concat=False,
                               edge_dim=len(FC_METRICS), rng=rng)
            else:
                conv = GATConv(store, f"gat{i + 1}", f_in, cfg.gat_hidden, heads=cfg.gat_heads,
                               concat=True, edge_dim=len(FC_METRICS), rng=rng)
            self.layers.append(conv)
            if i < cfg.gat_layers - 1:
                self.layers.append(ELU())
                self.layers.append(Dropout(cfg.dropout))
            f_in = width

    def forward(self, fnirs_vectors, train, rng):
        nodes, edges = graph_inputs(fnirs_vectors)
        x, graph = batch_complete_graphs(nodes, edges, PAIRS)
        self._graph = graph
        for layer in self.layers:
            if isinstance(layer, GATConv):
                x = layer.forward(x, graph, train)
            elif isinstance(layer, Dropout):
                x = layer.forward(x, train, rng)
            else:
                x = layer.forward(x, train)
        out, self._pool = F.global_max_pool_forward(x, graph.graph_ptr)
        return out

    def backward(self, dout):
        d = F.global_max_pool_backward(dout, self._pool)
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d


class Model:
    def __init__(self, cfg: ModelConfig, seed=0, dtype=np.float32):
        self.cfg = cfg
        self.seed = seed
        self.store = ParamStore(dtype)
        rng = np.random.default_rng([seed, 1])
        self.cnn = []
        c_in = 3
        for i in range(cfg.cnn_layers):
            c_out = cfg.cnn_hidden * 2 ** i
            self.cnn += [Conv2d(self.store, f"conv{i + 1}", c_in, c_out, rng=rng),
                         BatchNorm2d(self.store, f"bn{i + 1}", c_out), ReLU()]
            c_in = c_out
        self.fc1 = Dense(self.store, "fc1", cfg.flat_dim, cfg.fc1_out, rng=rng)
        self.gat = GatBackbone(self.store, cfg, rng) if cfg.uses_graph else None
        self.fc2 = Dense(self.store, "fc2", cfg.fc2_in, 3, rng=rng)
        self.shape_trace = []
        self.last_fc2_input = None

    @property
    def dtype(self):
        return self.store.dtype

    def _check(self, batch: Batch):
        if self.cfg.uses_ecg and batch.ecg is None:
            raise InputError(f"model {self.cfg.variant} needs the ECG feature vector")
        if (self.cfg.uses_fnirs_vector or self.cfg.uses_graph) and batch.fnirs is None:
            raise InputError(f"model {self.cfg.variant} needs fNIRS features")
        if batch.images.shape[1:] != (3, self.cfg.image_size, self.cfg.image_size):
            raise InputError(f"images must be b x 3 x {self.cfg.image_size} x {self.cfg.image_size}")

    def forward(self, batch: Batch, train=False, rng=None):
        """Logits ``(b, 3)``. ``rng`` drives dropout in train mode."""
        self._check(batch)
        dt = self.dtype
        x = np.asarray(batch.images, dtype=dt)
        trace = [("input", x.shape)]
        for i, layer in enumerate(self.cnn):
            x = layer.forward(x, train)
            if isinstance(layer, ReLU):
                trace.append((f"conv{i // 3 + 1}", x.shape))
        self._conv_shape = x.shape
        x = x.reshape(x.shape[0], -1)
        trace.append(("resize", x.shape))
        x = self.fc1.forward(x, train)
        trace.append(("fc1", x.shape))
        parts = [x]
        if self.cfg.uses_ecg:
            parts.append(np.asarray(batch.ecg, dtype=dt))
        if self.cfg.uses_fnirs_vector:
            parts.append(np.asarray(batch.fnirs, dtype=dt))
        if self.cfg.uses_graph:
            parts.append(self.gat.forward(np.asarray(batch.fnirs, dtype=dt), train, rng))
        self._part_widths = [p.shape[1] for p in parts]
        h = np.concatenate(parts, axis=1) if len(parts) > 1 else x
        self.last_fc2_input = h
        trace.append(("fc2_in", h.shape))
        logits = self.fc2.forward(h, train)
        trace.append(("fc2", logits.shape))
        self.shape_trace = trace
        return logits

    def backward(self, dlogits):
        dh = self.fc2.backward(dlogits)
        splits = np.cumsum(self._part_widths)[:-1]
        pieces = np.split(dh, splits, axis=1)
        if self.cfg.uses_graph:
            self.gat.backward(np.ascontiguousarray(pieces[-1]))
        dx = self.fc1.backward(np.ascontiguousarray(pieces[0]))
        dx = dx.reshape(self._conv_shape)
        for i, layer in reversed(list(enumerate(self.cnn))):
            dx = layer.backward(dx, need_dx=i > 0)

    def n_params(self, prefix=""):
        return self.store.n_params(prefix)

    # checkpoints -----------------------------------------------------------

    def save(self, path, meta=None):
        header = {"variant": self.cfg.variant, "model_config": self.cfg.to_dict(), "seed": self.seed}
        header.update(meta or {})
        save_checkpoint(path, self.store, header)

    @classmethod
    def load(cls, path, expect_variant=None):
        header, arrays = load_checkpoint(path)
        if expect_variant is not None and header["variant"] != expect_variant:
            raise ParameterError(f"checkpoint holds model {header['variant']}, not {expect_variant}")
        model = cls(ModelConfig(**header["model_config"]), seed=header.get("seed", 0))
        load_into(model.store, arrays)
        return model, header


def backbone_cnn(model: Model, images, train=False):
    """The 128-dim FC1 output of the CNN path."""
    x = np.asarray(images, dtype=model.dtype)
    for layer in model.cnn:
        x = layer.forward(x, train)
    return model.fc1.forward(x.reshape(x.shape[0], -1), train)


def backbone_gat(model: Model, fnirs_vectors, train=False, rng=None):
    """The pooled GAT embedding (32-dim by default)."""
    if model.gat is None:
        raise InputError("only model D has a GAT backbone")
    return model.gat.forward(np.asarray(fnirs_vectors, dtype=model.dtype), train, rng)


def expected_param_counts(cfg: ModelConfig):
    """Closed-form parameter counts per layer prefix."""
    counts = {}
    c_in = 3
    for i in range(cfg.cnn_layers):
        c_out = cfg.cnn_hidden * 2 ** i
        counts[f"conv{i + 1}."] = c_out * c_in * 9 + c_out
        counts[f"bn{i + 1}."] = 2 * c_out
        c_in = c_out
    counts["fc1."] = cfg.flat_dim * cfg.fc1_out + cfg.fc1_out
    counts["fc2."] = cfg.fc2_in * 3 + 3
    if cfg.uses_graph:
        f_in = N_TASKS
        e = len(FC_METRICS)
        for i in range(cfg.gat_layers):
            last = i == cfg.gat_layers - 1 and cfg.gat_layers > 1
            heads, f_out, concat = (1, cfg.gat_out, False) if last else (cfg.gat_heads, cfg.gat_hidden, True)
            hf = heads * f_out
            counts[f"gat{i + 1}."] = f_in * hf + 3 * hf + e * hf + (hf if concat else f_out)
            f_in = cfg.gat_heads * cfg.gat_hidden
    return counts
