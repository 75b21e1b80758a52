"""Stateful layers over a shared :class:`ParamStore`.

Each layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into the store during ``backward``.
"""
import numpy as np

from . import functional as F
from .gat import gat_backward, gat_forward
from .params import uniform_fan_in


class Conv2d:
    def __init__(self, store, name, c_in, c_out, k=3, stride=2, pad=1, rng=None):
        rng = rng or np.random.default_rng(0)
        self.store, self.name = store, name
        self.stride, self.pad = stride, pad
        fan_in = c_in * k * k
        store.add(f"{name}.weight", uniform_fan_in(rng, (c_out, c_in, k, k), fan_in))
        store.add(f"{name}.bias", np.zeros(c_out))
        self._cache = None

    def forward(self, x, train=True):
        s = self.store
        out, self._cache = F.conv2d_forward(x, s[f"{self.name}.weight"], s[f"{self.name}.bias"],
                                            self.stride, self.pad)
        return out

    def backward(self, dout, need_dx=True):
        dx, dw, db = F.conv2d_backward(dout, self._cache, need_dx)
        self.store.accumulate(f"{self.name}.weight", dw)
        self.store.accumulate(f"{self.name}.bias", db)
        return dx


class BatchNorm2d:
    def __init__(self, store, name, c):
        self.store, self.name = store, name
        store.add(f"{name}.gamma", np.ones(c))
        store.add(f"{name}.beta", np.zeros(c))
        store.add_buffer(f"{name}.running_mean", np.zeros(c))
        store.add_buffer(f"{name}.running_var", np.ones(c))
        self._cache = None

    def forward(self, x, train=True):
        s, n = self.store, self.name
        out, self._cache = F.batchnorm2d_forward(
            x, s[f"{n}.gamma"], s[f"{n}.beta"], s[f"{n}.running_mean"], s[f"{n}.running_var"], train)
        return out

    def backward(self, dout, need_dx=True):
        dx, dg, db = F.batchnorm2d_backward(dout, self._cache)
        self.store.accumulate(f"{self.name}.gamma", dg)
        self.store.accumulate(f"{self.name}.beta", db)
        return dx


class ReLU:
    def forward(self, x, train=True):
        out, self._mask = F.relu_forward(x)
        return out

    def backward(self, dout, need_dx=True):
        return F.relu_backward(dout, self._mask)


class ELU:
    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def forward(self, x, train=True):
        out, self._cache = F.elu_forward(x, self.alpha)
        return out

    def backward(self, dout, need_dx=True):
        return F.elu_backward(dout, self._cache)


class Dense:
    def __init__(self, store, name, n_in, n_out, rng=None):
        rng = rng or np.random.default_rng(0)
        self.store, self.name = store, name
        store.add(f"{name}.weight", uniform_fan_in(rng, (n_in, n_out), n_in))
        store.add(f"{name}.bias", np.zeros(n_out))

    def forward(self, x, train=True):
        out, self._x = F.dense_forward(x, self.store[f"{self.name}.weight"], self.store[f"{self.name}.bias"])
        return out

    def backward(self, dout, need_dx=True):
        dx, dw, db = F.dense_backward(dout, self._x, self.store[f"{self.name}.weight"], need_dx)
        self.store.accumulate(f"{self.name}.weight", dw)
        self.store.accumulate(f"{self.name}.bias", db)
        return dx


class Dropout:
    """Inverted dropout. ``fixed_mask`` pins the mask (used by gradient checks)."""

    def __init__(self, p=0.5):
        self.p = p
        self.fixed_mask = None
        self._mask = None

    def forward(self, x, train=True, rng=None):
        out, self._mask = F.dropout_forward(x, self.p, train, rng, self.fixed_mask)
        return out

    def backward(self, dout, need_dx=True):
        return F.dropout_backward(dout, self._mask)


class GATConv:
    def __init__(self, store, name, f_in, f_out, heads=1, concat=True, edge_dim=4, rng=None):
        rng = rng or np.random.default_rng(0)
        self.store, self.name = store, name
        self.heads, self.concat, self.f_out = heads, concat, f_out
        hf = heads * f_out
        store.add(f"{name}.W", uniform_fan_in(rng, (f_in, hf), f_in))
        store.add(f"{name}.att_src", uniform_fan_in(rng, (heads, f_out), f_out))
        store.add(f"{name}.att_dst", uniform_fan_in(rng, (heads, f_out), f_out))
        store.add(f"{name}.U", uniform_fan_in(rng, (edge_dim, hf), edge_dim))
        store.add(f"{name}.att_edge", uniform_fan_in(rng, (heads, f_out), f_out))
        store.add(f"{name}.bias", np.zeros(hf if concat else f_out))
        self._cache = None

    @property
    def out_dim(self):
        return self.heads * self.f_out if self.concat else self.f_out

    def _p(self, key):
        return self.store[f"{self.name}.{key}"]

    def forward(self, x, graph, train=True):
        out, self._cache = gat_forward(
            x, graph, self._p("W"), self._p("att_src"), self._p("att_dst"), self._p("U"),
            self._p("att_edge"), self._p("bias"), self.heads, self.concat)
        return out

    @property
    def attention(self):
        """``(E, heads)`` attention weights of the last forward pass."""
        return self._cache[-1]

    def backward(self, dout, need_dx=True):
        dx, dW, da_s, da_d, dU, da_e, db = gat_backward(dout, self._cache)
        for key, g in (("W", dW), ("att_src", da_s), ("att_dst", da_d), ("U", dU),
                       ("att_edge", da_e), ("bias", db)):
            self.store.accumulate(f"{self.name}.{key}", g)
        return dx
