"""Named parameter storage with gradient and momentum buffers."""
import numpy as np


class ParamStore:
    """Learnable parameters plus non-learnable buffers (batch-norm stats).

    Insertion order is the canonical order used by checkpoints.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params = {}
        self.grads = {}
        self.momentum = {}
        self.buffers = {}

    def add(self, name, value):
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate parameter name {name!r}")
        arr = np.ascontiguousarray(value, dtype=self.dtype)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        self.momentum[name] = np.zeros_like(arr)
        return arr

    def add_buffer(self, name, value):
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate buffer name {name!r}")
        arr = np.ascontiguousarray(value, dtype=self.dtype)
        self.buffers[name] = arr
        return arr

    def __getitem__(self, name):
        return self.params[name] if name in self.params else self.buffers[name]

    def accumulate(self, name, grad):
        self.grads[name] += grad

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0)

    def n_params(self, prefix=""):
        return sum(p.size for n, p in self.params.items() if n.startswith(prefix))

    def snapshot(self):
        """Deep copy of parameters and buffers."""
        return ({k: v.copy() for k, v in self.params.items()},
                {k: v.copy() for k, v in self.buffers.items()})

    def restore(self, snap):
        params, buffers = snap
        for k, v in params.items():
            self.params[k][...] = v
        for k, v in buffers.items():
            self.buffers[k][...] = v

    def astype(self, dtype):
        """Cast everything in place (e.g. float64 for gradient checks)."""
        self.dtype = np.dtype(dtype)
        for d in (self.params, self.grads, self.momentum, self.buffers):
            for k in d:
                d[k] = d[k].astype(dtype)
        return self


def uniform_fan_in(rng, shape, fan_in):
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)
