"""Central finite-difference gradient checks."""
import numpy as np


def relative_error(analytic, numeric, floor=1e-3, atol=1e-10):
    """Max elementwise ``|a-n| / (|a|+|n|)``; the denominator is floored at
    ``floor`` times the largest magnitude so near-zero entries do not blow up,
    and at ``atol`` so gradients that are zero up to round-off compare equal."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    denom = np.maximum(np.abs(a) + np.abs(n), max(floor * scale, atol))
    return float(np.max(np.abs(a - n) / denom, initial=0.0))


def grad_check(forward, backward, arrays, eps=1e-3, max_entries=64, seed=0):
    """Compare analytic and numerical gradients of ``sum(forward() * R)``.

    ``arrays`` maps names to the arrays ``forward`` reads (perturbed in
    place); ``backward(R)`` must return a dict of analytic gradients with
    the same names. At most ``max_entries`` entries per array are probed.
    Returns ``(max_error, per_array_errors)``.
    """
    rng = np.random.default_rng(seed)
    out = forward()
    proj = rng.standard_normal(out.shape).astype(out.dtype)
    analytic = backward(proj)

    def loss():
        return float(np.sum(forward() * proj))

    errors = {}
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        num = np.empty(idx.size)
        for k, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + eps
            lp = loss()
            flat[i] = old - eps
            lm = loss()
            flat[i] = old
            num[k] = (lp - lm) / (2 * eps)
        errors[name] = relative_error(np.asarray(analytic[name]).reshape(-1)[idx], num)
    return max(errors.values()), errors


def grad_check_layer(layer, x, eps=1e-3, forward_kwargs=None, seed=0, max_entries=64):
    """Check a layer's input gradient and every store parameter it owns."""
    forward_kwargs = forward_kwargs or {}
    store = getattr(layer, "store", None)
    arrays = {"input": x}
    if store is not None:
        prefix = layer.name + "."
        arrays.update({k: v for k, v in store.params.items() if k.startswith(prefix)})

    def forward():
        return layer.forward(x, **forward_kwargs)

    def backward(proj):
        if store is not None:
            store.zero_grad()
        layer.forward(x, **forward_kwargs)
        dx = layer.backward(proj)
        grads = {"input": dx}
        if store is not None:
            grads.update({k: store.grads[k].copy() for k in arrays if k != "input"})
        return grads

    return grad_check(forward, backward, arrays, eps, max_entries, seed)
