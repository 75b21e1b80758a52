"""Exact t-SNE (no tree approximation), for the FC2-input embeddings."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterError

PERPLEXITY_TOL = 1e-5


@dataclass
class TsneResult:
    embedding: np.ndarray
    kl_history: np.ndarray
    betas: np.ndarray
    entropies: np.ndarray


def squared_distances(x):
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def joint_affinities(x, perplexity=30.0, tol=PERPLEXITY_TOL, max_iter=200):
    """Symmetrised ``P`` plus the per-point precisions and entropies (nats)."""
    cond, betas, ent = kernels.perplexity_search(squared_distances(x), float(perplexity), tol, max_iter)
    p = (cond + cond.T) / (2.0 * cond.shape[0])
    return np.maximum(p, 1e-12), betas, ent


def _kl(p, q):
    return float(np.sum(p * np.log(p / q)))


def tsne(x, perplexity=30.0, n_iter=1000, seed=0, learning_rate="auto", early_exaggeration=12.0,
         exaggeration_iters=250, momentum=(0.5, 0.8), momentum_switch=250, min_gain=0.01):
    """Embed ``x`` (n, d) in two dimensions.

    Gradient descent with momentum and per-coordinate gains; ``P`` is
    exaggerated for the first ``exaggeration_iters`` iterations. The KL
    divergence after each iteration is recorded in ``kl_history``.
    ``learning_rate="auto"`` uses ``max(n / early_exaggeration / 4, 50)``.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n <= 3 * perplexity:
        raise ParameterError(f"need more than {3 * perplexity:g} points for perplexity {perplexity:g}")
    if learning_rate == "auto":
        learning_rate = max(n / early_exaggeration / 4.0, 50.0)
    p, betas, ent = joint_affinities(x, perplexity)
    rng = np.random.default_rng(seed)
    y = 1e-4 * rng.standard_normal((n, 2))
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    kl = np.empty(n_iter)
    for it in range(n_iter):
        pe = p * early_exaggeration if it < exaggeration_iters else p
        num = 1.0 / (1.0 + squared_distances(y))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), 1e-12)
        w = (pe - q) * num
        grad = 4.0 * (np.diag(w.sum(axis=1)) - w) @ y
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, min_gain, out=gains)
        mom = momentum[0] if it < momentum_switch else momentum[1]
        update = mom * update - learning_rate * gains * grad
        y = y + update
        y -= y.mean(axis=0)
        kl[it] = _kl(p, q)
    return TsneResult(y, kl, betas, ent)


def silhouette(x, labels):
    """Mean silhouette coefficient with Euclidean distances."""
    labels = np.asarray(labels)
    d = np.sqrt(squared_distances(np.asarray(x, dtype=np.float64)))
    ks = np.unique(labels)
    if ks.size < 2:
        raise ParameterError("silhouette needs at least two clusters")
    s = np.zeros(len(labels))
    for i in range(len(labels)):
        own = labels == labels[i]
        if own.sum() < 2:
            continue
        a = d[i, own].sum() / (own.sum() - 1)
        b = min(d[i, labels == k].mean() for k in ks if k != labels[i])
        s[i] = (b - a) / max(a, b)
    return float(s.mean())
