"""Pure numpy/Python versions of the hot kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and output (bit-identical for the integer/selection kernels,
equal to rounding for the float kernels).
"""
import math

import numpy as np


def im2col_nhwc(xpad, k, stride, oh, ow):
    """Gather ``k x k`` patches of a padded NHWC tensor.

    Returns an array of shape ``(B*oh*ow, k*k*C)`` with columns ordered
    ``(ki, kj, c)``.
    """
    b, hp, wp, c = xpad.shape
    sb, sh, sw, sc = xpad.strides
    view = np.lib.stride_tricks.as_strided(
        xpad,
        shape=(b, oh, ow, k, k, c),
        strides=(sb, sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )
    return view.reshape(b * oh * ow, k * k * c)


def col2im_nhwc(cols, padded_shape, k, stride, oh, ow):
    """Scatter-add patch gradients back onto a padded NHWC tensor."""
    b, hp, wp, c = padded_shape
    dx = np.zeros(padded_shape, dtype=cols.dtype)
    cols6 = cols.reshape(b, oh, ow, k, k, c)
    for i in range(k):
        for j in range(k):
            dx[:, i:i + stride * oh:stride, j:j + stride * ow:stride, :] += cols6[:, :, :, i, j, :]
    return dx


def pt_threshold_scan(cand_idx, cand_val, refractory, spki, npki):
    """Adaptive dual-threshold QRS selection over integrated-energy peaks.

    ``cand_idx`` must be increasing. Signal/noise running levels follow the
    classic 1/8 update; a searchback at half threshold recovers beats missed
    after a gap longer than 1.66 x the running mean RR.
    """
    n = len(cand_idx)
    accepted = []
    rr_hist = []
    last_noise_start = 0
    for i in range(n):
        idx = int(cand_idx[i])
        val = float(cand_val[i])
        th1 = npki + 0.25 * (spki - npki)
        th2 = 0.5 * th1

        if len(rr_hist) > 0 and accepted:
            rr_avg = sum(rr_hist[-8:]) / len(rr_hist[-8:])
            if idx - accepted[-1] > 1.66 * rr_avg:
                best = -1
                best_val = th2
                for j in range(last_noise_start, i):
                    jdx = int(cand_idx[j])
                    if jdx - accepted[-1] >= refractory and idx - jdx >= refractory and cand_val[j] > best_val:
                        best = j
                        best_val = float(cand_val[j])
                if best >= 0:
                    jdx = int(cand_idx[best])
                    rr_hist.append(jdx - accepted[-1])
                    accepted.append(jdx)
                    spki = 0.25 * best_val + 0.75 * spki
                    th1 = npki + 0.25 * (spki - npki)

        if val > th1 and (not accepted or idx - accepted[-1] >= refractory):
            if accepted:
                rr_hist.append(idx - accepted[-1])
            accepted.append(idx)
            spki = 0.125 * val + 0.875 * spki
            last_noise_start = i + 1
        else:
            npki = 0.125 * val + 0.875 * npki
    return np.asarray(accepted, dtype=np.int64)


def perplexity_search(dist2, perplexity, tol, max_iter):
    """Row-wise Gaussian bandwidth search for t-SNE.

    Returns ``(P, beta, entropy)`` where ``P`` holds the conditional
    affinities ``p_{j|i}`` (zero diagonal, rows sum to one) and ``beta`` the
    precisions ``1 / (2 sigma_i^2)``.
    """
    n = dist2.shape[0]
    target = math.log(perplexity)
    P = np.zeros((n, n), dtype=np.float64)
    betas = np.ones(n, dtype=np.float64)
    entropies = np.zeros(n, dtype=np.float64)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        d = dist2[i, mask]
        d = d - d.min()
        beta = 1.0
        lo, hi = -math.inf, math.inf
        for _ in range(max_iter):
            p = np.exp(-d * beta)
            s = p.sum()
            h = math.log(s) + beta * float(np.dot(d, p)) / s
            diff = h - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == math.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = beta * 0.5 if lo == -math.inf else 0.5 * (beta + lo)
        P[i, mask] = p / s
        betas[i] = beta
        entropies[i] = h
        mask[i] = True
    return P, betas, entropies
