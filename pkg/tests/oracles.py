"""Independent brute-force reference implementations used as test oracles.

Everything here is deliberately written as plain nested loops or two-pass
formulas with no code shared with the package, so the fast paths are checked
against a different derivation of the same math.
"""

import numpy as np


def conv2d_loops(x, kernel, bias, stride=1, padding=0):
    """Direct six-nested-loop 2-d cross-correlation."""
    n, cin, h, w = x.shape
    cout, _, kh, kw = kernel.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    xp = np.zeros((n, cin, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    xp[:, :, padding : padding + h, padding : padding + w] = x
    out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    for b in range(n):
        for co in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += xp[b, ci, i * stride + ki, j * stride + kj] \
                                    * kernel[co, ci, ki, kj]
                    out[b, co, i, j] = acc + bias[co]
    return out


def conv_transpose2d_loops(x, kernel, bias, stride=1, padding=0):
    """Direct scatter-style transposed convolution."""
    n, cin, h, w = x.shape
    _, cout, kh, kw = kernel.shape
    ho = (h - 1) * stride - 2 * padding + kh
    wo = (w - 1) * stride - 2 * padding + kw
    full = np.zeros((n, cout, ho + 2 * padding, wo + 2 * padding), dtype=np.float64)
    for b in range(n):
        for ci in range(cin):
            for i in range(h):
                for j in range(w):
                    v = x[b, ci, i, j]
                    for co in range(cout):
                        for ki in range(kh):
                            for kj in range(kw):
                                full[b, co, i * stride + ki, j * stride + kj] += \
                                    v * kernel[ci, co, ki, kj]
    out = full[:, :, padding : padding + ho, padding : padding + wo]
    return out + bias[None, :, None, None]


def matmul_loops(a, b):
    """Naive triple-loop matrix product."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def batchnorm_train_oracle(x, gamma, beta, epsilon=1e-5):
    """Two-pass per-channel statistics normalization of x[N,C,H,W]."""
    n, c, h, w = x.shape
    out = np.zeros_like(x, dtype=np.float64)
    for ch in range(c):
        vals = x[:, ch, :, :].reshape(-1).astype(np.float64)
        mean = vals.sum() / vals.size           # pass 1
        var = ((vals - mean) ** 2).sum() / vals.size  # pass 2
        out[:, ch, :, :] = gamma[ch] * (x[:, ch, :, :] - mean) / np.sqrt(var + epsilon) \
            + beta[ch]
    return out


def confusion_tally(predictions, labels, positive_class):
    """One-pass counting of TP/FP/TN/FN."""
    tp = fp = tn = fn = 0
    for p, t in zip(predictions, labels):
        if p == positive_class and t == positive_class:
            tp += 1
        elif p == positive_class and t != positive_class:
            fp += 1
        elif p != positive_class and t != positive_class:
            tn += 1
        else:
            fn += 1
    return tp, fp, tn, fn


def relative_error(a, b, floor=1e-12):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), floor)
    return float(np.abs(a - b).max(initial=0.0) / scale)
