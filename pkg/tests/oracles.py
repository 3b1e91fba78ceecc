"""Independent reference implementations used by the tests.

Written as plain loops over scalars so they share no code with the package.
"""

from __future__ import annotations

import math

import numpy as np


def kl_gauss_1d(mu_p, var_p, mu_q, var_q):
    return 0.5 * (math.log(var_q / var_p) + (var_p + (mu_p - mu_q) ** 2) / var_q - 1.0)


def jeffreys_loop(mu_p, var_p, mu_q, var_q):
    """KL(p||q) + KL(q||p), summed over dimensions; the log terms cancel."""
    total = 0.0
    for a, va, b, vb in zip(mu_p, var_p, mu_q, var_q):
        total += kl_gauss_1d(a, va, b, vb) + kl_gauss_1d(b, vb, a, va)
    return total


def knn_var_loop(points, h, k, floor=1e-6):
    order = sorted(range(len(points)), key=lambda i: (sum((p - q) ** 2 for p, q in zip(points[i], h)), i))[:k]
    nb = [points[i] for i in order]
    out = []
    for d in range(len(h)):
        vals = [p[d] for p in nb]
        m = sum(vals) / len(vals)
        out.append(max(sum((v - m) ** 2 for v in vals) / len(vals), floor))
    return out


def classify_loop(h, local_var, protos, lambda1):
    """protos: list of (class_id, mean, var). Returns (class_id, D, d_R, d_E)."""
    best = None
    for cid, mean, var in sorted(protos, key=lambda p: p[0]):
        dr = jeffreys_loop(h, local_var, mean, var)
        de = math.sqrt(sum((a - b) ** 2 for a, b in zip(h, mean)))
        D = dr + lambda1 * de
        if best is None or D < best[1]:
            best = (cid, D, dr, de)
    return best


def auroc_pairs(scores, truth):
    pos = [s for s, t in zip(scores, truth) if t]
    neg = [s for s, t in zip(scores, truth) if not t]
    wins = 0.0
    for p in pos:
        for n in neg:
            wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(pos) * len(neg))


def central_difference(f, params, step=1e-5):
    """Numerical gradient of scalar f() w.r.t. each array in ``params`` (mutated in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + step
            up = f()
            p[i] = old - step
            down = f()
            p[i] = old
            g[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, atol=1e-8):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        err = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), atol)
        worst = max(worst, float(err.max()))
    return worst
