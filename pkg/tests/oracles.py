"""Independent reference computations used by the tests.

Written with plain loops and closed forms so that they share no code with
the package beyond the data they are handed.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import gammaln


def log_beta(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(gammaln(v).sum() - gammaln(v.sum()))


def vec(k, K_dims) -> int:
    """0-based column-major index of a 0-based topic tuple."""
    out, stride = 0, 1
    for kj, Kj in zip(k, K_dims):
        out += kj * stride
        stride *= Kj
    return out


def exact_log_joint(tok_x, tok_y, topics, d0, K_dims, fdims, alpha, betas) -> float:
    """log P(Y, Z | alpha, beta) for the full K grid with phi and psi integrated out.

    ``topics`` holds the 0-based topic tuple of every token; ``alpha`` is a
    length-K vector in vec order.
    """
    K = int(np.prod(K_dims))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (K,))
    n = np.zeros((d0, K))
    m = [np.zeros((Kj, dj)) for Kj, dj in zip(K_dims, fdims)]
    for x, y, k in zip(tok_x, tok_y, topics):
        n[x, vec(k, K_dims)] += 1
        for j, (kj, yj) in enumerate(zip(k, y)):
            m[j][kj, yj] += 1
    total = 0.0
    for x in range(d0):
        total += log_beta(alpha + n[x]) - log_beta(alpha)
    for j, b in enumerate(betas):
        b = np.broadcast_to(np.asarray(b, dtype=np.float64), (fdims[j],))
        for row in m[j]:
            total += log_beta(b + row) - log_beta(b)
    return total


def exact_posterior(tok_x, tok_y, d0, K_dims, fdims, alpha, betas) -> dict[tuple, float]:
    """P(Z | Y) over every assignment of topic tuples, keyed by the tuple of vec indices."""
    grid = list(itertools.product(*[range(k) for k in K_dims[::-1]]))
    grid = [g[::-1] for g in grid]
    logs = {}
    for zs in itertools.product(grid, repeat=len(tok_x)):
        key = tuple(vec(k, K_dims) for k in zs)
        logs[key] = exact_log_joint(tok_x, tok_y, zs, d0, K_dims, fdims, alpha, betas)
    top = max(logs.values())
    w = {k: math.exp(v - top) for k, v in logs.items()}
    s = sum(w.values())
    return {k: v / s for k, v in w.items()}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def empirical(rows: np.ndarray) -> dict[tuple, float]:
    keys, counts = np.unique(rows, axis=0, return_counts=True)
    return {tuple(int(v) for v in k): c / rows.shape[0] for k, c in zip(keys, counts)}


def crp_eppf(sizes, gamma) -> float:
    """Closed-form CRP partition probability of one seating with the given table sizes."""
    n = sum(sizes)
    num = gamma ** len(sizes) * math.prod(math.factorial(s - 1) for s in sizes)
    den = math.prod(gamma + i for i in range(n))
    return num / den
