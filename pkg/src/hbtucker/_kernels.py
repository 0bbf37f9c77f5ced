"""Compiled inner loops of the collapsed Tucker sampler.

Feature counts of all modes live in one flat buffer: the count of feature y
under topic row r of mode j sits at ``m_off[j] + r * fdims[j] + y`` and the
row total at ``msum_off[j] + r``. Prior vectors are flattened the same way
through ``b_off``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NEGATIVE_COUNT = -1


@njit(cache=True)
def token_weights(x, y, n, m, m_off, msum, msum_off, fdims, beta, b_off, bsum, support, alpha, out):
    """Unnormalized conditional of one token over the positions of its sample.

    The token must already be removed from the counts. Returns the sum.
    """
    S = n.shape[1]
    p = fdims.shape[0]
    total = 0.0
    for s in range(S):
        w = n[x, s] + alpha[x, s]
        for j in range(p):
            r = support[x, s, j]
            yj = y[j]
            num = m[m_off[j] + r * fdims[j] + yj] + beta[b_off[j] + yj]
            den = msum[msum_off[j] + r] + bsum[j]
            w *= num / den
        out[s] = w
        total += w
    return total


@njit(cache=True)
def _move(x, y, s, sign, n, m, m_off, msum, msum_off, fdims, support):
    n[x, s] += sign
    bad = n[x, s] < 0
    for j in range(fdims.shape[0]):
        r = support[x, s, j]
        m[m_off[j] + r * fdims[j] + y[j]] += sign
        msum[msum_off[j] + r] += sign
        if m[m_off[j] + r * fdims[j] + y[j]] < 0 or msum[msum_off[j] + r] < 0:
            bad = True
    return bad


@njit(cache=True)
def collapsed_sweeps(
    tok_x, tok_y, z, n, m, m_off, msum, msum_off, fdims, beta, b_off, bsum, support, alpha, uniforms, record
):
    """Run ``uniforms.shape[0]`` collapsed sweeps in token order.

    ``uniforms[t, i]`` is the uniform variate used for token i in sweep t.
    When ``record`` has a row per sweep, z is copied into it after each
    sweep. Returns 0, or ``NEGATIVE_COUNT`` if a removal drives a count
    below zero (the state is then left as it was at that point).
    """
    N = tok_x.shape[0]
    S = n.shape[1]
    w = np.empty(S)
    keep = record.shape[0] == uniforms.shape[0]
    for t in range(uniforms.shape[0]):
        for i in range(N):
            x = tok_x[i]
            y = tok_y[i]
            if _move(x, y, z[i], -1, n, m, m_off, msum, msum_off, fdims, support):
                return NEGATIVE_COUNT
            total = token_weights(x, y, n, m, m_off, msum, msum_off, fdims, beta, b_off, bsum, support, alpha, w)
            u = uniforms[t, i] * total
            acc = 0.0
            pick = S - 1
            for s in range(S):
                acc += w[s]
                if u < acc:
                    pick = s
                    break
            z[i] = pick
            _move(x, y, pick, 1, n, m, m_off, msum, msum_off, fdims, support)
        if keep:
            record[t, :] = z
    return 0
