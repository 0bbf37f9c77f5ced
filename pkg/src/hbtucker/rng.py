"""Seeded counter-based random streams.

Every stochastic entry point takes an integer seed and builds Philox
generators from ``numpy.random.SeedSequence``. Substreams come from
``SeedSequence.spawn`` so they are independent and reproducible:

* ``generate``: child 0 drives the shared draws (factor matrices, topic
  paths), child ``1 + x`` drives sample ``x`` (its core slice and counts).
* ``run``: chain ``c`` uses child ``c`` of the seed.
* evaluation: the held-out split and folds use child 0, pseudo-samples use
  child 1.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spawn(seed, n: int) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return ss.spawn(n)


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    return [make_rng(s) for s in spawn(seed, n)]


def dirichlet_rows(rng: np.random.Generator, conc: np.ndarray) -> np.ndarray:
    """Draw one Dirichlet vector per row of ``conc``.

    Gamma variates are drawn in log space, log G = log Gamma(a+1) + log(U)/a,
    which stays finite for concentrations far below one where plain gamma
    draws underflow to zero.
    """
    conc = np.asarray(conc, dtype=np.float64)
    squeeze = conc.ndim == 1
    conc = np.atleast_2d(conc)
    if conc.shape[1] == 0:
        return conc.copy()
    g = rng.standard_gamma(conc + 1.0)
    u = rng.random(conc.shape)
    logg = np.log(g) + np.log(u) / conc
    logg -= logg.max(axis=1, keepdims=True)
    w = np.exp(logg)
    out = w / w.sum(axis=1, keepdims=True)
    return out[0] if squeeze else out
