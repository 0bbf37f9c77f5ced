"""The conditional Bayesian Tucker decomposition: generation and model probability.

For sample x the feature tuple y is drawn as

    P(y | x) = sum_h phi[x, h] * prod_j psi_j[h_j, y_j]

where phi[x] is a distribution over the admissible topic tuples of x and
psi_j[h] a distribution over the d_j features of mode j. Without a hierarchy
every tuple of the K_1 x ... x K_p grid is admissible, listed in vec order.

Inside a :class:`DecompositionState` a token's latent topic is stored as a
*position* s into the support of its sample, so ``support[x, s]`` is the
topic tuple (as factor-matrix rows). Positions stay fixed while paths move,
which keeps level assignments intact when the hierarchy is resampled.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .config import ModelConfig
from .hierarchy import HierarchyState, log_dirichlet_pdf
from .rng import dirichlet_rows, make_rng, spawn
from .tensor import CountTensor, TopicIndexMap


@dataclass
class Priors:
    """Dirichlet hyperparameters.

    ``alpha`` is a scalar (symmetric) or a vector. With ``alpha_mode`` set to
    ``"position"`` a vector is indexed by position within T_x; with
    ``"tuple"`` it has length K and is indexed by vec(k).
    """

    alpha: np.ndarray
    beta: list[np.ndarray]
    alpha_mode: str = "position"

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.beta = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.beta]
        if self.alpha.size == 0 or np.any(self.alpha <= 0) or any(np.any(b <= 0) for b in self.beta):
            raise ValueError("all prior entries must be strictly positive")
        if self.alpha_mode not in ("position", "tuple"):
            raise ValueError(f"unknown alpha_mode {self.alpha_mode!r}")

    @classmethod
    def from_config(cls, cfg: ModelConfig, dims) -> "Priors":
        return cls(np.asarray(cfg.alpha, dtype=np.float64), cfg.beta_vectors(tuple(dims)), cfg.alpha_mode)

    @property
    def bsum(self) -> np.ndarray:
        return np.array([b.sum() for b in self.beta])

    def alpha_for(self, support: np.ndarray, K_dims) -> np.ndarray:
        """Concentration over positions for supports of shape (..., S, p)."""
        S = support.shape[-2]
        if self.alpha.ndim == 0 or self.alpha.size == 1:
            return np.full(support.shape[:-1], float(self.alpha.reshape(-1)[0]))
        if self.alpha_mode == "position":
            if self.alpha.size != S:
                raise ValueError(f"alpha has {self.alpha.size} entries but T_x has {S} positions")
            return np.broadcast_to(self.alpha, support.shape[:-1]).copy()
        tim = TopicIndexMap(tuple(K_dims))
        if self.alpha.size != tim.K:
            raise ValueError(f"alpha_mode 'tuple' needs {tim.K} entries, got {self.alpha.size}")
        return self.alpha[tim.ravel(support)]


@dataclass
class DecompositionState:
    """Latent state of one chain: assignments, sufficient statistics and parameters.

    Attributes
    ----------
    dims : (d_0, ..., d_p)
    K_dims : extent of the topic rows per mode
    support : (d_0, S, p) topic rows of every admissible tuple
    tok_x, tok_y : sample and feature tuple of every observation
    z : position of every observation within its sample's support
    n : (d_0, S) position counts per sample
    m : per mode, (K_j, d_j) feature counts per topic
    phi : (d_0, S) core slices over the support, or None when collapsed
    psi : per mode (K_j, d_j) factor matrices, or None when collapsed
    """

    dims: tuple[int, ...]
    K_dims: tuple[int, ...]
    support: np.ndarray
    tok_x: np.ndarray
    tok_y: np.ndarray
    z: np.ndarray
    n: np.ndarray = None
    m: list[np.ndarray] = None
    phi: np.ndarray | None = None
    psi: list[np.ndarray] | None = None
    hierarchy: HierarchyState | None = field(default=None, repr=False)

    def __post_init__(self):
        self.tok_x = np.asarray(self.tok_x, dtype=np.int64)
        self.tok_y = np.asarray(self.tok_y, dtype=np.int64).reshape(self.tok_x.size, len(self.dims) - 1)
        self.z = np.asarray(self.z, dtype=np.int64)
        if self.n is None or self.m is None:
            self.n, self.m = self.recount()

    @property
    def p(self) -> int:
        return len(self.dims) - 1

    @property
    def d0(self) -> int:
        return self.dims[0]

    @property
    def S(self) -> int:
        return self.support.shape[1]

    @property
    def N(self) -> int:
        return self.z.size

    def topic_rows(self) -> np.ndarray:
        """(N, p) topic rows of every observation."""
        return self.support[self.tok_x, self.z]

    def recount(self) -> tuple[np.ndarray, list[np.ndarray]]:
        """Sufficient statistics recomputed from z."""
        n = np.zeros((self.d0, self.S), dtype=np.int64)
        np.add.at(n, (self.tok_x, self.z), 1)
        rows = self.topic_rows() if self.N else np.zeros((0, self.p), dtype=np.int64)
        m = []
        for j in range(self.p):
            mj = np.zeros((self.K_dims[j], self.dims[j + 1]), dtype=np.int64)
            np.add.at(mj, (rows[:, j], self.tok_y[:, j]), 1)
            m.append(mj)
        return n, m

    def lam(self) -> np.ndarray:
        return np.bincount(self.tok_x, minlength=self.d0)

    def copy(self) -> "DecompositionState":
        return copy.deepcopy(self)

    def dense_phi(self, x: int) -> np.ndarray:
        """phi[x] laid out over the full K grid in vec order (zeros outside T_x)."""
        tim = TopicIndexMap(self.K_dims)
        out = np.zeros(tim.K)
        np.add.at(out, tim.ravel(self.support[x]), self.phi[x])
        return out

    def counts(self) -> CountTensor:
        return CountTensor.from_tokens(self.dims, self.tok_x, self.tok_y)


def full_support(K_dims, d0: int) -> np.ndarray:
    """Every tuple of the K grid in vec order, shared by all samples (read-only view)."""
    tuples = TopicIndexMap(tuple(K_dims)).all_tuples()
    return np.broadcast_to(tuples, (d0,) + tuples.shape)


def _lam_vector(lam, d0: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.int64)
    if lam.ndim == 0:
        lam = np.full(d0, int(lam))
    if lam.shape != (d0,) or np.any(lam < 0):
        raise ValueError(f"lambda must be {d0} nonnegative totals")
    return lam


def generate(cfg: ModelConfig, priors: Priors, lam, seed: int):
    """Draw a dataset and its latent variables from the generative process.

    Returns the count tensor and the ground-truth :class:`DecompositionState`
    (with ``phi``, ``psi`` and, for hierarchical models, ``hierarchy`` set).
    Stream 0 of the seed drives the hierarchy and the factor matrices, stream
    ``1 + x`` drives sample x.
    """
    if cfg.dims is None:
        raise ValueError("generate needs dims")
    dims = cfg.dims
    d0, p = dims[0], cfg.p
    lam = _lam_vector(lam, d0)
    streams = spawn(seed, 1 + d0)
    shared = make_rng(streams[0])
    hierarchy = None
    if cfg.hierarchy == "none":
        K_dims = tuple(cfg.K)
        support = full_support(K_dims, d0)
    else:
        hierarchy = HierarchyState(cfg, d0)
        hierarchy.init_paths(shared, explicit_pam=True)
        K_dims = hierarchy.n_rows()
        support = hierarchy.support_all()
    psi = [dirichlet_rows(shared, np.broadcast_to(priors.beta[j], (K_dims[j], dims[j + 1]))) for j in range(p)]
    alpha = priors.alpha_for(support, K_dims)
    S = support.shape[1]
    phi = np.zeros((d0, S))
    tok_x, tok_y, z = [], [], []
    for x in range(d0):
        rng = make_rng(streams[1 + x])
        phi[x] = dirichlet_rows(rng, alpha[x])
        if lam[x] == 0:
            continue
        pos = rng.choice(S, size=int(lam[x]), p=phi[x])
        ys = np.empty((lam[x], p), dtype=np.int64)
        for j in range(p):
            rows = support[x, pos, j]
            for r in np.unique(rows):
                sel = rows == r
                ys[sel, j] = rng.choice(dims[j + 1], size=int(sel.sum()), p=psi[j][r])
        tok_x.append(np.full(lam[x], x))
        tok_y.append(ys)
        z.append(pos)
    tok_x = np.concatenate(tok_x) if tok_x else np.zeros(0, dtype=np.int64)
    tok_y = np.concatenate(tok_y) if tok_y else np.zeros((0, p), dtype=np.int64)
    z = np.concatenate(z) if z else np.zeros(0, dtype=np.int64)
    state = DecompositionState(dims, tuple(K_dims), support, tok_x, tok_y, z, phi=phi, psi=psi, hierarchy=hierarchy)
    return state.counts(), state


def _phi_on_support(state: DecompositionState) -> np.ndarray:
    phi = np.asarray(state.phi, dtype=np.float64)
    if phi.shape == (state.d0, state.S):
        return phi
    K = int(np.prod(state.K_dims))
    if phi.shape != (state.d0, K):
        raise ValueError(f"phi must be (d0, S) or (d0, K), got {phi.shape}")
    tim = TopicIndexMap(state.K_dims)
    out = np.zeros((state.d0, state.S))
    for x in range(state.d0):
        flat = tim.ravel(state.support[x])
        outside = np.ones(K, dtype=bool)
        outside[flat] = False
        if np.any(phi[x, outside] > 0):
            raise ValueError(f"phi of sample {x + 1} has mass outside its admissible tuples")
        out[x] = phi[x, flat]
    return out


def log_model_probability(
    state: DecompositionState,
    priors: Priors,
    hierarchy: HierarchyState | None = None,
    explicit_pam: bool = True,
) -> float:
    """log P(Y, Z, phi, psi | alpha, beta), times P(T | gamma) when a hierarchy is given.

    ``state.phi`` may be given over the support (d0, S) or densely over the K
    grid (d0, K); in the dense case mass outside T_x is an error. For PAM
    components with explicit transitions the transition prior is included.
    """
    if state.phi is None or state.psi is None:
        raise ValueError("log_model_probability needs explicit phi and psi")
    phi = _phi_on_support(state)
    total = 0.0
    for j in range(state.p):
        total += float(log_dirichlet_pdf(state.psi[j], priors.beta[j]).sum())
    alpha = priors.alpha_for(state.support, state.K_dims)
    for x in range(state.d0):
        total += float(log_dirichlet_pdf(phi[x], alpha[x])[0])
    if state.N:
        rows = state.topic_rows()
        with np.errstate(divide="ignore"):
            total += float(np.log(phi[state.tok_x, state.z]).sum())
            for j in range(state.p):
                total += float(np.log(state.psi[j][rows[:, j], state.tok_y[:, j]]).sum())
    if hierarchy is not None:
        total += hierarchy.log_prior(explicit_pam)
    return total


def collapsed_log_joint(state: DecompositionState, priors: Priors) -> float:
    """log P(Y, Z | alpha, beta) with phi and psi integrated out."""
    alpha = priors.alpha_for(state.support, state.K_dims)
    asum = alpha.sum(axis=1)
    total = float(
        (gammaln(asum) - gammaln(asum + state.n.sum(axis=1))).sum()
        + (gammaln(state.n + alpha) - gammaln(alpha)).sum()
    )
    for j in range(state.p):
        b = priors.beta[j]
        mj = state.m[j]
        total += float(
            (gammaln(b.sum()) - gammaln(b.sum() + mj.sum(axis=1))).sum() + (gammaln(mj + b) - gammaln(b)).sum()
        )
    return total


def audit(state: DecompositionState) -> list[str]:
    """Consistency problems of a state; an empty list means it is sound."""
    errs = []
    if state.N and (state.z.min() < 0 or state.z.max() >= state.S):
        errs.append("an assignment points outside the admissible tuples of its sample")
        return errs
    n, m = state.recount()
    if not np.array_equal(n, state.n):
        errs.append("position counts n differ from a recount of z")
    for j in range(state.p):
        if state.m[j].shape != m[j].shape or not np.array_equal(m[j], state.m[j]):
            errs.append(f"feature counts m of mode {j + 1} differ from a recount of z")
    if state.phi is not None and not np.allclose(np.asarray(state.phi).sum(axis=1), 1.0, atol=1e-9):
        errs.append("a core slice does not sum to one")
    if state.psi is not None:
        for j, pj in enumerate(state.psi):
            if not np.allclose(pj.sum(axis=1), 1.0, atol=1e-9):
                errs.append(f"a factor row of mode {j + 1} does not sum to one")
    h = state.hierarchy
    if h is not None:
        errs.extend(h.audit())
        if not np.array_equal(h.support_all(), state.support):
            errs.append("supports disagree with the hierarchy paths")
    return errs
