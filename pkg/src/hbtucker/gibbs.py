"""Posterior samplers for the decomposition and its topic hierarchy.

One sweep updates the assignments (collapsed or with explicit phi and psi)
and then, for hierarchical models, every sample's path. Path updates always
integrate the factor matrices out: a candidate path is scored by the CRP or
transition prior times the Dirichlet-multinomial marginal of the sample's
features under the topics the path would assign them to.

The log joint reported per sweep is log P(Y, Z, T) with phi and psi (and
PAM transitions) integrated out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .config import ConfigError, ModelConfig, SamplerConfig
from .hierarchy import HierarchyState
from .model import DecompositionState, Priors, audit, collapsed_log_joint, full_support
from .rng import dirichlet_rows, make_rng, spawn
from .tensor import CountTensor


class AuditError(RuntimeError):
    """Incrementally maintained statistics disagree with a recount."""

    def __init__(self, sweep: int, problems: list[str]):
        self.sweep = sweep
        self.problems = problems
        super().__init__(f"audit failed after sweep {sweep}: " + "; ".join(problems))


@dataclass
class _Packed:
    m: np.ndarray
    m_off: np.ndarray
    msum: np.ndarray
    msum_off: np.ndarray
    fdims: np.ndarray
    beta: np.ndarray
    b_off: np.ndarray
    bsum: np.ndarray


def _pack(state: DecompositionState, priors: Priors) -> _Packed:
    fdims = np.array(state.dims[1:], dtype=np.int64)
    sizes = np.array([mj.size for mj in state.m], dtype=np.int64)
    rows = np.array([mj.shape[0] for mj in state.m], dtype=np.int64)
    return _Packed(
        m=np.concatenate([mj.ravel() for mj in state.m]).astype(np.int64),
        m_off=np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64),
        msum=np.concatenate([mj.sum(axis=1) for mj in state.m]).astype(np.int64),
        msum_off=np.concatenate([[0], np.cumsum(rows)[:-1]]).astype(np.int64),
        fdims=fdims,
        beta=np.concatenate(priors.beta),
        b_off=np.concatenate([[0], np.cumsum(fdims)[:-1]]).astype(np.int64),
        bsum=priors.bsum,
    )


def _unpack(state: DecompositionState, pk: _Packed) -> None:
    for j, mj in enumerate(state.m):
        state.m[j] = pk.m[pk.m_off[j] : pk.m_off[j] + mj.size].reshape(mj.shape).copy()


def conditional_weights(state: DecompositionState, priors: Priors, i: int) -> np.ndarray:
    """Normalized collapsed conditional of token i over its sample's positions.

    The token is taken out of the statistics for the computation; the state
    is left unchanged.
    """
    pk = _pack(state, priors)
    x, s = int(state.tok_x[i]), int(state.z[i])
    y = state.tok_y[i]
    n = state.n.copy()
    if _kernels._move(x, y, s, -1, n, pk.m, pk.m_off, pk.msum, pk.msum_off, pk.fdims, np.ascontiguousarray(state.support)):
        raise RuntimeError("negative count after removing a token; statistics are corrupted")
    alpha = priors.alpha_for(state.support, state.K_dims)
    out = np.empty(state.S)
    total = _kernels.token_weights(
        x, y, n, pk.m, pk.m_off, pk.msum, pk.msum_off, pk.fdims, pk.beta, pk.b_off, pk.bsum,
        np.ascontiguousarray(state.support), alpha, out,
    )
    return out / total


def _run_kernel(state: DecompositionState, priors: Priors, uniforms: np.ndarray, record: np.ndarray) -> None:
    pk = _pack(state, priors)
    alpha = priors.alpha_for(state.support, state.K_dims)
    code = _kernels.collapsed_sweeps(
        state.tok_x, np.ascontiguousarray(state.tok_y), state.z, state.n, pk.m, pk.m_off, pk.msum, pk.msum_off,
        pk.fdims, pk.beta, pk.b_off, pk.bsum, np.ascontiguousarray(state.support), alpha, uniforms, record,
    )
    if code == _kernels.NEGATIVE_COUNT:
        raise RuntimeError("negative count after removing a token; statistics are corrupted")
    _unpack(state, pk)


def sweep_collapsed(state: DecompositionState, priors: Priors, rng: np.random.Generator) -> None:
    """One collapsed sweep over every token, in token order."""
    if state.N:
        _run_kernel(state, priors, rng.random((1, state.N)), np.zeros((0, state.N), dtype=np.int64))
    state.phi = None
    state.psi = None


def collapsed_z_trace(
    state: DecompositionState, priors: Priors, rng: np.random.Generator, n_sweeps: int, chunk: int = 1 << 20
) -> np.ndarray:
    """Run ``n_sweeps`` collapsed sweeps and return z after each, shape (n_sweeps, N)."""
    out = np.empty((n_sweeps, state.N), dtype=np.int64)
    step = max(1, chunk // max(state.N, 1))
    for lo in range(0, n_sweeps, step):
        hi = min(lo + step, n_sweeps)
        _run_kernel(state, priors, rng.random((hi - lo, state.N)), out[lo:hi])
    return out


def assignment_weights(state: DecompositionState) -> np.ndarray:
    """(N, S) conditional of every token's position given phi and psi."""
    w = state.phi[state.tok_x].copy()
    for j in range(state.p):
        rows = state.support[state.tok_x, :, j]
        w *= state.psi[j][rows, state.tok_y[:, j, None]]
    return w / w.sum(axis=1, keepdims=True)


def sweep_noncollapsed(state: DecompositionState, priors: Priors, rng: np.random.Generator) -> None:
    """Redraw phi and psi from their conditionals, then every z given them."""
    alpha = priors.alpha_for(state.support, state.K_dims)
    state.phi = dirichlet_rows(rng, alpha + state.n)
    state.psi = [dirichlet_rows(rng, priors.beta[j] + state.m[j]) for j in range(state.p)]
    if state.N:
        cum = np.cumsum(assignment_weights(state), axis=1)
        u = rng.random(state.N) * cum[:, -1]
        state.z = np.minimum((cum <= u[:, None]).sum(axis=1), state.S - 1)
    state.n, state.m = state.recount()


def _draw_log(rng: np.random.Generator, scores) -> int:
    scores = np.asarray(scores, dtype=np.float64)
    top = scores.max()
    w = np.exp(scores - top) if np.isfinite(top) else np.ones_like(scores)
    cum = np.cumsum(w)
    return int(min(np.searchsorted(cum, rng.random() * cum[-1], side="right"), scores.size - 1))


def _marginal(m_rows: np.ndarray, feats: np.ndarray, counts: np.ndarray, beta: np.ndarray, bsum: float) -> np.ndarray:
    """log P(features | rows, other data) for each row, psi integrated out."""
    if feats.size == 0:
        return np.zeros(m_rows.shape[0])
    mm = m_rows[:, feats]
    b = beta[feats]
    tot = m_rows.sum(axis=1)
    return (
        (gammaln(mm + b + counts) - gammaln(mm + b)).sum(axis=1)
        + gammaln(tot + bsum)
        - gammaln(tot + bsum + counts.sum())
    )


def _tokens_by_sample(state: DecompositionState) -> list[np.ndarray]:
    order = np.argsort(state.tok_x, kind="stable")
    bounds = np.searchsorted(state.tok_x[order], np.arange(state.d0 + 1))
    return [order[bounds[x] : bounds[x + 1]] for x in range(state.d0)]


def _grow_rows(state: DecompositionState, j: int, rows: int, priors: Priors, rng) -> None:
    extra = rows - state.m[j].shape[0]
    if extra <= 0:
        return
    state.m[j] = np.vstack([state.m[j], np.zeros((extra, state.dims[j + 1]), dtype=np.int64)])
    if state.psi is not None:
        fresh = dirichlet_rows(rng, np.broadcast_to(priors.beta[j], (extra, state.dims[j + 1])))
        state.psi[j] = np.vstack([state.psi[j], fresh])


def _sync_rows(state: DecompositionState) -> None:
    state.K_dims = tuple(mj.shape[0] for mj in state.m)


def resample_paths_trees(
    state: DecompositionState, hierarchy: HierarchyState, priors: Priors, rng: np.random.Generator
) -> None:
    """Redraw the path of every sample in every tree mode, one sample at a time.

    The whole path is scored jointly: nested CRP prior of the path times the
    marginal likelihood of the sample's features at each level. Paths that
    open new nodes are candidates too.
    """
    groups = _tokens_by_sample(state)
    for comp in hierarchy.trees:
        j = comp.mode
        plev = hierarchy.position_levels[:, j]
        beta, bsum = priors.beta[j], float(priors.beta[j].sum())
        for x in range(state.d0):
            idx = groups[x]
            lev = plev[state.z[idx]]
            ys = state.tok_y[idx, j]
            old = comp.path_rows(x)
            np.subtract.at(state.m[j], (old[lev], ys), 1)
            if state.m[j][old].min() < 0:
                raise RuntimeError(f"tree mode {j + 1}: negative feature count after removing sample {x + 1}")
            comp.remove_path(x)
            ll_level, ll_new = [], np.zeros(comp.L)
            for l in range(comp.L):
                feats, cnts = np.unique(ys[lev == l], return_counts=True)
                nodes = comp.nodes_at_level(l)
                rows = np.array([comp.row[nid] for nid in nodes], dtype=np.int64)
                ll = _marginal(state.m[j][rows], feats, cnts, beta, bsum)
                ll_level.append(dict(zip(nodes, ll.tolist())))
                ll_new[l] = _marginal(np.zeros((1, state.dims[j + 1])), feats, cnts, beta, bsum)[0]
            cands, scores = comp.enumerate_candidates(ll_level, ll_new)
            nodes = comp.realize(cands[_draw_log(rng, scores)])
            comp.add_path(x, nodes)
            _grow_rows(state, j, comp.n_rows, priors, rng)
            new = comp.path_rows(x)
            np.add.at(state.m[j], (new[lev], ys), 1)
            state.support[x, :, j] = new[plev]
    _sync_rows(state)


def resample_paths_pam(
    state: DecompositionState,
    hierarchy: HierarchyState,
    priors: Priors,
    rng: np.random.Generator,
    variant: str = "collapsed",
) -> None:
    """Redraw PAM topic choices level by level, slot by slot, sample by sample.

    A choice is scored by the probability of the whole changed path given
    every other path, which covers the transition into the slot and the
    transitions out of it into child slots, times the marginal likelihood of
    the features the sample assigns to that level. ``non-collapsed`` redraws
    each slot's transition distributions from their conditional first and
    scores with them; ``collapsed`` integrates them out.
    """
    if variant not in ("collapsed", "non-collapsed"):
        raise ValueError(f"unknown PAM update {variant!r}")
    explicit = variant == "non-collapsed"
    groups = _tokens_by_sample(state)
    for comp in hierarchy.pams:
        for s in comp.slots:
            lev_s, a = s
            j = comp.modes[a]
            if explicit:
                comp.draw_transitions(rng, [s], posterior=True)
            tau = int(comp.tau[s])
            if tau == 1:
                continue
            plev = hierarchy.position_levels[:, j]
            cand_rows = comp.offsets[a, lev_s] + np.arange(tau)
            beta, bsum = priors.beta[j], float(priors.beta[j].sum())
            for x in range(state.d0):
                idx = groups[x]
                ys = state.tok_y[idx[plev[state.z[idx]] == lev_s], j]
                ch = comp.choice[x].copy()
                np.subtract.at(state.m[j], (cand_rows[ch[s]], ys), 1)
                if state.m[j][cand_rows[ch[s]]].min() < 0:
                    raise RuntimeError(f"pam mode {j + 1}: negative feature count after removing sample {x + 1}")
                comp.remove_path(x)
                scores = np.empty(tau)
                for k in range(tau):
                    ch[s] = k
                    scores[k] = comp.log_path_prior(ch, explicit)
                feats, cnts = np.unique(ys, return_counts=True)
                scores += _marginal(state.m[j][cand_rows], feats, cnts, beta, bsum)
                ch[s] = _draw_log(rng, scores)
                comp.add_path(x, ch)
                np.add.at(state.m[j], (cand_rows[ch[s]], ys), 1)
                rows = comp.offsets[a] + comp.choice[x][:, a]
                state.support[x, :, j] = rows[plev]


def compact_rows(state: DecompositionState) -> None:
    """Drop the rows of pruned tree nodes and renumber the rest densely."""
    h = state.hierarchy
    if h is None:
        return
    for j, remap in enumerate(h.compact()):
        if remap is None:
            continue
        keep = remap >= 0
        if state.m[j][~keep].any():
            raise RuntimeError(f"tree mode {j + 1}: a pruned node still holds feature counts")
        new = np.zeros((int(keep.sum()), state.dims[j + 1]), dtype=np.int64)
        new[remap[keep]] = state.m[j][keep]
        state.m[j] = new
        if state.psi is not None:
            psi = np.empty(new.shape)
            psi[remap[keep]] = state.psi[j][keep]
            state.psi[j] = psi
        state.support[..., j] = remap[state.support[..., j]]
    _sync_rows(state)


def psi_posterior(state: DecompositionState, priors: Priors) -> list[np.ndarray]:
    """E[psi | Z, Y]: (m + beta) / (row total + sum beta) for every mode."""
    return [(mj + b) / (mj.sum(axis=1, keepdims=True) + b.sum()) for mj, b in zip(state.m, priors.beta)]


def phi_posterior(state: DecompositionState, priors: Priors) -> np.ndarray:
    alpha = priors.alpha_for(state.support, state.K_dims)
    return (state.n + alpha) / (state.n + alpha).sum(axis=1, keepdims=True)


@dataclass
class SweepDiagnostics:
    """Per-sweep trace: log joint, live topics per mode, and audit outcome (None when skipped)."""

    sweep: int
    log_joint: float
    K: tuple[int, ...]
    audit_ok: bool | None = None


@dataclass
class Draw:
    """A retained posterior state summarized by its conditional means."""

    sweep: int
    log_joint: float
    K: tuple[int, ...]
    psi: list[np.ndarray]
    phi: np.ndarray


@dataclass
class ChainResult:
    chain: int
    diagnostics: list[SweepDiagnostics]
    draws: list[Draw]
    state: DecompositionState
    psi_mean: list[np.ndarray]

    @property
    def hierarchy(self) -> HierarchyState | None:
        return self.state.hierarchy


@dataclass
class FitResult:
    """Output of :func:`run`. Chain 0 provides the default summaries."""

    model: ModelConfig
    sampler: SamplerConfig
    priors: Priors
    chains: list[ChainResult] = field(default_factory=list)

    @property
    def state(self) -> DecompositionState:
        return self.chains[0].state

    @property
    def psi_mean(self) -> list[np.ndarray]:
        return self.chains[0].psi_mean

    @property
    def diagnostics(self) -> list[SweepDiagnostics]:
        return self.chains[0].diagnostics

    @property
    def draws(self) -> list[Draw]:
        return self.chains[0].draws


class Chain:
    """One Markov chain: initialization and the alternation of the two phases."""

    def __init__(self, t: CountTensor, model: ModelConfig, sampler: SamplerConfig, priors: Priors, seed):
        self.model = model
        self.sampler = sampler
        self.priors = priors
        self.rng = make_rng(seed)
        self.hvariant = sampler.hierarchy_variant(model)
        tok_x, tok_y = t.tokens()
        d0 = t.dims[0]
        h = None
        if self.hvariant == "none":
            K_dims = tuple(model.K)
            support = full_support(K_dims, d0)
        else:
            h = HierarchyState(model, d0)
            h.init_paths(self.rng, explicit_pam=self.hvariant == "pam-noncollapsed")
            K_dims = h.n_rows()
            support = h.support_all()
        z = self.rng.integers(0, support.shape[1], size=tok_x.size)
        self.state = DecompositionState(t.dims, tuple(K_dims), support, tok_x, tok_y, z, hierarchy=h)
        self.sweep = 0

    def step(self) -> None:
        st = self.state
        if self.sampler.variant == "collapsed":
            sweep_collapsed(st, self.priors, self.rng)
        else:
            sweep_noncollapsed(st, self.priors, self.rng)
        if self.hvariant != "none":
            resample_paths_trees(st, st.hierarchy, self.priors, self.rng)
            if self.hvariant.startswith("pam"):
                update = "non-collapsed" if self.hvariant == "pam-noncollapsed" else "collapsed"
                resample_paths_pam(st, st.hierarchy, self.priors, self.rng, update)
            compact_rows(st)
        self.sweep += 1

    def log_joint(self) -> float:
        st = self.state
        lj = collapsed_log_joint(st, self.priors)
        if st.hierarchy is not None:
            lj += st.hierarchy.log_prior(explicit_pam=False)
        return lj

    def live_K(self) -> tuple[int, ...]:
        st = self.state
        return tuple(st.hierarchy.K_live()) if st.hierarchy is not None else tuple(st.K_dims)


def _check_data(t: CountTensor, model: ModelConfig) -> None:
    if model.dims is not None and tuple(model.dims) != tuple(t.dims):
        raise ConfigError(f"count tensor dims {tuple(t.dims)} disagree with config dims {tuple(model.dims)}")
    if t.p != model.p:
        raise ConfigError(f"count tensor has {t.p} feature modes, config has p={model.p}")


def run_chain(
    t: CountTensor, model: ModelConfig, sampler: SamplerConfig, priors: Priors, seed, index: int = 0
) -> ChainResult:
    chain = Chain(t, model, sampler, priors, seed)
    diags: list[SweepDiagnostics] = []
    draws: list[Draw] = []
    psi_sum = None
    trees = chain.state.hierarchy is not None and bool(chain.state.hierarchy.trees)
    for sweep in range(1, sampler.total_sweeps + 1):
        chain.step()
        ok = None
        if sampler.audit_every and sweep % sampler.audit_every == 0:
            problems = audit(chain.state)
            if problems:
                raise AuditError(sweep, problems)
            ok = True
        lj = chain.log_joint()
        if not math.isfinite(lj):
            raise RuntimeError(f"log joint is not finite after sweep {sweep}")
        diags.append(SweepDiagnostics(sweep, lj, chain.live_K(), ok))
        if sweep > sampler.burn_in and (sweep - sampler.burn_in) % sampler.thin == 0:
            psi = psi_posterior(chain.state, priors)
            draws.append(Draw(sweep, lj, chain.live_K(), psi, phi_posterior(chain.state, priors)))
            if not trees:
                psi_sum = psi if psi_sum is None else [a + b for a, b in zip(psi_sum, psi)]
    if trees or psi_sum is None:
        psi_mean = psi_posterior(chain.state, priors)
    else:
        psi_mean = [a / len(draws) for a in psi_sum]
    return ChainResult(index, diags, draws, chain.state, psi_mean)


def run(t: CountTensor, model: ModelConfig, sampler: SamplerConfig, priors: Priors | None = None) -> FitResult:
    """Fit the model to a count tensor with ``sampler.chains`` independent chains.

    Chain c is seeded by child c of ``sampler.seed``. Draws are retained
    after burn-in every ``thin`` sweeps. For models with trees the
    posterior-mean factor matrices come from the last draw, since tree rows
    are not comparable across draws; otherwise they average the retained
    conditional means.
    """
    _check_data(t, model)
    if priors is None:
        priors = Priors.from_config(model, t.dims)
    if model.alpha_mode == "tuple" and model.hierarchy == "none" and priors.alpha.size not in (1, int(np.prod(model.K))):
        raise ConfigError(f"alpha_mode 'tuple' needs {int(np.prod(model.K))} entries")
    result = FitResult(model, sampler, priors)
    for c, ss in enumerate(spawn(sampler.seed, sampler.chains)):
        result.chains.append(run_chain(t, model, sampler, priors, ss, c))
    return result
