"""Held-out empirical likelihood and the cross-validation harness.

A trained model generates G pseudo-samples: each draws a path through the
trained hierarchy (a fresh sample seated by the CRP or PAM predictive) and
a core slice phi_g ~ Dir(alpha) over its admissible tuples. Pseudo-sample g
induces the tuple distribution

    pi_g(v) = sum_{h in T_g} phi_g[h] prod_j psi_j[h_j, v_j]

with posterior-mean factor matrices. A held-out sample x then scores

    log (1/G) sum_g prod_v max(pi_g(v), eps) ** b_xv

(the multinomial coefficient is dropped; it is the same for every model on
fixed data). Topics that a pseudo-sample opens in a tree have no trained
factor row and use the prior mean beta / sum(beta).

With ``mixture = "counts"`` pseudo-sample g instead contributes the
empirical distribution of ``pseudo_lambda`` tuples drawn from pi_g.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .config import EvalConfig, ModelConfig, SamplerConfig
from .gibbs import FitResult, run
from .hierarchy import HierarchyState
from .model import Priors, full_support
from .rng import dirichlet_rows, make_rng, spawn
from .tensor import MAX_DENSE_CELLS, CountTensor, TopicIndexMap

CV_COLUMNS = (
    "topic_model",
    "dominant_mode",
    "topic_set",
    "gamma",
    "tau",
    "levels",
    "mean",
    "stdev",
    "gene_topics",
    "pathway_topics",
    "total_topics",
)


@dataclass
class TrainedModel:
    """What the likelihood estimate needs from a fit."""

    dims: tuple[int, ...]
    psi: list[np.ndarray]
    priors: Priors
    hierarchy: HierarchyState | None = None
    K: tuple[int, ...] | None = None
    train_lam_median: float = 1.0

    @classmethod
    def from_fit(cls, fit: FitResult, train: CountTensor | None = None) -> "TrainedModel":
        st = fit.state
        lam = train.lam if train is not None else st.lam()
        return cls(
            dims=tuple(st.dims),
            psi=[np.asarray(p) for p in fit.psi_mean],
            priors=fit.priors,
            hierarchy=st.hierarchy,
            K=None if st.hierarchy is not None else tuple(fit.model.K),
            train_lam_median=float(np.median(lam)) if len(lam) else 1.0,
        )

    def topic_counts(self) -> tuple[int, ...]:
        if self.hierarchy is not None:
            return tuple(self.hierarchy.K_live())
        return tuple(self.K)


def _pseudo_supports(model: TrainedModel, rng: np.random.Generator, G: int):
    """Admissible tuples (G, S, p) of the pseudo-samples and the padded factor matrices."""
    psi = [np.asarray(p, dtype=np.float64) for p in model.psi]
    if model.hierarchy is None:
        return full_support(model.K, G), psi
    new_rows = [p.shape[0] for p in psi]
    psi = [np.vstack([p, (b / b.sum())[None, :]]) for p, b in zip(psi, model.priors.beta)]
    sup = np.stack([model.hierarchy.predictive_support(rng, new_rows) for _ in range(G)])
    return sup, psi


def _tuple_probs(support: np.ndarray, phi: np.ndarray, psi: list[np.ndarray], feats: np.ndarray) -> np.ndarray:
    """pi_g(v) for every pseudo-sample g and every feature tuple v (rows of ``feats``)."""
    G, S, p = support.shape
    out = np.zeros((G, feats.shape[0]))
    for s in range(S):
        term = phi[:, s, None].copy()
        for j in range(p):
            term = term * psi[j][support[:, s, j]][:, feats[:, j]]
        out += term
    return out


def empirical_log_likelihood(
    model: TrainedModel, heldout: CountTensor, cfg: EvalConfig, seed=None
) -> tuple[np.ndarray, float]:
    """Per-sample held-out log-likelihood and its total.

    Pseudo-samples use child 1 of ``seed`` (default ``cfg.seed``).
    """
    if tuple(heldout.dims[1:]) != tuple(p.shape[1] for p in model.psi):
        raise ValueError(
            f"held-out feature dims {tuple(heldout.dims[1:])} do not match the model's "
            f"{tuple(p.shape[1] for p in model.psi)}"
        )
    rng = make_rng(spawn(cfg.seed if seed is None else seed, 2)[1])
    support, psi = _pseudo_supports(model, rng, cfg.G)
    alpha = model.priors.alpha_for(support, [p.shape[0] for p in psi])
    phi = dirichlet_rows(rng, alpha.reshape(-1, support.shape[1])).reshape(alpha.shape)
    feats, inverse = np.unique(heldout.index[:, 1:], axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    if cfg.mixture == "exact":
        pi = _tuple_probs(support, phi, psi, feats)
    else:
        pi = _count_mixture(support, phi, psi, feats, model, cfg, rng)
    logpi = np.log(np.maximum(pi, cfg.epsilon))
    per_sample = np.zeros(heldout.dims[0])
    for x in range(heldout.dims[0]):
        lo, hi = np.searchsorted(heldout.index[:, 0], [x, x + 1])
        if hi == lo:
            continue
        L = logpi[:, inverse[lo:hi]] @ heldout.counts[lo:hi]
        per_sample[x] = logsumexp(L) - math.log(cfg.G)
    return per_sample, float(per_sample.sum())


def _count_mixture(support, phi, psi, feats, model: TrainedModel, cfg: EvalConfig, rng) -> np.ndarray:
    fdims = tuple(p.shape[1] for p in psi)
    cells = int(np.prod(fdims))
    if cells > MAX_DENSE_CELLS:
        raise MemoryError(f"count mixture needs all {cells} feature tuples")
    grid = TopicIndexMap(fdims).all_tuples()
    lam = int(cfg.pseudo_lambda) or max(1, int(round(model.train_lam_median)))
    full = _tuple_probs(support, phi, psi, grid)
    full /= full.sum(axis=1, keepdims=True)
    counts = np.stack([rng.multinomial(lam, row) for row in full])
    flat = TopicIndexMap(fdims).ravel(feats)
    return counts[:, flat] / lam


# ---------------------------------------------------------------- cross-validation


def split_samples(d0: int, cfg: EvalConfig) -> tuple[np.ndarray, list[np.ndarray]]:
    """Held-out test samples and the validation folds of the rest (child 0 of the seed)."""
    rng = make_rng(spawn(cfg.seed, 2)[0])
    perm = rng.permutation(d0)
    n_test = int(round(cfg.heldout_fraction * d0))
    rest = perm[n_test:]
    if rest.size < cfg.folds:
        raise ValueError(f"{rest.size} samples remain after the held-out split, fewer than {cfg.folds} folds")
    return np.sort(perm[:n_test]), [np.sort(f) for f in np.array_split(rest, cfg.folds)]


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([int(seed), 2, fold]).generate_state(1)[0])


def plot_label(model: ModelConfig) -> str:
    """T^L for trees, P^L_{DC} for PAM (D: G or P dominant mode, C: C or L composition)."""
    L = max(model.levels_per_mode()) if model.hierarchy != "none" else 1
    if model.hierarchy == "independent-trees":
        return f"T^{L}"
    if model.hierarchy == "pam-dag":
        dom = "G" if model.dominant_mode == 1 else "P"
        comp = "C" if model.composition == "cartesian" else "L"
        return f"P^{L}_{{{dom}{comp}}}"
    return "N"


@dataclass
class CVResult:
    rows: list[dict]
    test: np.ndarray
    folds: list[np.ndarray]
    fold_scores: list[list[float]] = field(default_factory=list)

    def plot_data(self) -> dict:
        return {
            "x": "total_topics",
            "y": "mean",
            "points": [
                {"label": r["label"], "total_topics": r["total_topics"], "mean": r["mean"], "stdev": r["stdev"]}
                for r in self.rows
            ],
        }


def _row(model: ModelConfig, scores: list[float], K_per_fold: list[tuple[int, ...]]) -> dict:
    K = np.mean(np.array(K_per_fold, dtype=np.float64), axis=0)
    gene = float(K[0])
    pathway = float(np.prod(K[1:])) if K.size > 1 else 1.0
    as_num = lambda v: int(v) if float(v).is_integer() else float(v)
    gamma = model.gamma if model.hierarchy != "none" else None
    return {
        "topic_model": model.hierarchy,
        "dominant_mode": model.dominant_mode if model.hierarchy == "pam-dag" else None,
        "topic_set": model.composition if model.hierarchy != "none" else None,
        "gamma": gamma,
        "tau": model.tau if model.hierarchy == "pam-dag" else None,
        "levels": model.levels if model.hierarchy != "none" else None,
        "mean": float(np.mean(scores)),
        "stdev": float(np.std(scores, ddof=1)),
        "gene_topics": as_num(gene),
        "pathway_topics": as_num(pathway),
        "total_topics": as_num(gene * pathway),
        "label": plot_label(model),
    }


def cross_validate(
    t: CountTensor, cfgs: list[ModelConfig], sampler: SamplerConfig, eval_cfg: EvalConfig
) -> CVResult:
    """Hold out a test split, then run k-fold CV of every config on the rest.

    Each row reports the mean and sample standard deviation of the fold
    validation log-likelihoods and the number of topics per mode, averaged
    over folds (trees grow and shrink). ``pathway_topics`` is the product of
    the topic counts of modes 2..p so that ``total_topics`` is always the
    product of the two columns. Folds depend only on the seed and d_0; the
    fit of fold f is seeded independently of the config order.
    """
    test, folds = split_samples(t.dims[0], eval_cfg)
    rest = np.sort(np.concatenate(folds))
    result = CVResult([], test, folds)
    for model in cfgs:
        scores, Ks = [], []
        for f, val in enumerate(folds):
            train_idx = np.setdiff1d(rest, val)
            train = t.select_samples(train_idx)
            valid = t.select_samples(val)
            m = copy.deepcopy(model)
            m.dims = tuple(train.dims)
            s = copy.deepcopy(sampler)
            s.seed = _fold_seed(eval_cfg.seed, f)
            fit = run(train, m, s, Priors.from_config(m, train.dims))
            trained = TrainedModel.from_fit(fit, train)
            _, total = empirical_log_likelihood(trained, valid, eval_cfg, seed=_fold_seed(eval_cfg.seed, f))
            scores.append(total)
            Ks.append(trained.topic_counts())
        result.rows.append(_row(model, scores, Ks))
        result.fold_scores.append(scores)
    return result


def standard_grid(base: ModelConfig) -> list[ModelConfig]:
    """The experimental grid: trees over L x gamma, PAM over L x tau x dominant mode x composition."""
    out = []
    for L in (2, 3, 4, 5):
        for g in (0.5, 1.0, 2.0):
            out.append(_variant(base, hierarchy="independent-trees", levels=L, gamma=g, composition="cartesian"))
    for L in (2, 3, 4, 5):
        for tau in (10, 25, 50):
            for dom in (1, 2):
                for comp in ("cartesian", "level"):
                    out.append(
                        _variant(
                            base, hierarchy="pam-dag", levels=L, tau=tau, dominant_mode=dom,
                            composition=comp, gamma=1.0, dependencies={},
                        )
                    )
    return out


def _variant(base: ModelConfig, **changes) -> ModelConfig:
    d = {k: copy.deepcopy(getattr(base, k)) for k in base.__dataclass_fields__}
    d.update(changes)
    if d["hierarchy"] != "none":
        d["K"] = None
    return ModelConfig(**d)
