"""Configuration objects and the TOML config file format.

A config file is TOML with a required ``schema_version = 1`` at the top
level and up to five tables. Unknown keys anywhere are errors.

.. code-block:: toml

    schema_version = 1
    seed = 7

    [model]
    p = 2
    dims = [40, 20, 15]       # d_0 .. d_p; checked against count file headers
    K = [3, 2]                # topics per mode (kind = "none" only)
    alpha = 1.0               # scalar, or a list (see alpha_mode)
    alpha_mode = "position"   # "position": list indexes positions of T_x
                              # "tuple": list of length K indexed by vec(k)
    beta = 0.5                # scalar, per-mode list, or per-mode vectors
    lam = 200                 # counts per sample for `generate` (scalar or list)

    [hierarchy]
    kind = "none"             # "none" | "independent-trees" | "pam-dag"
    levels = 2                # scalar or per-mode list
    gamma = 1.0               # trees: CRP concentration (scalar, per mode,
                              # or per mode per level); pam: Dirichlet
                              # concentration (scalar or [level][mode])
    tree_gamma = 1.0          # CRP concentration for tree modes of a mixed pam-dag
    tau = 10                  # pam: topics per level per mode (scalar or [level][mode])
    dominant_mode = 1         # pam, p = 2: the mode the other depends on
    composition = "cartesian" # "cartesian" | "level"
    dependencies = {}         # pam: {"parent" = [children...]}, 1-based modes

    [sampler]
    variant = "collapsed"     # "collapsed" | "non-collapsed"
    pam_update = "collapsed"  # "collapsed" | "non-collapsed"
    burn_in = 500
    total_sweeps = 2000
    thin = 10
    chains = 1
    audit_every = 0           # 0 disables per-sweep audits

    [eval]
    G = 1000
    epsilon = 1e-10
    heldout_fraction = 0.3
    folds = 10
    mixture = "exact"         # "exact" | "counts"
    pseudo_lambda = 0         # 0 means the median training total

    [generate]
    lam = 200                 # alias of model.lam
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = 1
HIERARCHY_KINDS = ("none", "independent-trees", "pam-dag")
COMPOSITIONS = ("cartesian", "level")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _positive(name: str, value) -> None:
    arr = np.asarray(value, dtype=np.float64)
    if arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ConfigError(f"{name} must be strictly positive, got {value!r}")


@dataclass
class ModelConfig:
    """Hyperparameters of the decomposition and of its topic hierarchy.

    Modes are 1-based in files and 0-based in the fields below, except for
    ``dominant_mode`` which keeps the 1-based convention of the file.
    """

    p: int = 2
    dims: tuple[int, ...] | None = None
    K: tuple[int, ...] | None = None
    alpha: Any = 1.0
    alpha_mode: str = "position"
    beta: Any = 1.0
    lam: Any = None
    hierarchy: str = "none"
    levels: Any = 2
    gamma: Any = 1.0
    tree_gamma: float = 1.0
    tau: Any = 2
    dominant_mode: int = 1
    composition: str = "cartesian"
    dependencies: dict[int, list[int]] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        p = self.p
        if not isinstance(p, (int, np.integer)) or p < 1:
            raise ConfigError(f"p must be a positive integer, got {p!r}")
        if self.dims is not None:
            self.dims = tuple(int(d) for d in self.dims)
            if len(self.dims) != p + 1 or any(d < 1 for d in self.dims):
                raise ConfigError(f"dims must list {p + 1} positive sizes, got {self.dims}")
        if self.hierarchy not in HIERARCHY_KINDS:
            raise ConfigError(f"hierarchy kind must be one of {HIERARCHY_KINDS}, got {self.hierarchy!r}")
        if self.composition not in COMPOSITIONS:
            raise ConfigError(f"composition must be one of {COMPOSITIONS}, got {self.composition!r}")
        if self.alpha_mode not in ("position", "tuple"):
            raise ConfigError(f"alpha_mode must be 'position' or 'tuple', got {self.alpha_mode!r}")
        _positive("alpha", self.alpha)
        if isinstance(self.beta, (list, tuple)):
            if len(self.beta) != p:
                raise ConfigError(f"beta must be a scalar or a list of {p} per-mode entries")
            for b in self.beta:
                _positive("beta", b)
        else:
            _positive("beta", self.beta)
        if self.hierarchy == "none":
            if self.K is None:
                raise ConfigError("K is required when hierarchy kind is 'none'")
            self.K = tuple(int(k) for k in self.K)
            if len(self.K) != p or any(k < 1 for k in self.K):
                raise ConfigError(f"K must list {p} positive sizes, got {self.K}")
            if self.composition != "cartesian":
                raise ConfigError("composition 'level' needs a hierarchy")
        else:
            L = self.levels_per_mode()
            if any(l < 1 for l in L):
                raise ConfigError(f"levels must be positive, got {self.levels}")
        if self.hierarchy == "independent-trees":
            for j in range(p):
                self.tree_gamma_for(j)
            if self.composition == "level" and len(set(self.levels_per_mode())) != 1:
                raise ConfigError("level composition needs the same depth in every mode")
            if self.alpha_mode == "tuple":
                raise ConfigError("alpha_mode 'tuple' needs a fixed topic count; trees grow and shrink")
        if self.hierarchy == "pam-dag":
            if not 1 <= self.dominant_mode <= p:
                raise ConfigError(f"dominant_mode must be in 1..{p}, got {self.dominant_mode}")
            self.dependencies = {int(k): [int(c) for c in v] for k, v in self.dependencies.items()}
            for parent, children in self.dependencies.items():
                for c in [parent, *children]:
                    if not 0 <= c < p:
                        raise ConfigError(f"dependency mentions mode {c + 1} outside 1..{p}")
            order = self.topological_order()
            if order is None:
                raise ConfigError("mode dependency graph is cyclic")
            _positive("tree_gamma", self.tree_gamma)
            _positive("gamma", self.gamma)
            tau = np.asarray(self.tau)
            if np.any(tau < 1):
                raise ConfigError(f"tau must be >= 1, got {self.tau}")
        if self.lam is not None:
            lam = np.asarray(self.lam)
            if np.any(lam < 0):
                raise ConfigError("lam must be nonnegative")

    def levels_per_mode(self) -> tuple[int, ...]:
        if np.ndim(self.levels) == 0:
            return (int(self.levels),) * self.p
        L = tuple(int(l) for l in self.levels)
        if len(L) != self.p:
            raise ConfigError(f"levels must be a scalar or a list of {self.p} entries")
        return L

    def tree_gamma_for(self, mode: int) -> np.ndarray:
        """CRP concentrations of the restaurants at levels 1..L_m-1 of a tree."""
        L = self.levels_per_mode()[mode]
        g = self.gamma if self.hierarchy == "independent-trees" else self.tree_gamma
        if np.ndim(g) == 0:
            out = np.full(max(L - 1, 0), float(g))
        else:
            g = g[mode]
            out = np.full(max(L - 1, 0), float(g)) if np.ndim(g) == 0 else np.asarray(g, dtype=np.float64)
        if out.shape != (max(L - 1, 0),):
            raise ConfigError(f"mode {mode + 1}: gamma needs {L - 1} per-level entries, got {out.tolist()}")
        if out.size:
            _positive("gamma", out)
        return out

    def edges(self) -> dict[int, list[int]]:
        """Dependency adjacency (0-based). Defaults: dominant mode feeds all others."""
        if self.hierarchy != "pam-dag":
            return {}
        if self.dependencies:
            return {int(k): list(v) for k, v in self.dependencies.items()}
        d = self.dominant_mode - 1
        return {d: [j for j in range(self.p) if j != d]}

    def parents(self) -> list[list[int]]:
        par: list[list[int]] = [[] for _ in range(self.p)]
        for u, vs in self.edges().items():
            for v in vs:
                if u not in par[v]:
                    par[v].append(u)
        return [sorted(x) for x in par]

    def topological_order(self) -> list[int] | None:
        par = self.parents()
        order, done = [], set()
        while len(order) < self.p:
            ready = [j for j in range(self.p) if j not in done and all(q in done for q in par[j])]
            if not ready:
                return None
            order.append(ready[0])
            done.add(ready[0])
        return order

    def pam_gamma_table(self, L: int) -> np.ndarray:
        g = np.asarray(self.gamma, dtype=np.float64)
        if g.ndim == 0:
            return np.full((L, self.p), float(g))
        if g.shape != (L, self.p):
            raise ConfigError(f"pam gamma must be a scalar or a {L}x{self.p} table")
        return g

    def tau_table(self, L: int, roots: list[int]) -> np.ndarray:
        t = np.asarray(self.tau, dtype=np.int64)
        if t.ndim == 0:
            out = np.full((L, self.p), int(t))
            out[0, roots] = 1
            return out
        if t.shape != (L, self.p):
            raise ConfigError(f"tau must be a scalar or a {L}x{self.p} table")
        for r in roots:
            if t[0, r] != 1:
                raise ConfigError(f"tau at level 1 of root mode {r + 1} must be 1 (the walk starts at the root)")
        return t

    def beta_vectors(self, dims: tuple[int, ...]) -> list[np.ndarray]:
        out = []
        for j in range(self.p):
            b = self.beta[j] if isinstance(self.beta, (list, tuple)) else self.beta
            v = np.full(dims[j + 1], float(b)) if np.ndim(b) == 0 else np.asarray(b, dtype=np.float64)
            if v.shape != (dims[j + 1],):
                raise ConfigError(f"beta for mode {j + 1} must have length d_{j + 1}={dims[j + 1]}")
            out.append(v)
        return out


@dataclass
class SamplerConfig:
    """Sweep schedule and sampler variants of one fit."""

    variant: str = "collapsed"
    pam_update: str = "collapsed"
    burn_in: int = 500
    total_sweeps: int = 2000
    thin: int = 10
    chains: int = 1
    seed: int = 0
    audit_every: int = 0

    def __post_init__(self):
        if self.variant not in ("collapsed", "non-collapsed"):
            raise ConfigError(f"sampler variant must be 'collapsed' or 'non-collapsed', got {self.variant!r}")
        if self.pam_update not in ("collapsed", "non-collapsed"):
            raise ConfigError(f"pam_update must be 'collapsed' or 'non-collapsed', got {self.pam_update!r}")
        if not 0 <= self.burn_in < self.total_sweeps:
            raise ConfigError(f"need 0 <= burn_in < total_sweeps, got {self.burn_in}, {self.total_sweeps}")
        if self.thin < 1 or self.chains < 1 or self.audit_every < 0:
            raise ConfigError("thin and chains must be >= 1, audit_every >= 0")

    def hierarchy_variant(self, model: ModelConfig) -> str:
        if model.hierarchy == "none":
            return "none"
        if model.hierarchy == "independent-trees":
            return "trees"
        return "pam-" + self.pam_update.replace("-", "")


@dataclass
class EvalConfig:
    """Held-out likelihood and cross-validation settings."""

    G: int = 1000
    epsilon: float = 1e-10
    heldout_fraction: float = 0.30
    folds: int = 10
    seed: int = 0
    mixture: str = "exact"
    pseudo_lambda: int = 0

    def __post_init__(self):
        if self.G < 1:
            raise ConfigError("G must be >= 1")
        if not 0 < self.heldout_fraction < 1:
            raise ConfigError("heldout_fraction must lie in (0, 1)")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must lie in (0, 1)")
        if self.mixture not in ("exact", "counts"):
            raise ConfigError(f"mixture must be 'exact' or 'counts', got {self.mixture!r}")
        if self.pseudo_lambda < 0:
            raise ConfigError("pseudo_lambda must be >= 0")


@dataclass
class RunConfig:
    model: ModelConfig
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0

    def with_seed(self, seed: int) -> "RunConfig":
        out = copy.deepcopy(self)
        out.seed = int(seed)
        out.model.seed = int(seed)
        out.sampler.seed = int(seed)
        out.eval.seed = int(seed)
        return out


_MODEL_KEYS = {"p", "dims", "K", "alpha", "alpha_mode", "beta", "lam"}
_HIER_KEYS = {"kind", "levels", "gamma", "tree_gamma", "tau", "dominant_mode", "composition", "dependencies"}
_SAMPLER_KEYS = {"variant", "pam_update", "burn_in", "total_sweeps", "thin", "chains", "audit_every"}
_EVAL_KEYS = {"G", "epsilon", "heldout_fraction", "folds", "mixture", "pseudo_lambda"}
_TOP_KEYS = {"schema_version", "seed", "model", "hierarchy", "sampler", "eval", "generate"}


def _check_keys(where: str, got: dict, allowed: set) -> None:
    unknown = sorted(set(got) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def config_from_dict(raw: dict) -> RunConfig:
    _check_keys("top level", raw, _TOP_KEYS)
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    seed = int(raw.get("seed", 0))
    model = dict(raw.get("model", {}))
    hier = dict(raw.get("hierarchy", {}))
    sampler = dict(raw.get("sampler", {}))
    ev = dict(raw.get("eval", {}))
    gen = dict(raw.get("generate", {}))
    _check_keys("[model]", model, _MODEL_KEYS)
    _check_keys("[hierarchy]", hier, _HIER_KEYS)
    _check_keys("[sampler]", sampler, _SAMPLER_KEYS)
    _check_keys("[eval]", ev, _EVAL_KEYS)
    _check_keys("[generate]", gen, {"lam"})
    if "lam" in gen:
        model["lam"] = gen["lam"]
    if "kind" in hier:
        hier["hierarchy"] = hier.pop("kind")
    if "dependencies" in hier:
        try:
            hier["dependencies"] = {int(k) - 1: [int(c) - 1 for c in v] for k, v in hier["dependencies"].items()}
        except (TypeError, ValueError, AttributeError):
            raise ConfigError("dependencies must map mode numbers to lists of mode numbers") from None
    try:
        mc = ModelConfig(**model, **hier, seed=seed)
        sc = SamplerConfig(**sampler, seed=seed)
        ec = EvalConfig(**ev, seed=seed)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(mc, sc, ec, seed)


def load_config(path: str | Path) -> RunConfig:
    try:
        with Path(path).open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain-dict form that ``config_from_dict`` reads back unchanged."""
    m = asdict(cfg.model)
    model = {k: m[k] for k in sorted(_MODEL_KEYS) if m.get(k) is not None}
    hier = {k: m[k] for k in sorted(_HIER_KEYS - {"kind"})}
    hier["kind"] = m["hierarchy"]
    hier["dependencies"] = {str(k + 1): [c + 1 for c in v] for k, v in m["dependencies"].items()}
    s = asdict(cfg.sampler)
    s.pop("seed")
    e = asdict(cfg.eval)
    e.pop("seed")
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "model": _plain(model),
        "hierarchy": _plain(hier),
        "sampler": s,
        "eval": e,
    }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def replace_model(cfg: RunConfig, **changes) -> RunConfig:
    out = copy.deepcopy(cfg)
    out.model = replace(out.model, **changes)
    return out
