"""Topic-path priors: CRPs, independent nCRP trees, and leveled PAM DAGs.

Every sample x owns a path T_x. For a tree mode the path is a root-to-depth
walk through a nested CRP. For a group of dependent modes the path is a walk
through a leveled DAG: at each level one topic per mode, chosen in
topological order of the mode-dependency graph from the transition
distribution attached to the parent topics. Modes with no dependency on the
rest of the model get their own tree.

A path is turned into the admissible topic tuples of x by the composition
rule: ``level`` keeps the tuple visited at each level, ``cartesian`` takes
all combinations of the per-mode visited topics. Independent parts of the
model always combine by Cartesian product.

Topic rows: topics of mode j are numbered densely 0..K_j-1 (the row of the
factor matrix). PAM topics are laid out level by level. Tree nodes carry a
stable id that is never reused and a row that is reassigned by ``compact``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from .config import ModelConfig
from .rng import dirichlet_rows


def crp_next_probs(counts, gamma: float) -> np.ndarray:
    """Seating probabilities for the next customer of a CRP.

    Existing table i gets n_i / (gamma + n) and a new table gets
    gamma / (gamma + n), where n is the number of customers already seated.
    The new-table probability is the last entry.
    """
    if not gamma > 0:
        raise ValueError(f"CRP concentration must be positive, got {gamma}")
    counts = np.asarray(counts, dtype=np.float64).reshape(-1)
    if np.any(counts < 0):
        raise ValueError("table counts must be nonnegative")
    denom = gamma + counts.sum()
    return np.append(counts, gamma) / denom


def crp_log_eppf(counts, gamma: float) -> float:
    """Log probability of a seating arrangement with the given table sizes.

    gamma^T prod (n_i - 1)! / prod_{i<n} (gamma + i), independent of the order
    in which customers arrived.
    """
    counts = np.asarray([c for c in counts if c > 0], dtype=np.float64)
    if counts.size == 0:
        return 0.0
    n = counts.sum()
    return float(
        counts.size * math.log(gamma) + gammaln(counts).sum() + gammaln(gamma) - gammaln(gamma + n)
    )


def topic_set(path, composition: str) -> list[tuple[int, ...]]:
    """Admissible topic tuples of a path given as per-level tuples.

    ``level`` returns the visited tuples, ``cartesian`` every combination of
    the topics visited in each mode. The result is sorted and duplicate free.
    """
    path = [tuple(step) for step in path]
    if composition == "level":
        return sorted(set(path))
    if composition == "cartesian":
        per_mode = [sorted(set(col)) for col in zip(*path)]
        return sorted(itertools.product(*per_mode))
    raise ValueError(f"unknown composition {composition!r}")


def topic_set_modes(per_mode, composition: str) -> list[tuple[int, ...]]:
    """Like :func:`topic_set` for per-mode topic lists (depths may differ for ``cartesian``)."""
    if composition == "level":
        if len({len(v) for v in per_mode}) != 1:
            raise ValueError("level composition needs equally long per-mode paths")
        return topic_set(list(zip(*per_mode)), "level")
    return sorted(itertools.product(*[sorted(set(v)) for v in per_mode]))


def log_dirichlet_pdf(x: np.ndarray, conc: np.ndarray) -> np.ndarray:
    """Row-wise log Dirichlet density; a one-point simplex has density 1."""
    x = np.atleast_2d(x)
    conc = np.broadcast_to(np.asarray(conc, dtype=np.float64), x.shape)
    norm = gammaln(conc.sum(axis=1)) - gammaln(conc).sum(axis=1)
    return norm + xlogy(conc - 1.0, x).sum(axis=1)


def log_dirmult(counts: np.ndarray, conc: np.ndarray) -> np.ndarray:
    """Row-wise log of the Dirichlet-multinomial sequence probability."""
    counts = np.atleast_2d(counts).astype(np.float64)
    conc = np.broadcast_to(np.asarray(conc, dtype=np.float64), counts.shape)
    return (
        gammaln(conc.sum(axis=1))
        - gammaln(conc.sum(axis=1) + counts.sum(axis=1))
        + (gammaln(conc + counts) - gammaln(conc)).sum(axis=1)
    )


class TreeComponent:
    """One nested-CRP tree of fixed depth L for a single mode.

    Level 0 is the shared root. The restaurant at level l (0 <= l < L-1)
    seats with concentration ``gamma[l]``.
    """

    kind = "tree"

    def __init__(self, mode: int, L: int, gamma, d0: int):
        self.mode = mode
        self.modes = [mode]
        self.L = int(L)
        self.gamma = np.asarray(gamma, dtype=np.float64).reshape(-1)
        if self.gamma.shape != (max(self.L - 1, 0),):
            raise ValueError(f"tree of depth {L} needs {L - 1} concentrations")
        self.parent: dict[int, int] = {}
        self.level: dict[int, int] = {}
        self.children: dict[int, list[int]] = {}
        self.count: dict[int, int] = {}
        self.row: dict[int, int] = {}
        self.row_node: list[int] = []
        self.next_id = 1
        self.root = self._new_node(0, 0)
        self.paths = np.zeros((d0, self.L), dtype=np.int64)

    def _new_node(self, parent: int, level: int) -> int:
        nid = self.next_id
        self.next_id += 1
        self.parent[nid] = parent
        self.level[nid] = level
        self.children[nid] = []
        self.count[nid] = 0
        self.row[nid] = len(self.row_node)
        self.row_node.append(nid)
        if parent:
            self.children[parent].append(nid)
        return nid

    @property
    def n_rows(self) -> int:
        return len(self.row_node)

    @property
    def K(self) -> int:
        return len(self.count)

    def has_path(self, x: int) -> bool:
        return bool(self.paths[x, 0])

    def add_path(self, x: int, nodes) -> None:
        for nid in nodes:
            self.count[nid] += 1
        self.paths[x] = nodes

    def remove_path(self, x: int) -> list[int]:
        """Take x out of its nodes; prune emptied nodes and return their rows."""
        pruned = []
        for nid in reversed(self.paths[x].tolist()):
            self.count[nid] -= 1
            if self.count[nid] < 0:
                raise RuntimeError(f"tree mode {self.mode + 1}: negative count at node {nid}")
            if self.count[nid] == 0 and nid != self.root:
                pruned.append(self.row[nid])
                self._delete(nid)
        self.paths[x] = 0
        return pruned

    def _delete(self, nid: int) -> None:
        self.children[self.parent[nid]].remove(nid)
        self.row_node[self.row[nid]] = -1
        for d in (self.parent, self.level, self.children, self.count, self.row):
            del d[nid]

    def path_rows(self, x: int) -> np.ndarray:
        return np.array([self.row[n] for n in self.paths[x].tolist()], dtype=np.int64)

    def draw_prior_path(self, rng: np.random.Generator) -> list[int]:
        """Draw a path from the CRP given the seated customers, creating nodes."""
        nodes = [self.root]
        for lev in range(self.L - 1):
            node = nodes[-1]
            kids = self.children[node]
            probs = crp_next_probs([self.count[c] for c in kids], self.gamma[lev])
            pick = int(rng.choice(probs.size, p=probs))
            nodes.append(kids[pick] if pick < len(kids) else self._new_node(node, lev + 1))
        return nodes

    def log_path_prior(self, nodes) -> float:
        """log P(path | other customers); nodes with zero customers count as new."""
        total = 0.0
        for lev in range(self.L - 1):
            node, child = int(nodes[lev]), int(nodes[lev + 1])
            for nid in (node, child):
                if nid not in self.count:
                    raise KeyError(f"path references pruned node {nid}")
            if self.parent[child] != node:
                raise ValueError(f"node {child} is not a child of {node}")
            n_here = self.count[node]
            c = self.count[child]
            g = self.gamma[lev]
            total += math.log((c if c > 0 else g) / (g + n_here))
            if c == 0:
                break
        return total

    def log_partition_prior(self) -> float:
        """Joint log prior of all seated paths (exchangeable nested EPPF)."""
        total = 0.0
        for nid, lev in self.level.items():
            if lev < self.L - 1:
                total += crp_log_eppf([self.count[c] for c in self.children[nid]], self.gamma[lev])
        return total

    def enumerate_candidates(self, ll_level: list[dict[int, float]], ll_new: np.ndarray):
        """Score every extension of the current tree as a path for one customer.

        ``ll_level[l]`` maps live node ids at level l to a log-likelihood term
        and ``ll_new[l]`` is that term for a fresh node at level l. Returns
        candidates as (existing prefix, number of new nodes) with their
        unnormalized log posterior.
        """
        tail = np.concatenate([np.cumsum(ll_new[::-1])[::-1], [0.0]])
        cands, scores = [], []
        stack = [([self.root], ll_level[0].get(self.root, ll_new[0]))]
        while stack:
            prefix, score = stack.pop()
            node = prefix[-1]
            lev = len(prefix) - 1
            if lev == self.L - 1:
                cands.append((prefix, 0))
                scores.append(score)
                continue
            g = self.gamma[lev]
            denom = math.log(g + self.count[node])
            for c in self.children[node]:
                stack.append((prefix + [c], score + math.log(self.count[c]) - denom + ll_level[lev + 1][c]))
            cands.append((prefix, self.L - 1 - lev))
            scores.append(score + math.log(g) - denom + tail[lev + 1])
        return cands, np.array(scores)

    def realize(self, candidate) -> list[int]:
        prefix, n_new = candidate
        nodes = list(prefix)
        for _ in range(n_new):
            nodes.append(self._new_node(nodes[-1], len(nodes)))
        return nodes

    def nodes_at_level(self, lev: int) -> list[int]:
        return sorted(n for n, l in self.level.items() if l == lev)

    def compact(self) -> np.ndarray:
        """Renumber rows densely by node id; returns the old-to-new row map."""
        live = sorted(self.count)
        remap = np.full(self.n_rows, -1, dtype=np.int64)
        self.row_node = []
        for new, nid in enumerate(live):
            remap[self.row[nid]] = new
            self.row[nid] = new
            self.row_node.append(nid)
        return remap

    def audit(self) -> list[str]:
        errs = []
        tally: dict[int, int] = {n: 0 for n in self.count}
        active = 0
        for x in range(self.paths.shape[0]):
            nodes = self.paths[x].tolist()
            if not nodes[0]:
                continue
            active += 1
            if nodes[0] != self.root:
                errs.append(f"tree mode {self.mode + 1}: sample {x + 1} path does not start at the root")
            for lev, nid in enumerate(nodes):
                if nid not in tally:
                    errs.append(f"tree mode {self.mode + 1}: sample {x + 1} uses pruned node {nid}")
                    continue
                tally[nid] += 1
                if lev and self.parent[nid] != nodes[lev - 1]:
                    errs.append(f"tree mode {self.mode + 1}: sample {x + 1} path is not a walk")
        for nid, c in self.count.items():
            if tally[nid] != c:
                errs.append(f"tree mode {self.mode + 1}: node {nid} count {c} != paths through it {tally[nid]}")
            if c == 0 and nid != self.root:
                errs.append(f"tree mode {self.mode + 1}: empty node {nid} not pruned")
        leaves = sum(c for n, c in self.count.items() if self.level[n] == self.L - 1)
        if leaves != active:
            errs.append(f"tree mode {self.mode + 1}: leaf counts {leaves} != customers {active}")
        return errs

    def predictive_rows(self, rng: np.random.Generator, new_row: int) -> np.ndarray:
        """Rows of a fresh path drawn from the seated tree; new nodes map to ``new_row``."""
        rows = [self.row[self.root]]
        node = self.root
        for lev in range(self.L - 1):
            kids = self.children[node] if node else []
            if node:
                probs = crp_next_probs([self.count[c] for c in kids], self.gamma[lev])
                pick = int(rng.choice(probs.size, p=probs))
            else:
                pick = len(kids)
            if pick < len(kids):
                node = kids[pick]
                rows.append(self.row[node])
            else:
                node = 0
                rows.append(new_row)
        return np.array(rows, dtype=np.int64)

    def to_json(self) -> dict:
        return {
            "type": "tree",
            "mode": self.mode + 1,
            "levels": self.L,
            "gamma": self.gamma.tolist(),
            "next_id": self.next_id,
            "nodes": [
                {
                    "id": n,
                    "parent": self.parent[n],
                    "level": self.level[n] + 1,
                    "count": self.count[n],
                    "topic": self.row[n] + 1,
                }
                for n in sorted(self.count)
            ],
            "paths": self.paths.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TreeComponent":
        paths = np.asarray(obj["paths"], dtype=np.int64).reshape(-1, int(obj["levels"]))
        self = cls(int(obj["mode"]) - 1, int(obj["levels"]), obj["gamma"], paths.shape[0])
        self.parent, self.level, self.children, self.count, self.row = {}, {}, {}, {}, {}
        nodes = sorted(obj["nodes"], key=lambda d: d["id"])
        n_rows = max([d["topic"] for d in nodes], default=0)
        self.row_node = [-1] * n_rows
        for d in nodes:
            nid = int(d["id"])
            self.parent[nid] = int(d["parent"])
            self.level[nid] = int(d["level"]) - 1
            self.children[nid] = []
            self.count[nid] = int(d["count"])
            self.row[nid] = int(d["topic"]) - 1
            self.row_node[self.row[nid]] = nid
        for nid, par in self.parent.items():
            if par:
                self.children[par].append(nid)
            else:
                self.root = nid
        self.next_id = int(obj["next_id"])
        self.paths = paths
        return self


class PamComponent:
    """A leveled DAG over a set of dependent modes (Pachinko allocation).

    Slots are (level, local mode) pairs. The parents of a slot are the slots
    of its parent modes at the same level; a root mode at level l >= 1 hangs
    off the sink modes at level l-1. Root modes at level 0 have no parent and
    a single topic. Each other slot carries one transition distribution per
    configuration of its parent topics, with a symmetric Dirichlet prior.
    """

    kind = "pam"

    def __init__(self, modes, parents, L: int, tau, gamma, d0: int):
        self.modes = list(modes)
        nm = len(self.modes)
        local = {m: a for a, m in enumerate(self.modes)}
        self.L = int(L)
        self.tau = np.asarray(tau, dtype=np.int64).reshape(self.L, nm)
        self.gamma = np.asarray(gamma, dtype=np.float64).reshape(self.L, nm)
        self.mode_parents = [[local[q] for q in parents[m] if q in local] for m in self.modes]
        has_child = {b for ps in self.mode_parents for b in ps}
        self.roots = [a for a in range(nm) if not self.mode_parents[a]]
        self.sinks = [a for a in range(nm) if a not in has_child]
        self.slot_parents: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for lev in range(self.L):
            for a in range(nm):
                if self.mode_parents[a]:
                    self.slot_parents[(lev, a)] = [(lev, b) for b in self.mode_parents[a]]
                elif lev > 0:
                    self.slot_parents[(lev, a)] = [(lev - 1, b) for b in self.sinks]
                else:
                    self.slot_parents[(lev, a)] = []
                    if self.tau[lev, a] != 1:
                        raise ValueError(f"root mode {self.modes[a] + 1} must have one topic at level 1")
        self.slots = [(lev, a) for lev in range(self.L) for a in range(nm) if self.slot_parents[(lev, a)]]
        self.children_slots: dict[tuple[int, int], list[tuple[int, int]]] = {s: [] for s in self.slots}
        for s in self.slots:
            for par in self.slot_parents[s]:
                if par in self.children_slots:
                    self.children_slots[par].append(s)
        self.counts = {s: np.zeros((self.n_configs(s), self.tau[s]), dtype=np.int64) for s in self.slots}
        self.P = {s: np.full((self.n_configs(s), self.tau[s]), 1.0 / self.tau[s]) for s in self.slots}
        self.choice = np.zeros((d0, self.L, nm), dtype=np.int64)
        self.active = np.zeros(d0, dtype=bool)
        self.offsets = np.zeros((nm, self.L), dtype=np.int64)
        for a in range(nm):
            self.offsets[a, 1:] = np.cumsum(self.tau[:-1, a])

    def n_configs(self, slot) -> int:
        return int(np.prod([self.tau[q] for q in self.slot_parents[slot]], dtype=np.int64))

    def K_local(self, a: int) -> int:
        return int(self.tau[:, a].sum())

    def config_index(self, ch: np.ndarray, slot) -> int:
        idx, stride = 0, 1
        for q in self.slot_parents[slot]:
            idx += int(ch[q]) * stride
            stride *= int(self.tau[q])
        return idx

    def _tally(self, ch: np.ndarray, sign: int) -> None:
        for s in self.slots:
            self.counts[s][self.config_index(ch, s), ch[s]] += sign

    def add_path(self, x: int, ch: np.ndarray) -> None:
        self.choice[x] = ch
        self.active[x] = True
        self._tally(self.choice[x], +1)

    def remove_path(self, x: int) -> None:
        self._tally(self.choice[x], -1)
        self.active[x] = False

    def draw_path(self, rng: np.random.Generator, explicit: bool) -> np.ndarray:
        """Walk the DAG using the transition draws (explicit) or the Polya urn."""
        ch = np.zeros((self.L, len(self.modes)), dtype=np.int64)
        for s in self.slots:
            cfg = self.config_index(ch, s)
            if explicit:
                probs = self.P[s][cfg]
            else:
                w = self.gamma[s] + self.counts[s][cfg]
                probs = w / w.sum()
            ch[s] = int(rng.choice(probs.size, p=probs))
        return ch

    def draw_transitions(self, rng: np.random.Generator, slots=None, posterior: bool = True) -> None:
        for s in self.slots if slots is None else slots:
            conc = self.gamma[s] + (self.counts[s] if posterior else 0)
            self.P[s] = dirichlet_rows(rng, np.broadcast_to(conc, self.counts[s].shape))

    def log_path_prior(self, ch: np.ndarray, explicit: bool) -> float:
        total = 0.0
        for s in self.slots:
            cfg = self.config_index(ch, s)
            if explicit:
                total += math.log(self.P[s][cfg, ch[s]])
            else:
                row = self.counts[s][cfg]
                total += math.log((self.gamma[s] + row[ch[s]]) / (self.gamma[s] * self.tau[s] + row.sum()))
        return total

    def log_joint_prior(self, explicit: bool) -> float:
        if not explicit:
            return float(sum(log_dirmult(self.counts[s], self.gamma[s]).sum() for s in self.slots))
        total = 0.0
        for s in self.slots:
            total += float(xlogy(self.counts[s], self.P[s]).sum())
            total += float(log_dirichlet_pdf(self.P[s], self.gamma[s]).sum())
        return total

    def path_rows(self, x: int) -> np.ndarray:
        """(local mode, level) topic rows of sample x."""
        return self.offsets + self.choice[x].T

    def audit(self) -> list[str]:
        errs = []
        fresh = {s: np.zeros_like(c) for s, c in self.counts.items()}
        for x in np.flatnonzero(self.active):
            ch = self.choice[x]
            for s in self.slots:
                if not 0 <= ch[s] < self.tau[s]:
                    errs.append(f"pam: sample {x + 1} choice out of range at {s}")
                    continue
                fresh[s][self.config_index(ch, s), ch[s]] += 1
            for lev in range(self.L):
                for a in self.roots:
                    if not self.slot_parents[(lev, a)] and ch[lev, a] != 0:
                        errs.append(f"pam: sample {x + 1} leaves the root")
        for s in self.slots:
            if not np.array_equal(fresh[s], self.counts[s]):
                errs.append(f"pam: transition counts at level {s[0] + 1} mode {self.modes[s[1]] + 1} disagree")
            if not np.allclose(self.P[s].sum(axis=1), 1.0, atol=1e-9):
                errs.append(f"pam: transition rows at {s} do not sum to one")
        return errs

    def predictive_choice(self, rng: np.random.Generator) -> np.ndarray:
        ch = np.zeros((self.L, len(self.modes)), dtype=np.int64)
        for s in self.slots:
            w = self.gamma[s] + self.counts[s][self.config_index(ch, s)]
            ch[s] = int(rng.choice(w.size, p=w / w.sum()))
        return ch

    def to_json(self) -> dict:
        key = lambda s: f"{s[0] + 1},{self.modes[s[1]] + 1}"
        return {
            "type": "pam",
            "modes": [m + 1 for m in self.modes],
            "levels": self.L,
            "tau": self.tau.tolist(),
            "gamma": self.gamma.tolist(),
            "counts": {key(s): self.counts[s].tolist() for s in self.slots},
            "transitions": {key(s): self.P[s].tolist() for s in self.slots},
            "choices": (self.choice + 1).tolist(),
            "active": self.active.astype(int).tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict, parents) -> "PamComponent":
        choices = np.asarray(obj["choices"], dtype=np.int64) - 1
        modes = [m - 1 for m in obj["modes"]]
        self = cls(modes, parents, int(obj["levels"]), obj["tau"], obj["gamma"], choices.shape[0])
        key = lambda s: f"{s[0] + 1},{self.modes[s[1]] + 1}"
        for s in self.slots:
            self.counts[s] = np.asarray(obj["counts"][key(s)], dtype=np.int64).reshape(self.counts[s].shape)
            self.P[s] = np.asarray(obj["transitions"][key(s)], dtype=np.float64).reshape(self.P[s].shape)
        self.choice = choices.reshape(self.choice.shape)
        self.active = np.asarray(obj["active"], dtype=bool)
        return self


@dataclass
class _Group:
    """A block of modes whose positions are listed together."""

    modes: list[int]
    table: np.ndarray  # (S_g, p), level per mode, -1 outside the group


def _group(modes: list[int], levels, composition: str, p: int) -> _Group:
    if composition == "level" and len(modes) > 1:
        L = levels[modes[0]]
        table = np.full((L, p), -1, dtype=np.int64)
        for j in modes:
            table[:, j] = np.arange(L)
        return _Group(modes, table)
    rows = []
    for combo in itertools.product(*[range(levels[j]) for j in reversed(modes)]):
        r = np.full(p, -1, dtype=np.int64)
        r[list(reversed(modes))] = combo
        rows.append(r)
    return _Group(modes, np.array(rows, dtype=np.int64).reshape(-1, p))


def _combine(groups: list[_Group], p: int) -> np.ndarray:
    """Column-major product of group position tables (first group fastest)."""
    table = np.full((1, p), -1, dtype=np.int64)
    for g in groups:
        out = np.empty((table.shape[0] * g.table.shape[0], p), dtype=np.int64)
        for b in range(g.table.shape[0]):
            blk = table.copy()
            cols = g.table[b] >= 0
            blk[:, cols] = g.table[b, cols]
            out[b * table.shape[0] : (b + 1) * table.shape[0]] = blk
        table = out
    return table


class HierarchyState:
    """Paths of every sample through the topic hierarchy of a model."""

    def __init__(self, cfg: ModelConfig, d0: int):
        if cfg.hierarchy == "none":
            raise ValueError("no hierarchy configured")
        self.kind = cfg.hierarchy
        self.p = cfg.p
        self.d0 = int(d0)
        self.composition = cfg.composition
        self.levels = cfg.levels_per_mode()
        self.components: list = []
        if self.kind == "independent-trees":
            for j in range(self.p):
                self.components.append(TreeComponent(j, self.levels[j], cfg.tree_gamma_for(j), self.d0))
        else:
            self.parents = cfg.parents()
            order = cfg.topological_order()
            comps = _weak_components(self.p, self.parents)
            for modes in comps:
                if len(modes) == 1 and len(comps) > 1:
                    j = modes[0]
                    self.components.append(TreeComponent(j, self.levels[j], cfg.tree_gamma_for(j), self.d0))
                    continue
                Ls = {self.levels[j] for j in modes}
                if len(Ls) != 1:
                    raise ValueError(f"dependent modes {[m + 1 for m in modes]} need a common depth")
                L = Ls.pop()
                topo = [j for j in order if j in modes]
                roots = [j for j in topo if not self.parents[j]]
                tau = cfg.tau_table(L, roots)
                gamma = cfg.pam_gamma_table(L)
                self.components.append(
                    PamComponent(topo, self.parents, L, tau[:, topo], gamma[:, topo], self.d0)
                )
        if not hasattr(self, "parents"):
            self.parents = [[] for _ in range(self.p)]
        self._index_modes()
        self.position_levels = self._positions()

    def _index_modes(self) -> None:
        self.mode_comp: list[tuple[int, int]] = [(-1, -1)] * self.p
        for c, comp in enumerate(self.components):
            for a, j in enumerate(comp.modes):
                self.mode_comp[j] = (c, a)

    def _positions(self) -> np.ndarray:
        groups = []
        if self.kind == "independent-trees" and self.composition == "level":
            groups.append(_group(list(range(self.p)), self.levels, "level", self.p))
        else:
            for comp in self.components:
                comp_rule = self.composition if comp.kind == "pam" else "cartesian"
                groups.append(_group(sorted(comp.modes), self.levels, comp_rule, self.p))
        groups.sort(key=lambda g: min(g.modes))
        return _combine(groups, self.p)

    @property
    def S(self) -> int:
        return int(self.position_levels.shape[0])

    @property
    def trees(self) -> list[TreeComponent]:
        return [c for c in self.components if c.kind == "tree"]

    @property
    def pams(self) -> list[PamComponent]:
        return [c for c in self.components if c.kind == "pam"]

    def n_rows(self) -> tuple[int, ...]:
        """Extent of the topic rows per mode (dead tree rows included until compaction)."""
        out = []
        for j in range(self.p):
            c, a = self.mode_comp[j]
            comp = self.components[c]
            out.append(comp.n_rows if comp.kind == "tree" else comp.K_local(a))
        return tuple(out)

    def K_live(self) -> tuple[int, ...]:
        out = []
        for j in range(self.p):
            c, a = self.mode_comp[j]
            comp = self.components[c]
            out.append(comp.K if comp.kind == "tree" else comp.K_local(a))
        return tuple(out)

    def path_rows(self, x: int) -> list[np.ndarray]:
        """Per mode, the topic row visited at each level."""
        out: list[np.ndarray] = [None] * self.p
        for comp in self.components:
            if comp.kind == "tree":
                out[comp.mode] = comp.path_rows(x)
            else:
                rows = comp.path_rows(x)
                for a, j in enumerate(comp.modes):
                    out[j] = rows[a]
        return out

    def support(self, x: int) -> np.ndarray:
        """(S, p) topic rows of the admissible tuples of sample x, in position order."""
        rows = self.path_rows(x)
        out = np.empty((self.S, self.p), dtype=np.int64)
        for j in range(self.p):
            out[:, j] = rows[j][self.position_levels[:, j]]
        return out

    def support_all(self) -> np.ndarray:
        return np.stack([self.support(x) for x in range(self.d0)]) if self.d0 else np.zeros(
            (0, self.S, self.p), dtype=np.int64
        )

    def topic_set(self, x: int) -> list[tuple[int, ...]]:
        """Admissible tuples of sample x as 1-based topic indices."""
        return sorted({tuple(int(v) + 1 for v in row) for row in self.support(x)})

    def init_paths(self, rng: np.random.Generator, explicit_pam: bool) -> None:
        """Seat every sample in order with a draw from the prior."""
        for comp in self.components:
            if comp.kind == "pam" and explicit_pam:
                comp.draw_transitions(rng, posterior=False)
            for x in range(self.d0):
                if comp.kind == "tree":
                    comp.add_path(x, comp.draw_prior_path(rng))
                else:
                    comp.add_path(x, comp.draw_path(rng, explicit_pam))

    def compact(self) -> list[np.ndarray | None]:
        """Renumber tree rows densely; per mode the old-to-new row map (None for PAM modes)."""
        maps: list[np.ndarray | None] = [None] * self.p
        for comp in self.trees:
            maps[comp.mode] = comp.compact()
        return maps

    def log_prior(self, explicit_pam: bool = False) -> float:
        total = 0.0
        for comp in self.components:
            total += comp.log_partition_prior() if comp.kind == "tree" else comp.log_joint_prior(explicit_pam)
        return total

    def path_log_prior(self, x: int, explicit_pam: bool = False) -> float:
        """log P(T_x | other paths), with x's own path taken out of the counts."""
        total = 0.0
        for comp in self.components:
            if comp.kind == "tree":
                total += _tree_loo_prior(comp, x)
            else:
                ch = comp.choice[x].copy()
                comp.remove_path(x)
                total += comp.log_path_prior(ch, explicit_pam)
                comp.add_path(x, ch)
        return total

    def audit(self) -> list[str]:
        errs = []
        for comp in self.components:
            errs.extend(comp.audit())
        return errs

    def predictive_support(self, rng: np.random.Generator, new_rows) -> np.ndarray:
        """Admissible tuples of a fresh sample drawn from the seated hierarchy.

        Newly opened tree nodes map to ``new_rows[j]`` in mode j.
        """
        rows: list[np.ndarray] = [None] * self.p
        for comp in self.components:
            if comp.kind == "tree":
                rows[comp.mode] = comp.predictive_rows(rng, new_rows[comp.mode])
            else:
                ch = comp.predictive_choice(rng)
                r = comp.offsets + ch.T
                for a, j in enumerate(comp.modes):
                    rows[j] = r[a]
        out = np.empty((self.S, self.p), dtype=np.int64)
        for j in range(self.p):
            out[:, j] = rows[j][self.position_levels[:, j]]
        return out

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.p,
            "d0": self.d0,
            "composition": self.composition,
            "levels": list(self.levels),
            "parents": [[q + 1 for q in ps] for ps in self.parents],
            "components": [c.to_json() for c in self.components],
            "paths": [[(r + 1).tolist() for r in self.path_rows(x)] for x in range(self.d0)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "HierarchyState":
        self = cls.__new__(cls)
        self.kind = obj["kind"]
        self.p = int(obj["p"])
        self.d0 = int(obj["d0"])
        self.composition = obj["composition"]
        self.levels = tuple(obj["levels"])
        self.parents = [[q - 1 for q in ps] for ps in obj["parents"]]
        self.components = [
            TreeComponent.from_json(c) if c["type"] == "tree" else PamComponent.from_json(c, self.parents)
            for c in obj["components"]
        ]
        self._index_modes()
        self.position_levels = self._positions()
        return self


def _tree_loo_prior(comp: TreeComponent, x: int) -> float:
    """Leave-one-out path prior of x in a tree, without touching node ids."""
    nodes = comp.paths[x].tolist()
    total = 0.0
    for lev in range(comp.L - 1):
        node, child = nodes[lev], nodes[lev + 1]
        n_here = comp.count[node] - 1
        c = comp.count[child] - 1
        g = comp.gamma[lev]
        total += math.log((c if c > 0 else g) / (g + n_here))
        if c == 0:
            break
    return total


def _weak_components(p: int, parents: list[list[int]]) -> list[list[int]]:
    adj = {j: set(parents[j]) for j in range(p)}
    for j in range(p):
        for q in parents[j]:
            adj[q].add(j)
    seen, comps = set(), []
    for j in range(p):
        if j in seen:
            continue
        stack, comp = [j], []
        seen.add(j)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        comps.append(sorted(comp))
    return comps
