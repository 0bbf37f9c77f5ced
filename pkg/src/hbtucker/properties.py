"""Exact checks of partition properties of two-mode topic assignment models.

Customers arrive one at a time and each picks a topic pair (i, j): topic i
in mode 1 and topic j in mode 2. The count matrix rho of a seating is the
object of every check. All probabilities are ``fractions.Fraction`` values,
so equalities are decided exactly; hyperparameters given as floats are read
through their decimal representation (0.1 means 1/10).

Models
------
``crp``
    One Chinese restaurant process (a single mode); cells are ``(i,)``.
``independent-crp``
    Two independent CRPs, one per mode. Topics are unlabeled tables.
``pam-node``
    A Dirichlet node over K1 mode-1 topics with, under each, a Dirichlet
    node over K2 mode-2 topics, both integrated out. Topics are labeled.
``generalized-ncrp``
    The nested two-parameter form: an occupied mode-1 topic attracts
    weight rho_i. - g02 and a new one g01 + g02 * K1 (K1 occupied topics),
    normalized by n + g01; within topic i an occupied child attracts
    rho_ij - gi2 and a new child gi1 + gi2 * K2_i, normalized by
    rho_i. + gi1. Topics are unlabeled and children belong to one parent.
    Parameters that produce a negative weight do not define a model.

Every predictive depends on the counts only, so the probability of each
reachable seating is computed by dynamic programming over count states.
Unlabeled models represent a state with topics numbered by first
appearance; a class key identifies states equal up to relabeling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import gammaln

MAX_ENUM_N = 8
KINDS = ("crp", "independent-crp", "pam-node", "generalized-ncrp")


class NegativeWeight(ValueError):
    """The parameters assign a negative weight to some reachable choice."""


def _q(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    return Fraction(repr(float(v)))


@dataclass(frozen=True)
class AssignmentModel:
    """A sequential topic-pair assignment rule with exact parameters.

    Use the constructors :meth:`crp`, :meth:`independent_crp`,
    :meth:`pam_node` and :meth:`generalized_ncrp`.
    """

    kind: str
    params: tuple
    labeled: bool = False

    @classmethod
    def crp(cls, gamma) -> "AssignmentModel":
        return cls("crp", (_positive(gamma),))

    @classmethod
    def independent_crp(cls, gamma1, gamma2) -> "AssignmentModel":
        return cls("independent-crp", (_positive(gamma1), _positive(gamma2)))

    @classmethod
    def pam_node(cls, gamma_top, gamma_child) -> "AssignmentModel":
        """``gamma_top`` has K1 entries; ``gamma_child`` is K1 x K2 or one K2 row shared by all."""
        top = tuple(_positive(g) for g in np.atleast_1d(np.asarray(gamma_top, dtype=object)))
        child = np.asarray(gamma_child, dtype=object)
        if child.ndim == 1:
            child = np.stack([child] * len(top))
        if child.ndim != 2 or child.shape[0] != len(top):
            raise ValueError("gamma_child must be K1 x K2 or a single K2 row")
        rows = tuple(tuple(_positive(g) for g in row) for row in child)
        return cls("pam-node", (top, rows), labeled=True)

    @classmethod
    def generalized_ncrp(cls, g01, g02, gi1, gi2) -> "AssignmentModel":
        g01, gi1 = _positive(g01), _positive(gi1)
        g02, gi2 = _q(g02), _q(gi2)
        if g02 < 0 or gi2 < 0:
            raise ValueError("discount parameters must be nonnegative")
        return cls("generalized-ncrp", (g01, g02, gi1, gi2))

    @property
    def shape(self) -> tuple[int, int] | None:
        if self.kind != "pam-node":
            return None
        return len(self.params[0]), len(self.params[1][0])

    def describe(self) -> dict:
        return {"kind": self.kind, "params": _jsonable(self.params)}


def _positive(v) -> Fraction:
    q = _q(v)
    if q <= 0:
        raise ValueError(f"parameter must be positive, got {v}")
    return q


def _jsonable(obj):
    if isinstance(obj, Fraction):
        return str(obj) if obj.denominator != 1 else obj.numerator
    if isinstance(obj, (tuple, list)):
        return [_jsonable(v) for v in obj]
    return obj


# ---------------------------------------------------------------- states


def empty_state(model: AssignmentModel):
    if model.kind == "pam-node":
        K1, K2 = model.shape
        return tuple((0,) * K2 for _ in range(K1))
    return ()


def _crp_choices(sizes: Sequence[int], gamma: Fraction) -> list[Fraction]:
    denom = gamma + sum(sizes)
    return [Fraction(c) / denom for c in sizes] + [gamma / denom]


def options(model: AssignmentModel, state) -> dict[tuple, Fraction]:
    """Probability of every cell the next customer can take."""
    kind = model.kind
    if kind == "crp":
        return {(i,): p for i, p in enumerate(_crp_choices(state, model.params[0]))}
    if kind == "independent-crp":
        g1, g2 = model.params
        rows = [sum(r) for r in state]
        cols = [sum(c) for c in zip(*state)] if state else []
        p1, p2 = _crp_choices(rows, g1), _crp_choices(cols, g2)
        return {(i, j): a * b for i, a in enumerate(p1) for j, b in enumerate(p2)}
    if kind == "pam-node":
        top, child = model.params
        n = sum(map(sum, state))
        tsum = sum(top)
        out = {}
        for i, row in enumerate(state):
            ri = sum(row)
            xi = (top[i] + ri) / (tsum + n)
            csum = sum(child[i])
            for j, c in enumerate(row):
                out[(i, j)] = xi * (child[i][j] + c) / (csum + ri)
        return out
    g01, g02, gi1, gi2 = model.params
    n = sum(map(sum, state))
    out = {}
    K1 = len(state)
    for i in range(K1 + 1):
        row = state[i] if i < K1 else ()
        ri = sum(row)
        w_row = (ri - g02) if i < K1 else (g01 + g02 * K1)
        if w_row < 0:
            raise NegativeWeight(f"mode-1 weight {w_row} at state {state}")
        xi = w_row / (n + g01)
        for j in range(len(row) + 1):
            w = (row[j] - gi2) if j < len(row) else (gi1 + gi2 * len(row))
            if w < 0:
                raise NegativeWeight(f"mode-2 weight {w} at state {state}")
            out[(i, j)] = xi * w / (ri + gi1)
    return out


def apply(model: AssignmentModel, state, cell):
    """State after one customer takes ``cell`` (a new topic index opens a topic)."""
    kind = model.kind
    if kind == "crp":
        (i,) = cell
        s = list(state) + [0] * (i + 1 - len(state))
        s[i] += 1
        return tuple(s)
    if kind in ("independent-crp", "pam-node"):
        i, j = cell
        R = max(len(state), i + 1)
        C = max(len(state[0]) if state else 0, j + 1)
        m = [list(r) + [0] * (C - len(r)) for r in state] + [[0] * C for _ in range(R - len(state))]
        m[i][j] += 1
        return tuple(tuple(r) for r in m)
    i, j = cell
    rows = [list(r) for r in state] + ([[]] if i == len(state) else [])
    if j == len(rows[i]):
        rows[i].append(0)
    rows[i][j] += 1
    return tuple(tuple(r) for r in rows)


def relabel(model: AssignmentModel, seq) -> list[tuple]:
    """Renumber unlabeled topics by first appearance; labeled models are unchanged."""
    seq = [tuple(int(c) for c in cell) for cell in seq]
    if model.labeled:
        return seq
    if model.kind == "generalized-ncrp":
        rmap: dict[int, int] = {}
        cmap: dict[tuple[int, int], int] = {}
        per_row: dict[int, int] = {}
        out = []
        for i, j in seq:
            r = rmap.setdefault(i, len(rmap))
            if (i, j) not in cmap:
                cmap[(i, j)] = per_row.get(r, 0)
                per_row[r] = cmap[(i, j)] + 1
            out.append((r, cmap[(i, j)]))
        return out
    maps = [dict() for _ in seq[0]] if seq else []
    return [tuple(maps[a].setdefault(c, len(maps[a])) for a, c in enumerate(cell)) for cell in seq]


def class_key(model: AssignmentModel, state):
    """Identifier of a state up to the model's relabelings."""
    kind = model.kind
    if kind == "pam-node":
        return state
    if kind == "crp":
        return tuple(sorted(state, reverse=True))
    if kind == "generalized-ncrp":
        return tuple(sorted((tuple(sorted(r, reverse=True)) for r in state), reverse=True))
    if not state:
        return ()
    m = np.array(state, dtype=np.int64)
    transpose = m.shape[1] < m.shape[0]
    if transpose:
        m = m.T
    best = None
    for perm in itertools.permutations(range(m.shape[0])):
        cols = tuple(sorted(tuple(m[list(perm), c]) for c in range(m.shape[1])))
        if best is None or cols < best:
            best = cols
    return (transpose, best)


def state_cells(model: AssignmentModel, state) -> list[tuple]:
    """The occupied cells of a state with their counts."""
    if model.kind == "crp":
        return [((i,), c) for i, c in enumerate(state) if c]
    return [((i, j), c) for i, row in enumerate(state) for j, c in enumerate(row) if c]


def canonical_sequence(model: AssignmentModel, state) -> list[tuple]:
    """A seating order producing ``state``: cell by cell in row-major order, relabeled."""
    seq = [cell for cell, c in state_cells(model, state) for _ in range(c)]
    return relabel(model, seq)


def sequence_prob(model: AssignmentModel, seq) -> Fraction:
    """Exact probability of a seating sequence (cells after relabeling)."""
    state = empty_state(model)
    prob = Fraction(1)
    for cell in relabel(model, seq):
        p = options(model, state).get(cell)
        if p is None:
            return Fraction(0)
        prob *= p
        state = apply(model, state, cell)
    return prob


def reachable(model: AssignmentModel, n: int) -> list[dict]:
    """Layers 0..n of {state: total probability of reaching it}.

    States of probability zero are kept, since the properties quantify over
    every partition and not only over those the model can produce.
    """
    if n > MAX_ENUM_N:
        raise ValueError(f"enumeration is limited to n <= {MAX_ENUM_N}")
    layers = [{empty_state(model): Fraction(1)}]
    for _ in range(n):
        nxt: dict = {}
        for state, p in layers[-1].items():
            for cell, q in options(model, state).items():
                s2 = apply(model, state, cell)
                nxt[s2] = nxt.get(s2, Fraction(0)) + p * q
        layers.append(nxt)
    return layers


def classes(model: AssignmentModel, n: int) -> dict:
    """{class key: (representative state, probability of the class over all orders)}."""
    out: dict = {}
    for state, p in reachable(model, n)[n].items():
        key = class_key(model, state)
        rep, tot = out.get(key, (state, Fraction(0)))
        out[key] = (rep, tot + p)
    return out


def _rho_state(model: AssignmentModel, rho):
    """Turn a user-given count matrix into a state of the model."""
    if model.kind == "crp":
        return tuple(int(c) for c in np.ravel(rho) if c)
    m = [[int(c) for c in row] for row in rho]
    if model.kind == "pam-node":
        if (len(m), len(m[0])) != model.shape:
            raise ValueError(f"pam-node partitions are {model.shape}, got {len(m)} x {len(m[0])}")
        return tuple(tuple(r) for r in m)
    if model.kind == "generalized-ncrp":
        return tuple(tuple(c for c in r if c) for r in m if any(r))
    a = np.array(m, dtype=np.int64)
    a = a[a.sum(axis=1) > 0][:, a.sum(axis=0) > 0]
    return tuple(tuple(int(c) for c in r) for r in a)


def exact_partition_prob(model: AssignmentModel, rho, order=None) -> Fraction:
    """Probability of the partition ``rho``.

    With ``order`` (a sequence of 0-based cells) this is the probability of
    that seating sequence, which must produce ``rho``. Without it, the sum
    over every seating order that produces ``rho`` up to the model's
    relabelings.
    """
    state = _rho_state(model, rho)
    n = sum(c for _, c in state_cells(model, state))
    if n > MAX_ENUM_N:
        raise ValueError(f"enumeration is limited to n <= {MAX_ENUM_N}, got n={n}")
    key = class_key(model, state)
    if order is not None:
        seq = relabel(model, order)
        s = empty_state(model)
        for cell in seq:
            s = apply(model, s, cell)
        if class_key(model, s) != key:
            raise ValueError("the given order does not produce rho")
        return sequence_prob(model, seq)
    found = classes(model, n).get(key)
    return found[1] if found else Fraction(0)


# ---------------------------------------------------------------- checks


@dataclass
class PropertyReport:
    """Outcome of one exact check. ``witness`` describes the first violation."""

    prop: str
    model: dict
    n: int
    holds: bool
    witness: dict | None = None
    checked: int = 0
    note: str | None = None

    def to_json(self) -> dict:
        out = {
            "property": self.prop,
            "model": self.model,
            "n": self.n,
            "holds": self.holds,
            "checked": self.checked,
            "witness": _jsonable_deep(self.witness),
        }
        if self.note:
            out["note"] = self.note
        return out


def _jsonable_deep(obj):
    if obj is None:
        return None
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable_deep(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable_deep(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _guard(prop: str, model: AssignmentModel, n: int, fn: Callable[[], PropertyReport]) -> PropertyReport:
    try:
        return fn()
    except NegativeWeight as exc:
        return PropertyReport(prop, model.describe(), n, False, {"invalid_parameters": str(exc)})


def _distinct_perms(seq: list[tuple]):
    seen = set()
    for perm in itertools.permutations(seq):
        if perm not in seen:
            seen.add(perm)
            yield list(perm)


def check_exchangeability(model: AssignmentModel, n: int) -> PropertyReport:
    """Every reordering of a seating sequence has the same probability."""
    if n > 6:
        raise ValueError("exchangeability is checked for n <= 6")

    def go():
        checked = 0
        for key, (state, _) in sorted(classes(model, n).items(), key=lambda kv: repr(kv[0])):
            base_seq = canonical_sequence(model, state)
            base = sequence_prob(model, base_seq)
            for perm in _distinct_perms(base_seq):
                p = sequence_prob(model, perm)
                checked += 1
                if p != base:
                    w = {"order": base_seq, "prob": base, "reordered": relabel(model, perm), "reordered_prob": p}
                    return PropertyReport("exchangeability", model.describe(), n, False, w, checked)
        return PropertyReport("exchangeability", model.describe(), n, True, None, checked)

    return _guard("exchangeability", model, n, go)


def _partition_probs(model: AssignmentModel, n: int) -> list[tuple[Any, Fraction]]:
    out = []
    for key, (state, _) in sorted(classes(model, n).items(), key=lambda kv: repr(kv[0])):
        out.append((state, sequence_prob(model, canonical_sequence(model, state))))
    return out


def check_partition_property(model: AssignmentModel, n: int, flavor: str = "strict") -> PropertyReport:
    """Partition probability invariant to permutations of entries (strict) or of rows and columns (loose).

    The probability of a partition is that of its canonical seating order.
    For unlabeled models a row or column permutation only renames topics,
    so the loose property holds by construction.
    """
    if flavor not in ("strict", "loose"):
        raise ValueError(f"flavor must be 'strict' or 'loose', got {flavor!r}")
    if n > 6:
        raise ValueError("partition properties are checked for n <= 6")
    if model.kind == "pam-node" and model.shape[0] * model.shape[1] > 9:
        raise ValueError("partition properties are checked for K1 * K2 <= 9")
    prop = f"{flavor}-partition"

    def go():
        probs = _partition_probs(model, n)
        if flavor == "strict":
            groups: dict = {}
            for state, p in probs:
                key = tuple(sorted(c for _, c in state_cells(model, state)))
                groups.setdefault(key, []).append((state, p))
            for key in sorted(groups):
                (s0, p0), *rest = groups[key]
                for s, p in rest:
                    if p != p0:
                        w = {"rho": _as_matrix(model, s0), "prob": p0, "permuted": _as_matrix(model, s), "permuted_prob": p}
                        return PropertyReport(prop, model.describe(), n, False, w, len(probs))
            return PropertyReport(prop, model.describe(), n, True, None, len(probs))
        if not model.labeled:
            return PropertyReport(
                prop, model.describe(), n, True, None, len(probs),
                note="topics are unlabeled; row and column permutations map every partition to itself",
            )
        K1, K2 = model.shape
        lookup = dict(probs)
        checked = 0
        for state, p in probs:
            a = np.array(state)
            for rp in itertools.permutations(range(K1)):
                for cp in itertools.permutations(range(K2)):
                    s2 = tuple(tuple(int(c) for c in r) for r in a[list(rp)][:, list(cp)])
                    checked += 1
                    if lookup[s2] != p:
                        w = {"rho": _as_matrix(model, state), "prob": p, "permuted": _as_matrix(model, s2), "permuted_prob": lookup[s2]}
                        return PropertyReport(prop, model.describe(), n, False, w, checked)
        return PropertyReport(prop, model.describe(), n, True, None, checked)

    return _guard(prop, model, n, go)


def _as_matrix(model: AssignmentModel, state) -> list:
    if model.kind == "crp":
        return list(state)
    if model.kind == "generalized-ncrp":
        width = max((len(r) for r in state), default=0)
        return [list(r) + [0] * (width - len(r)) for r in state]
    return [list(r) for r in state]


def _monotone(values: dict, counts: dict) -> tuple | None:
    """First pair (a, b) violating: value_a > value_b iff count_a > count_b."""
    keys = sorted(values)
    for a in keys:
        for b in keys:
            if a != b and (values[a] > values[b]) != (counts[a] > counts[b]):
                return a, b
    return None


def _theta(model: AssignmentModel, state, k: int) -> dict[int, Fraction]:
    """P(mode-2 topic j | mode-1 topic k) for the next customer, over existing j."""
    row = state[k]
    ri = sum(row)
    if model.kind == "pam-node":
        child = model.params[1][k]
        return {j: (child[j] + c) / (sum(child) + ri) for j, c in enumerate(row)}
    if model.kind == "independent-crp":
        cols = [sum(c) for c in zip(*state)]
        return dict(enumerate(_crp_choices(cols, model.params[1])[:-1]))
    _, _, gi1, gi2 = model.params
    return {j: (c - gi2) / (ri + gi1) for j, c in enumerate(row)}


def check_rich_get_richer(model: AssignmentModel, n: int, flavor: str = "independent") -> PropertyReport:
    """Next-customer probabilities increase strictly with occupancy, checked on every state of 1..n customers.

    Mode 1 compares xi_i over occupied mode-1 topics with their row sums.
    Mode 2 compares, for ``independent``, the marginal probability of each
    occupied mode-2 topic with its column sum and, for ``hierarchical``,
    theta_kj = P(j | k) with rho_kj over occupied cells of each occupied row k.
    """
    if flavor not in ("independent", "hierarchical"):
        raise ValueError(f"flavor must be 'independent' or 'hierarchical', got {flavor!r}")
    if model.kind == "crp":
        raise ValueError("rich-get-richer is defined for two-mode models")
    if flavor == "independent" and model.kind == "generalized-ncrp":
        raise ValueError("mode-2 topics of a nested model belong to one parent; use the hierarchical flavor")
    if n > 6:
        raise ValueError("rich-get-richer is checked for n <= 6")
    prop = f"rich-get-richer-{flavor}"

    def go():
        layers = reachable(model, n)
        checked = 0
        for size in range(1, n + 1):
            for state in sorted(layers[size], key=repr):
                opts = options(model, state)
                checked += 1
                rows = {i: sum(r) for i, r in enumerate(state) if sum(r)}
                xi = {i: sum((p for (a, _), p in opts.items() if a == i), Fraction(0)) for i in rows}
                bad = _monotone(xi, rows)
                if bad:
                    w = {"state": _as_matrix(model, state), "mode": 1, "topics": bad,
                         "probs": [xi[bad[0]], xi[bad[1]]], "counts": [rows[bad[0]], rows[bad[1]]]}
                    return PropertyReport(prop, model.describe(), n, False, w, checked)
                if flavor == "independent":
                    cols = {j: c for j, c in enumerate(map(sum, zip(*state))) if c}
                    th = {j: sum((p for (_, b), p in opts.items() if b == j), Fraction(0)) for j in cols}
                    bad = _monotone(th, cols)
                    if bad:
                        w = {"state": _as_matrix(model, state), "mode": 2, "topics": bad,
                             "probs": [th[bad[0]], th[bad[1]]], "counts": [cols[bad[0]], cols[bad[1]]]}
                        return PropertyReport(prop, model.describe(), n, False, w, checked)
                    continue
                for k in rows:
                    cells = {j: c for j, c in enumerate(state[k]) if c}
                    th = {j: q for j, q in _theta(model, state, k).items() if j in cells}
                    bad = _monotone(th, cells)
                    if bad:
                        w = {"state": _as_matrix(model, state), "mode": 2, "row": k, "topics": bad,
                             "probs": [th[bad[0]], th[bad[1]]], "counts": [cells[bad[0]], cells[bad[1]]]}
                        return PropertyReport(prop, model.describe(), n, False, w, checked)
        return PropertyReport(prop, model.describe(), n, True, None, checked)

    return _guard(prop, model, n, go)


# ---------------------------------------------------------------- witnesses


def _gamma_ratio(num: Sequence, den: Sequence):
    """prod Gamma(num) / prod Gamma(den), exact when every argument is a positive integer."""
    args = [_q(v) for v in (*num, *den)]
    if any(a <= 0 for a in args):
        raise ValueError("Gamma arguments must be positive")
    if all(a.denominator == 1 for a in args):
        out = Fraction(1)
        for v in num:
            out *= math.factorial(int(v) - 1)
        for v in den:
            out /= math.factorial(int(v) - 1)
        return out
    return math.exp(sum(gammaln(float(v)) for v in num) - sum(gammaln(float(v)) for v in den))


def omega(rho_ij, rho_mn, rho_i, rho_m, g02=0):
    """Row-level factor of the probability ratio when entries (i, j) and (m, n) of rho swap."""
    g = _q(g02)
    return _gamma_ratio([rho_m - g, rho_i - g], [rho_m - rho_mn + rho_ij - g, rho_i - rho_ij + rho_mn - g])


def nu(rho_ij, rho_mn, rho_i, rho_m, g02=0, gi2=0, gm2=0):
    """omega times the within-row factor of the same swap."""
    gi, gm = _q(gi2), _q(gm2)
    inner = _gamma_ratio([rho_ij - gi, rho_mn - gm], [rho_ij - gm, rho_mn - gi])
    return omega(rho_ij, rho_mn, rho_i, rho_m, g02) * inner


def separable_node_weight(m, gamma) -> Fraction:
    """prod_k 1 / (m_k + gamma_k): the product of one-dimensional integrals of theta^(m+gamma-1)."""
    out = Fraction(1)
    for mk, gk in zip(m, gamma):
        out /= _q(mk) + _q(gk)
    return out


def dirichlet_swap_witness(gamma=(1, 2), m=(1, 2)) -> dict:
    """Asymmetric Dirichlet node: the swap of two topic counts changes the probability.

    Reports the separable weights of both arrangements and the exact ratio
    of the two seating probabilities from the enumerator.
    """
    node = AssignmentModel.pam_node([1], [list(gamma)])
    rho = [list(m)]
    swapped = [list(m[::-1])]
    p = sequence_prob(node, canonical_sequence(node, _rho_state(node, rho)))
    q = sequence_prob(node, canonical_sequence(node, _rho_state(node, swapped)))
    return {
        "gamma": list(gamma),
        "counts": list(m),
        "separable": separable_node_weight(m, gamma),
        "separable_swapped": separable_node_weight(m[::-1], gamma),
        "exact_prob": p,
        "exact_prob_swapped": q,
        "exact_ratio": p / q,
    }


def linear_form_case_probs(f: Callable[[int], Any], gamma0, x: int) -> tuple[Fraction, Fraction]:
    """The two insertion orders of x customers at topic 1 and one at topic 2.

    Case one seats all x at topic 1 and then opens topic 2; case two opens
    topic 2 after x - 1 customers and seats the last one at topic 1.
    """
    if x < 2:
        raise ValueError("x must be at least 2")
    g = _q(gamma0)
    F = lambda k: _q(f(k))
    common = Fraction(1)
    for k in range(1, x - 1):
        common *= F(k) / (g + F(k))
    one = common * F(x - 1) / (g + F(x - 1)) * g / (g + F(x))
    two = common * g / (g + F(x - 1)) * F(x - 1) / (g + F(x - 1) + F(1))
    return one, two


def linearity_check(f: Callable[[int], Any], gamma0=1, x_max: int = 6) -> dict:
    """Check that both insertion orders agree for x = 2..x_max, and derive f from f(1)."""
    mismatches = []
    for x in range(2, x_max + 1):
        one, two = linear_form_case_probs(f, gamma0, x)
        if one != two:
            mismatches.append({"x": x, "case_one": one, "case_two": two})
    derived = [_q(f(1))]
    for _ in range(2, x_max + 1):
        derived.append(derived[-1] + derived[0])
    return {
        "exchangeable": not mismatches,
        "mismatches": mismatches,
        "derived_f": derived,
        "linear": all(d == (k + 1) * derived[0] for k, d in enumerate(derived)),
    }


GAMMA_GRID = (0.1, 0.25, 0.5, 0.75, 1, 2, 3, 4, 5)


@dataclass
class GridCell:
    g01: Any
    g02: Any
    exchangeability: bool
    partition: bool
    rich_get_richer: bool

    @property
    def all_pass(self) -> bool:
        return self.exchangeability and self.partition and self.rich_get_richer


def scan_grid(kind: str, n: int = 4, grid=GAMMA_GRID) -> list[GridCell]:
    """Evaluate all three properties on a grid of two concentration parameters.

    ``generalized-ncrp`` ties the child parameters to the top ones
    (gi1 = g01, gi2 = g02) and uses the strict partition property with the
    hierarchical rich-get-richer flavor. ``independent-crp`` uses the two
    values as the per-mode CRP concentrations with the loose partition
    property and the independent flavor.
    """
    cells = []
    for a in grid:
        for b in grid:
            if kind == "generalized-ncrp":
                model = AssignmentModel.generalized_ncrp(a, b, a, b)
                part = check_partition_property(model, n, "strict").holds
                rgr = check_rich_get_richer(model, n, "hierarchical").holds
            elif kind == "independent-crp":
                model = AssignmentModel.independent_crp(a, b)
                part = check_partition_property(model, n, "loose").holds
                rgr = check_rich_get_richer(model, n, "independent").holds
            else:
                raise ValueError(f"grid scan supports generalized-ncrp and independent-crp, got {kind!r}")
            cells.append(GridCell(a, b, check_exchangeability(model, n).holds, part, rgr))
    return cells


def impossibility_witness(n: int = 4, grid=GAMMA_GRID) -> dict:
    """The swap witness for the nested linear form and the grid scans of both model families."""
    w = omega(1, 2, 3, 3, 0)
    model = AssignmentModel.generalized_ncrp(1, 0, 1, 0)
    rho = ((1, 2), (2, 1))
    swapped = ((2, 2), (1, 1))
    p = sequence_prob(model, canonical_sequence(model, rho))
    q = sequence_prob(model, canonical_sequence(model, swapped))
    nested = scan_grid("generalized-ncrp", n, grid)
    indep = scan_grid("independent-crp", n, grid)
    return {
        "omega": w,
        "omega_is_two_thirds": w == Fraction(2, 3),
        "enumerated_swap_ratio": p / q,
        "grid": [float(v) for v in grid],
        "n": n,
        "nested_cells": len(nested),
        "nested_all_pass": sum(c.all_pass for c in nested),
        "independent_cells": len(indep),
        "independent_all_pass": sum(c.all_pass for c in indep),
    }
