import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbtucker.config import ModelConfig
from hbtucker.hierarchy import (
    HierarchyState,
    PamComponent,
    TreeComponent,
    crp_log_eppf,
    crp_next_probs,
    topic_set,
)
from hbtucker.rng import make_rng

from oracles import crp_eppf


def test_crp_next_probs_examples():
    assert np.allclose(crp_next_probs([3, 1], 1), [3 / 5, 1 / 5, 1 / 5])
    assert np.allclose(crp_next_probs([], 2.5), [1.0])
    assert np.allclose(crp_next_probs([2, 2], 2), [1 / 3, 1 / 3, 1 / 3])
    with pytest.raises(ValueError):
        crp_next_probs([1], 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.floats(0.1, 5))
def test_crp_eppf_matches_closed_form(sizes, gamma):
    assert math.isclose(math.exp(crp_log_eppf(sizes, gamma)), crp_eppf(sizes, gamma), rel_tol=1e-9)


def test_topic_set_examples():
    visit = [(1, 2), (3, 1)]
    assert topic_set(visit, "level") == [(1, 2), (3, 1)]
    assert topic_set(visit, "cartesian") == [(1, 1), (1, 2), (3, 1), (3, 2)]
    assert topic_set([(4, 5)], "level") == topic_set([(4, 5)], "cartesian") == [(4, 5)]


def test_singleton_tree_path_is_all_new_and_has_prior_one():
    tree = TreeComponent(0, 3, [1.0, 1.0], d0=1)
    nodes = tree.draw_prior_path(make_rng(0))
    assert tree.K == 3
    tree.add_path(0, nodes)
    assert [tree.count[n] for n in nodes] == [1, 1, 1]
    assert tree.log_partition_prior() == 0.0


def test_depth_one_trees_give_root_pair():
    h = HierarchyState(ModelConfig(p=2, hierarchy="independent-trees", levels=1), d0=3)
    h.init_paths(make_rng(0), explicit_pam=False)
    for x in range(3):
        assert h.topic_set(x) == [(1, 1)]


def test_second_customer_shares_leaf_with_probability_half():
    tree = TreeComponent(0, 2, [1.0], d0=2)
    first = tree.draw_prior_path(make_rng(0))
    tree.add_path(0, first)
    assert math.isclose(tree.log_path_prior(first), math.log(0.5))
    rng = make_rng(1)
    shared = 0
    for _ in range(20_000):
        path = tree.draw_prior_path(rng)
        shared += path == first
        for nid in path[1:]:
            if tree.count[nid] == 0:
                tree._delete(nid)
    assert abs(shared / 20_000 - 0.5) < 0.015


def test_two_customers_identical_paths_in_both_modes():
    h = HierarchyState(ModelConfig(p=2, hierarchy="independent-trees", levels=2, gamma=1.0), d0=2)
    rng = make_rng(0)
    for comp in h.trees:
        path = comp.draw_prior_path(rng)
        comp.add_path(0, path)
        comp.add_path(1, path)
    assert math.isclose(math.exp(h.log_prior()), 0.25)


def test_tree_remove_then_add_restores_counts():
    h = HierarchyState(ModelConfig(p=2, hierarchy="independent-trees", levels=3, gamma=0.3), d0=12)
    h.init_paths(make_rng(3), explicit_pam=False)
    for tree in h.trees:
        leaves = [n for n, l in tree.level.items() if l == tree.L - 1]
        assert sum(tree.count[n] for n in leaves) == 12
        x = next(x for x in range(12) if tree.count[int(tree.paths[x, -1])] > 1)
        before = dict(tree.count)
        nodes = tree.paths[x].tolist()
        assert tree.remove_path(x) == []
        tree.add_path(x, nodes)
        assert tree.count == before
    assert h.audit() == []


def test_tree_removing_a_lone_path_prunes_its_nodes():
    tree = TreeComponent(0, 3, [1.0, 1.0], d0=2)
    rng = make_rng(0)
    tree.add_path(0, tree.draw_prior_path(rng))
    tree.add_path(1, tree.realize(([tree.root], 2)))
    assert tree.K == 5
    pruned = tree.remove_path(1)
    assert len(pruned) == 2 and tree.K == 3
    assert tree.audit() == []


def test_tree_audit_catches_bad_count():
    h = HierarchyState(ModelConfig(p=2, hierarchy="independent-trees", levels=2), d0=4)
    h.init_paths(make_rng(0), explicit_pam=False)
    tree = h.trees[0]
    tree.count[tree.root] += 1
    assert h.audit()


def _pam(levels, tau, gamma=1.0, d0=1, **kw):
    cfg = ModelConfig(p=2, hierarchy="pam-dag", levels=levels, tau=tau, gamma=gamma, **kw)
    return HierarchyState(cfg, d0)


def test_pam_unit_tau_has_one_path():
    h = _pam(2, 1)
    comp = h.pams[0]
    rng = make_rng(0)
    assert all(not comp.draw_path(rng, explicit=False).any() for _ in range(20))
    assert comp.log_path_prior(comp.draw_path(rng, True), explicit=True) == 0.0


def test_pam_uniform_transitions_make_every_path_equally_likely():
    comp = _pam(2, 2).pams[0]
    assert len(comp.slots) == 3
    rng = make_rng(4)
    draws = Counter(tuple(comp.draw_path(rng, explicit=True)[s] for s in comp.slots) for _ in range(100_000))
    assert len(draws) == 8
    assert max(abs(c / 100_000 - 1 / 8) for c in draws.values()) < 0.02


def test_pam_one_hot_transitions_follow_argmax():
    comp = _pam(3, 3).pams[0]
    rng = make_rng(5)
    for s in comp.slots:
        comp.P[s] = np.eye(comp.tau[s])[rng.integers(0, comp.tau[s], comp.n_configs(s))]
    first = comp.draw_path(rng, explicit=True)
    for _ in range(10):
        assert np.array_equal(comp.draw_path(rng, explicit=True), first)
    for s in comp.slots:
        assert first[s] == np.argmax(comp.P[s][comp.config_index(first, s)])


def test_pam_uniform_single_level_prior():
    h = _pam(1, 3, d0=1)
    h.init_paths(make_rng(0), explicit_pam=False)
    comp = h.pams[0]
    comp.remove_path(0)
    assert math.isclose(comp.log_path_prior(comp.choice[0], explicit=False), -math.log(3))


def test_pam_dominant_mode_and_compositions():
    h = _pam(2, 2, d0=5, dominant_mode=2, composition="level")
    h.init_paths(make_rng(1), explicit_pam=True)
    comp = h.pams[0]
    assert comp.modes == [1, 0]
    assert h.S == 2
    hc = _pam(2, 2, d0=5, composition="cartesian")
    hc.init_paths(make_rng(1), explicit_pam=True)
    assert hc.S == 4
    assert h.audit() == [] and hc.audit() == []


def test_three_mode_dependency_dag():
    cfg = ModelConfig(p=3, hierarchy="pam-dag", levels=2, tau=2, dependencies={0: [1, 2]})
    h = HierarchyState(cfg, 4)
    h.init_paths(make_rng(2), explicit_pam=True)
    comp = h.pams[0]
    assert comp.modes[0] == 0
    assert h.audit() == []
    sup = h.support_all()
    assert sup.shape[2] == 3
    assert np.all(sup < np.array(h.n_rows()))


def test_isolated_mode_gets_its_own_tree():
    cfg = ModelConfig(p=3, hierarchy="pam-dag", levels=2, tau=2, dependencies={0: [1]})
    h = HierarchyState(cfg, 4)
    h.init_paths(make_rng(2), explicit_pam=False)
    assert len(h.pams) == 1 and len(h.trees) == 1 and h.trees[0].mode == 2


@pytest.mark.parametrize(
    "cfg",
    [
        ModelConfig(p=2, hierarchy="independent-trees", levels=3, composition="level"),
        ModelConfig(p=2, hierarchy="independent-trees", levels=[2, 3]),
        ModelConfig(p=2, hierarchy="pam-dag", levels=3, tau=2),
    ],
)
def test_json_round_trip(cfg):
    h = HierarchyState(cfg, 6)
    h.init_paths(make_rng(0), explicit_pam=True)
    back = HierarchyState.from_json(h.to_json())
    assert back.to_json() == h.to_json()
    assert np.array_equal(back.support_all(), h.support_all())
    assert math.isclose(back.log_prior(True), h.log_prior(True))


def test_pam_prior_sums_to_one_over_paths():
    comp = PamComponent([0, 1], [[], [0]], 2, [[1, 2], [2, 2]], [[1, 0.5], [2, 0.7]], d0=1)
    rng = make_rng(0)
    comp.add_path(0, comp.draw_path(rng, False))
    comp.remove_path(0)
    seen = set()
    total = 0.0
    for code in range(8):
        ch = np.zeros((2, 2), dtype=np.int64)
        for i, s in enumerate(comp.slots):
            ch[s] = (code >> i) & 1
        key = ch.tobytes()
        if key not in seen:
            seen.add(key)
            total += math.exp(comp.log_path_prior(ch, explicit=False))
    assert math.isclose(total, 1.0)
