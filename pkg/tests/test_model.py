import math

import numpy as np
import pytest
from scipy.special import logsumexp

from hbtucker.config import ModelConfig
from hbtucker.model import (
    DecompositionState,
    Priors,
    audit,
    collapsed_log_joint,
    full_support,
    generate,
    log_model_probability,
)
from hbtucker.tensor import TopicIndexMap

from oracles import exact_log_joint, total_variation


def test_zero_lambda_gives_empty_tensor_and_valid_parameters():
    cfg = ModelConfig(p=2, dims=(4, 3, 2), K=(2, 2))
    t, st = generate(cfg, Priors.from_config(cfg, cfg.dims), 0, seed=1)
    assert t.nnz == 0 and t.lam.sum() == 0
    assert np.allclose(st.phi.sum(axis=1), 1)
    assert all(np.allclose(p.sum(axis=1), 1) for p in st.psi)
    assert audit(st) == []


def test_concentrated_priors_pin_every_observation():
    cfg = ModelConfig(p=2, dims=(3, 4, 3), K=(2, 2))
    alpha = np.full(4, 1e-6)
    alpha[2] = 1e6  # k* = (1, 2) in 0-based rows (0, 1)
    beta = [np.r_[1e6, np.full(3, 1e-6)], np.r_[1e6, np.full(2, 1e-6)]]
    t, st = generate(cfg, Priors(alpha, beta, alpha_mode="tuple"), 200, seed=2)
    rows = st.topic_rows()
    hit = np.all(rows == [0, 1], axis=1) & np.all(st.tok_y == 0, axis=1)
    assert hit.mean() >= 0.999


def test_tuple_frequencies_follow_phi():
    cfg = ModelConfig(p=2, dims=(1, 3, 3), K=(2, 2))
    _, st = generate(cfg, Priors.from_config(cfg, cfg.dims), 100_000, seed=3)
    flat = TopicIndexMap((2, 2)).ravel(st.topic_rows())
    freq = np.bincount(flat, minlength=4) / flat.size
    phi = st.dense_phi(0)
    assert total_variation(dict(enumerate(freq)), dict(enumerate(phi))) <= 0.02


def test_generate_is_reproducible():
    cfg = ModelConfig(p=2, dims=(5, 4, 3), K=(2, 3))
    pri = Priors.from_config(cfg, cfg.dims)
    a, sa = generate(cfg, pri, 20, seed=9)
    b, sb = generate(cfg, pri, 20, seed=9)
    c, _ = generate(cfg, pri, 20, seed=10)
    assert np.array_equal(a.index, b.index) and np.array_equal(a.counts, b.counts)
    assert np.array_equal(sa.z, sb.z)
    assert not (a.index.shape == c.index.shape and np.array_equal(a.index, c.index) and np.array_equal(a.counts, c.counts))


def test_single_count_trivial_probability_is_zero():
    st = DecompositionState((1, 1), (1,), full_support((1,), 1), [0], [[0]], [0])
    st.phi = np.ones((1, 1))
    st.psi = [np.ones((1, 1))]
    assert log_model_probability(st, Priors(1.0, [np.ones(1)])) == 0.0


def test_integrating_phi_and_psi_matches_closed_form():
    # K=(2,), d=(1,2), two counts at features 1 and 2, alpha = beta = (1,1).
    nodes, weights = np.polynomial.legendre.leggauss(8)
    u, w = (nodes + 1) / 2, weights / 2
    priors = Priors(1.0, [np.ones(2)])
    tok_x, tok_y = [0, 0], [[0], [1]]
    logs_num, logs_exact = [], []
    for z in ([0, 0], [0, 1], [1, 0], [1, 1]):
        st = DecompositionState((1, 2), (2,), full_support((2,), 1), tok_x, tok_y, z)
        total = 0.0
        for a, wa in zip(u, w):
            for b, wb in zip(u, w):
                for c, wc in zip(u, w):
                    st.phi = np.array([[a, 1 - a]])
                    st.psi = [np.array([[b, 1 - b], [c, 1 - c]])]
                    total += wa * wb * wc * math.exp(log_model_probability(st, priors))
        logs_num.append(math.log(total))
        logs_exact.append(exact_log_joint(tok_x, tok_y, [(k,) for k in z], 1, (2,), (2,), [1, 1], [[1, 1]]))
        assert math.isclose(collapsed_log_joint(st, priors), logs_exact[-1], rel_tol=1e-12)
    assert np.allclose(logs_num, logs_exact, atol=1e-10)
    assert math.isclose(logsumexp(logs_num), logsumexp(logs_exact), rel_tol=1e-10)


def test_relabeling_topics_leaves_probability_unchanged():
    cfg = ModelConfig(p=2, dims=(3, 4, 3), K=(2, 3))
    pri = Priors.from_config(cfg, cfg.dims)
    _, st = generate(cfg, pri, 15, seed=4)
    before = log_model_probability(st, pri)
    perm = [np.array([1, 0]), np.array([2, 0, 1])]
    inv = [np.argsort(p) for p in perm]
    tim = TopicIndexMap((2, 3))
    tuples = tim.all_tuples()
    new_pos = tim.ravel(np.stack([inv[0][tuples[:, 0]], inv[1][tuples[:, 1]]], axis=1))
    moved = st.copy()
    moved.z = new_pos[st.z]
    moved.phi = np.zeros_like(st.phi)
    moved.phi[:, new_pos] = st.phi
    moved.psi = [st.psi[j][perm[j]] for j in range(2)]
    moved.n, moved.m = moved.recount()
    assert audit(moved) == []
    assert math.isclose(log_model_probability(moved, pri), before, rel_tol=1e-12)
    assert math.isclose(collapsed_log_joint(moved, pri), collapsed_log_joint(st, pri), rel_tol=1e-12)


def test_collapsed_joint_matches_oracle_on_random_state():
    rng = np.random.default_rng(5)
    K_dims, dims = (2, 3), (3, 4, 2)
    tok_x = rng.integers(0, 3, 12)
    tok_y = np.stack([rng.integers(0, 4, 12), rng.integers(0, 2, 12)], axis=1)
    z = rng.integers(0, 6, 12)
    alpha = rng.uniform(0.2, 2, 6)
    betas = [rng.uniform(0.2, 2, 4), rng.uniform(0.2, 2, 2)]
    sup = full_support(K_dims, 3)
    st = DecompositionState(dims, K_dims, sup, tok_x, tok_y, z)
    want = exact_log_joint(tok_x, tok_y, [tuple(sup[0, s]) for s in z], 3, K_dims, dims[1:], alpha, betas)
    got = collapsed_log_joint(st, Priors(alpha, betas, alpha_mode="tuple"))
    assert math.isclose(got, want, rel_tol=1e-12)


def test_dense_phi_outside_support_is_rejected():
    cfg = ModelConfig(p=2, dims=(2, 3, 3), hierarchy="independent-trees", levels=2, composition="level")
    pri = Priors.from_config(cfg, cfg.dims)
    _, st = generate(cfg, pri, 5, seed=6)
    K = int(np.prod(st.K_dims))
    dense = np.stack([st.dense_phi(x) for x in range(2)])
    st2 = st.copy()
    st2.phi = dense
    assert math.isclose(log_model_probability(st2, pri), log_model_probability(st, pri), rel_tol=1e-12)
    outside = np.setdiff1d(np.arange(K), TopicIndexMap(st.K_dims).ravel(st.support[0]))
    if outside.size:
        dense[0, outside[0]] = 0.1
        st2.phi = dense
        with pytest.raises(ValueError, match="outside"):
            log_model_probability(st2, pri)


@pytest.mark.parametrize("kind", ["independent-trees", "pam-dag"])
def test_hierarchical_generate_respects_support(kind):
    cfg = ModelConfig(p=2, dims=(6, 5, 4), hierarchy=kind, levels=3, tau=2)
    pri = Priors.from_config(cfg, cfg.dims)
    _, st = generate(cfg, pri, 30, seed=7)
    assert audit(st) == []
    assert np.all(st.z < st.S)
    for x in range(6):
        dense = st.dense_phi(x)
        inside = TopicIndexMap(st.K_dims).ravel(st.support[x])
        mask = np.ones(dense.size, dtype=bool)
        mask[inside] = False
        assert np.all(dense[mask] == 0)
        assert math.isclose(dense.sum(), 1.0, abs_tol=1e-9)
    assert math.isfinite(log_model_probability(st, pri, st.hierarchy))


def test_audit_reports_corruption():
    cfg = ModelConfig(p=2, dims=(3, 3, 3), K=(2, 2))
    _, st = generate(cfg, Priors.from_config(cfg, cfg.dims), 10, seed=8)
    st.n[0, 0] += 1
    st.m[1][0, 0] += 1
    problems = audit(st)
    assert any("position counts" in p for p in problems)
    assert any("mode 2" in p for p in problems)
