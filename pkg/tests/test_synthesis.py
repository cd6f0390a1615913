import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import assume, given
from hypothesis import strategies as st

from _systems import random_connected_graph, random_network
from geoduio.errors import (Disconnected, GainTooSmall, IllPosedSplit,
                            JointConditionViolated)
from geoduio.geometry import NodeSystem, decompose_node
from geoduio.graphs import (CommGraph, complete_edges, laplacian_from_edges,
                            path_edges, ring_edges)
from geoduio.plants import node_system
from geoduio.subspace import DiscreteRegion, intersect_all
from geoduio.synthesis import (build_consensus_matrix, build_continuous_bank,
                               build_discrete_bank, check_joint_condition_ct,
                               check_joint_condition_dt, compute_ei_fi,
                               continuous_gain_bounds, rounds_for_budget,
                               theorem3_bound, theta_matrix)

seeds = st.integers(0, 2**32 - 1)
CHI, GAMMA = 279.0354, 30.7682


def _spectral_rate(w):
    n = w.shape[0]
    return np.linalg.norm(w - np.ones((n, n)) / n, 2)


def test_joint_condition_ct_on_example(decomps_ct):
    check = check_joint_condition_ct(decomps_ct)
    assert check and check.witness.is_zero()
    # the S* design is infeasible on the same network
    assert not intersect_all([d.s_star for d in decomps_ct]).is_zero()


def test_joint_condition_ct_trivial_cases(rng):
    a = rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 1))
    same = [decompose_node(NodeSystem(a, [], b, np.zeros((0, 3)), i)) for i in range(2)]
    check = check_joint_condition_ct(same)
    assert not check
    assert check.witness.equals(same[0].w_g_star)
    full = decompose_node(NodeSystem(a, [], np.zeros((3, 0)), np.eye(3)))
    assert check_joint_condition_ct([same[0], full])


def test_joint_condition_dt(decomps_dgu, decomps_dt):
    assert check_joint_condition_dt(decomps_dgu)
    assert check_joint_condition_dt(decomps_dt)


def test_joint_condition_dt_without_outputs(rng):
    a = rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 1))
    ds = [decompose_node(NodeSystem(a, [], b, np.zeros((0, 3)), i),
                         DiscreteRegion()) for i in range(3)]
    assert not check_joint_condition_dt(ds)
    with pytest.raises(JointConditionViolated):
        compute_ei_fi(ds)


def test_published_gains_exceed_bounds(decomps_ct, ring4):
    bounds = continuous_gain_bounds(decomps_ct, ring4, 2.0)
    assert CHI > bounds.chi_min and GAMMA > bounds.gamma_min
    bank = build_continuous_bank(decomps_ct, ring4, 2.0, CHI, GAMMA)
    assert np.all(bank.chi == CHI)


def test_gain_bound_pass_fail(decomps_ct, ring4):
    b = continuous_gain_bounds(decomps_ct, ring4, 2.0)
    build_continuous_bank(decomps_ct, ring4, 2.0, b.chi_min + 1e-6, b.gamma_min + 1e-6)
    with pytest.raises(GainTooSmall):
        build_continuous_bank(decomps_ct, ring4, 2.0, b.chi_min, GAMMA)
    with pytest.raises(GainTooSmall):
        build_continuous_bank(decomps_ct, ring4, 2.0, CHI, b.gamma_min)
    assert continuous_gain_bounds(decomps_ct, ring4, 0.0).gamma_min == 0.0


def test_gain_bound_matches_direct_formula(decomps_ct, ring4):
    w = scipy.linalg.block_diag(*[d.w_g_star.basis for d in decomps_ct])
    theta = w.T @ np.kron(ring4.laplacian, np.eye(6)) @ w
    a_t = scipy.linalg.block_diag(*[d.w_g_star.basis.T @ d.a_l @ d.w_g_star.basis
                                    for d in decomps_ct])
    chi_ref = np.linalg.norm(a_t, 2) / np.linalg.eigvalsh(theta).min()
    b = continuous_gain_bounds(decomps_ct, ring4, 2.0)
    assert b.chi_min == pytest.approx(chi_ref, rel=1e-10)


def test_empty_theta_leaves_chi_unconstrained(rng):
    a = rng.standard_normal((3, 3))
    ds = [decompose_node(NodeSystem(a, [], np.zeros((3, 0)), np.eye(3), i)) for i in range(2)]
    g = laplacian_from_edges(2, [(0, 1)])
    assert theta_matrix(ds, g).size == 0
    assert continuous_gain_bounds(ds, g, 1.0).chi_min == 0.0


def test_disconnected_graph_rejected(decomps_ct):
    g = laplacian_from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(Disconnected):
        build_continuous_bank(decomps_ct, g, 2.0, CHI, GAMMA)
    with pytest.raises(Disconnected):
        build_consensus_matrix(g)


def test_consensus_matrix_complete_graph():
    w, mu, r = build_consensus_matrix(laplacian_from_edges(4, complete_edges(4)))
    assert np.allclose(w, np.full((4, 4), 0.25), atol=1e-12)
    assert r == pytest.approx(0.0, abs=1e-12)


def test_consensus_matrix_path3():
    w, mu, r = build_consensus_matrix(laplacian_from_edges(3, path_edges(3)))
    assert mu == pytest.approx(2.0)
    assert r == pytest.approx(0.5)
    assert _spectral_rate(w) == pytest.approx(0.5)


@given(seeds)
def test_consensus_matrix_properties(seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, int(rng.integers(2, 9)))
    w, mu, r = build_consensus_matrix(g)
    n = g.n_nodes
    assert np.allclose(w, w.T)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)
    eigs = np.sort(np.linalg.eigvalsh(w))
    assert eigs[-1] == pytest.approx(1.0)
    assert np.max(np.abs(eigs[:-1])) == pytest.approx(r, abs=1e-9) if n > 1 else True


def test_single_node_e_f():
    sys = NodeSystem(np.diag([-1.0, -2.0]), [], np.zeros((2, 0)), np.eye(2))
    d = decompose_node(sys)
    (e, f), = compute_ei_fi([d])
    k = e @ d.projection + f @ sys.c
    assert np.allclose(k, np.eye(2), atol=1e-12)


def test_partition_of_identity_on_dgu(decomps_dgu, ring5):
    bank = build_discrete_bank(decomps_dgu, ring5, rounds=16)
    assert bank.partition_residual() < 1e-8


def test_k_matrices_spectral_bounds(decomps_dgu, ring5):
    bank = build_discrete_bank(decomps_dgu, ring5, rounds=16)
    r = np.vstack([np.vstack([d.projection, d.system.c]) for d in decomps_dgu])
    phi = r.T @ r
    half = scipy.linalg.sqrtm(phi).real
    inv_half = np.linalg.inv(half)
    for k in bank.k_matrices():
        sym = half @ k @ inv_half
        # K_i is similar to a symmetric PSD contraction, not symmetric itself
        assert np.allclose(sym, sym.T, atol=1e-8)
        eigs = np.linalg.eigvalsh(0.5 * (sym + sym.T))
        assert eigs.min() >= -1e-9 and eigs.max() <= 1 + 1e-9


def test_rounds_for_budget():
    rate, n = 0.8, 5
    d = rounds_for_budget(n, rate, 1e-3)
    c = (n - 1) * math.sqrt(n)
    assert c * rate ** d <= 1e-3 < c * rate ** (d - 1)
    assert rounds_for_budget(4, 0.0, 1e-9) == 1
    with pytest.raises(ValueError):
        rounds_for_budget(4, 0.5, 0.0)


def test_bank_requires_rounds_or_budget(decomps_dgu, ring5):
    with pytest.raises(ValueError):
        build_discrete_bank(decomps_dgu, ring5)
    bank = build_discrete_bank(decomps_dgu, ring5, error_budget=1e-4)
    assert theorem3_bound(bank, 1.0) <= 1e-4


def test_bound_vanishes_on_complete_graph(decomps_dgu):
    g = laplacian_from_edges(5, complete_edges(5))
    bank = build_discrete_bank(decomps_dgu, g, rounds=1)
    assert theorem3_bound(bank, 357.3444) == pytest.approx(0.0, abs=1e-12)


def test_bound_decreases_with_rounds(decomps_dgu, ring5):
    bounds = [theorem3_bound(build_discrete_bank(decomps_dgu, ring5, rounds=d), 357.3444)
              for d in range(1, 30)]
    assert all(b2 < b1 for b1, b2 in zip(bounds, bounds[1:]))
    assert bounds[0] > 0


@given(seeds)
def test_partition_of_identity_random(seed):
    plant, graph = random_network(seed, discrete=True)
    try:
        ds = [decompose_node(node_system(plant, i), DiscreteRegion())
              for i in range(plant.n_nodes)]
    except IllPosedSplit:
        assume(False)
    assume(check_joint_condition_dt(ds))
    try:
        bank = build_discrete_bank(ds, graph, rounds=3)
    except JointConditionViolated:
        assume(False)
    assert bank.partition_residual() < 1e-8


@given(seeds)
def test_theta_is_pd_and_monotone_in_edges(seed):
    plant, graph = random_network(seed)
    try:
        ds = [decompose_node(node_system(plant, i)) for i in range(plant.n_nodes)]
    except IllPosedSplit:
        assume(False)
    assume(check_joint_condition_ct(ds))
    theta = theta_matrix(ds, graph)
    assume(theta.size > 0)
    assert np.allclose(theta, theta.T, atol=1e-10)
    sig = np.linalg.eigvalsh(theta).min()
    assert sig > 0
    missing = [(i, j) for i in range(graph.n_nodes) for j in range(i + 1, graph.n_nodes)
               if graph.adjacency[i, j] == 0]
    if missing:
        richer = graph.with_edge(*missing[0])
        assert np.linalg.eigvalsh(theta_matrix(ds, richer)).min() >= sig - 1e-10
    b1 = continuous_gain_bounds(ds, graph, 1.0)
    b2 = continuous_gain_bounds(ds, graph, 2.0)
    assert b2.gamma_min >= b1.gamma_min


def test_q_linear_rate_and_mu_optimality():
    rng = np.random.default_rng(7)
    for _ in range(10):
        g = random_connected_graph(rng, int(rng.integers(3, 9)), allow_complete=False)
        w, mu, r = build_consensus_matrix(g)
        n = g.n_nodes
        j = np.ones((n, n)) / n
        # W^k - J = (W - J)^k since WJ = JW = J; powering the deviation
        # avoids cancellation once r^k is tiny
        dev = w - j
        dk = np.eye(n)
        norms = []
        for _ in range(200):
            dk = dk @ dev
            norms.append(np.linalg.norm(dk, 2))
        assert norms[-1] / norms[-2] == pytest.approx(r, abs=1e-6)
        for scale in (1.25, 0.5 * (g.lambda_max / mu + 1.0)):
            w2 = np.eye(n) - g.laplacian / (mu * scale)
            assert _spectral_rate(w2) > r
