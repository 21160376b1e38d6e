import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from multitree_lqg import graph as g
from multitree_lqg import lingauss as lg
from multitree_lqg import model as m


def scalar_problem(T=2, a=1.0, b=1.0, c=1.0):
    p = m.zeros_problem(g.Dag(1), T, 1)
    one = lambda v: [np.array([[v]])] * T
    return p.with_(A=one(a), B=one(b), C=one(c), Q=one(1.0), R=one(1.0),
                   W=one(1.0), V=one(1.0), sigma_init=np.eye(1), p_final=np.eye(1))


def test_primitive_layout():
    p = m.random_instance(g.chain(2), ([1, 1], [1, 1], [1, 1]), 2, seed=0)
    b = lg.PrimitiveBasis(p)
    # x0 (2), then (w_t 2, v_t 2) per step
    assert b.dim == 2 + 2 * 4
    assert (b.x0(), b.w(0), b.v(0), b.w(1), b.v(1)) == (
        slice(0, 2), slice(2, 4), slice(4, 6), slice(6, 8), slice(8, 10))
    assert np.allclose(b.sqrt @ b.sqrt.T, b.cov)


def test_closed_loop_hand_expansion():
    # u_t = -y_{t-1}: x2 = x0 + w0 + u1 + w1 with u1 = -(x0 + v0)
    p = scalar_problem()
    strat = lg.LinearStrategy(np.array([[0.0, 0.0], [-1.0, 0.0]])).check(p)
    loop = lg.propagate(p, strat)
    assert np.array_equal(loop.x[2].coef, [[0, 1, -1, 1, 0]])
    assert np.array_equal(loop.u[1].coef, [[-1, 0, -1, 0, 0]])
    assert np.array_equal(loop.y[1].coef, [[1, 1, 0, 0, 1]])
    # all primitives are unit variance and independent
    cost = 1 + 0 + (2 + 2) + 3  # E x0^2 + E u0^2 + E x1^2 + E u1^2 + E x2^2
    assert lg.strategy_cost(p, strat) == pytest.approx(cost, abs=1e-12)


def test_schur_complement_two_by_two():
    p = m.zeros_problem(g.Dag(1), 1, (2, 1, 1))
    p = p.with_(sigma_init=np.array([[2.0, 0.6], [0.6, 1.0]]))
    b = lg.PrimitiveBasis(p)
    x = b.segment(b.x0())
    G, r = lg.condition(x[1:2], x[0:1])
    assert G[0, 0] == pytest.approx(0.3)
    G, r = lg.condition(x[0:1], x[1:2])
    assert G[0, 0] == pytest.approx(0.6)
    assert lg.cov(r, r)[0, 0] == pytest.approx(2 - 0.36)
    assert lg.projection_residual(x[0:1], [x[1:2]]) == pytest.approx(np.sqrt(1.64 / 2))


def test_condition_on_nothing_returns_target():
    b = lg.PrimitiveBasis(scalar_problem())
    x = b.segment(b.x0())
    G, r = lg.condition(x, b.zeros(0))
    assert G.shape == (1, 0) and r is x
    assert np.array_equal(lg.conditional_mean(x, b.zeros(0)).coef, np.zeros((1, b.dim)))
    assert lg.projection_residual(x, []) == 1.0


def test_zero_strategy_cost_matches_covariance_recursion():
    p = m.random_instance(g.five_node(), 1, 4, seed=2)
    sig, j = p.sigma_init, 0.0
    for t in range(p.horizon):
        j += np.trace(p.Q[t] @ sig)
        sig = p.A[t] @ sig @ p.A[t].T + p.W[t]
    j += np.trace(p.p_final @ sig)
    assert lg.strategy_cost(p, lg.LinearStrategy.zero(p)) == pytest.approx(j, rel=1e-12)


def test_identity_cost_trace_equals_state_dimension():
    # A = 0, Q = 0, P_final = I, W = I: only E|x_T|^2 = nx remains
    p = m.zeros_problem(g.chain(3), 2, (1, 2, 1))
    nx = p.nx
    p = p.with_(R=[np.eye(p.nu)] * 2, W=[np.eye(nx)] * 2, p_final=np.eye(nx),
                V=[np.eye(p.ny)] * 2, sigma_init=np.eye(nx))
    assert lg.strategy_cost(p, lg.LinearStrategy.zero(p)) == pytest.approx(nx)


def test_info_mask_five_node():
    p = m.zeros_problem(g.five_node(), 2, 1)
    mask = lg.info_mask(p)
    assert mask.shape == (10, 10)
    assert not mask[:5, :].any() and not mask[:, 5:].any()
    assert np.array_equal(mask[5:, :5], g.sparsity(g.five_node()))


def test_strategy_violation_messages():
    p = m.zeros_problem(g.five_node(), 2, 1)
    bad = np.zeros((10, 10))
    bad[5, 1] = 1.0  # node 1 reading node 2
    assert lg.LinearStrategy(bad).violations(p)
    with pytest.raises(lg.StrategyError):
        lg.LinearStrategy(np.eye(10)).check(p)
    assert "shape" in lg.LinearStrategy(np.zeros((3, 3))).violations(p)[0]


def test_maps_on_different_bases_do_not_mix():
    a = lg.PrimitiveBasis(scalar_problem())
    b = lg.PrimitiveBasis(scalar_problem())
    with pytest.raises(lg.BasisMismatch):
        a.segment(a.x0()) + b.segment(b.x0())


@given(hs.integers(0, 10**6), hs.integers(1, 4))
def test_residual_orthogonal_to_regressors(seed, T):
    rng = np.random.default_rng(seed)
    dag = g.random_multitree(int(rng.integers(1, 5)), rng)
    p = m.random_instance(dag, 1, T, seed=seed)
    loop = lg.propagate(p, lg.random_strategy(p, rng))
    given_ = loop.y_history(dag.nodes, T)
    _, r = lg.condition(loop.x[T], given_)
    scale = np.abs(lg.cov(loop.x[T], loop.x[T])).max()
    assert np.abs(lg.cov(r, given_)).max() <= 1e-9 * max(scale, 1.0)


@given(hs.integers(0, 10**6))
def test_tower_property(seed):
    rng = np.random.default_rng(seed)
    p = m.random_instance(g.five_node(), 1, 3, seed=seed)
    loop = lg.propagate(p, lg.random_strategy(p, rng))
    small = loop.y_history([1, 2], 3)
    big = loop.y_history([1, 2, 3], 3)
    x = loop.x[3]
    lhs = lg.conditional_mean(lg.conditional_mean(x, big), small)
    rhs = lg.conditional_mean(x, small)
    d = lhs - rhs
    assert np.trace(lg.cov(d, d)) <= 1e-12 * np.trace(lg.cov(x, x))


@given(hs.integers(0, 10**6))
def test_exact_cost_matches_direct_second_moment(seed):
    rng = np.random.default_rng(seed)
    p = m.random_instance(g.four_node(), 1, 2, seed=seed)
    strat = lg.random_strategy(p, rng)
    loop = lg.propagate(p, strat)
    b = loop.basis
    # E[z'Mz] = tr(M coef Sigma coef') via an independent Cholesky factor
    f = np.linalg.cholesky(b.cov)
    total = 0.0
    for t in range(p.horizon):
        coef = np.vstack([loop.x[t].coef, loop.u[t].coef]) @ f
        total += np.sum(coef * (p.cost_matrix(t) @ coef))
    coef = loop.x[p.horizon].coef @ f
    total += np.sum(coef * (p.p_final @ coef))
    assert lg.exact_cost(p, loop) == pytest.approx(total, rel=1e-10)
