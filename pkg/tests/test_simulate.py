import csv

import numpy as np
import pytest

from multitree_lqg import centralized as ce
from multitree_lqg import graph as g
from multitree_lqg import lingauss as lg
from multitree_lqg import model as m
from multitree_lqg import simulate as sim
from multitree_lqg import structured as st


def test_zero_noise_gives_zero_cost():
    p = m.random_instance(g.five_node(), 1, 3, seed=0)
    z = lambda ms: [np.zeros_like(a) for a in ms]  # noqa: E731
    p = p.with_(W=z(p.W), V=z(p.V), U=z(p.U), sigma_init=np.zeros_like(p.sigma_init))
    r = sim.rollout(p, lg.random_strategy(p, np.random.default_rng(0)), seed=5)
    assert np.array_equal(r.cost, [0.0])


def test_rollouts_are_deterministic_and_indexed():
    p = m.random_instance(g.four_node(), 1, 3, seed=1)
    a = sim.sample_primitives(p, 42, 4)
    b = sim.sample_primitives(p, 42, 4)
    assert np.array_equal(a, b)
    assert np.array_equal(sim.sample_primitives(p, 42, 1, start=2)[:, 0], a[:, 2])
    assert not np.array_equal(sim.sample_primitives(p, 43, 1)[:, 0], a[:, 0])


def test_state_recursion_of_one_rollout():
    p = m.random_instance(g.chain(2), 1, 2, seed=3)
    strat = lg.random_strategy(p, np.random.default_rng(3))
    r = sim.rollout(p, strat, seed=0)
    b = lg.PrimitiveBasis(p)
    prim = r.primitives[:, 0]
    loop = lg.propagate(p, strat)
    for t in range(p.horizon + 1):
        assert np.allclose(r.x[t][:, 0], loop.x[t].sample(prim))
    assert np.allclose(r.x[0][:, 0], prim[b.x0()])


def test_structured_and_assembled_paths_agree():
    p = m.random_instance(g.five_node(), 1, 3, seed=2)
    gains = st.fit_estimator_gains(p, st.random_gains(p, np.random.default_rng(2), 0.3))
    prim = sim.sample_primitives(p, 7, 20)
    a = sim.run_batch(p, gains, prim)
    b = sim.run_batch(p, st.assemble(p, gains), prim)
    assert np.abs(a.x - b.x).max() < 1e-10
    assert np.abs(a.cost - b.cost).max() < 1e-10 * (1 + np.abs(a.cost).max())


def test_sample_covariance_of_correlated_noise():
    p = m.random_instance(g.Dag(2), 1, 1, seed=18, mode="none")
    b = lg.PrimitiveBasis(p)
    prim = sim.sample_primitives(p, 0, 20000)
    emp = np.cov(prim)
    assert np.abs(emp - b.cov).max() < 0.1 * np.abs(b.cov).max()


def test_empirical_cost_near_exact():
    p = m.random_instance(g.Dag(1), 1, 3, seed=0)
    strat = ce.lqg_strategy(p)
    mean, se = sim.empirical_cost(p, strat, 4000, seed=1)
    assert abs(mean - lg.strategy_cost(p, strat)) < 4 * se
    with pytest.raises(ValueError):
        sim.empirical_cost(p, strat, 1, seed=1)


def test_csv_layout(tmp_path):
    p = m.random_instance(g.chain(2), ([1, 2], [1, 1], [1, 1]), 2, seed=0)
    r = sim.rollout(p, lg.LinearStrategy.zero(p), seed=0)
    path = tmp_path / "r.csv"
    sim.write_csv(p, r, path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == (p.horizon + 1) * p.n
    assert rows[0]["t"] == "0" and rows[0]["node"] == "1"
    x2 = [float(v) for v in rows[1]["x"].split(";")]
    assert np.array_equal(x2, r.x[0][1:3, 0])
    assert rows[-1]["u"] == "" and rows[-1]["y"] == ""
