import numpy as np
import pytest

from multitree_lqg import graph as g
from multitree_lqg import lingauss as lg
from multitree_lqg import model as m
from multitree_lqg import oracle
from multitree_lqg import structured as st
from multitree_lqg import verify


def test_make_instance_is_deterministic():
    a = verify.make_instance("random", 4)
    b = verify.make_instance("random", 4)
    assert m.same_problem(a.problem, b.problem)
    assert a.descriptor["family"] == "random" and a.descriptor["seed"] == 4


@pytest.mark.parametrize("family", verify.FAMILIES)
def test_family_instances_respect_bounds(family):
    inst = verify.make_instance(family, 0)
    p = inst.problem
    assert p.n <= 5 and 2 <= p.horizon <= 5
    assert max(p.state_dims + p.input_dims + p.output_dims) <= 2
    assert m.assumptions(p).a2


def test_report_line_and_dict():
    r = verify.run_centralized(0)
    assert r.line().startswith("PASS centralized: ")
    d = r.to_dict()
    assert d["id"] == "centralized" and d["passed"] is True


def test_lemma3_zero_mean_has_teeth():
    # cost and noise coupled across non-relatives breaks the separation
    p = m.random_instance(g.Dag(2), 1, 3, seed=18, mode="none")
    zero, _ = verify.lemma3_errors(p, np.random.default_rng(0))
    assert zero > 1e-3


def test_lemma3_holds_on_a2_instance():
    p = verify.make_instance("five_node", 1).problem
    zero, indep = verify.lemma3_errors(p, np.random.default_rng(0))
    assert zero <= 1e-10 and indep <= 1e-10


def test_structure_residual_has_teeth(five_node_problem):
    sol = oracle.solve(five_node_problem)
    loop = oracle.theta_loop(five_node_problem, sol.theta)
    good = verify.structure_residual(five_node_problem, loop, 4, [((2, 3, 4, 5), (2,)), ((2, 4), (2, 4))])
    bad = verify.structure_residual(five_node_problem, loop, 4, [((2, 3, 4, 5), (2,))])
    assert good <= 1e-6 and bad > 1e-3


def test_estimator_errors_detect_wrong_gain():
    p = verify.make_instance("chain", 2).problem
    gains = st.fit_estimator_gains(p, st.random_gains(p, np.random.default_rng(0), 0.3))
    assert max(verify.estimator_errors(p, st.run(p, gains))) <= 1e-8
    L = [{j: l + 0.1 for j, l in lt.items()} for lt in gains.L]
    assert max(verify.estimator_errors(p, st.run(p, st.StructuredGains(gains.K, L)))) > 1e-3


def test_certificate_rejects_perturbed_gains():
    p = verify.make_instance("four_node", 0).problem
    q = oracle.cost_quadratic(p)
    sol = oracle.solve(p)
    bumped = q.to_vector(sol.theta) + 0.01
    assert np.linalg.norm(q.gradient(bumped)) > 1e-6


def test_sufficiency_precondition():
    with pytest.raises(verify.PreconditionError):
        verify.run_theorem1(verify.negative_control_instance())


def test_sufficiency_holds_on_a2prime_instances():
    for seed in range(4):
        inst = verify.make_instance("five_node", seed, mode="A2prime")
        r = verify.run_theorem1(inst)
        assert r.passed, r.line()


def test_graph_lemma_checks_detect_bad_embedding(monkeypatch):
    rng = np.random.default_rng(0)
    assert verify.graph_lemma_checks(g.five_node(), rng) == {"partition": [], "edges": [], "embedding": []}
    true = g.embedding
    # swap two rows of the true selector: same shape, wrong placement
    monkeypatch.setattr(verify, "embedding", lambda dag, dims, i, j: true(dag, dims, i, j)[[1, 0, 2, 3]])
    assert not verify.check_embedding(g.five_node(), [1] * 5, 3, 2, rng)


def test_negative_control_fixture_shape():
    inst = verify.negative_control_instance()
    p = inst.problem
    assert p.n == 2 and not p.dag.edges
    rep = m.assumptions(p)
    assert rep.a1 and not rep.a2prime


def test_run_suite_rejects_unknown():
    with pytest.raises(ValueError):
        verify.run_suite("nope")


def test_monte_carlo_report_on_user_problem(four_node_problem):
    r = verify.run_suite("monte_carlo", seed=0, problem=four_node_problem)[0]
    assert r.metrics["path_difference"] <= 1e-10
    assert r.passed


def test_lqg_structure_single_node_example():
    r = verify.example_centralized(2)
    assert r.passed and r.metrics["kalman_gain_error"] <= 1e-8


def test_random_strategy_is_not_structured(five_node_problem):
    loop = lg.propagate(five_node_problem, lg.random_strategy(five_node_problem, np.random.default_rng(0)))
    # a random u^4 reads y^4 directly, which the node-2 estimate cannot explain
    assert verify.structure_residual(five_node_problem, loop, 4, [((2, 3, 4, 5), (2,))]) > 1e-3
