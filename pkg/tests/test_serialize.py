import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from multitree_lqg import graph as g
from multitree_lqg import model as m
from multitree_lqg import serialize as ser
from multitree_lqg import structured as st
from multitree_lqg import lingauss as lg


@given(hs.integers(1, 5), hs.integers(0, 10**6), hs.integers(1, 3))
def test_problem_round_trip_is_bitwise(n, seed, T):
    rng = np.random.default_rng(seed)
    dag = g.random_multitree(n, rng)
    dims = tuple([int(d) for d in rng.integers(1, 3, size=n)] for _ in range(3))
    p = m.random_instance(dag, dims, T, seed=seed, mode="A2prime")
    back = ser.problem_from_json(json.loads(ser.dumps(ser.problem_to_json(p))))
    assert m.same_problem(p, back) and back.name == p.name


@pytest.mark.parametrize("name", ["five_node.json", "four_node.json", "negative_control.json", "diamond.json"])
def test_packaged_fixtures_round_trip(data_file, name, tmp_path):
    p = ser.load_problem(data_file(name))
    ser.save_problem(p, tmp_path / name)
    assert m.same_problem(p, ser.load_problem(tmp_path / name))


def test_omitted_blocks_are_zero():
    obj = {"schema": ser.PROBLEM_SCHEMA, "graph": {"n": 2, "edges": [[1, 2]]}, "horizon": 1,
           "dims": {"x": [1, 1], "u": [1, 1], "y": [1, 1]},
           "steps": [{"t": 0, "R": [{"i": 1, "j": 1, "rows": 1, "cols": 1, "data": [2.0]}]}]}
    p = ser.problem_from_json(obj)
    assert np.array_equal(p.R[0], [[2.0, 0.0], [0.0, 0.0]])
    assert not p.A[0].any() and not p.sigma_init.any()


@pytest.mark.parametrize("mutate, msg", [
    (lambda o: o.update(schema="other"), "schema"),
    (lambda o: o.update(horizon=4), "steps"),
    (lambda o: o["graph"].update(edges=[[2, 1]]), "topological"),
    (lambda o: o["dims"].update(x=[1]), "dims"),
    (lambda o: o["steps"][0]["A"].append({"i": 9, "j": 1, "rows": 1, "cols": 1, "data": [1]}), "outside"),
    (lambda o: o["steps"][0]["A"].append({"i": 1, "j": 1, "rows": 2, "cols": 1, "data": [1, 1]}), "shape"),
    (lambda o: o["steps"][0]["A"].append({"i": 1, "j": 1, "rows": 1, "cols": 1, "data": [1, 2]}), "entries"),
    (lambda o: o["steps"][0]["A"].append({"i": 1, "j": 1, "rows": 1, "cols": 1, "data": ["a"]}), "non-numeric"),
    (lambda o: o.pop("graph"), "graph"),
])
def test_malformed_problem_files(four_node_problem, mutate, msg):
    obj = ser.problem_to_json(four_node_problem)
    mutate(obj)
    with pytest.raises(ser.FormatError, match=msg):
        ser.problem_from_json(obj)


def test_invalid_json_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ser.FormatError, match="invalid JSON"):
        ser.read_json(path)
    with pytest.raises(ser.FormatError, match="cannot read"):
        ser.read_json(tmp_path / "missing.json")


def test_gains_round_trip(five_node_problem):
    p = five_node_problem
    gains = st.fit_estimator_gains(p, st.random_gains(p, np.random.default_rng(0)))
    back = ser.gains_from_json(json.loads(ser.dumps(ser.gains_to_json(gains))))
    assert np.array_equal(st.assemble(p, back).gain, st.assemble(p, gains).gain)
    strat = lg.random_strategy(p, np.random.default_rng(1))
    back = ser.gains_from_json(json.loads(ser.dumps(ser.gains_to_json(strat))))
    assert np.array_equal(back.gain, strat.gain)
    with pytest.raises(ser.FormatError, match="kind"):
        ser.gains_from_json({"schema": ser.GAINS_SCHEMA, "kind": "other"})


def test_dumps_keeps_numbers_on_one_line_and_strings_intact():
    text = ser.dumps({"a": [1.0, 2.5], "s": ["x, y", "z"], "m": np.eye(2)})
    assert '"a": [1.0, 2.5]' in text
    assert json.loads(text)["s"] == ["x, y", "z"]
    assert json.loads(text)["m"] == {"rows": 2, "cols": 2, "data": [1.0, 0.0, 0.0, 1.0]}


def test_non_finite_rejected():
    with pytest.raises(ser.FormatError):
        ser.matrix_to_json(np.array([[np.nan]]))
