"""JSON file formats for problems, gains and reports.

Matrices are stored as ``{"rows": r, "cols": c, "data": [...]}`` with
``data`` flattened row-major. Problem matrices are split into node blocks
addressed by 1-based ``(i, j)``; omitted blocks are zero. Per-time data is
time-major: ``steps[t]`` holds every matrix of step ``t``. Python's float
``repr`` is exact, so a write/read cycle reproduces every bit.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .graph import Dag, GraphError
from .lingauss import LinearStrategy
from .model import MATRIX_KINDS, ProblemData, node_blocks, zeros_problem
from .structured import StructuredGains

PROBLEM_SCHEMA = "multitree-lqg/problem/v1"
GAINS_SCHEMA = "multitree-lqg/gains/v1"
REPORT_SCHEMA = "multitree-lqg/report/v1"


class FormatError(ValueError):
    """Malformed or inconsistent input file."""


def matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise FormatError("matrices must be finite")
    return {"rows": int(m.shape[0]), "cols": int(m.shape[1]), "data": [float(v) for v in m.ravel()]}


def matrix_from_json(obj, where: str = "matrix") -> np.ndarray:
    try:
        r, c, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{where}: expected rows/cols/data ({e})") from None
    if len(data) != r * c:
        raise FormatError(f"{where}: {len(data)} entries for a {r}x{c} matrix")
    try:
        return np.array(data, dtype=float).reshape(r, c)
    except (TypeError, ValueError) as e:
        raise FormatError(f"{where}: non-numeric data ({e})") from None


def _blocks_to_json(problem: ProblemData, m: np.ndarray, rk: str, ck: str) -> list:
    rows, cols = node_blocks(problem, rk), node_blocks(problem, ck)
    out = []
    for i in problem.dag.nodes:
        for j in problem.dag.nodes:
            blk = m[np.ix_(rows[i - 1], cols[j - 1])]
            if blk.size and np.any(blk != 0):
                out.append({"i": i, "j": j, **matrix_to_json(blk)})
    return out


def _blocks_from_json(problem: ProblemData, entries, rk: str, ck: str, where: str) -> np.ndarray:
    rows, cols = node_blocks(problem, rk), node_blocks(problem, ck)
    m = np.zeros((sum(len(r) for r in rows), sum(len(c) for c in cols)))
    for e in entries:
        try:
            i, j = int(e["i"]), int(e["j"])
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"{where}: block needs integer 'i' and 'j'") from None
        if not (1 <= i <= problem.n and 1 <= j <= problem.n):
            raise FormatError(f"{where}: block ({i},{j}) outside nodes 1..{problem.n}")
        blk = matrix_from_json(e, f"{where} block ({i},{j})")
        want = (len(rows[i - 1]), len(cols[j - 1]))
        if blk.shape != want:
            raise FormatError(f"{where} block ({i},{j}): shape {blk.shape}, expected {want}")
        m[np.ix_(rows[i - 1], cols[j - 1])] = blk
    return m


def problem_to_json(problem: ProblemData) -> dict:
    p = problem
    steps = []
    for t in range(p.horizon):
        step = {"t": t}
        for name, (rk, ck) in MATRIX_KINDS.items():
            step[name] = _blocks_to_json(p, getattr(p, name)[t], rk, ck)
        steps.append(step)
    return {
        "schema": PROBLEM_SCHEMA,
        "name": p.name,
        "graph": {"n": p.n, "edges": [list(e) for e in sorted(p.dag.edges)]},
        "horizon": p.horizon,
        "dims": {"x": list(p.state_dims), "u": list(p.input_dims), "y": list(p.output_dims)},
        "Sigma_init": _blocks_to_json(p, p.sigma_init, "x", "x"),
        "P_final": _blocks_to_json(p, p.p_final, "x", "x"),
        "steps": steps,
    }


def problem_from_json(obj: dict) -> ProblemData:
    if not isinstance(obj, dict) or obj.get("schema") != PROBLEM_SCHEMA:
        raise FormatError(f"not a problem file (schema must be {PROBLEM_SCHEMA!r})")
    try:
        n = int(obj["graph"]["n"])
        edges = [tuple(int(v) for v in e) for e in obj["graph"].get("edges", [])]
        T = int(obj["horizon"])
        dims = tuple(tuple(int(v) for v in obj["dims"][k]) for k in "xuy")
        steps = obj["steps"]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"missing or malformed field: {e}") from None
    try:
        dag = Dag.from_edges(n, edges)
    except GraphError as e:
        raise FormatError(str(e)) from None
    if any(len(d) != n for d in dims):
        raise FormatError(f"dims must list one entry per node ({n})")
    if len(steps) != T:
        raise FormatError(f"horizon {T} but {len(steps)} steps")
    p = zeros_problem(dag, T, dims)
    mats = {name: [] for name in MATRIX_KINDS}
    for t, step in enumerate(steps):
        if int(step.get("t", t)) != t:
            raise FormatError(f"steps must be time-ordered; entry {t} has t={step.get('t')}")
        for name, (rk, ck) in MATRIX_KINDS.items():
            mats[name].append(_blocks_from_json(p, step.get(name, []), rk, ck, f"{name}[t={t}]"))
    sigma = _blocks_from_json(p, obj.get("Sigma_init", []), "x", "x", "Sigma_init")
    pf = _blocks_from_json(p, obj.get("P_final", []), "x", "x", "P_final")
    return p.with_(**mats, sigma_init=sigma, p_final=pf, name=str(obj.get("name", "")))


def gains_to_json(gains) -> dict:
    if isinstance(gains, LinearStrategy):
        return {"schema": GAINS_SCHEMA, "kind": "linear", "gain": matrix_to_json(gains.gain)}
    K = [[{"i": i, "j": j, **matrix_to_json(k)} for (i, j), k in sorted(kt.items())] for kt in gains.K]
    L = [[{"j": j, **matrix_to_json(m)} for j, m in sorted(lt.items())] for lt in gains.L]
    return {"schema": GAINS_SCHEMA, "kind": "structured", "K": K, "L": L}


def gains_from_json(obj: dict):
    if not isinstance(obj, dict) or obj.get("schema") != GAINS_SCHEMA:
        raise FormatError(f"not a gains file (schema must be {GAINS_SCHEMA!r})")
    kind = obj.get("kind")
    try:
        if kind == "linear":
            return LinearStrategy(matrix_from_json(obj["gain"], "gain"))
        if kind == "structured":
            K = [{(int(e["i"]), int(e["j"])): matrix_from_json(e, f"K[t={t}]") for e in kt}
                 for t, kt in enumerate(obj["K"])]
            L = [{int(e["j"]): matrix_from_json(e, f"L[t={t}]") for e in lt}
                 for t, lt in enumerate(obj.get("L", []))]
            return StructuredGains(K, L)
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed gains: {e}") from None
    raise FormatError(f"unknown gains kind {kind!r}")


def to_jsonable(obj):
    """Recursively convert numpy values and tuples into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist() if obj.ndim != 2 else matrix_to_json(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from None


_SCALAR_LIST = re.compile(r"\[\s*([^\[\]{}\"]*?)\s*\]")


def dumps(obj) -> str:
    """Indented JSON with every list of numbers kept on one line."""
    text = json.dumps(to_jsonable(obj), indent=1)
    return _SCALAR_LIST.sub(lambda m: "[" + ", ".join(v.strip() for v in m.group(1).split(",")) + "]"
                            if m.group(1) else "[]", text)


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def load_problem(path) -> ProblemData:
    return problem_from_json(read_json(path))


def save_problem(problem: ProblemData, path) -> None:
    write_json(problem_to_json(problem), path)
