"""Command-line interface.

Exit codes: 0 pass, 1 semantic failure (assumption or check failed),
2 input error (unreadable or inconsistent files), 3 oracle size guardrail.
The environment variable ``MTLQG_TOL`` overrides the default tolerance of
``oracle`` and ``verify``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from . import centralized as cz
from . import lingauss as lg
from . import oracle
from . import serialize as ser
from . import simulate as sim
from . import structured as st
from . import verify
from .graph import common_ancestor_mask, common_descendant_mask, generations, relations, sparsity
from .model import MODES, ProblemError, assumptions, check, random_instance

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_GUARDRAIL = 0, 1, 2, 3
TOL_ENV = "MTLQG_TOL"

log = logging.getLogger("multitree_lqg")


class InputError(Exception):
    pass


def _env_tol(default: float | None) -> float | None:
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise InputError(f"{TOL_ENV}={raw!r} is not a number") from None


def _load(path):
    try:
        return check(ser.load_problem(path))
    except ser.FormatError as e:
        raise InputError(str(e)) from None
    except ProblemError as e:
        raise InputError(str(e)) from None


def _report(command: str, args, body: dict) -> dict:
    return {"schema": ser.REPORT_SCHEMA, "tool_version": __version__, "command": command,
            "seed": getattr(args, "seed", None), "input": getattr(args, "input", None), **body}


def _emit(report: dict, path) -> None:
    if path:
        ser.write_json(report, path)
        print(f"report written to {path}")


def _matrix_lines(m: np.ndarray) -> list[str]:
    return ["  " + " ".join(str(int(v)) for v in row) for row in m]


# ---------------------------------------------------------------- commands

def cmd_check(args) -> int:
    p = _load(args.input)
    rep = assumptions(p, args.zero_tol)
    dag = p.dag
    s = sparsity(dag)
    ca, cd = common_ancestor_mask(dag), common_descendant_mask(dag)
    out = [f"problem {p.name or args.input}: n={p.n}, T={p.horizon}, edges={sorted(dag.edges)}"]
    out.append(f"A1 (multitree): {'pass' if rep.a1 else 'FAIL'}")
    if not rep.a1:
        out.append(f"  diamond (i, a, b, j) = {rep.diamond}")
    out.append(f"A2: {'pass' if rep.a2 else 'fail'}")
    for (pair, name, t) in rep.a2_violations[:10]:
        out.append(f"  block {pair} of {name}" + ("" if t is None else f" at t={t}") + " must be zero")
    out.append(f"A2': {'pass' if rep.a2prime else 'fail'}")
    for pair, why in rep.a2prime_violations:
        out.append(f"  pair {pair}: {why}")
    out += ["S:"] + _matrix_lines(s)
    out += ["S S' (common ancestor, noise mask):"] + _matrix_lines(ca)
    out += ["S' S (common descendant, cost mask):"] + _matrix_lines(cd)
    body = {"a1": rep.a1, "diamond": rep.diamond, "a2": rep.a2, "a2prime": rep.a2prime,
            "a2_violations": [[list(pr), nm, t] for pr, nm, t in rep.a2_violations],
            "a2prime_violations": [[list(pr), why] for pr, why in rep.a2prime_violations],
            "S": s, "SSt": ca, "StS": cd}
    if rep.a1:
        gens = generations(dag)
        out.append("generations: " + ", ".join(f"G{k}={set(g)}" for k, g in enumerate(gens)))
        out.append("relations:")
        table = {}
        for j in dag.nodes:
            r = relations(dag, j)
            row = {"anc": r.anc, "des": r.des, "funnel": r.funnel, "siblings": r.siblings,
                   "coparents": r.coparents, "nonrelatives": r.nonrelatives,
                   "partition_a2prime": rep.partitions.get(j)}
            table[j] = row
            out.append(f"  {j}: " + "; ".join(f"{k}={v}" for k, v in row.items()))
        body.update(generations=gens, relations=table)
    print("\n".join(out))
    _emit(_report("check", args, body), args.output)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_oracle(args) -> int:
    p = _load(args.input)
    tol = args.tol if args.tol is not None else _env_tol(1e-8)
    try:
        sol = oracle.solve(p, max_params=args.max_params, force=args.force)
    except oracle.GuardrailError as e:
        print(f"guardrail: {e}", file=sys.stderr)
        return EXIT_GUARDRAIL
    ok = sol.certificate_ok(tol)
    print(f"J* = {sol.cost!r}")
    print(f"parameters = {sol.n_params}, rank = {sol.rank}, condition = {sol.condition_number:.3g}")
    print(f"gradient norm = {sol.gradient_norm:.3g} (certificate {'ok' if ok else 'FAILED'} at tol {tol:g})")
    body = {"cost": sol.cost, "theta": sol.theta, "gradient_norm": sol.gradient_norm,
            "hessian_norm": sol.hessian_norm, "condition_number": sol.condition_number,
            "n_params": sol.n_params, "rank": sol.rank, "tolerance": tol, "certificate_ok": ok,
            "strategy": ser.gains_to_json(oracle.strategy_from_theta(p, sol.theta))}
    if assumptions(p).ok:
        res, _, _ = verify.theorem1_residuals(p, sol)
        body["per_node_residual"] = res
        print("per-node residuals: " + ", ".join(f"{i}: {r:.3g}" for i, r in res.items()))
    _emit(_report("oracle", args, body), args.output)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    problem = _load(args.input) if args.input else None
    tol = args.tol if args.tol is not None else _env_tol(None)
    reports = []
    for suite in args.suite:
        try:
            got = verify.run_suite(suite, args.seed, args.n_instances, problem, tol)
        except verify.PreconditionError as e:
            print(f"{suite}: {e}", file=sys.stderr)
            return EXIT_FAIL
        for r in got:
            print(f"[{suite}] {r.line()}")
            for note in r.advisory:
                print(f"    advisory: {note}")
        reports += got
    failed = [r for r in reports if r.passed is False]
    for r in failed:
        print(f"failed: {r.id} seed={r.seed} instance={r.instance.get('name')}", file=sys.stderr)
    print(f"{len(reports)} experiment(s), {len(failed)} failed")
    _emit(_report("verify", args, {"suites": args.suite, "n_instances": args.n_instances,
                                    "reports": [r.to_dict() for r in reports]}), args.output)
    return EXIT_FAIL if failed else EXIT_OK


def _load_gains(path, p):
    try:
        gains = ser.gains_from_json(ser.read_json(path))
    except ser.FormatError as e:
        raise InputError(str(e)) from None
    if isinstance(gains, lg.LinearStrategy):
        bad = gains.violations(p)
    else:
        bad = gains.violations(p)
        if not gains.L:
            bad.append("structured gains need estimator gains L")
        elif len(gains.L) != p.horizon:
            bad.append(f"L has {len(gains.L)} steps, expected {p.horizon}")
        if not bad:
            want = {(i, j) for i in p.dag.nodes for j in p.dag.anc(i)}
            for t, kt in enumerate(gains.K):
                if set(kt) != want:
                    bad.append(f"K at t={t} must hold exactly the blocks {sorted(want)}")
                    break
            for t, lt in enumerate(gains.L):
                if set(lt) != set(p.dag.nodes):
                    bad.append(f"L at t={t} must hold one gain per node")
                    break
    if bad:
        raise InputError("gains do not match the problem: " + "; ".join(bad[:5]))
    return gains


def cmd_simulate(args) -> int:
    p = _load(args.input)
    gains = _load_gains(args.gains, p) if args.gains else lg.LinearStrategy.zero(p)
    strategy = gains if isinstance(gains, lg.LinearStrategy) else st.assemble(p, gains)
    exact = lg.strategy_cost(p, strategy)
    if args.rollouts < 2:
        raise InputError("--rollouts must be at least 2")
    prim = sim.sample_primitives(p, args.seed, args.rollouts)
    batch = sim.run_batch(p, gains, prim, args.seed)
    mean = float(batch.cost.mean())
    se = float(batch.cost.std(ddof=1) / np.sqrt(args.rollouts))
    z = abs(mean - exact) / se if se > 0 else (0.0 if mean == exact else np.inf)
    agree = z <= 3.0
    print(f"empirical cost = {mean!r} +/- {se:.3g} (N={args.rollouts}, seed={args.seed})")
    print(f"exact cost     = {exact!r}")
    print(f"|difference| = {z:.3g} standard errors: {'agree' if agree else 'DISAGREE'}")
    if args.csv:
        sim.write_csv(p, batch, args.csv)
        print(f"trajectory of rollout 0 written to {args.csv}")
    body = {"mean": mean, "standard_error": se, "exact_cost": exact, "z_score": z,
            "agree": agree, "rollouts": args.rollouts}
    _emit(_report("simulate", args, body), args.output)
    return EXIT_OK


def cmd_solve(args) -> int:
    p = _load(args.input)
    if not args.centralized:
        raise InputError("only --centralized solving is available; use 'oracle' for the decentralized optimum")
    try:
        lqr, kf = cz.solve_lqr(p), cz.solve_kalman(p)
    except cz.SingularStepError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    j = cz.optimal_cost(p, lqr, kf)
    print(f"centralized optimal cost = {j!r}")
    if p.n > 1:
        print("note: all nodes share all information here, so this is a lower bound on the decentralized cost")
    body = {"cost": j, "P": lqr.P, "K": lqr.K, "Sigma": kf.Sigma, "L": kf.L}
    if p.n == 1:
        body["strategy"] = ser.gains_to_json(cz.lqg_strategy(p, lqr, kf))
    _emit(_report("solve", args, body), args.output)
    return EXIT_OK


def cmd_random_gains(args) -> int:
    p = _load(args.input)
    rng = np.random.default_rng(args.seed)
    gains = st.fit_estimator_gains(p, st.random_gains(p, rng, args.scale))
    ser.write_json(ser.gains_to_json(gains), args.output)
    print(f"structured gains with fitted L written to {args.output}")
    return EXIT_OK


def cmd_generate(args) -> int:
    families = {"five_node": "five_node", "four_node": "four_node", "six_node": "six_node"}
    from . import graph
    if args.family in families:
        dag = getattr(graph, families[args.family])()
    elif args.family in ("chain", "broadcast_out", "broadcast_in"):
        dag = getattr(graph, args.family)(args.n)
    else:
        dag = graph.random_multitree(args.n, np.random.default_rng(args.seed))
    dims = args.dim
    if args.family == "six_node":
        # only the center acts and measures, as the reduction expects
        only3 = tuple(args.dim if k == 3 else 0 for k in dag.nodes)
        dims = ((args.dim,) * 6, only3, only3)
    p = random_instance(dag, dims, args.horizon, seed=args.seed, mode=args.mode)
    ser.save_problem(p, args.output)
    print(f"{p.name} on {sorted(dag.edges)} written to {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtlqg", description="Decentralized LQG on multitree DAGs.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="assumption verdicts, masks, generations and relations")
    c.add_argument("--input", required=True)
    c.add_argument("--output")
    c.add_argument("--zero-tol", type=float, default=0.0,
                   help="magnitude below which a block counts as zero (default: exact zero)")
    c.set_defaults(func=cmd_check)

    o = sub.add_parser("oracle", help="globally optimal linear strategy by convex optimization")
    o.add_argument("--input", required=True)
    o.add_argument("--output")
    o.add_argument("--tol", type=float, help=f"certificate tolerance (default 1e-8 or ${TOL_ENV})")
    o.add_argument("--force", action="store_true", help="ignore the size guardrail")
    o.add_argument("--max-params", type=int, default=oracle.MAX_PARAMS)
    o.set_defaults(func=cmd_oracle)

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--input", help="problem to use instead of random instances where applicable")
    v.add_argument("--suite", nargs="+", choices=verify.SUITES, default=["thm1", "thm2", "lemmas", "examples", "negative"])
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--n-instances", type=int, default=50)
    v.add_argument("--tol", type=float, help=f"override every gate (default per experiment or ${TOL_ENV})")
    v.add_argument("--output")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="Monte Carlo rollouts")
    s.add_argument("--input", required=True)
    s.add_argument("--gains", help="gains file (structured or linear); default zero strategy")
    s.add_argument("--rollouts", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--csv", help="write rollout 0 as CSV")
    s.add_argument("--output")
    s.set_defaults(func=cmd_simulate)

    so = sub.add_parser("solve", help="classical Riccati/Kalman solution")
    so.add_argument("--input", required=True)
    so.add_argument("--centralized", action="store_true")
    so.add_argument("--output")
    so.set_defaults(func=cmd_solve)

    g = sub.add_parser("random-gains", help="random structured K with fitted estimator gains")
    g.add_argument("--input", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scale", type=float, default=0.3)
    g.add_argument("--output", required=True)
    g.set_defaults(func=cmd_random_gains)

    ge = sub.add_parser("generate", help="write a random problem file")
    ge.add_argument("--family", default="five_node",
                    choices=["five_node", "four_node", "six_node", "chain", "broadcast_out", "broadcast_in", "random"])
    ge.add_argument("--n", type=int, default=3)
    ge.add_argument("--dim", type=int, default=1)
    ge.add_argument("--horizon", type=int, default=3)
    ge.add_argument("--mode", choices=MODES, default="A2")
    ge.add_argument("--seed", type=int, default=0)
    ge.add_argument("--output", required=True)
    ge.set_defaults(func=cmd_generate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    log.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
