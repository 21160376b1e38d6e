"""Monte Carlo rollouts.

Random streams: rollout ``k`` of a run seeded with ``seed`` draws its
primitive vector from ``numpy.random.Generator(PCG64(SeedSequence(seed,
spawn_key=(k,))))``, so a single rollout and the ``k``-th rollout of a batch
see identical noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import lingauss as lg
from . import structured as st
from .model import ProblemData


def rng_for(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))


def sample_primitives(problem: ProblemData, seed: int, n: int = 1,
                      basis: lg.PrimitiveBasis | None = None, start: int = 0) -> np.ndarray:
    """``(dim p, n)`` array of primitive draws for rollouts ``start..start+n-1``."""
    basis = basis or lg.PrimitiveBasis(problem)
    f = basis.sqrt
    out = np.empty((basis.dim, n))
    for k in range(n):
        out[:, k] = f @ rng_for(seed, start + k).standard_normal(basis.dim)
    return out


@dataclass
class Rollout:
    seed: int
    primitives: np.ndarray  # (dim p, N)
    x: np.ndarray  # (T+1, nx, N)
    u: np.ndarray  # (T, nu, N)
    y: np.ndarray  # (T, ny, N)
    cost: np.ndarray  # (N,)


def _realized_cost(problem: ProblemData, x, u) -> np.ndarray:
    total = np.zeros(x.shape[-1])
    for t in range(problem.horizon):
        xu = np.vstack([x[t], u[t]])
        total += np.einsum("in,ij,jn->n", xu, problem.cost_matrix(t), xu)
    total += np.einsum("in,ij,jn->n", x[-1], problem.p_final, x[-1])
    return total


def run_batch(problem: ProblemData, controller, prim: np.ndarray, seed: int = 0) -> Rollout:
    """Forward simulation of the given primitive draws under ``controller``.

    ``controller`` is a :class:`LinearStrategy` or a fitted
    :class:`StructuredGains`; the latter runs every node's estimator online.
    """
    p = problem
    basis = lg.PrimitiveBasis(p)
    T, N = p.horizon, prim.shape[1]
    x = np.zeros((T + 1, p.nx, N))
    u = np.zeros((T, p.nu, N))
    y = np.zeros((T, p.ny, N))
    x[0] = prim[basis.x0()]
    structured = isinstance(controller, st.StructuredGains)
    if structured:
        lay = st.Layout(p)
        z = {j: np.zeros((lay.zdim[j], N)) for j in p.dag.nodes}
    for t in range(T):
        if structured:
            K_t = controller.K[t]
            for i in p.dag.nodes:
                u[t][p.iu([i])] = st.control_step(lay, K_t, i, z)
        else:
            for s in range(t):
                u[t] += controller.block(p, t, s) @ y[s]
        y[t] = p.C[t] @ x[t] + prim[basis.v(t)]
        x[t + 1] = p.A[t] @ x[t] + p.B[t] @ u[t] + prim[basis.w(t)]
        if structured:
            z = {j: st.estimator_step(lay, t, K_t, controller.L[t][j], j, z,
                                      u[t][p.iu(lay.anc[j])], y[t][p.iy(lay.anc[j])])
                 for j in p.dag.nodes}
    return Rollout(seed, prim, x, u, y, _realized_cost(p, x, u))


def rollout(problem: ProblemData, controller, seed: int) -> Rollout:
    return run_batch(problem, controller, sample_primitives(problem, seed, 1), seed)


def empirical_cost(problem: ProblemData, controller, n: int, seed: int) -> tuple[float, float]:
    """Sample mean and standard error of the realized cost over ``n`` rollouts."""
    if n < 2:
        raise ValueError("need at least two rollouts for a standard error")
    r = run_batch(problem, controller, sample_primitives(problem, seed, n), seed)
    return float(r.cost.mean()), float(r.cost.std(ddof=1) / np.sqrt(n))


def write_csv(problem: ProblemData, r: Rollout, path, index: int = 0) -> None:
    """One row per (t, node); vector components are ';'-joined."""
    p = problem
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node", "x", "u", "y"])
        for t in range(p.horizon + 1):
            for i in p.dag.nodes:
                def fmt(arr, rows):
                    return ";".join(repr(float(v)) for v in arr[rows, index])
                xs = fmt(r.x[t], p.ix([i]))
                us = fmt(r.u[t], p.iu([i])) if t < p.horizon else ""
                ys = fmt(r.y[t], p.iy([i])) if t < p.horizon else ""
                w.writerow([t, i, xs, us, ys])
