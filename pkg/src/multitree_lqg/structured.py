"""Structured controller and estimator built from per-node sufficient statistics.

Node ``j`` keeps ``z^{funnel(j)}``, its estimate of the states of every node
path-connected to it, stacked in ascending node order. Inputs are
``u^i = sum_{j in anc(i)} K^{ij} z^{funnel(j)}`` and each estimate follows a
Kalman-like recursion driven by ``u^{anc(j)}``, the reconstructed inputs
``uhat^{ij}`` of its strict descendants, and the innovation of ``y^{anc(j)}``.

The step functions act on arrays whose first axis is the vector dimension,
so the same code updates sampled vectors, batches of samples, and
coefficient matrices of affine noise maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import lingauss as lg
from .graph import embedding, sparsity
from .model import ProblemData


class Layout:
    """Per-node index bookkeeping for one problem."""

    def __init__(self, problem: ProblemData):
        self.problem = problem
        dag = problem.dag
        self.anc = {j: dag.anc(j) for j in dag.nodes}
        self.sdes = {j: dag.sdes(j) for j in dag.nodes}
        self.funnel = {j: dag.funnel(j) for j in dag.nodes}
        self.zdim = {j: int(sum(problem.state_dims[k - 1] for k in self.funnel[j])) for j in dag.nodes}
        self.adim = {j: int(sum(problem.state_dims[k - 1] for k in self.anc[j])) for j in dag.nodes}

    @cached_property
    def E(self) -> dict:
        dag, dims = self.problem.dag, self.problem.state_dims
        return {(b, j): embedding(dag, dims, b, j) for j in dag.nodes for b in self.sdes[j]}

    def submatrices(self, t: int, j: int):
        """``(A^{FF}, B^{FF}, C^{AA})`` for node ``j`` at time ``t``."""
        p = self.problem
        F, anc = self.funnel[j], self.anc[j]
        ix = p.ix(F)
        return (p.A[t][np.ix_(ix, ix)],
                p.B[t][np.ix_(ix, p.iu(F))],
                p.C[t][np.ix_(p.iy(anc), p.ix(anc))])


@dataclass
class StructuredGains:
    """``K[t][(i, j)]`` for ``j in anc(i)`` and ``L[t][j]``; ``L`` may be empty before fitting."""

    K: list
    L: list = field(default_factory=list)

    def stacked_K(self, problem: ProblemData, t: int) -> np.ndarray:
        """The time-``t`` gain acting on all estimates stacked by node."""
        lay = Layout(problem)
        cols = np.concatenate([[0], np.cumsum([lay.zdim[j] for j in problem.dag.nodes])])
        out = np.zeros((problem.nu, int(cols[-1])))
        for (i, j), k in self.K[t].items():
            out[np.ix_(problem.iu([i]), np.arange(cols[j - 1], cols[j]))] = k
        return out

    def violations(self, problem: ProblemData) -> list[str]:
        lay = Layout(problem)
        s = sparsity(problem.dag)
        out = []
        if len(self.K) != problem.horizon:
            out.append(f"K has {len(self.K)} steps, expected {problem.horizon}")
        for t, kt in enumerate(self.K):
            for (i, j), k in kt.items():
                if not s[i - 1, j - 1] and np.any(k != 0):
                    out.append(f"K^{{{i}{j}}}_{t} nonzero but {j} is not an ancestor of {i}")
                elif k.shape != (problem.input_dims[i - 1], lay.zdim[j]):
                    out.append(f"K^{{{i}{j}}}_{t} has shape {k.shape}")
        if self.L:
            for t, lt in enumerate(self.L):
                for j, l in lt.items():
                    want = (lay.zdim[j], int(problem.iy(lay.anc[j]).size))
                    if l.shape != want:
                        out.append(f"L^{j}_{t} has shape {l.shape}, expected {want}")
        return out


def random_gains(problem: ProblemData, rng: np.random.Generator, scale: float = 0.5) -> StructuredGains:
    lay = Layout(problem)
    K = []
    for _ in range(problem.horizon):
        kt = {}
        for i in problem.dag.nodes:
            for j in lay.anc[i]:
                kt[(i, j)] = rng.normal(scale=scale, size=(problem.input_dims[i - 1], lay.zdim[j]))
        K.append(kt)
    return StructuredGains(K)


def zero_gains(problem: ProblemData) -> StructuredGains:
    g = random_gains(problem, np.random.default_rng(0))
    return StructuredGains([{k: np.zeros_like(v) for k, v in kt.items()} for kt in g.K])


# ---------------------------------------------------------------- step functions

def control_step(lay: Layout, K_t: dict, i: int, z: dict) -> np.ndarray:
    """``u^i = sum_{j in anc(i)} K^{ij} z^{funnel(j)}``."""
    out = None
    for j in lay.anc[i]:
        term = K_t[(i, j)] @ z[j]
        out = term if out is None else out + term
    return out


def uhat(lay: Layout, K_t: dict, j: int, i: int, z: dict) -> np.ndarray:
    """Node ``j``'s reconstruction of the input of its strict descendant ``i``."""
    if i not in lay.sdes[j]:
        raise ValueError(f"uhat^{{{i}{j}}} needs {i} to be a strict descendant of {j}")
    out = None
    for a in lay.anc[j]:
        term = K_t[(i, a)] @ z[a]
        out = term if out is None else out + term
    for b in lay.anc[i]:
        if b in lay.sdes[j]:
            out = out + K_t[(i, b)] @ (lay.E[(b, j)] @ z[j])
    return out


def estimator_step(lay: Layout, t: int, K_t: dict, L_tj: np.ndarray, j: int,
                   z: dict, u_anc: np.ndarray, y_anc: np.ndarray) -> np.ndarray:
    """One step of node ``j``'s estimator; ``z`` must hold estimates of all of ``anc(j)``."""
    a_ff, b_ff, c_aa = lay.submatrices(t, j)
    drive = _inputs(lay, K_t, j, z, u_anc)
    innov = y_anc - c_aa @ z[j][:lay.adim[j]]
    return a_ff @ z[j] + b_ff @ drive - L_tj @ innov


def _inputs(lay, K_t, j, z, u_anc):
    parts = [u_anc] + [uhat(lay, K_t, j, i, z) for i in lay.sdes[j]]
    return np.concatenate(parts, axis=0)


def _prediction(lay, t, K_t, j, z, u_anc):
    a_ff, b_ff, _ = lay.submatrices(t, j)
    return a_ff @ z[j] + b_ff @ _inputs(lay, K_t, j, z, u_anc)


# ---------------------------------------------------------------- symbolic runs

@dataclass
class StructuredRun:
    loop: lg.ClosedLoop
    z: dict  # j -> list over t = 0..T of AffineNoiseMap
    uhat: dict  # (i, j) -> list over t = 0..T-1 of AffineNoiseMap
    L: list
    innovation_rank_deficient: list = field(default_factory=list)


def run(problem: ProblemData, gains: StructuredGains, fit: bool = False,
        basis: lg.PrimitiveBasis | None = None) -> StructuredRun:
    """Run the recursions on affine noise maps.

    With ``fit=True`` each ``L^j_t`` is chosen as the regression gain of the
    one-step prediction error onto the innovation, which is what makes the
    recursion reproduce the exact conditional mean.
    """
    p = problem
    lay = Layout(p)
    basis = basis or lg.PrimitiveBasis(p)
    nodes = list(p.dag.nodes)
    npr = basis.dim
    z = {j: [np.zeros((lay.zdim[j], npr))] for j in nodes}
    uh = {(i, j): [] for j in nodes for i in lay.sdes[j]}
    x = [basis.segment(basis.x0()).coef]
    us, ys = [], []
    L = []
    deficient = []
    sig = basis.cov
    for t in range(p.horizon):
        zt = {j: z[j][t] for j in nodes}
        K_t = gains.K[t]
        u = np.zeros((p.nu, npr))
        for i in nodes:
            ui = control_step(lay, K_t, i, zt)
            if ui is not None:
                u[p.iu([i])] = ui
        for (i, j) in uh:
            uh[(i, j)].append(uhat(lay, K_t, j, i, zt))
        y = p.C[t] @ x[t] + basis.segment(basis.v(t)).coef
        xn = p.A[t] @ x[t] + p.B[t] @ u + basis.segment(basis.w(t)).coef
        L_t = {}
        for j in nodes:
            u_anc = u[p.iu(lay.anc[j])]
            y_anc = y[p.iy(lay.anc[j])]
            if fit:
                _, _, c_aa = lay.submatrices(t, j)
                pred = _prediction(lay, t, K_t, j, zt, u_anc)
                err = xn[p.ix(lay.funnel[j])] - pred
                innov = y_anc - c_aa @ zt[j][:lay.adim[j]]
                ci = innov @ sig @ innov.T
                if ci.size and np.linalg.matrix_rank(ci) < ci.shape[0]:
                    deficient.append((t, j))
                L_t[j] = -(err @ sig @ innov.T) @ lg.pinv(ci)
            else:
                L_t[j] = gains.L[t][j]
            z[j].append(estimator_step(lay, t, K_t, L_t[j], j, zt, u_anc, y_anc))
        L.append(L_t)
        us.append(u)
        ys.append(y)
        x.append(xn)
    wrap = lambda m: lg.AffineNoiseMap(m, basis)  # noqa: E731
    loop = lg.ClosedLoop(p, basis, [wrap(m) for m in x], [wrap(m) for m in us], [wrap(m) for m in ys])
    return StructuredRun(
        loop,
        {j: [wrap(m) for m in z[j]] for j in nodes},
        {k: [wrap(m) for m in v] for k, v in uh.items()},
        L,
        deficient,
    )


def fit_estimator_gains(problem: ProblemData, gains: StructuredGains) -> StructuredGains:
    """Return ``gains`` completed with fitted estimator gains ``L``."""
    r = run(problem, gains, fit=True)
    return StructuredGains(gains.K, r.L)


def assemble(problem: ProblemData, gains: StructuredGains) -> lg.LinearStrategy:
    """Unroll the recursions into an equivalent causal output-history gain."""
    p = problem
    lay = Layout(p)
    T, ny = p.horizon, p.ny
    cols = T * ny
    nodes = list(p.dag.nodes)
    z = {j: np.zeros((lay.zdim[j], cols)) for j in nodes}
    gain = np.zeros((T * p.nu, cols))
    for t in range(T):
        K_t = gains.K[t]
        u = np.zeros((p.nu, cols))
        for i in nodes:
            ui = control_step(lay, K_t, i, z)
            if ui is not None:
                u[p.iu([i])] = ui
        gain[t * p.nu:(t + 1) * p.nu] = u
        y = np.zeros((ny, cols))
        y[:, t * ny:(t + 1) * ny] = np.eye(ny)
        z = {j: estimator_step(lay, t, K_t, gains.L[t][j], j, z,
                               u[p.iu(lay.anc[j])], y[p.iy(lay.anc[j])])
             for j in nodes}
    return lg.LinearStrategy(gain)
