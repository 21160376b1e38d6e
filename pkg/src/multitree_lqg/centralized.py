"""Classical finite-horizon LQG and the six-node reduction.

Sign conventions follow the cost ``x'Qx + 2 x'S u + u'Ru`` and the
predictor form ``z+ = A z + B u - L (y - C z)`` with ``z_t = E[x_t | y_{0:t-1}]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lingauss as lg
from .graph import Dag, sparsity, six_node
from .model import ProblemData, check_a2, zeros_problem


class SingularStepError(np.linalg.LinAlgError):
    def __init__(self, what: str, t: int):
        self.t = t
        super().__init__(f"{what} is singular at t={t}")


@dataclass
class RiccatiSolution:
    P: list  # t = 0..T
    K: list  # t = 0..T-1
    H: list  # R + B'PB per step


@dataclass
class KalmanSolution:
    Sigma: list  # prediction error covariances, t = 0..T
    L: list  # t = 0..T-1


def solve_lqr(problem: ProblemData) -> RiccatiSolution:
    """Backward Riccati recursion with the state-input cross term."""
    p = problem
    T = p.horizon
    P = [None] * (T + 1)
    K = [None] * T
    H = [None] * T
    P[T] = p.p_final
    for t in range(T - 1, -1, -1):
        a, b, pn = p.A[t], p.B[t], P[t + 1]
        h = p.R[t] + b.T @ pn @ b
        g = b.T @ pn @ a + p.S[t].T
        if h.size and np.linalg.cond(h) > 1e14:
            raise SingularStepError("R + B'PB", t)
        k = -np.linalg.solve(h, g) if h.size else np.zeros((0, p.nx))
        P[t] = p.Q[t] + a.T @ pn @ a + g.T @ k
        P[t] = (P[t] + P[t].T) / 2
        K[t], H[t] = k, h
    return RiccatiSolution(P, K, H)


def solve_kalman(problem: ProblemData) -> KalmanSolution:
    """Forward one-step predictor including the process/measurement cross covariance."""
    p = problem
    T = p.horizon
    sig = [p.sigma_init]
    L = []
    for t in range(T):
        a, c, s = p.A[t], p.C[t], sig[t]
        innov = c @ s @ c.T + p.V[t]
        cross = a @ s @ c.T + p.U[t].T
        if innov.size and np.linalg.cond(innov) > 1e14:
            raise SingularStepError("innovation covariance", t)
        gain = np.linalg.solve(innov, cross.T).T if innov.size else np.zeros((p.nx, 0))
        L.append(-gain)
        nxt = a @ s @ a.T + p.W[t] - gain @ cross.T
        sig.append((nxt + nxt.T) / 2)
    return KalmanSolution(sig, L)


def optimal_cost(problem: ProblemData, lqr: RiccatiSolution | None = None,
                 kf: KalmanSolution | None = None) -> float:
    """Trace-form optimal cost of the certainty-equivalent controller."""
    lqr = lqr or solve_lqr(problem)
    kf = kf or solve_kalman(problem)
    p = problem
    j = float(np.trace(lqr.P[0] @ p.sigma_init))
    for t in range(p.horizon):
        j += float(np.trace(lqr.P[t + 1] @ p.W[t]))
        k = lqr.K[t]
        j += float(np.trace(k.T @ lqr.H[t] @ k @ kf.Sigma[t]))
    return j


def lqg_strategy(problem: ProblemData, lqr: RiccatiSolution | None = None,
                 kf: KalmanSolution | None = None) -> lg.LinearStrategy:
    """Unroll ``u = K z`` with the Kalman predictor into a history gain."""
    lqr = lqr or solve_lqr(problem)
    kf = kf or solve_kalman(problem)
    p = problem
    T, nx, nu, ny = p.horizon, p.nx, p.nu, p.ny
    gain = np.zeros((T * nu, T * ny))
    z = np.zeros((nx, T * ny))
    for t in range(T):
        u = lqr.K[t] @ z
        gain[t * nu:(t + 1) * nu] = u
        ysel = np.zeros((ny, T * ny))
        ysel[:, t * ny:(t + 1) * ny] = np.eye(ny)
        z = p.A[t] @ z + p.B[t] @ u - kf.L[t] @ (ysel - p.C[t] @ z)
    return lg.LinearStrategy(gain)


# ---------------------------------------------------------------- six-node reduction

class PatternError(ValueError):
    pass


@dataclass
class SixNodeReduction:
    reduced: ProblemData  # three nodes: 1 -> old 1, 2 -> old 3, 3 -> old 5
    constant: float
    keep: tuple[int, ...] = (1, 3, 5)


def _pattern_errors(problem: ProblemData) -> list[str]:
    errs = []
    p = problem
    if p.n != 6 or not np.array_equal(sparsity(p.dag), sparsity(six_node())):
        errs.append("graph does not have the six-node aggregated sparsity pattern")
        return errs
    for k in (1, 2, 4, 5, 6):
        if p.input_dims[k - 1] or p.output_dims[k - 1]:
            errs.append(f"node {k} has inputs or outputs; only node 3 may act and measure")
    ok, viol = check_a2(p)
    if not ok:
        errs.append(f"A2 fails on the six-node pattern: {viol[:3]}")
    return errs


def six_node_reduce(problem: ProblemData) -> SixNodeReduction:
    """Reduce the single-decision-maker six-node problem to states (1, 3, 5).

    Node 5's state is split as ``x5 = x5a + x5b``, where ``x5a`` is driven by
    nodes 1 and 3 and by the part of ``w5`` explained by ``(w1, w3, v3)``;
    the remainder ``x5b`` is independent of everything node 3 can see or
    influence. The cost then splits into a controlled part on
    ``(x1, x3, x5a, u3)`` and a strategy-independent constant.
    """
    errs = _pattern_errors(problem)
    if errs:
        raise PatternError("; ".join(errs))
    p = problem
    T = p.horizon
    i1, i2, i3, i5 = p.ix([1]), p.ix([2]), p.ix([3]), p.ix([5])
    keep = np.concatenate([i1, i3, i5])
    y3 = p.iy([3])
    d1, d3, d5 = (p.state_dims[k - 1] for k in (1, 3, 5))
    dims = ((d1, d3, d5), (0, p.input_dims[2], 0), (0, p.output_dims[2], 0))
    red = zeros_problem(Dag.from_edges(3, [(1, 2), (1, 3), (2, 3)]), T, dims)

    def part_explained(cov_full, target, given):
        """Regression gain of ``target`` rows onto ``given`` rows of a covariance."""
        g = cov_full[np.ix_(target, given)] @ lg.pinv(cov_full[np.ix_(given, given)])
        return g

    A, B, C, Q, R, S, W, V, U = ([] for _ in range(9))
    nx = p.nx
    for t in range(T):
        A.append(p.A[t][np.ix_(keep, keep)])
        B.append(p.B[t][keep][:, p.iu([3])])
        C.append(p.C[t][np.ix_(y3, keep)])
        Q.append(p.Q[t][np.ix_(keep, keep)])
        S.append(p.S[t][keep][:, p.iu([3])])
        R.append(p.R[t][np.ix_(p.iu([3]), p.iu([3]))])
        # noise of (w1, w3, w5a, v3) with w5a = G (w1, w3, v3)
        joint = p.noise_matrix(t)
        given = np.concatenate([i1, i3, nx + y3])
        g = part_explained(joint, i5, given)
        base = joint[np.ix_(given, given)]
        n13 = i1.size + i3.size
        top = np.vstack([np.eye(base.shape[0]), g])  # rows: w1, w3, v3, w5a
        full = top @ base @ top.T
        order = np.r_[0:n13, n13 + y3.size:full.shape[0], n13:n13 + y3.size]
        full = full[np.ix_(order, order)]
        kx = keep.size
        W.append(full[:kx, :kx])
        U.append(full[kx:, :kx])
        V.append(full[kx:, kx:])
    g0 = part_explained(p.sigma_init, i5, np.concatenate([i1, i3]))
    top = np.vstack([np.eye(i1.size + i3.size), g0])
    sig = top @ p.sigma_init[np.ix_(np.concatenate([i1, i3]), np.concatenate([i1, i3]))] @ top.T
    red = red.with_(A=A, B=B, C=C, Q=Q, R=R, S=S, W=W, V=V, U=U,
                    sigma_init=sig, p_final=p.p_final[np.ix_(keep, keep)],
                    name=f"{p.name}:reduced")
    # the constant is whatever the full cost carries beyond the reduced cost;
    # any strategy works since the difference does not depend on it
    full_zero = lg.strategy_cost(p, lg.LinearStrategy.zero(p))
    red_zero = lg.strategy_cost(red, lg.LinearStrategy.zero(red))
    return SixNodeReduction(red, full_zero - red_zero)


def lift_reduced_strategy(problem: ProblemData, reduced: ProblemData,
                          strategy: lg.LinearStrategy) -> lg.LinearStrategy:
    """Embed a strategy of the reduced problem (it uses only ``y3``) in the full one."""
    T, nu, ny = problem.horizon, problem.nu, problem.ny
    gain = np.zeros((T * nu, T * ny))
    ru, ry = reduced.nu, reduced.ny
    u3, y3 = problem.iu([3]), problem.iy([3])
    for t in range(T):
        for s in range(T):
            blk = strategy.gain[t * ru:(t + 1) * ru, s * ry:(s + 1) * ry]
            gain[np.ix_(t * nu + u3, s * ny + y3)] = blk
    return lg.LinearStrategy(gain)
