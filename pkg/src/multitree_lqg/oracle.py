"""Globally optimal linear decentralized strategy by brute force.

Inputs are parametrized as causal linear functions of the purified outputs
``eta_t = y_t - C_t xu_t``, where ``xu`` is the part of the state driven by
past inputs. ``eta`` does not depend on the strategy, so the closed loop is
affine in the gains ``Theta`` and the expected cost is a convex quadratic in
them. The quadratic has Kronecker structure: its Hessian on a pair of gain
entries ``(a, b), (a', b')`` is ``Ru[a, a'] * Ceta[b, b']``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import lingauss as lg
from .model import ProblemData

log = logging.getLogger(__name__)

MAX_PARAMS = 5000


class GuardrailError(RuntimeError):
    pass


@dataclass
class PurifiedBasis:
    eta: list  # AffineNoiseMap per t = 0..T-1
    gamma: np.ndarray  # (T*ny, T*nu): stacked y = eta + gamma @ stacked u
    response: np.ndarray  # (nxi, T*nu): stacked (x0,u0,...,x_T) response to stacked u
    free: lg.AffineNoiseMap  # stacked (x0,u0,...,x_T) with zero inputs

    def stacked(self) -> lg.AffineNoiseMap:
        return lg.stack(self.eta)


def _transition(problem: ProblemData, t: int, s: int) -> np.ndarray:
    """State transition from time ``s`` to ``t`` (``t >= s``)."""
    phi = np.eye(problem.nx)
    for r in range(s, t):
        phi = problem.A[r] @ phi
    return phi


def purify(problem: ProblemData, basis: lg.PrimitiveBasis | None = None) -> PurifiedBasis:
    p = problem
    T, nx, nu, ny = p.horizon, p.nx, p.nu, p.ny
    basis = basis or lg.PrimitiveBasis(p)
    xs = [basis.segment(basis.x0())]
    eta = []
    for t in range(T):
        eta.append(p.C[t] @ xs[t] + basis.segment(basis.v(t)))
        xs.append(p.A[t] @ xs[t] + basis.segment(basis.w(t)))

    gamma = np.zeros((T * ny, T * nu))
    for t in range(T):
        for s in range(t):
            blk = p.C[t] @ _transition(p, t, s + 1) @ p.B[s]
            gamma[t * ny:(t + 1) * ny, s * nu:(s + 1) * nu] = blk

    # stacked trajectory layout (x0, u0, x1, u1, ..., x_{T-1}, u_{T-1}, x_T)
    step = nx + nu
    nxi = T * step + nx
    resp = np.zeros((nxi, T * nu))
    for t in range(T):
        resp[t * step + nx:(t + 1) * step, t * nu:(t + 1) * nu] = np.eye(nu)
        for r in range(t + 1, T + 1):
            resp[r * step:r * step + nx, t * nu:(t + 1) * nu] = _transition(p, r, t + 1) @ p.B[t]
    free_parts = []
    for t in range(T):
        free_parts += [xs[t], basis.zeros(nu)]
    free_parts.append(xs[T])
    return PurifiedBasis(eta, gamma, resp, lg.stack(free_parts))


def theta_from_strategy(problem: ProblemData, strategy: lg.LinearStrategy,
                        pb: PurifiedBasis | None = None) -> np.ndarray:
    """``u = F y`` with ``y = eta + Gamma u`` gives ``u = (I - F Gamma)^-1 F eta``."""
    pb = pb or purify(problem)
    f = strategy.gain
    return np.linalg.solve(np.eye(f.shape[0]) - f @ pb.gamma, f)


def strategy_from_theta(problem: ProblemData, theta: np.ndarray,
                        pb: PurifiedBasis | None = None) -> lg.LinearStrategy:
    pb = pb or purify(problem)
    f = np.linalg.solve(np.eye(theta.shape[0]) + theta @ pb.gamma, theta)
    # the exact inverse keeps the information pattern; drop round-off outside it
    return lg.LinearStrategy(f * lg.info_mask(problem))


def trajectory_weight(problem: ProblemData) -> np.ndarray:
    """Block-diagonal cost on the stacked ``(x0, u0, ..., x_T)`` trajectory."""
    import scipy.linalg
    blocks = [problem.cost_matrix(t) for t in range(problem.horizon)] + [problem.p_final]
    return scipy.linalg.block_diag(*blocks)


@dataclass
class OracleSolution:
    theta: np.ndarray  # (T*nu, T*ny) gains on stacked purified outputs
    cost: float
    gradient_norm: float
    hessian_norm: float
    condition_number: float
    n_params: int
    rank: int

    def certificate_ok(self, tol: float = 1e-8) -> bool:
        return self.gradient_norm <= tol * (1.0 + self.hessian_norm)


@dataclass
class CostQuadratic:
    """``J(theta) = j0 + 2 c'theta + theta' H theta`` over admissible gain entries."""

    j0: float
    c: np.ndarray
    H: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    shape: tuple[int, int]

    def to_vector(self, theta: np.ndarray) -> np.ndarray:
        return theta[self.rows, self.cols]

    def to_matrix(self, vec: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = vec
        return out

    def value(self, vec: np.ndarray) -> float:
        return float(self.j0 + 2 * self.c @ vec + vec @ self.H @ vec)

    def gradient(self, vec: np.ndarray) -> np.ndarray:
        return 2 * (self.c + self.H @ vec)


def cost_quadratic(problem: ProblemData, pb: PurifiedBasis | None = None,
                   max_params: int = MAX_PARAMS, force: bool = False) -> CostQuadratic:
    pb = pb or purify(problem)
    mask = lg.info_mask(problem)
    rows, cols = np.nonzero(mask)
    if rows.size > max_params and not force:
        raise GuardrailError(
            f"{rows.size} gain entries exceed the oracle limit of {max_params}; pass force=True"
        )
    M = trajectory_weight(problem)
    sig = pb.free.basis.cov
    eta = pb.stacked().coef
    ru = pb.response.T @ M @ pb.response
    ce = eta @ sig @ eta.T
    cg = pb.response.T @ M @ pb.free.coef @ sig @ eta.T
    j0 = float(np.trace(M @ pb.free.coef @ sig @ pb.free.coef.T))
    H = ru[np.ix_(rows, rows)] * ce[np.ix_(cols, cols)]
    H = (H + H.T) / 2
    return CostQuadratic(j0, cg[rows, cols], H, rows, cols, mask.shape)


def solve(problem: ProblemData, max_params: int = MAX_PARAMS, force: bool = False,
          rtol: float = 1e-12) -> OracleSolution:
    """Minimum-norm minimizer of the expected cost over admissible linear gains."""
    q = cost_quadratic(problem, max_params=max_params, force=force)
    if q.H.size == 0:
        return OracleSolution(np.zeros(q.shape), q.j0, 0.0, 0.0, 1.0, 0, 0)
    vals, vecs = np.linalg.eigh(q.H)
    top = max(vals.max(), 0.0)
    keep = vals > rtol * top if top > 0 else np.zeros_like(vals, dtype=bool)
    coeff = vecs[:, keep].T @ q.c
    vec = -vecs[:, keep] @ (coeff / vals[keep])
    cond = float(top / vals[keep].min()) if keep.any() else np.inf
    if cond > 1e12:
        log.warning("oracle normal matrix is ill-conditioned (cond=%.3g)", cond)
    grad = q.gradient(vec)
    return OracleSolution(
        theta=q.to_matrix(vec),
        cost=q.value(vec),
        gradient_norm=float(np.linalg.norm(grad)),
        hessian_norm=float(top),
        condition_number=cond,
        n_params=int(q.c.size),
        rank=int(keep.sum()),
    )


def theta_loop(problem: ProblemData, theta: np.ndarray, pb: PurifiedBasis | None = None) -> lg.ClosedLoop:
    """Closed loop when ``u = Theta eta``, built directly from the purified basis."""
    pb = pb or purify(problem)
    p = problem
    T, nx, nu = p.horizon, p.nx, p.nu
    u_all = theta @ pb.stacked()
    xi = pb.free + pb.response @ u_all
    step = nx + nu
    x = [xi[r * step:r * step + nx] for r in range(T + 1)]
    u = [u_all[t * nu:(t + 1) * nu] for t in range(T)]
    basis = pb.free.basis
    y = [p.C[t] @ x[t] + basis.segment(basis.v(t)) for t in range(T)]
    return lg.ClosedLoop(p, basis, x, u, y)


@dataclass
class OptimalLoop:
    loop: lg.ClosedLoop
    estimates: dict  # node j -> list over t of E[x^{funnel(j)}_t | info of anc(j)]


def estimates(loop: lg.ClosedLoop) -> dict:
    """Exact conditional means ``z^{funnel(j)}_t`` for every node and time."""
    p = loop.problem
    out = {}
    for j in p.dag.nodes:
        funnel, anc = p.dag.funnel(j), p.dag.anc(j)
        out[j] = [lg.conditional_mean(loop.x_nodes(funnel, t), loop.y_history(anc, t))
                  for t in range(p.horizon + 1)]
    return out


def optimal_closed_loop(problem: ProblemData, solution: OracleSolution) -> OptimalLoop:
    loop = theta_loop(problem, solution.theta)
    return OptimalLoop(loop, estimates(loop))
