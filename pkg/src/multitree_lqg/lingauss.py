"""Exact linear-Gaussian calculus on the primitive random vector.

Every closed-loop quantity is a zero-mean Gaussian vector ``M @ p`` where
``p = (x0, w0, v0, ..., w_{T-1}, v_{T-1})`` collects the primitive random
variables. Covariances, conditional means and expected costs then reduce to
dense matrix algebra with ``cov(p)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .model import ProblemData
from .graph import sparsity

PINV_RTOL = 1e-10


class BasisMismatch(ValueError):
    pass


class PrimitiveBasis:
    """Layout and covariance of the primitive vector of one problem."""

    def __init__(self, problem: ProblemData):
        self.problem = problem
        nx, ny, T = problem.nx, problem.ny, problem.horizon
        self.nx, self.ny, self.horizon = nx, ny, T
        self.dim = nx + T * (nx + ny)

    def x0(self) -> slice:
        return slice(0, self.nx)

    def w(self, t: int) -> slice:
        start = self.nx + t * (self.nx + self.ny)
        return slice(start, start + self.nx)

    def v(self, t: int) -> slice:
        start = self.nx + t * (self.nx + self.ny) + self.nx
        return slice(start, start + self.ny)

    @cached_property
    def cov(self) -> np.ndarray:
        p = self.problem
        blocks = [p.sigma_init] + [p.noise_matrix(t) for t in range(self.horizon)]
        return scipy.linalg.block_diag(*blocks)

    @cached_property
    def sqrt(self) -> np.ndarray:
        """Factor ``F`` with ``F @ F.T == cov``; eigenvalues clipped at zero."""
        p = self.problem
        blocks = [p.sigma_init] + [p.noise_matrix(t) for t in range(self.horizon)]
        return scipy.linalg.block_diag(*(psd_sqrt(b) for b in blocks))

    def segment(self, sl: slice) -> "AffineNoiseMap":
        m = np.zeros((sl.stop - sl.start, self.dim))
        m[:, sl] = np.eye(sl.stop - sl.start)
        return AffineNoiseMap(m, self)

    def zeros(self, rows: int) -> "AffineNoiseMap":
        return AffineNoiseMap(np.zeros((rows, self.dim)), self)


def psd_sqrt(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    if m.size == 0:
        return np.zeros(m.shape)
    vals, vecs = np.linalg.eigh((m + m.T) / 2)
    vals = np.where(vals > tol * max(1.0, abs(vals).max()), vals, 0.0)
    return vecs * np.sqrt(vals)


@dataclass(frozen=True)
class AffineNoiseMap:
    """The random vector ``coef @ p`` on a given primitive basis."""

    coef: np.ndarray
    basis: PrimitiveBasis

    # make ``ndarray @ map`` defer to __rmatmul__
    __array_ufunc__ = None

    def __len__(self):
        return self.coef.shape[0]

    def _other(self, other):
        if other.basis is not self.basis:
            raise BasisMismatch("maps live on different primitive bases")
        return other.coef

    def __add__(self, other):
        return AffineNoiseMap(self.coef + self._other(other), self.basis)

    def __sub__(self, other):
        return AffineNoiseMap(self.coef - self._other(other), self.basis)

    def __neg__(self):
        return AffineNoiseMap(-self.coef, self.basis)

    def __rmatmul__(self, mat):
        return AffineNoiseMap(np.asarray(mat) @ self.coef, self.basis)

    def __getitem__(self, rows):
        return AffineNoiseMap(self.coef[rows], self.basis)

    def sample(self, p: np.ndarray) -> np.ndarray:
        return self.coef @ p


def stack(maps) -> AffineNoiseMap:
    maps = list(maps)
    if not maps:
        raise ValueError("stack needs at least one map")
    basis = maps[0].basis
    for m in maps[1:]:
        if m.basis is not basis:
            raise BasisMismatch("maps live on different primitive bases")
    return AffineNoiseMap(np.vstack([m.coef for m in maps]), basis)


def cov(a: AffineNoiseMap, b: AffineNoiseMap) -> np.ndarray:
    if a.basis is not b.basis:
        raise BasisMismatch("maps live on different primitive bases")
    return a.coef @ a.basis.cov @ b.coef.T


def pinv(m: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    if m.size == 0:
        return np.zeros(m.T.shape)
    return np.linalg.pinv(m, rcond=rtol, hermitian=np.allclose(m, m.T))


def condition(target: AffineNoiseMap, given: AffineNoiseMap):
    """Conditional mean ``E[target | given] = G @ given``.

    Returns ``(G, residual)`` where ``residual = target - G @ given`` is
    uncorrelated with ``given``.
    """
    if len(given) == 0:
        return np.zeros((len(target), 0)), target
    g = cov(target, given) @ pinv(cov(given, given))
    return g, target - g @ given


def conditional_mean(target: AffineNoiseMap, given: AffineNoiseMap) -> AffineNoiseMap:
    g, _ = condition(target, given)
    if len(given) == 0:
        return target.basis.zeros(len(target))
    return g @ given


def projection_residual(target: AffineNoiseMap, regressors, eps: float = 1e-300) -> float:
    """Relative RMS of what remains of ``target`` after projecting onto ``regressors``."""
    regressors = [r for r in regressors if len(r)]
    var = float(np.trace(cov(target, target))) if len(target) else 0.0
    if regressors:
        _, e = condition(target, stack(regressors))
    else:
        e = target
    err = float(np.trace(cov(e, e))) if len(e) else 0.0
    return float(np.sqrt(max(err, 0.0) / max(var, eps)))


# ---------------------------------------------------------------- strategies

class StrategyError(ValueError):
    pass


@dataclass(frozen=True)
class LinearStrategy:
    """Causal linear map from the stacked output history to the stacked inputs.

    ``gain`` has shape ``(T*nu, T*ny)``; block ``(t, s)`` maps ``y_s`` to
    ``u_t`` and must vanish for ``s >= t`` and on node pairs ``(i, j)`` with
    ``j`` not an ancestor of ``i``.
    """

    gain: np.ndarray

    def block(self, problem: ProblemData, t: int, s: int) -> np.ndarray:
        nu, ny = problem.nu, problem.ny
        return self.gain[t * nu:(t + 1) * nu, s * ny:(s + 1) * ny]

    def violations(self, problem: ProblemData) -> list[str]:
        T, nu, ny = problem.horizon, problem.nu, problem.ny
        if self.gain.shape != (T * nu, T * ny):
            return [f"gain shape {self.gain.shape} != {(T * nu, T * ny)}"]
        mask = info_mask(problem)
        bad = np.abs(self.gain) * (1 - mask)
        out = []
        if np.any(bad > 0):
            r, c = np.argwhere(bad > 0)[0]
            out.append(
                f"gain entry (u row {r}, y col {c}) violates causality or the information structure"
            )
        return out

    def check(self, problem: ProblemData) -> "LinearStrategy":
        v = self.violations(problem)
        if v:
            raise StrategyError("; ".join(v))
        return self

    @classmethod
    def zero(cls, problem: ProblemData) -> "LinearStrategy":
        T = problem.horizon
        return cls(np.zeros((T * problem.nu, T * problem.ny)))


def info_mask(problem: ProblemData) -> np.ndarray:
    """0/1 mask of admissible entries of a stacked ``(T*nu, T*ny)`` history gain."""
    T = problem.horizon
    s = sparsity(problem.dag)
    rows = np.repeat(np.arange(problem.n), problem.input_dims)
    cols = np.repeat(np.arange(problem.n), problem.output_dims)
    node = s[np.ix_(rows, cols)]
    time = np.tril(np.ones((T, T)), k=-1)
    return np.kron(time, node)


def random_strategy(problem: ProblemData, rng: np.random.Generator, scale: float = 0.3) -> LinearStrategy:
    g = rng.normal(scale=scale, size=info_mask(problem).shape) * info_mask(problem)
    return LinearStrategy(g)


# ---------------------------------------------------------------- closed loop

@dataclass
class ClosedLoop:
    """Closed-loop maps: ``x[0..T]``, ``u[0..T-1]``, ``y[0..T-1]``."""

    problem: ProblemData
    basis: PrimitiveBasis
    x: list
    u: list
    y: list

    def y_history(self, nodes, t: int) -> AffineNoiseMap:
        """Stacked ``y^{nodes}_{0:t-1}``."""
        rows = self.problem.iy(nodes)
        if t == 0 or rows.size == 0:
            return self.basis.zeros(0)
        return stack([self.y[s][rows] for s in range(t)])

    def x_nodes(self, nodes, t: int) -> AffineNoiseMap:
        return self.x[t][self.problem.ix(nodes)]

    def u_nodes(self, nodes, t: int) -> AffineNoiseMap:
        return self.u[t][self.problem.iu(nodes)]


def propagate(problem: ProblemData, strategy: LinearStrategy, basis: PrimitiveBasis | None = None) -> ClosedLoop:
    """Closed-loop maps under a linear output-history strategy.

    Timing within a step: ``x_t``, then ``u_t`` (from ``y_{0:t-1}``), then ``y_t``.
    """
    T, nu, ny = problem.horizon, problem.nu, problem.ny
    if strategy.gain.shape != (T * nu, T * ny):
        raise StrategyError(f"gain shape {strategy.gain.shape} != {(T * nu, T * ny)}")
    basis = basis or PrimitiveBasis(problem)
    x = [basis.segment(basis.x0())]
    u, y = [], []
    for t in range(T):
        ut = basis.zeros(nu)
        for s in range(t):
            ut = ut + strategy.block(problem, t, s) @ y[s]
        u.append(ut)
        y.append(problem.C[t] @ x[t] + basis.segment(basis.v(t)))
        x.append(problem.A[t] @ x[t] + problem.B[t] @ ut + basis.segment(basis.w(t)))
    return ClosedLoop(problem, basis, x, u, y)


def exact_cost(problem: ProblemData, loop: ClosedLoop) -> float:
    """Expected quadratic cost of the closed loop, computed exactly."""
    total = 0.0
    for t in range(problem.horizon):
        xu = stack([loop.x[t], loop.u[t]])
        total += float(np.trace(problem.cost_matrix(t) @ cov(xu, xu)))
    xt = loop.x[problem.horizon]
    total += float(np.trace(problem.p_final @ cov(xt, xt)))
    return total


def strategy_cost(problem: ProblemData, strategy: LinearStrategy) -> float:
    return exact_cost(problem, propagate(problem, strategy))
