"""Problem data, structural validation and the A1/A2/A2' checkers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .graph import (
    Dag,
    GraphError,
    block_indices,
    common_ancestor_mask,
    common_descendant_mask,
    is_multitree,
    relations,
    sparsity,
)

PSD_TOL = 1e-10


class ProblemError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  {v}" for v in self.violations)
        super().__init__(f"{len(self.violations)} problem violation(s):\n{lines}")


@dataclass(frozen=True)
class Violation:
    matrix: str
    message: str
    block: tuple[int, int] | None = None
    t: int | None = None

    def __str__(self):
        where = []
        if self.block is not None:
            where.append(f"block ({self.block[0]},{self.block[1]})")
        if self.t is not None:
            where.append(f"t={self.t}")
        loc = f" [{', '.join(where)}]" if where else ""
        return f"{self.matrix}{loc}: {self.message}"


@dataclass(frozen=True)
class ProblemData:
    """Finite-horizon decentralized LQG problem on a DAG.

    Per-time matrices are lists of length ``horizon`` holding the full
    stacked matrices, with node blocks in ascending node order. ``S`` is the
    state-input cross weight, ``U`` the covariance of ``v`` with ``w`` (shape
    ``ny x nx``).
    """

    dag: Dag
    horizon: int
    state_dims: tuple[int, ...]
    input_dims: tuple[int, ...]
    output_dims: tuple[int, ...]
    A: list
    B: list
    C: list
    Q: list
    R: list
    S: list
    W: list
    V: list
    U: list
    sigma_init: np.ndarray
    p_final: np.ndarray
    name: str = field(default="", compare=False)

    @property
    def n(self) -> int:
        return self.dag.n

    @property
    def nx(self) -> int:
        return int(sum(self.state_dims))

    @property
    def nu(self) -> int:
        return int(sum(self.input_dims))

    @property
    def ny(self) -> int:
        return int(sum(self.output_dims))

    def ix(self, nodes) -> np.ndarray:
        return block_indices(self.state_dims, nodes)

    def iu(self, nodes) -> np.ndarray:
        return block_indices(self.input_dims, nodes)

    def iy(self, nodes) -> np.ndarray:
        return block_indices(self.output_dims, nodes)

    def cost_matrix(self, t: int) -> np.ndarray:
        """Stacked ``[[Q, S], [S', R]]`` at time ``t``."""
        return np.block([[self.Q[t], self.S[t]], [self.S[t].T, self.R[t]]])

    def noise_matrix(self, t: int) -> np.ndarray:
        """Joint covariance of ``(w_t, v_t)``."""
        return np.block([[self.W[t], self.U[t].T], [self.U[t], self.V[t]]])

    def with_(self, **changes) -> "ProblemData":
        return replace(self, **changes)


def zeros_problem(dag: Dag, horizon: int, dims) -> ProblemData:
    """All-zero problem with the given dims (int, or triple of per-node lists)."""
    xd, ud, yd = normalize_dims(dag, dims)
    nx, nu, ny = sum(xd), sum(ud), sum(yd)
    T = horizon

    def z(r, c):
        return [np.zeros((r, c)) for _ in range(T)]

    return ProblemData(
        dag=dag, horizon=T, state_dims=xd, input_dims=ud, output_dims=yd,
        A=z(nx, nx), B=z(nx, nu), C=z(ny, nx),
        Q=z(nx, nx), R=z(nu, nu), S=z(nx, nu),
        W=z(nx, nx), V=z(ny, ny), U=z(ny, nx),
        sigma_init=np.zeros((nx, nx)), p_final=np.zeros((nx, nx)),
    )


def normalize_dims(dag: Dag, dims) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    if isinstance(dims, (int, np.integer)):
        d = (int(dims),) * dag.n
        return d, d, d
    xd, ud, yd = dims
    out = []
    for seq in (xd, ud, yd):
        if isinstance(seq, (int, np.integer)):
            seq = [int(seq)] * dag.n
        seq = tuple(int(v) for v in seq)
        if len(seq) != dag.n:
            raise ValueError(f"expected {dag.n} per-node dims, got {len(seq)}")
        out.append(seq)
    return tuple(out)


def node_blocks(problem: ProblemData, kind: str):
    """Per-node index arrays for ``kind`` in {'x', 'u', 'y'}."""
    dims = {"x": problem.state_dims, "u": problem.input_dims, "y": problem.output_dims}[kind]
    return [block_indices(dims, [k]) for k in problem.dag.nodes]


# (name, row kind, column kind) for every per-time matrix
MATRIX_KINDS = {
    "A": ("x", "x"), "B": ("x", "u"), "C": ("y", "x"),
    "Q": ("x", "x"), "R": ("u", "u"), "S": ("x", "u"),
    "W": ("x", "x"), "V": ("y", "y"), "U": ("y", "x"),
}
COST_MATRICES = ("Q", "R", "S")
NOISE_MATRICES = ("W", "V", "U")


def _min_eig(m: np.ndarray) -> float:
    if m.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh((m + m.T) / 2).min())


def _scale(m: np.ndarray) -> float:
    return max(1.0, float(np.abs(m).max())) if m.size else 1.0


def _is_symmetric(m: np.ndarray) -> bool:
    return np.allclose(m, m.T, rtol=0, atol=PSD_TOL * _scale(m))


def validate(problem: ProblemData) -> list[Violation]:
    """Every structural violation of ``problem``; empty list means valid."""
    out: list[Violation] = []
    p = problem
    T = p.horizon
    sizes = {"x": p.nx, "u": p.nu, "y": p.ny}
    if T < 1:
        out.append(Violation("horizon", f"need T >= 1, got {T}"))
    for name, (rk, ck) in MATRIX_KINDS.items():
        mats = getattr(p, name)
        if len(mats) != T:
            out.append(Violation(name, f"expected {T} time steps, got {len(mats)}"))
            continue
        for t, m in enumerate(mats):
            if np.shape(m) != (sizes[rk], sizes[ck]):
                out.append(Violation(name, f"shape {np.shape(m)} != {(sizes[rk], sizes[ck])}", t=t))
    for name in ("sigma_init", "p_final"):
        if np.shape(getattr(p, name)) != (p.nx, p.nx):
            out.append(Violation(name, f"shape {np.shape(getattr(p, name))} != {(p.nx, p.nx)}"))
    if out:
        return out

    s = sparsity(p.dag)
    blocks = {k: node_blocks(p, k) for k in "xuy"}
    for name in ("A", "B", "C"):
        rk, ck = MATRIX_KINDS[name]
        for t, m in enumerate(getattr(p, name)):
            for i in p.dag.nodes:
                for j in p.dag.nodes:
                    if s[i - 1, j - 1]:
                        continue
                    blk = m[np.ix_(blocks[rk][i - 1], blocks[ck][j - 1])]
                    if blk.size and np.any(blk != 0):
                        out.append(Violation(
                            name, f"nonzero block although node {j} does not reach node {i}",
                            block=(i, j), t=t))

    for t in range(T):
        r = p.R[t]
        if not _is_symmetric(r):
            out.append(Violation("R", "not symmetric", t=t))
        elif r.size and _min_eig(r) <= PSD_TOL * _scale(r):
            out.append(Violation("R", "not positive definite", t=t))
        for label, m in (("Q", p.Q[t]), ("W", p.W[t]), ("V", p.V[t])):
            if not _is_symmetric(m):
                out.append(Violation(label, "not symmetric", t=t))
        cost = p.cost_matrix(t)
        if _min_eig(cost) < -PSD_TOL * _scale(cost):
            out.append(Violation("cost", "stacked [[Q,S],[S',R]] not positive semidefinite", t=t))
        noise = p.noise_matrix(t)
        if _min_eig(noise) < -PSD_TOL * _scale(noise):
            out.append(Violation("noise", "stacked [[W,U'],[U,V]] not positive semidefinite", t=t))
    for label, m in (("sigma_init", p.sigma_init), ("p_final", p.p_final)):
        if not _is_symmetric(m):
            out.append(Violation(label, "not symmetric"))
        elif _min_eig(m) < -PSD_TOL * _scale(m):
            out.append(Violation(label, "not positive semidefinite"))
    return out


def check(problem: ProblemData) -> ProblemData:
    """Raise ProblemError listing all violations, else return ``problem``."""
    v = validate(problem)
    if v:
        raise ProblemError(v)
    return problem


def _cost_set(p: ProblemData):
    """(name, t, matrix, row kind, col kind) for every cost matrix."""
    for t in range(p.horizon):
        for name in COST_MATRICES:
            yield name, t, getattr(p, name)[t], *MATRIX_KINDS[name]
    yield "P_final", None, p.p_final, "x", "x"


def _noise_set(p: ProblemData):
    for t in range(p.horizon):
        for name in NOISE_MATRICES:
            yield name, t, getattr(p, name)[t], *MATRIX_KINDS[name]
    yield "Sigma_init", None, p.sigma_init, "x", "x"


def _pair_nonzero(p: ProblemData, mats, i: int, j: int, zero_tol: float):
    """Entries (name, t) of ``mats`` whose (i,j) or (j,i) block exceeds ``zero_tol``."""
    blocks = {k: node_blocks(p, k) for k in "xuy"}
    hits = []
    for name, t, m, rk, ck in mats:
        for a, b in ((i, j), (j, i)):
            blk = m[np.ix_(blocks[rk][a - 1], blocks[ck][b - 1])]
            if blk.size and np.abs(blk).max() > zero_tol:
                hits.append((name, t))
                break
    return hits


def decoupled_cost(p: ProblemData, i: int, j: int, zero_tol: float = 0.0) -> bool:
    return not _pair_nonzero(p, _cost_set(p), i, j, zero_tol)


def uncorrelated_noise(p: ProblemData, i: int, j: int, zero_tol: float = 0.0) -> bool:
    return not _pair_nonzero(p, _noise_set(p), i, j, zero_tol)


@dataclass(frozen=True)
class PairInfo:
    pair: tuple[int, int]
    common_ancestor: bool
    common_descendant: bool
    decoupled_cost: bool
    uncorrelated_noise: bool


@dataclass
class AssumptionReport:
    a1: bool
    diamond: tuple[int, int, int, int] | None
    a2: bool
    a2_violations: list = field(default_factory=list)
    a2prime: bool = True
    a2prime_violations: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    partitions: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.a1 and (self.a2 or self.a2prime)


def check_a2(problem: ProblemData, zero_tol: float = 0.0) -> tuple[bool, list]:
    """A2 as masks: cost blocks zero off the S'S pattern, noise blocks off SS'.

    Violations are ``((i, j), matrix name, t)`` with ``t=None`` for
    ``P_final``/``Sigma_init``.
    """
    p = problem
    cd = common_descendant_mask(p.dag)
    ca = common_ancestor_mask(p.dag)
    blocks = {k: node_blocks(p, k) for k in "xuy"}
    viol = []
    for mats, mask in ((_cost_set(p), cd), (_noise_set(p), ca)):
        for name, t, m, rk, ck in mats:
            for i in p.dag.nodes:
                for j in p.dag.nodes:
                    if mask[i - 1, j - 1]:
                        continue
                    blk = m[np.ix_(blocks[rk][i - 1], blocks[ck][j - 1])]
                    if blk.size and np.abs(blk).max() > zero_tol:
                        viol.append(((i, j), name, t))
    return not viol, viol


def pair_table(problem: ProblemData, zero_tol: float = 0.0) -> list[PairInfo]:
    p = problem
    ca = common_ancestor_mask(p.dag)
    cd = common_descendant_mask(p.dag)
    out = []
    for i in p.dag.nodes:
        for j in range(i + 1, p.n + 1):
            out.append(PairInfo(
                (i, j), bool(ca[i - 1, j - 1]), bool(cd[i - 1, j - 1]),
                decoupled_cost(p, i, j, zero_tol), uncorrelated_noise(p, i, j, zero_tol),
            ))
    return out


def check_a2prime(problem: ProblemData, zero_tol: float = 0.0):
    """Relaxed assumption, pair by pair.

    Returns ``(holds, violations, pairs, partitions)``; ``partitions[j]`` is
    the ``(Na, Nb, Nc)`` split of the non-relatives of ``j``.
    """
    pairs = pair_table(problem, zero_tol)
    viol = []
    for pi in pairs:
        if pi.common_ancestor and pi.common_descendant:
            continue
        if pi.common_descendant and not pi.uncorrelated_noise:
            viol.append((pi.pair, "uncorrelated noise required"))
        elif pi.common_ancestor and not pi.common_descendant and not pi.decoupled_cost:
            viol.append((pi.pair, "decoupled cost required"))
        elif not (pi.common_ancestor or pi.common_descendant) and not (
            pi.decoupled_cost or pi.uncorrelated_noise
        ):
            viol.append((pi.pair, "decoupled cost or uncorrelated noise required"))
    by_pair = {pi.pair: pi for pi in pairs}
    partitions = {}
    for j in problem.dag.nodes:
        na, nb, nc = [], [], []
        for k in relations(problem.dag, j).nonrelatives:
            pi = by_pair[(min(j, k), max(j, k))]
            if pi.decoupled_cost and pi.uncorrelated_noise:
                na.append(k)
            elif pi.uncorrelated_noise:
                nb.append(k)
            elif pi.decoupled_cost:
                nc.append(k)
        partitions[j] = (tuple(na), tuple(nb), tuple(nc))
    return not viol, viol, pairs, partitions


def assumptions(problem: ProblemData, zero_tol: float = 0.0) -> AssumptionReport:
    a1, diamond = is_multitree(problem.dag)
    a2, a2v = check_a2(problem, zero_tol)
    a2p, a2pv, pairs, parts = check_a2prime(problem, zero_tol)
    return AssumptionReport(a1, diamond, a2, a2v, a2p, a2pv, pairs, parts)


# ---------------------------------------------------------------- generator

def _random_psd(rng: np.random.Generator, m: int) -> np.ndarray:
    g = rng.uniform(-1.0, 1.0, size=(m, m))
    return g @ g.T / max(m, 1)


def _pairwise_psd(rng, blocks, allowed: np.ndarray, size: int, scale: float = 1.0) -> np.ndarray:
    """Sum of random PSD terms each supported on the blocks of one allowed node pair.

    The result is PSD by construction and zero on every disallowed pair.
    """
    n = len(blocks)
    out = np.zeros((size, size))
    for i in range(n):
        for j in range(i, n):
            if not allowed[i, j]:
                continue
            idx = np.concatenate([blocks[i], blocks[j]]) if i != j else blocks[i]
            if idx.size == 0:
                continue
            w = scale if i == j else scale * rng.uniform(0.2, 1.0)
            out[np.ix_(idx, idx)] += w * _random_psd(rng, idx.size)
    return (out + out.T) / 2


def _eps_eye(m: np.ndarray) -> np.ndarray:
    eps = 1e-3 * max(np.linalg.norm(m, 2) if m.size else 0.0, 1.0)
    return m + eps * np.eye(m.shape[0])


MODES = ("A2", "A2prime", "none")


def random_instance(
    dag: Dag,
    dims=1,
    horizon: int = 3,
    seed: int = 0,
    mode: str = "A2",
    coupling: dict | None = None,
) -> ProblemData:
    """Pseudorandom problem satisfying A1 and the requested assumption.

    ``mode`` is ``"A2"``, ``"A2prime"`` or ``"none"`` (every pair coupled in
    both cost and noise, which generally violates A2'). In A2' mode each pair without a
    common ancestor or descendant independently keeps either coupled cost or
    correlated noise; ``coupling`` may fix that choice per pair as
    ``{(i, j): "cost" | "noise" | "none"}``.

    Strict definiteness: the stacked cost, the stacked noise covariance and
    the initial covariance are all made positive definite, so the optimal
    closed loop is unique.
    """
    ok, witness = is_multitree(dag)
    if not ok:
        raise GraphError(f"random_instance needs a multitree; diamond {witness}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    xd, ud, yd = normalize_dims(dag, dims)
    p = zeros_problem(dag, horizon, (xd, ud, yd))
    n = dag.n
    s = sparsity(dag)
    ca = common_ancestor_mask(dag).astype(bool)
    cd = common_descendant_mask(dag).astype(bool)
    cost_ok, noise_ok = cd.copy(), ca.copy()
    if mode == "none":
        cost_ok[:] = True
        noise_ok[:] = True
    elif mode == "A2prime":
        coupling = dict(coupling or {})
        for i in range(n):
            for j in range(i + 1, n):
                if ca[i, j] or cd[i, j]:
                    continue
                choice = coupling.get((i + 1, j + 1))
                if choice is None:
                    choice = ("cost", "noise", "none")[rng.integers(3)]
                if choice == "cost":
                    cost_ok[i, j] = cost_ok[j, i] = True
                elif choice == "noise":
                    noise_ok[i, j] = noise_ok[j, i] = True

    bx = node_blocks(p, "x")
    bu = node_blocks(p, "u")
    by = node_blocks(p, "y")
    nx, nu, ny = p.nx, p.nu, p.ny
    # joint (x, u) and (w, v) layouts, one block per node
    xu_blocks = [np.concatenate([bx[k], nx + bu[k]]) for k in range(n)]
    wv_blocks = [np.concatenate([bx[k], nx + by[k]]) for k in range(n)]

    def masked(rows, cols, scale):
        m = rng.uniform(-1.0, 1.0, size=(sum(rows), sum(cols))) * scale
        ro = np.concatenate([[0], np.cumsum(rows)])
        co = np.concatenate([[0], np.cumsum(cols)])
        for i in range(n):
            for j in range(n):
                if not s[i, j]:
                    m[ro[i]:ro[i + 1], co[j]:co[j + 1]] = 0.0
        return m

    A, B, C, Q, R, S, W, V, U = ([] for _ in range(9))
    for _ in range(horizon):
        A.append(masked(xd, xd, 0.8 / np.sqrt(max(xd) * n)) + 0.5 * np.eye(nx))
        B.append(masked(xd, ud, 1.0))
        C.append(masked(yd, xd, 1.0))
        cost = _eps_eye(_pairwise_psd(rng, xu_blocks, cost_ok, nx + nu))
        Q.append(cost[:nx, :nx].copy())
        S.append(cost[:nx, nx:].copy())
        R.append(cost[nx:, nx:].copy())
        noise = _eps_eye(_pairwise_psd(rng, wv_blocks, noise_ok, nx + ny, scale=0.5))
        W.append(noise[:nx, :nx].copy())
        U.append(noise[nx:, :nx].copy())
        V.append(noise[nx:, nx:].copy())
    sigma = _eps_eye(_pairwise_psd(rng, bx, noise_ok, nx))
    pf = _eps_eye(_pairwise_psd(rng, bx, cost_ok, nx))
    out = p.with_(A=A, B=B, C=C, Q=Q, R=R, S=S, W=W, V=V, U=U, sigma_init=sigma, p_final=pf,
                  name=f"random(seed={seed},mode={mode})")
    check(out)
    return out


def _expand(mask: np.ndarray, rdims, cdims) -> np.ndarray:
    rows = np.repeat(np.arange(len(rdims)), rdims)
    cols = np.repeat(np.arange(len(cdims)), cdims)
    return mask[np.ix_(rows, cols)].astype(float)


def block_mask(mask: np.ndarray, rdims, cdims) -> np.ndarray:
    return _expand(mask, rdims, cdims)


def strip_cross_blocks(problem: ProblemData, which: str) -> ProblemData:
    """Zero every cross-node block of the cost (``"cost"``) or noise (``"noise"``) data.

    Node-diagonal blocks are principal submatrices, so definiteness survives.
    """
    if which not in ("cost", "noise"):
        raise ValueError(f"which must be 'cost' or 'noise', got {which!r}")
    p = problem
    blocks = {k: node_blocks(p, k) for k in "xuy"}

    def keep_diag(m, rk, ck):
        out = np.zeros_like(m)
        for i in range(p.n):
            ix = np.ix_(blocks[rk][i], blocks[ck][i])
            out[ix] = m[ix]
        return out

    names = COST_MATRICES if which == "cost" else NOISE_MATRICES
    changes = {name: [keep_diag(m, *MATRIX_KINDS[name]) for m in getattr(p, name)] for name in names}
    final = "p_final" if which == "cost" else "sigma_init"
    changes[final] = keep_diag(getattr(p, final), "x", "x")
    return p.with_(**changes, name=f"{p.name}:{which}-decoupled")


def restrict(problem: ProblemData, nodes: Sequence[int]) -> ProblemData:
    """Sub-problem on ``nodes`` (relabelled 1..k in ascending order) with the induced edges."""
    p = problem
    nodes = sorted(nodes)
    label = {k: r for r, k in enumerate(nodes, start=1)}
    dag = Dag.from_edges(len(nodes), [(label[a], label[b]) for a, b in p.dag.edges
                                      if a in label and b in label])
    idx = {"x": p.ix(nodes), "u": p.iu(nodes), "y": p.iy(nodes)}

    def sub(m, rk, ck):
        return m[np.ix_(idx[rk], idx[ck])]

    changes = {name: [sub(m, rk, ck) for m in getattr(p, name)] for name, (rk, ck) in MATRIX_KINDS.items()}
    return ProblemData(
        dag=dag, horizon=p.horizon,
        state_dims=tuple(p.state_dims[k - 1] for k in nodes),
        input_dims=tuple(p.input_dims[k - 1] for k in nodes),
        output_dims=tuple(p.output_dims[k - 1] for k in nodes),
        sigma_init=sub(p.sigma_init, "x", "x"), p_final=sub(p.p_final, "x", "x"),
        name=f"{p.name}:nodes{tuple(nodes)}", **changes,
    )


def same_problem(a: ProblemData, b: ProblemData) -> bool:
    """Bitwise equality of graph, dims and every matrix (names are ignored)."""
    if (a.dag, a.horizon, a.state_dims, a.input_dims, a.output_dims) != (
        b.dag, b.horizon, b.state_dims, b.input_dims, b.output_dims
    ):
        return False
    pairs = [(a.sigma_init, b.sigma_init), (a.p_final, b.p_final)]
    for name in MATRIX_KINDS:
        pairs += list(zip(getattr(a, name), getattr(b, name)))
    return all(np.array_equal(x, y) for x, y in pairs)
