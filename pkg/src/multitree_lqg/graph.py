"""Directed acyclic graphs with topologically labeled nodes.

Nodes are labeled ``1..n`` and every edge ``(i, j)`` must satisfy ``i < j``.
All relations (ancestors, descendants, siblings, ...) are computed from
reachability, so transitive edges in the input are harmless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs or out-of-range node labels."""


class LemmaViolation(AssertionError):
    """An aggregated graph has an edge its multitree structure should forbid."""


@dataclass(frozen=True)
class Dag:
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"need at least one node, got n={self.n}")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in sorted(edges):
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise GraphError(f"edge ({i},{j}) references a node outside 1..{self.n}")
            if i == j:
                raise GraphError(f"edge ({i},{j}) is a self-loop")
            if i > j:
                raise GraphError(
                    f"edge ({i},{j}) violates the topological labeling (need i < j); "
                    "relabel the graph or it may contain a cycle"
                )
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]] = ()) -> "Dag":
        return cls(n, frozenset(tuple(e) for e in edges))

    @property
    def nodes(self) -> range:
        return range(1, self.n + 1)

    def parents(self, j: int) -> tuple[int, ...]:
        return tuple(sorted(i for i, k in self.edges if k == j))

    @cached_property
    def reach(self) -> np.ndarray:
        """Boolean matrix with ``reach[i, j]`` true iff ``i -> j`` (0-based)."""
        n = self.n
        r = np.eye(n, dtype=bool)
        # labels are topological, so every parent row is final before its children
        for j in range(1, n + 1):
            for i in self.parents(j):
                r[:, j - 1] |= r[:, i - 1]
        r.setflags(write=False)
        return r

    def _check(self, j: int) -> None:
        if not (1 <= j <= self.n):
            raise GraphError(f"node {j} outside 1..{self.n}")

    def connected(self, i: int, j: int) -> bool:
        return bool(self.reach[i - 1, j - 1] or self.reach[j - 1, i - 1])

    def anc(self, j: int) -> tuple[int, ...]:
        self._check(j)
        return tuple(int(i) + 1 for i in np.flatnonzero(self.reach[:, j - 1]))

    def des(self, j: int) -> tuple[int, ...]:
        self._check(j)
        return tuple(int(i) + 1 for i in np.flatnonzero(self.reach[j - 1, :]))

    def sanc(self, j: int) -> tuple[int, ...]:
        return tuple(i for i in self.anc(j) if i != j)

    def sdes(self, j: int) -> tuple[int, ...]:
        return tuple(i for i in self.des(j) if i != j)

    def funnel(self, j: int) -> tuple[int, ...]:
        return tuple(sorted(set(self.anc(j)) | set(self.des(j))))

    def __str__(self):
        es = ", ".join(f"{i}->{j}" for i, j in sorted(self.edges))
        return f"Dag(n={self.n}; {es})"


def chain(n: int) -> Dag:
    return Dag.from_edges(n, [(i, i + 1) for i in range(1, n)])


def broadcast_out(n: int) -> Dag:
    return Dag.from_edges(n, [(1, k) for k in range(2, n + 1)])


def broadcast_in(n: int) -> Dag:
    return Dag.from_edges(n, [(k, n) for k in range(1, n)])


def five_node() -> Dag:
    """Five-node multitree with edges 1->3, 2->3, 2->4, 3->5."""
    return Dag.from_edges(5, [(1, 3), (2, 3), (2, 4), (3, 5)])


def four_node() -> Dag:
    """Four-node multitree with edges 1->2, 2->3, 2->4."""
    return Dag.from_edges(4, [(1, 2), (2, 3), (2, 4)])


def six_node() -> Dag:
    """The universal six-node aggregated pattern (center is node 3)."""
    return Dag.from_edges(
        6, [(1, 3), (1, 6), (2, 5), (3, 5), (2, 6), (2, 4), (4, 6), (1, 5)]
    )


def sparsity(dag: Dag) -> np.ndarray:
    """Binary matrix with ``S[i, j] = 1`` iff ``j -> i`` (0-based indices)."""
    return dag.reach.T.astype(int)


def common_ancestor_mask(dag: Dag) -> np.ndarray:
    s = sparsity(dag)
    return (s @ s.T > 0).astype(int)


def common_descendant_mask(dag: Dag) -> np.ndarray:
    s = sparsity(dag)
    return (s.T @ s > 0).astype(int)


@dataclass(frozen=True)
class NodeRelations:
    node: int
    anc: tuple[int, ...]
    sanc: tuple[int, ...]
    des: tuple[int, ...]
    sdes: tuple[int, ...]
    funnel: tuple[int, ...]
    siblings: tuple[int, ...]
    coparents: tuple[int, ...]
    nonrelatives: tuple[int, ...]

    def lemma1_sets(self) -> list[tuple[int, ...]]:
        return [(self.node,), self.sanc, self.sdes, self.siblings, self.coparents, self.nonrelatives]


def relations(dag: Dag, j: int) -> NodeRelations:
    anc, des = dag.anc(j), dag.des(j)
    funnel = set(anc) | set(des)
    sib = set()
    for a in anc:
        sib |= set(dag.des(a))
    cop = set()
    for d in des:
        cop |= set(dag.anc(d))
    sib -= funnel
    cop -= funnel
    rest = set(dag.nodes) - funnel - sib - cop
    return NodeRelations(
        node=j,
        anc=anc,
        sanc=dag.sanc(j),
        des=des,
        sdes=dag.sdes(j),
        funnel=tuple(sorted(funnel)),
        siblings=tuple(sorted(sib)),
        coparents=tuple(sorted(cop)),
        nonrelatives=tuple(sorted(rest)),
    )


def find_diamond(dag: Dag) -> tuple[int, int, int, int] | None:
    """Return the first diamond ``(i, a, b, j)`` found, or None for a multitree."""
    ca = common_ancestor_mask(dag)
    cd = common_descendant_mask(dag)
    for a, b in combinations(range(dag.n), 2):
        if dag.reach[a, b] or dag.reach[b, a]:
            continue
        if ca[a, b] and cd[a, b]:
            i = int(np.flatnonzero(dag.reach[:, a] & dag.reach[:, b])[0]) + 1
            j = int(np.flatnonzero(dag.reach[a, :] & dag.reach[b, :])[0]) + 1
            return (i, a + 1, b + 1, j)
    return None


def is_multitree(dag: Dag) -> tuple[bool, tuple[int, int, int, int] | None]:
    witness = find_diamond(dag)
    return witness is None, witness


def generations(dag: Dag) -> list[tuple[int, ...]]:
    """Nonempty generations, leaves first.

    A node joins the first generation by which all of its strict descendants
    have already been placed.
    """
    placed: set[int] = set()
    gens = []
    while len(placed) < dag.n:
        g = tuple(
            i for i in dag.nodes if i not in placed and set(dag.sdes(i)) <= placed
        )
        if not g:  # pragma: no cover - impossible for acyclic input
            raise GraphError("generation recursion stalled")
        gens.append(g)
        placed |= set(g)
    return gens


# Edges between aggregated sets that the multitree structure allows.
# Set labels: 1 sanc, 2 coparents, 3 center, 4 nonrelatives, 5 sdes, 6 siblings.
AGGREGATE_EDGES = frozenset({(1, 3), (1, 6), (2, 5), (3, 5), (2, 6), (2, 4), (4, 6), (1, 5)})
MODIFIED_AGGREGATE_EDGES = frozenset(
    {(1, 3), (1, 6), (2, 5), (3, 5), (1, 5), (2, 6), (6, 2), (2, 4), (4, 2), (4, 6), (6, 4)}
)


@dataclass(frozen=True)
class AggregatedGraph:
    center: int
    sets: tuple[tuple[int, ...], ...]
    modified: bool = False

    def label_of(self, node: int) -> int:
        for k, s in enumerate(self.sets, start=1):
            if node in s:
                return k
        raise GraphError(f"node {node} is not in any aggregated set")

    @property
    def allowed_edges(self) -> frozenset:
        return MODIFIED_AGGREGATE_EDGES if self.modified else AGGREGATE_EDGES

    def forbidden_edges(self, dag: Dag) -> list[tuple[int, int]]:
        """Original edges that land on a pair of sets with no aggregated edge."""
        bad = []
        for a, b in sorted(dag.edges):
            sa, sb = self.label_of(a), self.label_of(b)
            if sa != sb and (sa, sb) not in self.allowed_edges:
                bad.append((a, b))
        return bad


def aggregate(
    dag: Dag,
    j: int,
    partition: tuple[Sequence[int], Sequence[int], Sequence[int]] | None = None,
) -> AggregatedGraph:
    """Six-node aggregation of ``dag`` around ``j``.

    With ``partition=(Na, Nb, Nc)`` of the non-relatives of ``j`` the modified
    aggregation is built: ``Nb`` joins the co-parents, ``Nc`` joins the
    siblings and only ``Na`` stays in set 4.
    """
    ok, witness = is_multitree(dag)
    if not ok:
        raise GraphError(f"aggregation needs a multitree; diamond {witness}")
    rel = relations(dag, j)
    if partition is None:
        sets = (rel.sanc, rel.coparents, (j,), rel.nonrelatives, rel.sdes, rel.siblings)
        modified = False
    else:
        na, nb, nc = (tuple(sorted(p)) for p in partition)
        flat = sorted(na + nb + nc)
        if flat != list(rel.nonrelatives):
            raise GraphError(
                f"{partition} does not partition the non-relatives {rel.nonrelatives} of {j}"
            )
        sets = (
            rel.sanc,
            tuple(sorted(rel.coparents + nb)),
            (j,),
            na,
            rel.sdes,
            tuple(sorted(rel.siblings + nc)),
        )
        modified = True
    agg = AggregatedGraph(center=j, sets=sets, modified=modified)
    bad = agg.forbidden_edges(dag)
    if bad:
        raise LemmaViolation(f"aggregation around {j} has forbidden edges {bad}")
    return agg


def block_indices(dims: Sequence[int], nodes: Iterable[int]) -> np.ndarray:
    """Flat 0-based indices of the blocks of ``nodes`` in a vector laid out by node."""
    offsets = np.concatenate([[0], np.cumsum(dims)])
    parts = [np.arange(offsets[k - 1], offsets[k]) for k in nodes]
    if not parts:
        return np.zeros(0, dtype=int)
    return np.concatenate(parts).astype(int)


def embedding(dag: Dag, dims: Sequence[int], i: int, j: int) -> np.ndarray:
    """Selector mapping a stacked ``x^{funnel(j)}`` onto ``funnel(i)`` positions.

    Block rows of ``funnel(i)`` nodes outside ``funnel(j)`` are zero.
    """
    if i not in dag.sdes(j):
        raise GraphError(f"embedding E^{{{i},{j}}} needs {i} to be a strict descendant of {j}")
    fi, fj = dag.funnel(i), dag.funnel(j)
    rows = sum(dims[k - 1] for k in fi)
    cols = sum(dims[k - 1] for k in fj)
    e = np.zeros((rows, cols))
    col_of = {}
    c = 0
    for k in fj:
        col_of[k] = c
        c += dims[k - 1]
    r = 0
    for k in fi:
        d = dims[k - 1]
        if k in col_of:
            e[r : r + d, col_of[k] : col_of[k] + d] = np.eye(d)
        r += d
    return e


def random_multitree(n: int, rng: np.random.Generator, p: float = 0.5) -> Dag:
    """Random multitree on ``n`` nodes; candidate edges creating a diamond are skipped."""
    edges: set[tuple[int, int]] = set()
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    rng.shuffle(pairs)
    for e in pairs:
        if rng.random() >= p:
            continue
        trial = Dag.from_edges(n, edges | {tuple(e)})
        if is_multitree(trial)[0]:
            edges.add(tuple(e))
    return Dag.from_edges(n, edges)
