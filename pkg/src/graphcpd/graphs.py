"""Similarity graphs over curves: greedy MST, MDP and NNL, and K-orthogonal unions.

Vertices are 0-based internally; the JSON edge-list form is 1-based.
Every builder breaks distance ties on the pair ``(min index, max index)``
in lexicographic order, so outputs are deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import CapacityError, InvalidParameterError
from .fdata import DistanceMatrix


class TreeKind(str, Enum):
    MST = "mst"
    MDP = "mdp"
    NNL = "nnl"

    @classmethod
    def parse(cls, value) -> "TreeKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidParameterError(
                f"unknown tree kind {value!r}; expected one of mst, mdp, nnl"
            ) from None


@dataclass(frozen=True)
class SimilarityGraph:
    """Simple undirected graph stored as an ``(E, 2)`` array of 0-based pairs.

    Edges are grouped tree by tree: the first ``tree_sizes[0]`` rows form
    tree 1, and so on. Within a pair the smaller index comes first.
    """

    n: int
    edges: np.ndarray
    kind: TreeKind
    k_trees: int = 1
    tree_sizes: tuple = field(default=())

    def __post_init__(self):
        edges = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            edges = np.sort(edges, axis=1)
            if np.any(edges[:, 0] == edges[:, 1]):
                raise InvalidParameterError("self-loops are not allowed")
            if edges.min() < 0 or edges.max() >= self.n:
                raise InvalidParameterError("edge endpoint out of range")
            keys = edges[:, 0] * self.n + edges[:, 1]
            if np.unique(keys).size != keys.size:
                raise InvalidParameterError("duplicate edges are not allowed")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        sizes = tuple(int(s) for s in self.tree_sizes) or (len(edges),)
        if sum(sizes) != len(edges):
            raise InvalidParameterError("tree sizes do not add up to the edge count")
        object.__setattr__(self, "tree_sizes", sizes)
        object.__setattr__(self, "kind", TreeKind.parse(self.kind))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def trees(self) -> list[np.ndarray]:
        bounds = np.cumsum((0,) + self.tree_sizes)
        return [self.edges[a:b] for a, b in zip(bounds[:-1], bounds[1:])]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.edges}

    def total_weight(self, d: DistanceMatrix) -> float:
        return float(d.d[self.edges[:, 0], self.edges[:, 1]].sum())

    def relabeled(self, new_index) -> "SimilarityGraph":
        """Graph with vertex ``v`` renamed to ``new_index[v]``."""
        new_index = np.asarray(new_index)
        return SimilarityGraph(
            self.n, new_index[self.edges], self.kind, self.k_trees, self.tree_sizes
        )

    def to_edge_list(self) -> list[list[int]]:
        return [[int(i) + 1, int(j) + 1] for i, j in self.edges]

    def to_json(self) -> str:
        return json.dumps(self.to_edge_list())

    @classmethod
    def from_edge_list(cls, n: int, pairs, kind=TreeKind.MST) -> "SimilarityGraph":
        edges = np.asarray(pairs, dtype=np.int64).reshape(-1, 2) - 1
        return cls(n, edges, kind)


def _candidate_order(d: DistanceMatrix) -> tuple[np.ndarray, np.ndarray]:
    """All pairs i < j sorted by distance, ties in lexicographic pair order."""
    iu, ju = np.triu_indices(d.n, k=1)
    order = np.argsort(d.d[iu, ju], kind="stable")
    return iu[order], ju[order]


def _find(parent: list[int], x: int) -> int:
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


def _kruskal(n, cand_i, cand_j, used) -> list[tuple[int, int]] | None:
    parent = list(range(n))
    tree = []
    for i, j in zip(cand_i, cand_j):
        if used[i, j]:
            continue
        ri, rj = _find(parent, i), _find(parent, j)
        if ri != rj:
            parent[ri] = rj
            tree.append((i, j))
            if len(tree) == n - 1:
                return tree
    return None


def _greedy_pairing(n, cand_i, cand_j, used, d: np.ndarray) -> list[tuple[int, int]] | None:
    # For odd n the vertex left over is the one paired with the zero-distance
    # pseudo-observation; that pair is not part of the graph.
    matched = [False] * n
    pairs = []
    target = n // 2
    for i, j in zip(cand_i, cand_j):
        if matched[i] or matched[j] or used[i, j]:
            continue
        matched[i] = matched[j] = True
        pairs.append((i, j))
        if len(pairs) == target:
            return pairs
    return _repair_pairing(n, pairs, matched, used, d)


def _repair_pairing(n, pairs, matched, used, d) -> list[tuple[int, int]] | None:
    """Complete a stranded greedy pairing with length-3 augmenting swaps.

    In later orthogonal rounds the greedy pass can leave vertices whose
    mutual edges are all used. For the first stranded pair ``(u, v)`` the
    cheapest swap ``(a, b) -> (u, a), (v, b)`` over current pairs is applied
    (ties: first pair in selection order, then orientation ``a`` before ``b``).
    """
    target = n // 2
    pairs = list(pairs)
    while len(pairs) < target:
        free = [v for v in range(n) if not matched[v]]
        u, v = free[0], free[1]
        best = None
        for idx, (a, b) in enumerate(pairs):
            for x, y in ((a, b), (b, a)):
                if used[u, x] or used[v, y]:
                    continue
                cost = d[u, x] + d[v, y] - d[x, y]
                if best is None or cost < best[0]:
                    best = (cost, idx, x, y)
        if best is None:
            return None
        _, idx, x, y = best
        pairs[idx] = (min(u, x), max(u, x))
        pairs.append((min(v, y), max(v, y)))
        matched[u] = matched[v] = True
    return pairs


def _nearest_links(d: np.ndarray, used, neighbors: int) -> list[tuple[int, int]] | None:
    n = d.shape[0]
    chosen = set()
    idx = np.arange(n)
    for v in range(n):
        allowed = ~used[v]
        allowed[v] = False
        cand = idx[allowed]
        if cand.size < neighbors:
            return None
        # lexsort: primary key distance, secondary key index
        nearest = cand[np.lexsort((cand, d[v, cand]))[:neighbors]]
        for u in nearest:
            chosen.add((min(v, u), max(v, u)))
    return sorted(chosen)


def max_orthogonal_trees(n: int) -> int:
    """Largest K accepted for ``n`` vertices.

    ``floor(n/2)`` is the number of edge-disjoint spanning trees the complete
    graph on ``n`` vertices supports; the same cap is applied to every kind.
    """
    return n // 2


def build_k_graph(
    d: DistanceMatrix, kind=TreeKind.MST, k_trees: int = 1, neighbors: int = 1
) -> SimilarityGraph:
    """Union of ``k_trees`` pairwise edge-disjoint trees built greedily on ``d``.

    Tree ``i`` is built by the same rule as tree 1 but may not reuse any edge
    of trees ``1..i-1``.

    Raises
    ------
    CapacityError
        If ``k_trees`` exceeds :func:`max_orthogonal_trees` or some tree
        cannot be completed from the unused edges.
    """
    kind = TreeKind.parse(kind)
    n = d.n
    if n < 2:
        raise InvalidParameterError("need at least 2 vertices")
    if int(k_trees) != k_trees or k_trees < 1:
        raise InvalidParameterError(f"number of trees must be a positive integer, got {k_trees}")
    k_trees = int(k_trees)
    if kind is TreeKind.NNL and not 1 <= neighbors <= n - 1:
        raise InvalidParameterError(f"neighbors must lie in [1, {n - 1}], got {neighbors}")
    cap = max(1, max_orthogonal_trees(n))
    if k_trees > cap:
        raise CapacityError(
            f"{kind.value.upper()}-{k_trees} is infeasible for n={n}: "
            f"tree {cap + 1} cannot be built (at most {cap} orthogonal trees)",
            tree_index=cap + 1,
            max_feasible=cap,
        )

    used = np.zeros((n, n), dtype=bool)
    cand_i = cand_j = None
    if kind is not TreeKind.NNL:
        cand_i, cand_j = _candidate_order(d)
        cand_i, cand_j = cand_i.tolist(), cand_j.tolist()

    all_edges: list[tuple[int, int]] = []
    sizes = []
    for t in range(1, k_trees + 1):
        if kind is TreeKind.MST:
            tree = _kruskal(n, cand_i, cand_j, used)
        elif kind is TreeKind.MDP:
            tree = _greedy_pairing(n, cand_i, cand_j, used, d.d)
        else:
            tree = _nearest_links(d.d, used, neighbors)
        if tree is None:
            raise CapacityError(
                f"{kind.value.upper()}-{k_trees}: tree {t} cannot be completed "
                f"from the edges left unused by trees 1..{t - 1} (n={n})",
                tree_index=t,
                max_feasible=t - 1,
            )
        for i, j in tree:
            used[i, j] = used[j, i] = True
        all_edges.extend(tree)
        sizes.append(len(tree))
    return SimilarityGraph(n, np.array(all_edges, dtype=np.int64), kind, k_trees, tuple(sizes))


def build_mst(d: DistanceMatrix) -> SimilarityGraph:
    return build_k_graph(d, TreeKind.MST, 1)


def build_mdp(d: DistanceMatrix) -> SimilarityGraph:
    return build_k_graph(d, TreeKind.MDP, 1)


def build_nnl(d: DistanceMatrix, neighbors: int = 1) -> SimilarityGraph:
    return build_k_graph(d, TreeKind.NNL, 1, neighbors=neighbors)


def build_capped_k_graph(d: DistanceMatrix, kind, k_trees: int, neighbors: int = 1):
    """Build the largest feasible K-graph with at most ``k_trees`` trees.

    Returns ``(graph, k_used)``; ``k_used < k_trees`` means K was capped.
    """
    k = min(int(k_trees), max(1, max_orthogonal_trees(d.n)))
    while True:
        try:
            return build_k_graph(d, kind, k, neighbors), k
        except CapacityError as err:
            if k == 1:
                raise
            k = min(k - 1, max(1, err.tree_index - 1))
