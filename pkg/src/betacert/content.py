"""Discrete Hausdorff content and Choquet integration on a cube tree.

Covers are antichains of tree cubes no finer than a floor scale; a cube of
the cover costs diam^d, where diam is the member diameter fattened by the
sample resolution (see ``CubeTree.diam``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .nets import CubeTree

Array = NDArray[np.float64]


@dataclass
class ContentEstimate:
    value: float
    witness: list[int]
    mode: str = "dyadic-DP"


def leaf_level(tree: CubeTree, floor: float | None = None) -> int:
    """Deepest level whose cubes have side length at least ``floor``."""
    floor = tree.resolution if floor is None else floor
    if floor < tree.resolution * (1 - 1e-12):
        raise ValueError("floor must be at least the sample resolution")
    level = 0
    for k, ids in enumerate(tree.by_level):
        if len(ids) and tree.side[ids[0]] >= floor * (1 - 1e-12):
            level = k
    return level


def content(scope: NDArray[np.int64], d: int, tree: CubeTree, floor: float | None = None) -> ContentEstimate:
    """min over cube antichains covering ``scope`` of sum diam(Q)^d.

    Bottom-up: cost(Q) = min(diam(Q)^d, sum of children costs).
    """
    scope = np.unique(np.asarray(scope, dtype=np.int64))
    if len(scope) == 0:
        return ContentEstimate(0.0, [])
    L = leaf_level(tree, floor)
    cost: dict[int, float] = {}
    pick: dict[int, list[int]] = {}
    for k in range(L, -1, -1):
        for q in np.unique(tree.cube_of[k][scope]):
            q = int(q)
            own = float(tree.diam(q)) ** d
            kids = [c for c in tree.children[q] if c in cost] if k < L else []
            below = sum(cost[c] for c in kids)
            if kids and below < own:
                cost[q] = below
                pick[q] = [w for c in kids for w in pick[c]]
            else:
                cost[q] = own
                pick[q] = [q]
    roots = [int(q) for q in np.unique(tree.cube_of[0][scope])]
    return ContentEstimate(float(sum(cost[q] for q in roots)), sorted(w for q in roots for w in pick[q]))


class ChoquetEngine:
    """Evaluates integrals of many integrands over one fixed scope.

    Each cube carries the step function t -> content of (cube ∩ {f > t}) as
    a list of downward jumps; children lists are merged and clipped at the
    cube's own cost. The integral of a jump of size c at height b against
    t^(p-1) dt is c b^p / p.
    """

    def __init__(self, tree: CubeTree, scope: NDArray[np.int64], d: int, floor: float | None = None) -> None:
        self.scope = np.asarray(scope, dtype=np.int64)
        L = leaf_level(tree, floor)
        self.levels = []
        ids = [np.unique(tree.cube_of[k][self.scope]) for k in range(L + 1)]
        self.leaf_pos = np.searchsorted(ids[L], tree.cube_of[L][self.scope]) if len(self.scope) else np.empty(0, dtype=np.int64)
        self.cost = [np.asarray(tree.diam(q), dtype=float) ** d for q in ids]
        self.parent_pos = [None] + [np.searchsorted(ids[k - 1], tree.parent[ids[k]]) for k in range(1, L + 1)]
        self.n_leaves = len(ids[L])
        self.L = L

    def jumps(self, f: Array) -> tuple[Array, Array]:
        """Jump heights and sizes of t -> content({f > t}) over the scope."""
        f = np.asarray(f, dtype=float)
        if f.shape != self.scope.shape:
            raise ValueError("integrand must have one value per scope point")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("integrand must be finite and non-negative")
        top = np.zeros(self.n_leaves)
        np.maximum.at(top, self.leaf_pos, f)
        node = np.nonzero(top > 0)[0]
        height = top[node]
        size = self.cost[self.L][node]
        for k in range(self.L, 0, -1):
            node = self.parent_pos[k][node]
            node, height, size = _clip(node, height, size, self.cost[k - 1])
        return height, size

    def integral(self, f: Array, p: float = 1.0) -> float:
        if p < 1:
            raise ValueError("p must be at least 1")
        height, size = self.jumps(f)
        return float(np.sum(size * height**p) / p)


def _clip(node: NDArray[np.int64], height: Array, size: Array, cap: Array):
    if len(node) == 0:
        return node, height, size
    order = np.lexsort((-height, node))
    node, height, size = node[order], height[order], size[order]
    start = np.ones(len(node), dtype=bool)
    start[1:] = node[1:] != node[:-1]
    cum = np.cumsum(size)
    group_first = np.maximum.accumulate(np.where(start, np.arange(len(node)), 0))
    before = np.where(group_first > 0, cum[group_first - 1], 0.0)
    within = np.minimum(cum - before, cap[node])
    prev = np.where(start, 0.0, np.concatenate([[0.0], within[:-1]]))
    new = within - prev
    keep = new > 0
    return node[keep], height[keep], new[keep]


def choquet_integral(f: Array, scope: NDArray[np.int64], d: int, tree: CubeTree, p: float = 1.0, floor: float | None = None) -> float:
    """Integral of f^p against the discrete content, summed over sample values."""
    return ChoquetEngine(tree, scope, d, floor).integral(f, p)
