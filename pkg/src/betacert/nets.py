"""Nested maximal nets and the cube hierarchies built on top of them.

Two hierarchies share one interface: Christ-type cubes assembled from
nested nets, and the standard dyadic grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .geometry import Ball, PointCloud, point_diameter

Array = NDArray[np.float64]

DEFAULT_RHO = 0.5
FAITHFUL_RHO = 1e-4
FAITHFUL_C0 = 1.0 / 500.0
# relative slack so that points exactly at the separation count as separated
_SEP_SLACK = 1e-9


@dataclass
class NetHierarchy:
    points: Array
    rho: float
    scale: float
    levels: list[NDArray[np.int64]]

    @property
    def k_max(self) -> int:
        return len(self.levels) - 1

    def separation(self, k: int) -> float:
        return self.scale * self.rho**k


def greedy_net(points: Array, sep: float, seed: NDArray[np.int64] | None = None) -> NDArray[np.int64]:
    """Maximal ``sep``-separated subset, seeded indices first, then index order."""
    points = np.asarray(points, dtype=float)
    tree = cKDTree(points)
    blocked = np.zeros(len(points), dtype=bool)
    chosen: list[int] = []
    radius = sep * (1 - _SEP_SLACK)

    def take(i: int) -> None:
        chosen.append(i)
        blocked[tree.query_ball_point(points[i], radius)] = True

    if seed is not None:
        for i in seed:
            take(int(i))
    for i in range(len(points)):
        if not blocked[i]:
            take(i)
    return np.asarray(chosen, dtype=np.int64)


def default_depth(rho: float, scale: float, resolution: float) -> int:
    """Deepest level whose cubes still have side length 5 rho^k scale >= resolution."""
    k = 0
    while 5 * scale * rho ** (k + 1) >= resolution:
        k += 1
    return k


def build_nets(cloud: PointCloud | Array, rho: float = DEFAULT_RHO, k_max: int | None = None, scale: float = 1.0) -> NetHierarchy:
    """Nested maximal nets with separations scale * rho^k, k = 0..k_max."""
    points = cloud.points if isinstance(cloud, PointCloud) else np.atleast_2d(np.asarray(cloud, dtype=float))
    if len(points) == 0:
        raise ValueError("cannot build nets on an empty cloud")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if k_max is None:
        if not isinstance(cloud, PointCloud):
            raise ValueError("k_max is required for raw point arrays")
        k_max = default_depth(rho, scale, cloud.resolution)
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    levels: list[NDArray[np.int64]] = []
    prev = None
    for k in range(k_max + 1):
        prev = greedy_net(points, scale * rho**k, prev)
        levels.append(prev)
    return NetHierarchy(points, rho, scale, levels)


@dataclass
class CubeTree:
    """Cube hierarchy over a point sample.

    Node ids run level by level, coarse to fine. ``cube_of[k][i]`` is the id
    of the level-k cube holding point i.
    """

    points: Array
    mode: str
    rho: float
    scale: float
    resolution: float
    level: NDArray[np.int64]
    center: Array
    center_index: NDArray[np.int64]
    side: Array
    ball_radius: Array
    parent: NDArray[np.int64]
    children: list[list[int]]
    members: list[NDArray[np.int64]]
    by_level: list[NDArray[np.int64]]
    cube_of: NDArray[np.int64]
    member_diam: Array = field(default=None)
    c0: float | None = None

    def __post_init__(self) -> None:
        if self.member_diam is None:
            self.member_diam = np.array([point_diameter(self.points[m]) for m in self.members])

    @property
    def n_nodes(self) -> int:
        return len(self.level)

    @property
    def depth(self) -> int:
        return len(self.by_level) - 1

    def ell(self, q: int) -> float:
        return float(self.side[q])

    def diam(self, q: int | NDArray[np.int64]) -> float | Array:
        """Member diameter fattened by the resolution, capped by the ball."""
        return np.minimum(self.member_diam[q] + self.resolution, 2 * self.ball_radius[q])

    def ball(self, q: int, lam: float = 1.0) -> Ball:
        return Ball(self.center[q], lam * float(self.ball_radius[q]))

    def is_leaf(self, q: int) -> bool:
        return len(self.children[q]) == 0

    def siblings(self, q: int) -> list[int]:
        p = self.parent[q]
        if p < 0:
            return [int(r) for r in self.by_level[0] if r != q]
        return [c for c in self.children[p] if c != q]

    def ancestors(self, q: int) -> list[int]:
        out = []
        p = int(self.parent[q])
        while p >= 0:
            out.append(p)
            p = int(self.parent[p])
        return out

    def descendants(self, q: int) -> list[int]:
        out, stack = [], [q]
        while stack:
            r = stack.pop()
            out.append(r)
            stack.extend(reversed(self.children[r]))
        return sorted(out)

    def contains_cube(self, outer: int, inner: int) -> bool:
        """Tree-order containment (a cube contains itself)."""
        return outer == inner or outer in self.ancestors(inner)

    def to_dict(self) -> dict:
        nodes = []
        for q in range(self.n_nodes):
            nodes.append(
                {
                    "id": q,
                    "center_index": int(self.center_index[q]),
                    "level": int(self.level[q]),
                    "parent": int(self.parent[q]),
                    "children": [int(c) for c in self.children[q]],
                    "member_count": int(len(self.members[q])),
                }
            )
        return {"mode": self.mode, "rho": self.rho, "scale": self.scale, "resolution": self.resolution, "c0": self.c0, "nodes": nodes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _nearest_with_ties(ref: Array, ref_ids: NDArray[np.int64], queries: Array) -> NDArray[np.int64]:
    """Position in ``ref`` of the nearest point, ties going to the smallest id."""
    k = min(4, len(ref))
    dist, idx = cKDTree(ref).query(queries, k=k)
    if k == 1:
        return np.asarray(idx, dtype=np.int64)
    dist, idx = np.atleast_2d(dist), np.atleast_2d(idx)
    out = idx[:, 0].copy()
    tie = dist[:, 1] == dist[:, 0]
    for row in np.nonzero(tie)[0]:
        cand = idx[row][dist[row] == dist[row, 0]]
        out[row] = cand[np.argmin(ref_ids[cand])]
    return out


def _assemble(points, mode, rho, scale, resolution, keys_per_level, centers_per_level, center_idx_per_level, side_per_level, radius_per_level, parent_pos_per_level):
    """Turn per-level labelling into a CubeTree.

    ``keys_per_level[k][i]`` is the position of point i's level-k cube among
    the level-k cubes; ``parent_pos_per_level[k]`` maps level-k positions to
    level-(k-1) positions.
    """
    m = len(points)
    offsets = np.cumsum([0] + [len(c) for c in centers_per_level])
    n_nodes = int(offsets[-1])
    level = np.zeros(n_nodes, dtype=np.int64)
    parent = -np.ones(n_nodes, dtype=np.int64)
    children: list[list[int]] = [[] for _ in range(n_nodes)]
    center = np.zeros((n_nodes, points.shape[1]))
    center_index = -np.ones(n_nodes, dtype=np.int64)
    side = np.zeros(n_nodes)
    ball_radius = np.zeros(n_nodes)
    by_level = []
    cube_of = np.zeros((len(centers_per_level), m), dtype=np.int64)
    members: list[NDArray[np.int64]] = [None] * n_nodes
    for k, cen in enumerate(centers_per_level):
        ids = np.arange(offsets[k], offsets[k + 1])
        by_level.append(ids)
        level[ids] = k
        center[ids] = cen
        center_index[ids] = center_idx_per_level[k]
        side[ids] = side_per_level[k]
        ball_radius[ids] = radius_per_level[k]
        cube_of[k] = offsets[k] + keys_per_level[k]
        order = np.argsort(keys_per_level[k], kind="stable")
        counts = np.bincount(keys_per_level[k], minlength=len(cen))
        for pos, chunk in enumerate(np.split(order, np.cumsum(counts)[:-1])):
            members[offsets[k] + pos] = np.sort(chunk)
        if k > 0:
            par = offsets[k - 1] + parent_pos_per_level[k]
            parent[ids] = par
            for q, p in zip(ids, par):
                children[p].append(int(q))
    return CubeTree(points, mode, rho, scale, resolution, level, center, center_index, side, ball_radius, parent, children, members, by_level, cube_of)


def build_cubes(hier: NetHierarchy, resolution: float | None = None) -> CubeTree:
    """Christ-type cubes: each net point hangs under its nearest coarser net point."""
    points = hier.points
    K = hier.k_max
    parent_pos = [None] * (K + 1)
    for k in range(1, K + 1):
        coarse, fine = hier.levels[k - 1], hier.levels[k]
        parent_pos[k] = _nearest_with_ties(points[coarse], coarse, points[fine])
    # every point joins its nearest finest-level net point
    finest = hier.levels[K]
    keys = [None] * (K + 1)
    keys[K] = _nearest_with_ties(points[finest], finest, points)
    for k in range(K, 0, -1):
        keys[k - 1] = parent_pos[k][keys[k]]
    ell = [5 * hier.scale * hier.rho**k for k in range(K + 1)]
    if resolution is None:
        resolution = ell[-1]
    tree = _assemble(
        points,
        "christ",
        hier.rho,
        hier.scale,
        resolution,
        keys,
        [points[lv] for lv in hier.levels],
        [lv for lv in hier.levels],
        ell,
        ell,
        parent_pos,
    )
    tree.c0 = measure_c0(tree)
    return tree


def build_tree(cloud: PointCloud, rho: float = DEFAULT_RHO, scale: float = 1.0, k_max: int | None = None) -> CubeTree:
    return build_cubes(build_nets(cloud, rho, k_max, scale), cloud.resolution)


def build_dyadic_tree(cloud: PointCloud, scale: float = 1.0, k_max: int | None = None) -> CubeTree:
    """Axis-aligned dyadic cubes of side scale * 2^-k holding the sample."""
    points = cloud.points
    n = points.shape[1]
    if k_max is None:
        k_max = 0
        while scale * 2.0 ** -(k_max + 1) >= cloud.resolution:
            k_max += 1
    keys, centers, parents, sides = [], [], [], []
    prev_keys = None
    for k in range(k_max + 1):
        side = scale * 2.0**-k
        grid = np.floor(points / side).astype(np.int64)
        uniq, inv = np.unique(grid, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        keys.append(inv)
        centers.append((uniq + 0.5) * side)
        sides.append(side)
        if prev_keys is None:
            parents.append(None)
        else:
            par = np.zeros(len(uniq), dtype=np.int64)
            par[inv] = prev_keys
            parents.append(par)
        prev_keys = inv
    radii = [np.sqrt(n) * s / 2 for s in sides]
    return _assemble(
        points,
        "dyadic",
        0.5,
        scale,
        cloud.resolution,
        keys,
        centers,
        [-np.ones(len(c), dtype=np.int64) for c in centers],
        sides,
        radii,
        parents,
    )


def cube_queries(tree: CubeTree, q: int, lam: float = 1.0) -> dict:
    """Parent, siblings, children and the balls B_Q, lam*B_Q of cube ``q``."""
    if not 0 <= q < tree.n_nodes:
        raise KeyError(f"cube {q} not in tree")
    p = int(tree.parent[q])
    return {
        "parent": p if p >= 0 else None,
        "siblings": tree.siblings(q),
        "children": list(tree.children[q]),
        "ball": tree.ball(q),
        "dilated_ball": tree.ball(q, lam),
    }


# ---------------------------------------------------------------- checks


def guaranteed_c0(rho: float) -> float:
    """Inner-ball constant forced by the net separations alone, 0 when rho >= 1/3.

    A point within c0 * 5 rho^k of a level-k center drifts less than
    rho^(k+1) / (1 - rho) on its way up to level k + 1, so it stays nearer
    to that center than to any other while the total is below rho^k / 2.
    """
    return max((0.5 - rho / (1 - rho)) / 5, 0.0)


def measure_c0(tree: CubeTree) -> float:
    """Largest c with B(center, c * side) ∩ sample ⊆ Q for every cube (capped at 1)."""
    kd = cKDTree(tree.points)
    worst = 1.0
    for k, ids in enumerate(tree.by_level):
        labels = tree.cube_of[k]
        for q in ids:
            near = kd.query_ball_point(tree.center[q], tree.side[q] * worst)
            if not near:
                continue
            near = np.asarray(near)
            outside = near[labels[near] != q]
            if len(outside):
                dist = np.linalg.norm(tree.points[outside] - tree.center[q], axis=1).min()
                worst = min(worst, float(dist) / float(tree.side[q]))
    return worst


def check_partition(tree: CubeTree) -> bool:
    m = len(tree.points)
    for ids in tree.by_level:
        allm = np.concatenate([tree.members[q] for q in ids])
        if len(allm) != m or len(np.unique(allm)) != m:
            return False
    return True


def check_nesting(tree: CubeTree) -> bool:
    for q in range(tree.n_nodes):
        p = tree.parent[q]
        if p >= 0 and not np.all(np.isin(tree.members[q], tree.members[p])):
            return False
        kids = tree.children[q]
        if kids and sum(len(tree.members[c]) for c in kids) != len(tree.members[q]):
            return False
    return True


def check_containment(tree: CubeTree, c0: float) -> bool:
    """Sample version of B(center, c0*side) ∩ X ⊆ Q ⊆ B(center, side)."""
    kd = cKDTree(tree.points)
    for k, ids in enumerate(tree.by_level):
        labels = tree.cube_of[k]
        for q in ids:
            mem = tree.points[tree.members[q]]
            if np.max(np.linalg.norm(mem - tree.center[q], axis=1)) > tree.ball_radius[q]:
                return False
            near = kd.query_ball_point(tree.center[q], c0 * tree.side[q])
            if near and np.any(labels[np.asarray(near)] != q):
                return False
    return True


def check_ball_nesting(tree: CubeTree, C: float) -> bool:
    """C B_Q ⊆ C B_R whenever Q ⊆ R."""
    for q in range(tree.n_nodes):
        for r in tree.ancestors(q):
            gap = np.linalg.norm(tree.center[q] - tree.center[r]) + C * tree.ball_radius[q]
            if gap > C * tree.ball_radius[r] * (1 + 1e-12):
                return False
    return True
