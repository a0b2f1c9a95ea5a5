"""Stopping-time regions over a cube tree.

Two constructions:

* angle regions grown while child planes stay close to the top plane,
  extended generation by generation through Layer / Stop / Up families;
* a forest cut where accumulated squared content betas reach eps^2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .beta import beta_content, beta_inf
from .geometry import AffinePlane, plane_angle
from .nets import CubeTree

Array = NDArray[np.float64]


@dataclass
class StoppingRegion:
    top: int
    members: list[int]
    minimal: dict[int, str]
    residual: NDArray[np.int64]
    plane_of: dict[int, AffinePlane] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "top": self.top,
            "member_count": len(self.members),
            "minimal": [{"cube": q, "reason": why} for q, why in sorted(self.minimal.items())],
        }


@dataclass
class CoronaForest:
    regions: list[StoppingRegion]
    layers: list[dict]
    params: dict

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "regions": [r.to_dict() for r in self.regions],
            "layers": [
                {"N": g["N"], "layer_count": len(g["layer"]), "stop": list(g["stop"]), "up_count": len(g["up"])}
                for g in self.layers
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def tau_zero(rho: float) -> float:
    return 1.0 / (4.0 * (2.0 + 1.0 / rho))


def tau_one(rho: float, C1: float) -> float:
    return min(tau_zero(rho), 1.0 / (16.0 + 8.0 * C1))


def default_tau(rho: float) -> float:
    return 0.9 * min(tau_zero(rho), 1.0 / 16.0)


def assign_planes(tree: CubeTree, d: int, M: float = 4.0, refine: bool = False) -> list[AffinePlane]:
    """Per cube: the sup-optimal plane of M B_Q, moved parallel through the cube center."""
    out = []
    for q in range(tree.n_nodes):
        res = beta_inf(tree.points, tree.ball(q, M), d, refine=refine)
        out.append(res.plane.through(tree.center[q]))
    return out


# ---------------------------------------------------------------- distances


def d_collection(tree: CubeTree, cubes, x: Array, ell_override: dict[int, float] | None = None) -> Array:
    """min over Q in the collection of ell(Q) + dist(x, Q), for each row of ``x``."""
    cubes = list(cubes)
    if not cubes:
        raise ValueError("collection is empty")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ell_override = ell_override or {}
    groups: dict[float, list[int]] = {}
    for q in cubes:
        groups.setdefault(float(ell_override.get(q, tree.side[q])), []).append(q)
    best = np.full(len(x), np.inf)
    for ell, qs in sorted(groups.items()):
        mem = np.unique(np.concatenate([tree.members[q] for q in qs]))
        dist, _ = cKDTree(tree.points[mem]).query(x)
        best = np.minimum(best, ell + dist)
    return best


def d_collection_cubes(tree: CubeTree, point_values: Array, cubes) -> Array:
    """Cube version: infimum of a per-point function over each cube's members."""
    return np.array([float(np.min(point_values[tree.members[q]])) for q in cubes])


# ---------------------------------------------------------------- angle regions


def angle_stopping_region(tree: CubeTree, planes, q: int, alpha: float) -> StoppingRegion:
    """Grow from ``q`` while every child plane is within angle alpha of the top plane."""

    def plane(r):
        pl = planes[r] if not isinstance(planes, dict) else planes.get(r)
        if pl is None:
            raise KeyError(f"no plane assigned to cube {r}")
        return pl

    top_plane = plane(q)
    members = [q]
    minimal: dict[int, str] = {}
    frontier = [q]
    while frontier:
        nxt = []
        for r in frontier:
            kids = tree.children[r]
            if not kids:
                minimal[r] = "resolution"
                continue
            if all(plane_angle(plane(t), top_plane) < alpha for t in kids):
                members.extend(kids)
                nxt.extend(kids)
            else:
                minimal[r] = "angle"
        frontier = nxt
    covered = np.concatenate([tree.members[r] for r in minimal]) if minimal else np.empty(0, dtype=np.int64)
    residual = np.setdiff1d(tree.members[q], covered)
    return StoppingRegion(q, sorted(members), minimal, residual, {r: plane(r) for r in members})


def extend_layers(tree: CubeTree, planes, alpha: float, tau: float, n_max: int = 8) -> CoronaForest:
    """Generations Layer(N), Stop(N), Up(N) starting from Stop(-1) = top-level cubes.

    Cubes closed at the resolution floor stand in for the set where the
    distance to the layer vanishes, so they enter the distance with side 0.
    """
    t0 = tau_zero(tree.rho)
    if not 0 < tau < t0:
        raise ValueError(f"tau={tau} must lie in (0, tau0={t0})")
    stop = [int(q) for q in tree.by_level[0]]
    up: set[int] = set()
    regions: list[StoppingRegion] = []
    layers = []
    for N in range(n_max + 1):
        regs = [angle_stopping_region(tree, planes, q, alpha) for q in stop]
        regions.extend(regs)
        layer = sorted({r for reg in regs for r in reg.members})
        closed = {q: 0.0 for reg in regs for q, why in reg.minimal.items() if why == "resolution"}
        dist_pts = d_collection(tree, layer, tree.points, closed)
        seeds = [q for reg in regs for q, why in reg.minimal.items() if why == "angle"]
        cand = []
        for s in seeds:
            cand.extend(r for r in tree.descendants(s) if r != s)
        cand = sorted(set(cand))
        qual = {}
        for r in cand:
            qual[r] = tree.side[r] < tau * float(np.min(dist_pts[tree.members[r]]))
        new_stop = []
        taken: set[int] = set()
        for r in sorted(cand, key=lambda c: (tree.level[c], c)):
            if any(a in taken for a in tree.ancestors(r)):
                continue
            sibs = tree.children[tree.parent[r]]
            if any(qual.get(s, False) for s in sibs):
                new_stop.append(r)
                taken.add(r)
        for r in layer + new_stop:
            up.add(r)
            up.update(tree.ancestors(r))
        layers.append(
            {
                "N": N,
                "layer": layer,
                "stop": sorted(new_stop),
                "up": sorted(up),
                "closed": sorted(closed),
                "dist": dist_pts,
            }
        )
        if not new_stop:
            break
        stop = sorted(new_stop)
    params = {"alpha": alpha, "tau": tau, "tau0": t0, "rho": tree.rho, "n_max": n_max}
    return CoronaForest(regions, layers, params)


def layer_bounds(tree: CubeTree, forest: CoronaForest) -> list[dict]:
    """For every Stop(N) cube: side, distance to Layer(N), and both bounds checked."""
    rows = []
    tau, rho = forest.params["tau"], forest.params["rho"]
    for g in forest.layers:
        for q in g["stop"]:
            dq = float(np.min(g["dist"][tree.members[q]]))
            ell = float(tree.side[q])
            rows.append({"N": g["N"], "cube": q, "ell": ell, "dist": dq, "lower_ok": rho * tau * dq <= ell, "upper_ok": ell <= 2 * tau * dq})
    return rows


def stop_size_ratio(tree: CubeTree, forest: CoronaForest, C1: float) -> float:
    """Largest side ratio among Stop(N) pairs whose C1-dilated balls meet."""
    worst = 1.0
    for g in forest.layers:
        qs = g["stop"]
        for i, a in enumerate(qs):
            for b in qs[i + 1 :]:
                gap = np.linalg.norm(tree.center[a] - tree.center[b])
                if gap <= C1 * (tree.ball_radius[a] + tree.ball_radius[b]):
                    worst = max(worst, tree.side[a] / tree.side[b], tree.side[b] / tree.side[a])
    return float(worst)


def is_coherent(tree: CubeTree, region: StoppingRegion) -> bool:
    mem = set(region.members)
    for q in region.members:
        if q != region.top and not tree.contains_cube(region.top, q):
            return False
        r = q
        while r != region.top:
            r = int(tree.parent[r])
            if r not in mem:
                return False
    return True


def is_sibling_closed(tree: CubeTree, region: StoppingRegion) -> bool:
    mem = set(region.members)
    for q in region.members:
        if q == region.top:
            continue
        if any(s not in mem for s in tree.siblings(q)):
            return False
    return True


# ---------------------------------------------------------------- beta forest


def cube_betas(tree: CubeTree, d: int, M: float, p: float = 1.0, refine: bool | str = "light") -> Array:
    """Content beta of M B_Q for every cube."""
    return np.array([beta_content(tree.points, tree.ball(q, M), d, p, tree, refine=refine).value for q in range(tree.n_nodes)])


def beta_stopping_forest(tree: CubeTree, d: int, M: float, eps: float, betas: Array | None = None) -> CoronaForest:
    """Regions cut where sum of beta(M B_T)^2 over the chain down to a child reaches eps^2.

    A region takes all children of a member R when every child R' has
    sum_{R' ⊆ T ⊆ top} beta(M B_T)^2 < eps^2; otherwise R is minimal, and
    new regions start at its children.
    """
    if eps <= 0 or M < 1:
        raise ValueError("need eps > 0 and M >= 1")
    if betas is None:
        betas = cube_betas(tree, d, M)
    b2 = np.asarray(betas, dtype=float) ** 2
    regions = []
    queue = [int(q) for q in tree.by_level[0]]
    while queue:
        q = queue.pop(0)
        acc = {q: b2[q]}
        members, minimal, frontier = [q], {}, [q]
        while frontier:
            nxt = []
            for r in frontier:
                kids = tree.children[r]
                if not kids:
                    minimal[r] = "resolution"
                elif all(acc[r] + b2[c] < eps**2 for c in kids):
                    for c in kids:
                        acc[c] = acc[r] + b2[c]
                    members.extend(kids)
                    nxt.extend(kids)
                else:
                    minimal[r] = "beta-sum"
                    queue.extend(kids)
            frontier = nxt
        regions.append(StoppingRegion(q, sorted(members), minimal, np.empty(0, dtype=np.int64)))
    params = {"eps": eps, "M": M, "d": d}
    return CoronaForest(regions, [], params)


def minimal_cube_sum(tree: CubeTree, forest: CoronaForest, d: int, betas: Array) -> dict:
    """Both sides of sum_{minimal R} ell(R)^d <= K sum_Q beta^2 ell(Q)^d, and the proof's bound on K.

    Only cubes cut by the beta-sum rule count as minimal; regions closed by
    the resolution floor are excluded.
    """
    b2 = np.asarray(betas) ** 2
    lhs = 0.0
    packing = 0.0
    for reg in forest.regions:
        mins = [q for q, why in reg.minimal.items() if why == "beta-sum"]
        lhs += sum(float(tree.side[q]) ** d for q in mins)
        for q in reg.members:
            inside = sum(float(tree.side[r]) ** d for r in mins if tree.contains_cube(q, r))
            packing = max(packing, inside / float(tree.side[q]) ** d)
    rhs = float(np.sum(b2 * tree.side**d))
    eps = forest.params["eps"]
    bound = 2.0 / eps**2 * (tree.rho**-d + packing)
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    return {"lhs": lhs, "rhs": rhs, "K": ratio, "K_bound": bound, "packing": packing}
