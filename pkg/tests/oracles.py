"""Slow reference computations that share no code path with the package.

Content is solved as an exact set-cover integer program over the tree's
cubes; integrals are layer-cake sums over superlevel sets; sup-norm
flatness is a dense scan over normal directions with a local polish.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp, minimize, minimize_scalar


# ---------------------------------------------------------------- content


class ContentOracle:
    """Exact discrete content by integer programming, memoized per point set."""

    def __init__(self, tree, d: int, floor: float | None = None):
        self.tree = tree
        self.d = d
        floor = tree.resolution if floor is None else floor
        deepest = 0
        for k, ids in enumerate(tree.by_level):
            if len(ids) and tree.side[ids[0]] >= floor * (1 - 1e-12):
                deepest = k
        self.deepest = deepest
        self.cache: dict[frozenset, float] = {}

    def __call__(self, scope) -> float:
        key = frozenset(int(i) for i in scope)
        if not key:
            return 0.0
        if key in self.cache:
            return self.cache[key]
        pts = np.array(sorted(key))
        cubes = np.unique(np.concatenate([self.tree.cube_of[k][pts] for k in range(self.deepest + 1)]))
        col = {int(q): j for j, q in enumerate(cubes)}
        A = np.zeros((len(pts), len(cubes)))
        for k in range(self.deepest + 1):
            for row, q in enumerate(self.tree.cube_of[k][pts]):
                A[row, col[int(q)]] = 1.0
        cost = np.array([float(self.tree.diam(int(q))) ** self.d for q in cubes])
        res = milp(cost, constraints=LinearConstraint(A, lb=1.0), integrality=np.ones(len(cubes)), bounds=Bounds(0, 1))
        if not res.success:
            raise RuntimeError(res.message)
        value = float(cost @ np.round(res.x))
        self.cache[key] = value
        return value


def layer_cake(f, scope, oracle: ContentOracle, p: float = 1.0) -> float:
    """∫_0^∞ content({f > t}) t^(p-1) dt, summed over the distinct values of f."""
    f = np.asarray(f, dtype=float)
    scope = np.asarray(scope)
    levels = np.unique(f[f > 0])
    total, prev = 0.0, 0.0
    for v in levels:
        total += oracle(scope[f >= v]) * (v**p - prev**p) / p
        prev = v
    return total


# ---------------------------------------------------------------- planes


def _sphere(count: int, n: int, rng) -> np.ndarray:
    if n == 2:
        t = np.linspace(0, np.pi, count, endpoint=False)
        return np.column_stack([np.cos(t), np.sin(t)])
    # golden-angle spiral on the upper hemisphere
    i = np.arange(count) + 0.5
    z = i / count
    phi = i * np.pi * (3 - np.sqrt(5))
    s = np.sqrt(1 - z**2)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def _unit(v):
    return v / np.linalg.norm(v)


def _polar(angles, n):
    if n == 2:
        return np.array([np.cos(angles[0]), np.sin(angles[0])])
    a, b = angles
    return np.array([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)])


def _angles(u):
    if len(u) == 2:
        return np.array([np.arctan2(u[1], u[0])])
    return np.array([np.arccos(np.clip(u[2], -1, 1)), np.arctan2(u[1], u[0])])


def slab_halfwidth_oracle(points: np.ndarray, count: int = 20000) -> float:
    """min over unit normals u of (max - min of <x, u>) / 2, for hyperplanes."""
    n = points.shape[1]
    dirs = _sphere(count, n, None)
    proj = points @ dirs.T
    width = proj.max(axis=0) - proj.min(axis=0)

    def w(angles):
        v = points @ _polar(angles, n)
        return float(v.max() - v.min())

    best = float(width.min())
    for j in np.argsort(width)[:6]:
        start = _angles(dirs[j])
        if n == 2:
            step = np.pi / count
            res = minimize_scalar(lambda a: w([a]), bounds=(start[0] - 2 * step, start[0] + 2 * step), method="bounded", options={"xatol": 1e-13})
            best = min(best, float(res.fun))
        else:
            res = minimize(w, start, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "initial_simplex": [start, start + [0.02, 0], start + [0, 0.02]]})
            best = min(best, float(res.fun))
    return best / 2


def _enclosing_radius(q: np.ndarray) -> float:
    """Smallest enclosing circle radius of planar points, as a convex program."""
    c0 = q.mean(axis=0)
    r0 = float(np.max(np.linalg.norm(q - c0, axis=1)))
    cons = {"type": "ineq", "fun": lambda z: z[2] - np.sum((q - z[:2]) ** 2, axis=1)}
    res = minimize(lambda z: z[2], np.array([*c0, r0**2]), constraints=[cons], method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
    return float(np.sqrt(max(res.x[2], 0.0)))


def line_radius_oracle(points: np.ndarray, count: int = 600) -> float:
    """min over lines in R^3 of the max distance: enclosing circle of the projection along the line."""
    dirs = _sphere(count, 3, None)

    def radius(u):
        u = _unit(u)
        a = _unit(np.cross(u, [1.0, 0, 0] if abs(u[0]) < 0.9 else [0, 1.0, 0]))
        b = np.cross(u, a)
        return _enclosing_radius(np.column_stack([points @ a, points @ b]))

    vals = np.array([radius(u) for u in dirs])
    best = float(vals.min())
    for j in np.argsort(vals)[:3]:
        start = _angles(dirs[j])
        res = minimize(lambda ang: radius(_polar(ang, 3)), start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13, "initial_simplex": [start, start + [0.05, 0], start + [0, 0.05]]})
        best = min(best, float(res.fun))
    return best


def beta_inf_oracle(points: np.ndarray, center, radius: float, d: int) -> float:
    sub = points[np.linalg.norm(points - center, axis=1) <= radius]
    n = points.shape[1]
    if len(sub) <= d + 1 and d == n - 1:
        return 0.0
    if d == n - 1:
        return slab_halfwidth_oracle(sub) / radius
    if n == 3 and d == 1:
        return line_radius_oracle(sub) / radius
    raise NotImplementedError


def beta_content_oracle(points, center, radius, d, tree, extra_normals=(), grid: int = 48, offsets: int = 24, polish: int = 150) -> tuple[float, np.ndarray, float]:
    """min over hyperplanes of (1/r^d) ∫_0^1 content{dist/r > t} dt by grid search and polish.

    Hyperplanes are {x : <x, u> = s}; ``extra_normals`` are (u, s) pairs
    added to the grid. Returns (value, normal, offset).
    """
    n = points.shape[1]
    scope = np.nonzero(np.linalg.norm(points - center, axis=1) <= radius)[0]
    sub = points[scope]
    oracle = ContentOracle(tree, d)

    def objective(u, s):
        u = _unit(np.asarray(u, dtype=float))
        f = np.minimum(np.abs(sub @ u - s) / radius, 1.0)
        return layer_cake(f, scope, oracle) / radius**d

    cands = []
    for u in _sphere(grid, n, None):
        proj = sub @ u
        for s in np.linspace(proj.min(), proj.max(), offsets):
            cands.append((objective(u, s), u, s))
    for u, s in extra_normals:
        cands.append((objective(u, s), _unit(np.asarray(u, dtype=float)), float(s)))
    cands.sort(key=lambda t: t[0])
    best = cands[0]
    for val, u, s in cands[:3]:
        start = np.concatenate([_angles(u), [s]])

        def obj(z):
            return objective(_polar(z[:-1], n), z[-1])

        simplex = [start] + [start + step for step in np.eye(len(start)) * np.r_[[0.03] * (len(start) - 1), [0.03 * radius]]]
        res = minimize(obj, start, method="Nelder-Mead", options={"maxfev": polish, "xatol": 1e-12, "fatol": 1e-14, "initial_simplex": simplex})
        if res.fun < best[0]:
            best = (float(res.fun), _polar(res.x[:-1], n), float(res.x[-1]))
    return best
