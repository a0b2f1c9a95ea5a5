"""Flatness statistics of a sample in a ball.

``beta_inf``      normalized half-width of the thinnest slab around E ∩ B
``beta_content``  L^p flatness against discrete Hausdorff content
``vartheta``      two-sided (bilateral) normalized distance to a plane
``omega_lp``      L^p distance of a function from affine maps on a cube
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import null_space
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .content import ChoquetEngine
from .geometry import (
    AffinePlane,
    Ball,
    Box,
    _chart,
    _complete_frame,
    fit_plane_linf,
    plane_ball_samples,
    svd_plane,
)
from .nets import CubeTree, greedy_net

Array = NDArray[np.float64]

SMALL_INPUT = 50
MAX_SUBSET_PLANES = 3000


@dataclass
class BetaResult:
    value: float
    plane: AffinePlane
    ball: Ball
    kind: str
    p: float | None = None
    info: dict = field(default_factory=dict)


def p_limit(d: int) -> float:
    """Exclusive upper bound on admissible exponents: 2d/(d-2) for d > 2."""
    return 2 * d / (d - 2) if d > 2 else np.inf


def check_exponent(p: float, d: int) -> None:
    if not (1 <= p < p_limit(d)):
        raise ValueError(f"exponent p={p} outside [1, {p_limit(d)}) for d={d}")


def _inside(points: Array, ball: Ball) -> NDArray[np.int64]:
    idx = np.nonzero(ball.contains(points))[0]
    if len(idx) == 0:
        raise ValueError("the sample does not meet the ball")
    return idx


def beta_inf(points: Array, ball: Ball, d: int, plane: AffinePlane | None = None, refine: bool = True) -> BetaResult:
    """(2 / diam B) sup over E ∩ B of dist(y, L); infimized over L when none is given."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sub = points[_inside(points, ball)]
    if plane is not None:
        if plane.d != d:
            raise ValueError("plane dimension differs from d")
        return BetaResult(float(np.max(plane.dist(sub))) / ball.radius, plane, ball, "inf")
    fitted, width = fit_plane_linf(sub, d, refine=refine)
    return BetaResult(width / 2 / ball.radius, fitted, ball, "inf")


# ---------------------------------------------------------------- plane search


class _PlaneChart:
    """Local coordinates (rotation, offset) around a reference plane."""

    def __init__(self, plane: AffinePlane) -> None:
        self.frame = plane.frame
        self.normal = null_space(plane.frame).T
        self.base = plane.base
        self.n_rot = self.frame.shape[0] * self.normal.shape[0]
        self.size = self.n_rot + self.normal.shape[0]

    def plane(self, params: Array) -> AffinePlane:
        frame = _chart(self.frame, self.normal, params[: self.n_rot])
        return AffinePlane(self.base + params[self.n_rot :] @ self.normal, frame)


def _nelder_mead(objective, start: AffinePlane, scale: float, rounds: int = 2, maxfev: int | None = None) -> tuple[AffinePlane, float]:
    best_plane, best_val = start, objective(start)
    for r in range(rounds):
        chart = _PlaneChart(best_plane)
        steps = np.concatenate([np.full(chart.n_rot, 0.05 / 4**r), np.full(chart.size - chart.n_rot, 0.05 * scale / 4**r)])
        simplex = np.vstack([np.zeros(chart.size), np.diag(steps)])
        opts = {"initial_simplex": simplex, "xatol": 1e-10, "fatol": 1e-13}
        opts["maxfev"] = maxfev if maxfev is not None else 200 * chart.size
        res = minimize(lambda z: objective(chart.plane(z)), np.zeros(chart.size), method="Nelder-Mead", options=opts)
        if res.fun < best_val:
            best_val = float(res.fun)
            best_plane = chart.plane(res.x)
    return best_plane, best_val


def net_svd_plane(sub: Array, d: int, radius: float) -> AffinePlane:
    """SVD plane of a maximal (radius/32)-net; each net point counts once."""
    net = greedy_net(sub, radius / 32)
    return svd_plane(sub[net], d)


def _subset_planes(sub: Array, d: int):
    import itertools
    from math import comb

    m = len(sub)
    total = comb(m, d + 1)
    stride = max(1, total // MAX_SUBSET_PLANES)
    for count, combo in enumerate(itertools.combinations(range(m), d + 1)):
        if count % stride:
            continue
        pts = sub[list(combo)]
        dirs = pts[1:] - pts[0]
        s = np.linalg.svd(dirs, compute_uv=False)
        if s[-1] <= 1e-12 * max(s[0], 1e-300):
            continue
        yield AffinePlane(pts[0], _complete_frame(dirs, d, sub.shape[1]))


def _search(objective, sub: Array, d: int, radius: float, seeds: list[AffinePlane], refine) -> tuple[AffinePlane, float]:
    """Best plane from seeds (plus subset planes for small inputs), then refined."""
    scored = [(objective(pl), i, pl) for i, pl in enumerate(seeds)]
    if refine is True and len(sub) <= SMALL_INPUT and sub.shape[1] <= 3:
        scored.extend((objective(pl), len(seeds) + i, pl) for i, pl in enumerate(_subset_planes(sub, d)))
    scored.sort(key=lambda t: (t[0], t[1]))
    best_val, _, best_plane = scored[0]
    if refine is False or best_val == 0.0:
        return best_plane, best_val
    starts = [scored[0]]
    if refine is True:
        starts = scored[:3]
    maxfev = None if refine is True else 60
    rounds = 2 if refine is True else 1
    for val, _, pl in starts:
        cand, cval = _nelder_mead(objective, pl, radius, rounds=rounds, maxfev=maxfev)
        if cval < best_val:
            best_val, best_plane = cval, cand
    return best_plane, best_val


# ---------------------------------------------------------------- content beta


def beta_content(
    points: Array,
    ball: Ball,
    d: int,
    p: float,
    tree: CubeTree,
    plane: AffinePlane | None = None,
    refine: bool | str = True,
    floor: float | None = None,
    seeds: list[AffinePlane] | None = None,
) -> BetaResult:
    """Content beta: ((1/r^d) ∫_0^1 content{x ∈ E∩B : dist(x,L) > t r} t^(p-1) dt)^(1/p).

    ``points`` must be the sample the tree was built on. Without ``plane``
    the value is minimized over planes; ``refine`` is True (full search),
    "light" (short local polish of the best seed) or False (seeds only).
    """
    check_exponent(p, d)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    scope = _inside(points, ball)
    sub = points[scope]
    r = ball.radius
    engine = ChoquetEngine(tree, scope, d, floor)

    def value(pl: AffinePlane) -> float:
        f = np.minimum(pl.dist(sub) / r, 1.0)
        return engine.integral(f, p) / r**d

    if plane is not None:
        return BetaResult(value(plane) ** (1 / p), plane, ball, "content-p", p)
    if len(sub) <= d + 1:
        fitted, _ = fit_plane_linf(sub, d)
        return BetaResult(0.0, fitted, ball, "content-p", p)
    start = list(seeds or [])
    start.append(fit_plane_linf(sub, d, refine=refine is True)[0])
    start.append(net_svd_plane(sub, d, r))
    best, val = _search(value, sub, d, r, start, refine)
    return BetaResult(max(val, 0.0) ** (1 / p), best, ball, "content-p", p)


# ---------------------------------------------------------------- bilateral


def bilateral_distance(
    sub: Array, kd: cKDTree, plane: AffinePlane, ball: Ball, spacing: float, window: Box | None, slack: float = 0.0
) -> float:
    """d_B(E, L) with E given by its part ``sub`` in the ball and its KD-tree.

    Plane-side distances shorter than ``slack`` count as zero, so a sample
    at resolution ``slack`` of a set containing L ∩ B scores 0 on that side.
    """
    first = float(np.max(plane.dist(sub))) if len(sub) else 0.0
    samples = plane_ball_samples(plane, ball, spacing)
    if window is not None and len(samples):
        samples = samples[window.contains(samples)]
    second = max(float(np.max(kd.query(samples)[0])) - slack, 0.0) if len(samples) else 0.0
    return max(first, second) / ball.radius


def vartheta(
    points: Array,
    ball: Ball,
    d: int,
    spacing: float,
    window: Box | None = None,
    refine: bool | str = True,
    kd: cKDTree | None = None,
    threshold: float | None = None,
    seeds: list[AffinePlane] | None = None,
    slack: float = 0.0,
) -> BetaResult:
    """inf over planes L of d_B(E, L); L ∩ B is sampled at ``spacing``.

    With ``threshold`` the search stops as soon as the comparison with the
    threshold is decided; ``info["decided"]`` then records how.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sub = points[_inside(points, ball)]
    kd = cKDTree(points) if kd is None else kd
    r = ball.radius
    coarse = max(spacing, r / 16)

    def fine_value(pl):
        return bilateral_distance(sub, kd, pl, ball, spacing, window, slack)

    linf_plane, width = fit_plane_linf(sub, d, refine=refine is True)
    lower = width / 2 / r
    if threshold is not None and lower >= threshold:
        return BetaResult(lower, linf_plane, ball, "bilateral", info={"decided": "lower-bound"})
    seed_list = list(seeds or []) + [linf_plane, net_svd_plane(sub, d, r)]
    if threshold is not None:
        for pl in seed_list:
            val = fine_value(pl)
            if val < threshold:
                return BetaResult(val, pl, ball, "bilateral", info={"decided": "upper-bound"})

    def coarse_value(pl):
        return bilateral_distance(sub, kd, pl, ball, coarse, window, slack)

    best, _ = _search(coarse_value, sub, d, r, seed_list, refine)
    finals = [(fine_value(pl), i, pl) for i, pl in enumerate([best] + seed_list)]
    finals.sort(key=lambda t: (t[0], t[1]))
    return BetaResult(finals[0][0], finals[0][2], ball, "bilateral", info={"decided": "search"})


# ---------------------------------------------------------------- omega


def omega_lp(coords: Array, values: Array, p: float, half_side: float, iterations: int = 200) -> float:
    """inf over affine A of (mean |(f - A)/r|^p)^(1/p) on grid samples of a cube.

    Exact least squares for p = 2, iteratively reweighted otherwise.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if coords.shape[0] == 1 and np.asarray(values).size > 1:
        coords = coords.T
    values = np.asarray(values, dtype=float).reshape(-1)
    design = np.column_stack([np.ones(len(values)), coords])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    if p != 2:
        floor = 1e-12 * max(float(np.max(np.abs(values))), 1.0)
        for _ in range(iterations):
            res = np.abs(values - design @ coef)
            w = np.maximum(res, floor) ** (p - 2)
            sw = np.sqrt(w)
            new, *_ = np.linalg.lstsq(design * sw[:, None], values * sw, rcond=None)
            if np.allclose(new, coef, rtol=0, atol=1e-14):
                coef = new
                break
            coef = new
    res = np.abs(values - design @ coef) / half_side
    return float(np.mean(res**p) ** (1 / p))
