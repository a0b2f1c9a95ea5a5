"""Seeded synthetic samples.

A spec string is ``name`` or ``name:arg,arg,key=value``; positional
arguments fill the parameters in the order listed in ``GENERATORS``.
Every sample carries an observation window when the underlying set is
truncated, so two-sided distances ignore the artificial boundary.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .geometry import Box, PointCloud, nearest_neighbor_resolution

Array = NDArray[np.float64]


def _finish(points: Array, d: int, window: Box | None, meta: dict) -> PointCloud:
    return PointCloud(points, d, nearest_neighbor_resolution(points), window, meta)


def _axis_window(n: int, d: int, half: float) -> Box:
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    lo[:d], hi[:d] = -half, half
    return Box(lo, hi)


def _grid(d: int, count: int, half: float) -> Array:
    side = count if d == 1 else int(round(count ** (1 / d)))
    ticks = np.linspace(-half, half, side)
    mesh = np.meshgrid(*([ticks] * d), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def plane(n: int = 3, d: int = 2, count: int = 1681, half: float = 1.0, seed: int = 0) -> PointCloud:
    """Grid on the coordinate d-plane; ``count`` is the total for d = 1, rounded to a square grid otherwise."""
    params = _grid(d, count, half)
    pts = np.zeros((len(params), n))
    pts[:, :d] = params
    return _finish(pts, d, _axis_window(n, d, half), {"generator": "plane", "flat": True})


def line(count: int = 1001, half: float = 1.0, n: int = 2, seed: int = 0) -> PointCloud:
    return plane(n=n, d=1, count=count, half=half)


def circle(radius: float = 1.0, count: int = 400, seed: int = 0) -> PointCloud:
    t = np.arange(count) * 2 * np.pi / count
    pts = radius * np.column_stack([np.cos(t), np.sin(t)])
    return _finish(pts, 1, None, {"generator": "circle", "length": 2 * np.pi * radius})


def _graph_cloud(x: Array, height: Array, d: int, n: int, half: float, meta: dict) -> PointCloud:
    pts = np.zeros((len(x), n))
    pts[:, :d] = x
    pts[:, d] = height
    return _finish(pts, d, _axis_window(n, d, half), meta)


def lipschitz_graph(L: float = 0.5, modes: int = 3, count: int = 801, half: float = 1.0, d: int = 1, seed: int = 0) -> PointCloud:
    """Graph of a random trigonometric sum rescaled to Lipschitz constant exactly ``L`` (on the grid)."""
    rng = np.random.default_rng(seed)
    x = _grid(d, count, half)
    freq = rng.uniform(0.5, 2.0, size=(modes, d)) * np.pi / half
    phase = rng.uniform(0, 2 * np.pi, size=modes)
    h = np.sin(x @ freq.T + phase).sum(axis=1)
    grad = np.cos(x @ freq.T + phase) @ freq
    slope = float(np.max(np.linalg.norm(grad, axis=1)))
    h *= L / slope if slope > 0 else 0.0
    return _graph_cloud(x, h, d, d + 1, half, {"generator": "lipschitz-graph", "lipschitz": L})


def tent(h: float = 0.2, count: int = 201, half: float = 1.0, seed: int = 0) -> PointCloud:
    """Graph of h (1 - |x|/half) over [-half, half]."""
    x = np.linspace(-half, half, count)
    return _graph_cloud(x[:, None], h * (1 - np.abs(x) / half), 1, 2, half, {"generator": "tent", "height": h})


def plane_with_hole(a: float = 0.25, count: int = 6561, half: float = 1.0, seed: int = 0) -> PointCloud:
    """Grid on the unit square of the xy-plane in R^3 minus the open disk of radius ``a``."""
    params = _grid(2, count, half)
    params = params[np.linalg.norm(params, axis=1) >= a]
    pts = np.column_stack([params, np.zeros(len(params))])
    return _finish(pts, 2, _axis_window(3, 2, half), {"generator": "plane-with-hole", "hole_radius": a})


def dihedral(theta: float = 0.3, count: int = 481, half: float = 1.0, n: int = 2, seed: int = 0) -> PointCloud:
    """Two half-planes meeting along the ridge at angle pi - 2 theta: graph of tan(theta) |x_1|."""
    d = n - 1
    x = _grid(d, count, half)
    return _graph_cloud(x, np.tan(theta) * np.abs(x[:, 0]), d, n, half, {"generator": "dihedral", "theta": theta})


def koch(angle: float = np.pi / 3, depth: int = 5, seed: int = 0) -> PointCloud:
    """Vertices of the depth-``depth`` Koch construction with bump angle ``angle`` on [0, 1]."""
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    c, s = np.cos(angle), np.sin(angle)
    for _ in range(depth):
        a, b = pts[:-1], pts[1:]
        v = b - a
        piece = v / (2 + 2 * c)
        tip = a + piece + np.column_stack([c * piece[:, 0] - s * piece[:, 1], s * piece[:, 0] + c * piece[:, 1]])
        mid = b - piece
        block = np.stack([a, a + piece, tip, mid], axis=1).reshape(-1, 2)
        pts = np.vstack([block, pts[-1:]])
    window = Box([0.0, -np.inf], [1.0, np.inf])
    dim = np.log(4) / np.log(2 + 2 * c)
    return _finish(pts, 1, window, {"generator": "koch", "angle": angle, "similarity_dimension": dim})


def perturbed_plane(eps: float = 0.01, count: int = 40401, half: float = 1.0, r0: float = 0.5, modes: int = 4, seed: int = 0) -> PointCloud:
    """Graph of eps * r0 * h over the square, h a unit-amplitude smooth sum of waves of length >= 2 r0."""
    rng = np.random.default_rng(seed)
    x = _grid(2, count, half)
    ang = rng.uniform(0, 2 * np.pi, modes)
    k = rng.uniform(0.5, 1.0, modes) * np.pi / r0
    freq = np.column_stack([k * np.cos(ang), k * np.sin(ang)])
    phase = rng.uniform(0, 2 * np.pi, modes)
    h = np.sin(x @ freq.T + phase).sum(axis=1) / modes
    return _graph_cloud(x, eps * r0 * h, 2, 3, half, {"generator": "perturbed-plane", "eps": eps, "r0": r0})


GENERATORS = {
    "plane": (plane, ["n", "d", "count", "half"]),
    "line": (line, ["count", "half", "n"]),
    "circle": (circle, ["radius", "count"]),
    "lipschitz-graph": (lipschitz_graph, ["L", "modes", "count", "half", "d"]),
    "tent": (tent, ["h", "count", "half"]),
    "plane-with-hole": (plane_with_hole, ["a", "count", "half"]),
    "dihedral": (dihedral, ["theta", "count", "half", "n"]),
    "koch": (koch, ["angle", "depth"]),
    "perturbed-plane": (perturbed_plane, ["eps", "count", "half", "r0", "modes"]),
}

_INTS = {"n", "d", "count", "modes", "depth"}


def parse_spec(spec: str) -> tuple[str, dict]:
    name, _, rest = spec.partition(":")
    name = name.strip()
    if name not in GENERATORS:
        raise ValueError(f"unknown generator {name!r}; choose from {', '.join(GENERATORS)}")
    order = GENERATORS[name][1]
    kwargs: dict = {}
    if rest.strip():
        for pos, part in enumerate(rest.split(",")):
            key, eq, val = part.partition("=")
            if not eq:
                if pos >= len(order):
                    raise ValueError(f"too many arguments for {name}")
                key, val = order[pos], key
            key = key.strip()
            if key not in order:
                raise ValueError(f"{name} has no parameter {key!r}")
            kwargs[key] = int(val) if key in _INTS else float(val)
    return name, kwargs


def generate(spec: str, seed: int = 0) -> PointCloud:
    name, kwargs = parse_spec(spec)
    cloud = GENERATORS[name][0](seed=seed, **kwargs)
    cloud.meta["spec"] = spec
    cloud.meta["seed"] = seed
    return cloud
