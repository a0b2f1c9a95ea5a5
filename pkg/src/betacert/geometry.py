"""Planes, balls, distances, angles and minimum-width plane fitting."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import null_space
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.distance import pdist

Array = NDArray[np.float64]

ORTHO_TOL = 1e-12
# exhaustive subset enumeration is capped so small inputs stay fast
MAX_SUBSET_CANDIDATES = 20000


def _orthonormalize(vectors: Array) -> Array:
    """Row-orthonormalize with a deterministic sign convention."""
    q, r = np.linalg.qr(np.asarray(vectors, dtype=float).T)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return (q * signs).T


@dataclass(frozen=True, eq=False)
class AffinePlane:
    """Affine d-plane ``base + span(frame)`` in R^n.

    ``frame`` holds d orthonormal row vectors.
    """

    base: Array
    frame: Array

    def __post_init__(self) -> None:
        base = np.asarray(self.base, dtype=float).reshape(-1)
        frame = np.atleast_2d(np.asarray(self.frame, dtype=float))
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "frame", frame)
        if frame.shape[1] != base.shape[0]:
            raise ValueError("frame and base dimensions disagree")
        d, n = frame.shape
        if not 0 < d < n:
            raise ValueError(f"need 0 < d < n, got d={d}, n={n}")
        gram = frame @ frame.T
        if np.max(np.abs(gram - np.eye(d))) > ORTHO_TOL:
            raise ValueError("frame is not orthonormal")

    @classmethod
    def from_span(cls, base: Array, vectors: Array) -> "AffinePlane":
        return cls(np.asarray(base, dtype=float), _orthonormalize(vectors))

    @property
    def d(self) -> int:
        return self.frame.shape[0]

    @property
    def n(self) -> int:
        return self.frame.shape[1]

    @property
    def normal_frame(self) -> Array:
        """Orthonormal rows spanning the orthogonal complement."""
        return null_space(self.frame).T

    def coords(self, x: Array) -> Array:
        return (np.asarray(x, dtype=float) - self.base) @ self.frame.T

    def project(self, x: Array) -> Array:
        return self.base + self.coords(x) @ self.frame

    def offsets(self, x: Array) -> Array:
        """Component of ``x - base`` orthogonal to the plane."""
        rel = np.asarray(x, dtype=float) - self.base
        return rel - (rel @ self.frame.T) @ self.frame

    def dist(self, x: Array) -> Array:
        return np.linalg.norm(self.offsets(x), axis=-1)

    def through(self, point: Array) -> "AffinePlane":
        """Parallel plane through ``point``."""
        return AffinePlane(np.asarray(point, dtype=float), self.frame)

    def to_dict(self) -> dict:
        return {"base": self.base.tolist(), "frame": self.frame.tolist()}


@dataclass(frozen=True, eq=False)
class Ball:
    center: Array
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    def contains(self, x: Array) -> NDArray[np.bool_]:
        return np.linalg.norm(np.asarray(x, dtype=float) - self.center, axis=-1) <= self.radius

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)


@dataclass(frozen=True, eq=False)
class Cylinder:
    """The set {z + w : z in P, |z - center| <= r, w perpendicular to P, |w| <= r}."""

    center: Array
    plane: AffinePlane
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if not self.radius > 0:
            raise ValueError("cylinder radius must be positive")
        if float(self.plane.dist(self.center)) > 1e-9 * self.radius:
            raise ValueError("cylinder center must lie on its plane")

    def contains(self, x: Array) -> NDArray[np.bool_]:
        rel = np.asarray(x, dtype=float) - self.center
        along = rel @ self.plane.frame.T
        across = rel - along @ self.plane.frame
        return (np.linalg.norm(along, axis=-1) <= self.radius) & (
            np.linalg.norm(across, axis=-1) <= self.radius
        )


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box; infinite bounds are allowed."""

    lo: Array
    hi: Array

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float).reshape(-1))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float).reshape(-1))

    def contains(self, x: Array) -> NDArray[np.bool_]:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite sample of a d-dimensional set in R^n at resolution ``resolution``.

    ``window`` optionally marks the region where the sample is known to
    represent the underlying set; plane-side distance sups are taken only
    inside it.
    """

    points: Array
    d: int
    resolution: float
    window: Box | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if pts.shape[0] < 1:
            raise ValueError("point cloud is empty")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud has non-finite coordinates")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if not 0 < self.d < pts.shape[1]:
            raise ValueError(f"need 0 < d < n, got d={self.d}, n={pts.shape[1]}")

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


def nearest_neighbor_resolution(points: Array) -> float:
    """Largest nearest-neighbour distance in the sample."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return 1.0
    dist, _ = cKDTree(points).query(points, k=2)
    res = float(np.max(dist[:, 1]))
    return res if res > 0 else 1.0


def dist_to_plane(x: Array, plane: AffinePlane) -> Array:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != plane.n:
        raise ValueError("dimension mismatch between point and plane")
    out = plane.dist(x)
    return float(out) if out.ndim == 0 else out


def plane_angle(p1: AffinePlane, p2: AffinePlane) -> float:
    """Sine of the largest principal angle between the direction spaces.

    Equals the normalized Hausdorff distance between the unit-ball slices
    of the two planes once both are translated to the origin.
    """
    if p1.n != p2.n or p1.d != p2.d:
        raise ValueError("planes must share d and n")
    residual = p1.frame - (p1.frame @ p2.frame.T) @ p2.frame
    return float(min(np.linalg.norm(residual, 2), 1.0))


def plane_ball_samples(plane: AffinePlane, ball: Ball, spacing: float) -> Array:
    """Grid samples of ``plane`` inside ``ball`` (rim included)."""
    center = plane.project(ball.center)
    h2 = float(np.sum((center - ball.center) ** 2))
    rad2 = ball.radius**2 - h2
    if rad2 < 0:
        return np.empty((0, plane.n))
    rad = np.sqrt(rad2)
    d = plane.d
    steps = max(int(np.ceil(rad / spacing)), 1)
    ticks = np.linspace(-rad, rad, 2 * steps + 1)
    grid = np.stack(np.meshgrid(*([ticks] * d), indexing="ij"), axis=-1).reshape(-1, d)
    grid = grid[np.linalg.norm(grid, axis=1) <= rad]
    if d == 1:
        rim = np.array([[-rad], [rad]])
    elif d == 2:
        count = max(int(np.ceil(2 * np.pi * rad / spacing)), 8)
        ang = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        rim = rad * np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        rim = np.empty((0, d))
    local = np.vstack([grid, rim])
    return center + local @ plane.frame


def one_sided_sup(source: Array, target: Array | AffinePlane) -> float:
    """sup over ``source`` of the distance to ``target``."""
    if len(source) == 0:
        return 0.0
    if isinstance(target, AffinePlane):
        return float(np.max(target.dist(source)))
    dist, _ = cKDTree(np.asarray(target, dtype=float)).query(source)
    return float(np.max(dist))


def set_dist_dB(
    E: Array,
    F: Array | AffinePlane,
    ball: Ball,
    spacing: float,
    window: Box | None = None,
    tree_E: cKDTree | None = None,
) -> float:
    """Normalized two-sided distance of ``E`` and ``F`` inside ``ball``.

    ``E`` (and ``F`` when it is a point set) are full samples; the sups run
    over their parts inside the ball, the distances to the whole other set.
    A plane ``F`` is sampled at ``spacing``.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    E_in = E[ball.contains(E)]
    if isinstance(F, AffinePlane):
        F_in = plane_ball_samples(F, ball, spacing)
        if window is not None and len(F_in):
            F_in = F_in[window.contains(F_in)]
    else:
        F = np.atleast_2d(np.asarray(F, dtype=float))
        F_in = F[ball.contains(F)]
    if len(E_in) == 0 or len(F_in) == 0:
        raise ValueError("both sets must meet the ball")
    first = one_sided_sup(E_in, F)
    if tree_E is None:
        tree_E = cKDTree(E)
    second = float(np.max(tree_E.query(F_in)[0]))
    return max(first, second) / ball.radius


def point_diameter(points: Array) -> float:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m = len(points)
    if m < 2:
        return 0.0
    if m <= 256:
        return float(np.max(pdist(points)))
    centered = points - points.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(s > 1e-12 * max(s[0], 1e-300)))
    if rank <= 1:
        proj = centered @ vt[0]
        return float(proj.max() - proj.min())
    proj = centered @ vt[:rank].T
    try:
        hull = ConvexHull(proj)
        verts = proj[hull.vertices]
    except QhullError:
        verts = proj
    return float(np.max(pdist(verts)))


def eta(X: Array) -> float:
    """Affine-independence quality of d+1 points.

    The smallest distance from a point to the affine span of the others,
    divided by the diameter.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) < 2:
        raise ValueError("need at least two points")
    diam = float(np.max(pdist(X)))
    if diam == 0:
        raise ValueError("points coincide")
    worst = np.inf
    for i in range(len(X)):
        rest = np.delete(X, i, axis=0)
        rel = X[i] - rest[0]
        dirs = rest[1:] - rest[0]
        if len(dirs):
            u, s, vt = np.linalg.svd(dirs, full_matrices=False)
            basis = vt[s > 1e-12 * diam]
            rel = rel - (rel @ basis.T) @ basis
        worst = min(worst, float(np.linalg.norm(rel)))
    if worst <= 1e-12 * diam:
        return 0.0
    return worst / diam


# ---------------------------------------------------------------- fitting


def _min_enclosing_circle(pts: Array) -> tuple[Array, float]:
    """Smallest enclosing circle of planar points (incremental algorithm)."""
    rng = np.random.default_rng(0)
    p = pts[rng.permutation(len(pts))]

    def circle2(a, b):
        c = (a + b) / 2
        return c, float(np.linalg.norm(a - c))

    def circle3(a, b, c):
        ax, ay = a
        bx, by = b
        cx, cy = c
        den = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        if abs(den) < 1e-300:
            cands = [circle2(a, b), circle2(a, c), circle2(b, c)]
            return max(cands, key=lambda t: t[1])
        ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / den
        uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / den
        cen = np.array([ux, uy])
        return cen, float(np.linalg.norm(a - cen))

    def inside(c, r, q):
        return np.linalg.norm(q - c) <= r * (1 + 1e-12) + 1e-15

    c, r = p[0].copy(), 0.0
    for i in range(1, len(p)):
        if inside(c, r, p[i]):
            continue
        c, r = p[i].copy(), 0.0
        for j in range(i):
            if inside(c, r, p[j]):
                continue
            c, r = circle2(p[i], p[j])
            for k in range(j):
                if not inside(c, r, p[k]):
                    c, r = circle3(p[i], p[j], p[k])
    return c, r


def min_enclosing_ball(pts: Array) -> tuple[Array, float]:
    """Center and radius of the smallest ball containing ``pts``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    k = pts.shape[1]
    if len(pts) == 1:
        return pts[0].copy(), 0.0
    if k == 1:
        lo, hi = pts.min(), pts.max()
        return np.array([(lo + hi) / 2]), float(hi - lo) / 2
    if k == 2:
        if len(pts) > 8:
            try:
                pts = pts[ConvexHull(pts).vertices]
            except QhullError:
                pass
        return _min_enclosing_circle(pts)
    # general codimension: epigraph form, solved by SLSQP
    c0 = pts.mean(axis=0)
    r0 = float(np.max(np.sum((pts - c0) ** 2, axis=1)))
    res = minimize(
        lambda z: z[-1],
        np.append(c0, r0),
        constraints=[{"type": "ineq", "fun": lambda z: z[-1] - np.sum((pts - z[:-1]) ** 2, axis=1)}],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )
    c = res.x[:-1]
    return c, float(np.sqrt(np.max(np.sum((pts - c) ** 2, axis=1))))


def slab_halfwidth(points: Array, frame: Array) -> tuple[float, Array]:
    """Smallest sup-distance from ``points`` to a plane with direction ``frame``.

    Returns the half-width and a base point of an optimal plane.
    """
    normal = null_space(frame).T
    perp = points @ normal.T
    center, rad = min_enclosing_ball(perp)
    return rad, center @ normal


def _chart(frame: Array, normal: Array, params: Array) -> Array:
    d, k = frame.shape[0], normal.shape[0]
    a = params.reshape(d, k)
    return _orthonormalize(frame + a @ normal)


def _complete_frame(vectors: Array, d: int, n: int) -> Array:
    """Orthonormal d-frame containing the span of ``vectors`` (if rank allows)."""
    vectors = np.atleast_2d(vectors)
    if vectors.size:
        _, s, vt = np.linalg.svd(vectors, full_matrices=False)
        scale = s[0] if len(s) and s[0] > 0 else 1.0
        basis = vt[s > 1e-12 * scale][:d]
    else:
        basis = np.empty((0, n))
    if len(basis) < d:
        extra = null_space(basis).T if len(basis) else np.eye(n)
        basis = np.vstack([basis, extra[: d - len(basis)]])
    return _orthonormalize(basis)


def svd_plane(points: Array, d: int) -> AffinePlane:
    """Least-squares d-plane through the centroid."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    c = points.mean(axis=0)
    return AffinePlane(c, _complete_frame(points - c, d, points.shape[1]))


def subset_frames(points: Array, d: int, limit: int = MAX_SUBSET_CANDIDATES):
    """Direction frames of planes through (d+1)-point subsets, in index order."""
    n = points.shape[1]
    for count, combo in enumerate(itertools.combinations(range(len(points)), d + 1)):
        if count >= limit:
            return
        sub = points[list(combo)]
        dirs = sub[1:] - sub[0]
        _, s, vt = np.linalg.svd(dirs, full_matrices=False)
        if s[-1] <= 1e-12 * max(s[0], 1e-300):
            continue
        yield _orthonormalize(vt[:d])


def _exact_line_fit_2d(points: Array) -> tuple[AffinePlane, float] | None:
    try:
        hull = ConvexHull(points)
    except QhullError:
        return None
    verts = points[hull.vertices]
    best = None
    for i in range(len(verts)):
        a, b = verts[i], verts[(i + 1) % len(verts)]
        edge = b - a
        norm = np.linalg.norm(edge)
        if norm == 0:
            continue
        u = edge / norm
        nrm = np.array([-u[1], u[0]])
        h = verts @ nrm
        width = float(h.max() - h.min())
        if best is None or width < best[1] - 1e-12 * max(width, 1e-300):
            base = a + ((h.max() + h.min()) / 2 - a @ nrm) * nrm
            best = (AffinePlane(base, u[None, :]), width)
    return best


def fit_plane_linf(points: Array, d: int, refine: bool = True) -> tuple[AffinePlane, float]:
    """Plane minimizing the sup distance to ``points``; returns (plane, width).

    ``width`` is twice the sup distance. Lines in the plane are solved
    exactly from hull edges; otherwise an SVD start (plus subset-spanned
    planes for small inputs) is refined by Nelder-Mead over the direction.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m, n = points.shape
    if m == 0:
        raise ValueError("no points to fit")
    if not 0 < d < n:
        raise ValueError("need 0 < d < n")
    centered = points - points.mean(axis=0)
    scale = float(np.max(np.linalg.norm(centered, axis=1))) if m > 1 else 0.0
    if m <= d + 1 or scale == 0.0:
        frame = _complete_frame(points[1:] - points[0], d, n)
        return AffinePlane(points[0], frame), 0.0
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if np.sum(s > 1e-12 * s[0]) <= d:
        frame = _complete_frame(centered, d, n)
        plane = AffinePlane(points.mean(axis=0), frame)
        return plane, 2.0 * float(np.max(plane.dist(points)))
    if n == 2 and d == 1:
        exact = _exact_line_fit_2d(points)
        if exact is not None:
            return exact

    candidates = [_orthonormalize(vt[:d])]
    if m <= 50 and n <= 3:
        candidates.extend(subset_frames(points, d))
    scored = []
    for idx, frame in enumerate(candidates):
        rad, _ = slab_halfwidth(points, frame)
        scored.append((rad, idx, frame))
    scored.sort(key=lambda t: (t[0], t[1]))
    best_rad, best_idx, best_frame = scored[0]
    if refine:
        for rad0, idx, frame in scored[:3]:
            frame_r, rad_r = _refine_direction(points, frame)
            if rad_r < best_rad - 1e-12 * scale or (abs(rad_r - best_rad) <= 1e-12 * scale and idx < best_idx):
                best_rad, best_idx, best_frame = rad_r, idx, frame_r
    rad, base = slab_halfwidth(points, best_frame)
    return AffinePlane(base, best_frame), 2.0 * rad


def _refine_direction(points: Array, frame: Array) -> tuple[Array, float]:
    current = frame
    best = slab_halfwidth(points, frame)[0]
    for step in (0.05, 0.005):
        normal = null_space(current).T

        def objective(params, frame=current, normal=normal):
            return slab_halfwidth(points, _chart(frame, normal, params))[0]

        k = current.shape[0] * normal.shape[0]
        simplex = np.vstack([np.zeros(k), step * np.eye(k)])
        res = minimize(
            objective,
            np.zeros(k),
            method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": 1e-11, "fatol": 1e-14, "maxiter": 4000},
        )
        if res.fun < best:
            best = float(res.fun)
            current = _chart(current, normal, res.x)
    return current, best
