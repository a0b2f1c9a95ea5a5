"""Iterated projection smoothing of a flat sheet toward a coherent plane field.

Stage k moves every vertex y of the current surface to

    sigma_k(y) = psi_k(y) y + sum_j theta_jk(y) proj_jk(y)

where proj_jk is orthogonal projection onto the plane attached to the
net point x_jk at scale r_k, theta_jk is a bump that equals 1 on
B(x_jk, 9 r_k) and vanishes off B(x_jk, 10 r_k), and psi_k collects the
bumps of an auxiliary net away from the main one. The bumps are
normalized to sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .beta import vartheta
from .geometry import AffinePlane, Ball, fit_plane_linf, plane_ball_samples, svd_plane
from .nets import CubeTree, greedy_net

Array = NDArray[np.float64]

FAITHFUL_RATIO = 10.0
DESK_RATIO = 2.0
LITERAL_WINDOW = 1e4


class PartitionError(RuntimeError):
    """Bumps fail to form a partition of unity at some vertex."""


class CoherenceError(ValueError):
    """A net point is not within twice the previous scale of the previous net."""


@dataclass
class CoherentNetSystem:
    radii: list[float]
    centers: list[Array]
    planes: list[list[AffinePlane]]
    base_plane: AffinePlane
    ratio: float
    report: dict = field(default_factory=dict)

    @property
    def stages(self) -> int:
        return len(self.radii) - 1

    def kd(self, k: int) -> cKDTree:
        cache = self.__dict__.setdefault("_kd", {})
        if k not in cache:
            cache[k] = cKDTree(self.centers[k])
        return cache[k]

    def plane_arrays(self, k: int) -> tuple[Array, Array]:
        cache = self.__dict__.setdefault("_pa", {})
        if k not in cache:
            cache[k] = (
                np.array([pl.base for pl in self.planes[k]]),
                np.array([pl.frame for pl in self.planes[k]]),
            )
        return cache[k]


@dataclass
class SurfaceMesh:
    vertices: Array
    faces: NDArray[np.int64]

    def to_obj(self) -> str:
        from .io import fmt

        lines = ["v " + " ".join(fmt(c) for c in v) for v in self.vertices]
        if self.faces.shape[1] == 3:
            lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.faces]
        else:
            lines += [f"l {a + 1} {b + 1}" for a, b in self.faces]
        return "\n".join(lines) + "\n"


@dataclass
class SigmaState:
    stage: int
    vertices: Array
    faces: NDArray[np.int64]
    params: Array
    log: list[dict] = field(default_factory=list)
    aux_points: Array | None = None


# ---------------------------------------------------------------- plane distances


def plane_pair_distance(P: AffinePlane, Q: AffinePlane, center: Array, radius: float) -> float:
    """Normalized two-sided distance of two planes inside B(center, radius)."""
    return max(_one_side(P, Q, center, radius), _one_side(Q, P, center, radius)) / radius


def _one_side(P: AffinePlane, Q: AffinePlane, center: Array, radius: float) -> float:
    c = P.project(center)
    rad2 = radius**2 - float(np.sum((c - center) ** 2))
    if rad2 < 0:
        return 0.0
    rad = np.sqrt(rad2)
    normal = Q.normal_frame
    G = normal @ P.frame.T
    v = normal @ (c - Q.base)
    if G.shape[0] == 1:
        return float(abs(v[0]) + rad * np.linalg.norm(G))
    if G.shape[1] == 1:
        g = G[:, 0]
        return float(max(np.linalg.norm(v + rad * g), np.linalg.norm(v - rad * g)))
    ang = np.linspace(0, 2 * np.pi, 721)
    dirs = np.column_stack([np.cos(ang), np.sin(ang)] + [np.zeros_like(ang)] * (G.shape[1] - 2))
    return float(np.max(np.linalg.norm(v + rad * dirs @ G.T, axis=1)))


def _pair_distance_batch(b1, F1, b2, F2, x, R):
    """Vectorized distance for codimension-one planes (hyperplanes)."""
    n1 = _hyper_normals(F1)
    n2 = _hyper_normals(F2)
    out = np.zeros(len(b1))
    for (ba, Fa, na), (bb, nb) in (((b1, F1, n1), (b2, n2)), ((b2, F2, n2), (b1, n1))):
        rel = x - ba
        c = x - np.sum(rel * na, axis=1)[:, None] * na
        rad2 = R**2 - np.sum((c - x) ** 2, axis=1)
        rad = np.sqrt(np.maximum(rad2, 0))
        v = np.sum((c - bb) * nb, axis=1)
        g = np.linalg.norm(np.einsum("pn,pdn->pd", nb, Fa), axis=1)
        side = np.where(rad2 >= 0, np.abs(v) + rad * g, 0.0)
        out = np.maximum(out, side)
    return out / R


def _hyper_normals(F: Array) -> Array:
    """Unit normals of hyperplanes given by (p, n-1, n) frames."""
    n = F.shape[2]
    if n == 2:
        t = F[:, 0, :]
        return np.column_stack([-t[:, 1], t[:, 0]])
    if n == 3:
        v = np.cross(F[:, 0, :], F[:, 1, :])
        return v / np.linalg.norm(v, axis=1)[:, None]
    out = []
    for fr in F:
        u, s, vt = np.linalg.svd(fr, full_matrices=True)
        out.append(vt[-1])
    return np.array(out)


# ---------------------------------------------------------------- net system


def stage_radii(r0: float, stages: int, ratio: float) -> list[float]:
    return [r0 * ratio**-k for k in range(stages + 1)]


def derive_net_system(
    points: Array,
    d: int,
    stages: int,
    ratio: float = FAITHFUL_RATIO,
    r0: float = 1.0,
    tree: CubeTree | None = None,
    planes: list[AffinePlane] | None = None,
    eps: float | None = None,
    fit: str = "svd",
    fit_factor: float = 2.0,
    base_plane: AffinePlane | None = None,
) -> CoherentNetSystem:
    """Nets x_jk (r_k-separated) with planes through them, validated for coherence.

    With a tree and per-cube planes, level k draws its candidates from the
    cube centers at the first tree level whose side is at most r_k and
    borrows those cubes' planes. Otherwise nets are greedy on the sample and
    planes are fitted to the sample in B(x_jk, fit_factor r_k).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    radii = stage_radii(r0, stages, ratio)
    kd = cKDTree(points)
    centers, plane_lists = [], []
    prev = None
    for k, r in enumerate(radii):
        if tree is not None and planes is not None:
            lev = next((s for s in range(tree.depth + 1) if tree.side[tree.by_level[s][0]] <= r), tree.depth)
            cubes = tree.by_level[lev]
            net = greedy_net(tree.center[cubes], r)
            cen = tree.center[cubes][net]
            pls = [planes[int(cubes[j])].through(c) for j, c in zip(net, cen)]
        else:
            net = greedy_net(points, r, prev)
            prev = net
            cen = points[net]
            pls = []
            for c in cen:
                near = points[kd.query_ball_point(c, fit_factor * r)]
                fitted = svd_plane(near, d) if fit == "svd" else fit_plane_linf(near, d)[0]
                pls.append(fitted.through(c))
        centers.append(cen)
        plane_lists.append(pls)
    if base_plane is None:
        base_plane = svd_plane(centers[0] if len(centers[0]) > d else points, d)
    system = CoherentNetSystem(radii, centers, plane_lists, base_plane, ratio)
    system.report = validate_net_system(system, eps)
    return system


def validate_net_system(system: CoherentNetSystem, eps: float | None = None) -> dict:
    sep_bad = []
    for k, cen in enumerate(system.centers):
        if len(cen) > 1:
            dist, _ = cKDTree(cen).query(cen, k=2)
            if np.min(dist[:, 1]) < system.radii[k] * (1 - 1e-9):
                sep_bad.append(k)
    for k in range(1, len(system.centers)):
        dist, _ = system.kd(k - 1).query(system.centers[k])
        bad = np.nonzero(dist > 2 * system.radii[k - 1])[0]
        if len(bad):
            j = int(bad[0])
            raise CoherenceError(f"net point {j} at level {k} ({system.centers[k][j].tolist()}) is {dist[j]:.6g} from level {k - 1}")
    report = {"separation_violations": sep_bad, "eps_violations": [], "eps_max": []}
    for k in range(len(system.centers)):
        vals = level_epsilons(system, k)
        report["eps_max"].append(float(vals.max()) if len(vals) else 0.0)
        if eps is not None:
            for j in np.nonzero(vals >= eps)[0]:
                report["eps_violations"].append({"level": k, "index": int(j), "value": float(vals[j]), "at": system.centers[k][j].tolist()})
    return report


def _ball_members(system: CoherentNetSystem, l: int, x: Array, radius: float) -> NDArray[np.int64]:
    cen = system.centers[l]
    cache = system.__dict__.setdefault("_bbox", {})
    if l not in cache:
        cache[l] = (cen.min(axis=0), cen.max(axis=0))
    lo, hi = cache[l]
    if np.linalg.norm(np.maximum(np.abs(x - lo), np.abs(x - hi))) <= radius:
        return np.arange(len(cen))
    return np.asarray(sorted(system.kd(l).query_ball_point(x, radius)), dtype=np.int64)


def _is_hyper(system: CoherentNetSystem) -> bool:
    return system.base_plane.n - system.base_plane.d == 1


def _normals(system: CoherentNetSystem, l: int) -> Array:
    """Unit normals of level-l hyperplanes, oriented along the base plane normal."""
    cache = system.__dict__.setdefault("_normals", {})
    if l not in cache:
        nrm = _hyper_normals(system.plane_arrays(l)[1])
        m = system.base_plane.normal_frame[0]
        cache[l] = nrm * np.where(nrm @ m < 0, -1.0, 1.0)[:, None]
    return cache[l]


def _extremes(system: CoherentNetSystem, l: int, idx: NDArray[np.int64]) -> NDArray[np.int64]:
    """Members of ``idx`` whose normals are extreme points of the set (gnomonic chart).

    Angles between two normal sets inside a small cap peak at a pair of
    extreme points, since the angle to a fixed direction has no interior
    maximum along a great-circle arc.
    """
    from scipy.spatial import ConvexHull, QhullError

    if len(idx) <= 3:
        return idx
    cache = system.__dict__.setdefault("_ext", {})
    key = (l, len(idx), hash(idx.tobytes()))
    if key in cache:
        return cache[key]
    nrm = _normals(system, l)[idx]
    m = system.base_plane.normal_frame[0]
    chart = (nrm / np.maximum(nrm @ m, 1e-9)[:, None]) @ system.base_plane.frame.T
    if chart.shape[1] == 1:
        out = idx[np.unique([np.argmin(chart[:, 0]), np.argmax(chart[:, 0])])]
    else:
        try:
            out = idx[np.sort(ConvexHull(chart, qhull_options="QJ").vertices)]
        except QhullError:
            out = idx
    cache[key] = out
    return out


def _pair_sup(system: CoherentNetSystem, k: int, js, l: int, is_, x: Array, R: float) -> tuple[float, float]:
    """Lower and upper bounds on sup over js x is_ of the plane distance at (x, R).

    For hyperplanes the lower bound is exact on extreme-normal pairs and the
    upper bound adds the worst offsets, dist(x, P) / R, to the largest sine
    between normals. Otherwise every pair is evaluated.
    """
    if len(js) == 0 or len(is_) == 0:
        return 0.0, 0.0
    b_k, F_k = system.plane_arrays(k)
    b_l, F_l = system.plane_arrays(l)
    if not _is_hyper(system):
        best = max(plane_pair_distance(system.planes[k][j], system.planes[l][i], x, R) for j in js for i in is_)
        return best, best
    jh, ih = _extremes(system, k, js), _extremes(system, l, is_)
    J, I = np.meshgrid(jh, ih, indexing="ij")
    J, I = J.ravel(), I.ravel()
    lower = float(np.max(_pair_distance_batch(b_k[J], F_k[J], b_l[I], F_l[I], np.broadcast_to(x, (len(J), len(x))), R)))
    cos = np.abs(np.sum(_normals(system, k)[J] * _normals(system, l)[I], axis=1))
    sine = float(np.sqrt(max(0.0, 1.0 - float(np.min(cos)) ** 2)))
    off_j = float(np.max(np.abs(np.sum((x - b_k[js]) * _normals(system, k)[js], axis=1))))
    off_i = float(np.max(np.abs(np.sum((x - b_l[is_]) * _normals(system, l)[is_], axis=1))))
    return lower, max(lower, sine + (off_j + off_i) / R)


def epsilon_numbers(system: CoherentNetSystem, k: int, x: Array, window: float = LITERAL_WINDOW) -> dict:
    """Compatibility numbers at ``x``.

    ``eps`` uses the literal window (upper bound; ``eps_lower`` is attained),
    ``eps_100`` a 100 r_l window, ``eps_prime`` the variant centered at the
    level-l net points; ``pairs`` counts the plane pairs engaged.
    """
    x = np.asarray(x, dtype=float)
    out = {"eps": 0.0, "eps_lower": 0.0, "eps_100": 0.0, "eps_prime": 0.0, "pairs": 0}
    js = _ball_members(system, k, x, 100 * system.radii[k])
    js10 = _ball_members(system, k, x, 10 * system.radii[k])
    for l in range(max(0, k - 2), min(system.stages, k + 2) + 1):
        r = system.radii[l]
        is_ = _ball_members(system, l, x, 100 * r)
        lo, up = _pair_sup(system, k, js, l, is_, x, window * r)
        out["eps_lower"] = max(out["eps_lower"], lo)
        out["eps"] = max(out["eps"], up)
        out["eps_100"] = max(out["eps_100"], _pair_sup(system, k, js, l, is_, x, 100 * r)[1])
        out["pairs"] += len(js) * len(is_)
        for i in _ball_members(system, l, x, 11 * r):
            P = system.planes[l][i]
            c = system.centers[l][i]
            for j in js10:
                out["eps_prime"] = max(out["eps_prime"], plane_pair_distance(system.planes[k][j], P, c, 100 * r))
    return out


def level_epsilons(system: CoherentNetSystem, k: int, window: float = LITERAL_WINDOW) -> Array:
    """Literal-window compatibility number (upper bound) at every level-k net point."""
    out = np.zeros(len(system.centers[k]))
    for a, x in enumerate(system.centers[k]):
        js = _ball_members(system, k, x, 100 * system.radii[k])
        for l in range(max(0, k - 2), min(system.stages, k + 2) + 1):
            r = system.radii[l]
            is_ = _ball_members(system, l, x, 100 * r)
            out[a] = max(out[a], _pair_sup(system, k, js, l, is_, x, window * r)[1])
    return out


# ---------------------------------------------------------------- sigma maps


def _smoothstep(t: Array) -> Array:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def _grid_mesh(plane: AffinePlane, center: Array, count: int, spacing: float) -> tuple[Array, NDArray[np.int64], Array]:
    d = plane.d
    ticks = (np.arange(count) - (count - 1) / 2) * spacing
    if d == 1:
        params = ticks[:, None]
        faces = np.column_stack([np.arange(count - 1), np.arange(1, count)])
    elif d == 2:
        U, V = np.meshgrid(ticks, ticks, indexing="ij")
        params = np.column_stack([U.ravel(), V.ravel()])
        idx = np.arange(count * count).reshape(count, count)
        a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
        c, e = idx[:-1, 1:].ravel(), idx[1:, 1:].ravel()
        faces = np.vstack([np.column_stack([a, b, e]), np.column_stack([a, e, c])])
    else:
        raise ValueError("meshes are built for d = 1 or 2")
    base = plane.project(center)
    return base + params @ plane.frame, faces, params


def sigma_step(state: SigmaState, system: CoherentNetSystem, k: int, chunk: int = 4000) -> SigmaState:
    """Apply sigma_k to every vertex of the current surface."""
    y = state.vertices
    r = system.radii[k]
    cen = system.centers[k]
    b_k, F_k = system.plane_arrays(k)
    vt = cKDTree(y)
    d_near, _ = system.kd(k).query(y)
    outside = np.nonzero(d_near > 9 * r)[0]
    aux = y[outside][greedy_net(y[outside], r / 2)] if len(outside) else np.empty((0, y.shape[1]))
    new = y.copy()
    moved = np.zeros(len(y), dtype=bool)
    weight_err = 0.0
    for lo in range(0, len(y), chunk):
        idx = np.arange(lo, min(lo + chunk, len(y)))
        sub = y[idx]
        pairs = cKDTree(sub).sparse_distance_matrix(system.kd(k), 10 * r, output_type="coo_matrix")
        row, col, dist = pairs.row, pairs.col, pairs.data
        # coincident points are dropped by the sparse matrix; restore them
        zero = np.nonzero(d_near[idx] == 0)[0]
        if len(zero):
            _, zc = system.kd(k).query(sub[zero])
            row = np.concatenate([row, zero])
            col = np.concatenate([col, zc])
            dist = np.concatenate([dist, np.zeros(len(zero))])
        phi = _smoothstep((10 * r - dist) / r)
        keep = phi > 0
        row, col, phi = row[keep], col[keep], phi[keep]
        total_j = np.bincount(row, weights=phi, minlength=len(idx))
        if len(aux):
            apairs = cKDTree(sub).sparse_distance_matrix(cKDTree(aux), r, output_type="coo_matrix")
            arow, adist = apairs.row, apairs.data
            zero = np.nonzero(cKDTree(aux).query(sub)[0] == 0)[0]
            arow = np.concatenate([arow, zero])
            adist = np.concatenate([adist, np.zeros(len(zero))])
            aphi = _smoothstep((r - adist) / (0.1 * r))
            total_aux = np.bincount(arow, weights=aphi, minlength=len(idx))
        else:
            total_aux = np.zeros(len(idx))
        total = total_j + total_aux
        if np.any(total <= 0):
            bad = idx[np.nonzero(total <= 0)[0][0]]
            raise PartitionError(f"no bump covers vertex {bad} at stage {k}")
        theta = phi / total[row]
        psi = total_aux / total
        weight_err = max(weight_err, float(np.max(np.abs(psi + np.bincount(row, weights=theta, minlength=len(idx)) - 1.0))))
        rel = sub[row] - b_k[col]
        coef = np.einsum("pn,pdn->pd", rel, F_k[col])
        proj = b_k[col] + np.einsum("pd,pdn->pn", coef, F_k[col])
        acc = psi[:, None] * sub
        np.add.at(acc, row, theta[:, None] * proj)
        has = total_j > 0
        new[idx[has]] = acc[has]
        moved[idx[has]] = True
    if weight_err > 1e-9:
        raise PartitionError(f"partition of unity off by {weight_err:.3g} at stage {k}")
    disp = np.linalg.norm(new - y, axis=1)
    entry = {
        "stage": k,
        "r": r,
        "max_displacement": float(disp.max()),
        "displacement_over_r": float(disp.max() / r),
        "moved_vertices": int(moved.sum()),
        "aux_points": int(len(aux)),
        "partition_error": weight_err,
    }
    return SigmaState(k, new, state.faces, state.params, state.log + [entry], aux)


# ---------------------------------------------------------------- diagnostics


def _point_triangle_distance(p: Array, a: Array, b: Array, c: Array) -> Array:
    """Distance from points p to triangles (a, b, c), all arrays of shape (m, 3)."""
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = np.sum(ab * ap, 1), np.sum(ac * ap, 1)
    bp = p - b
    d3, d4 = np.sum(ab * bp, 1), np.sum(ac * bp, 1)
    cp = p - c
    d5, d6 = np.sum(ab * cp, 1), np.sum(ac * cp, 1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0)
        w = np.where(denom != 0, vc / denom, 0)
    closest = a + v[:, None] * ab + w[:, None] * ac
    # regions outside the face: clamp to the nearest edge
    for s, e in ((a, b), (b, c), (a, c)):
        seg = e - s
        t = np.clip(np.sum((p - s) * seg, 1) / np.maximum(np.sum(seg * seg, 1), 1e-300), 0, 1)
        q = s + t[:, None] * seg
        inside = (va >= 0) & (vb >= 0) & (vc >= 0)
        closer = ~inside & (np.linalg.norm(p - q, axis=1) < np.linalg.norm(p - closest, axis=1))
        closest = np.where(closer[:, None], q, closest)
    return np.linalg.norm(p - closest, axis=1)


def _incidence(mesh: SurfaceMesh) -> NDArray[np.int64]:
    """Faces incident to each vertex, padded with -1."""
    cache = mesh.__dict__.setdefault("_inc", {})
    if "table" not in cache:
        F = mesh.faces
        vert = F.ravel()
        face = np.repeat(np.arange(len(F)), F.shape[1])
        order = np.argsort(vert, kind="stable")
        vert, face = vert[order], face[order]
        counts = np.bincount(vert, minlength=len(mesh.vertices))
        table = np.full((len(mesh.vertices), max(int(counts.max()), 1)), -1, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        table[vert, np.arange(len(vert)) - starts[vert]] = face
        cache["table"] = table
        cache["kd"] = cKDTree(mesh.vertices)
    return cache["table"]


def distance_to_mesh(points: Array, mesh: SurfaceMesh, candidates: int = 8) -> Array:
    """Distance from each point to the mesh, checking faces around the nearest vertices."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) == 0:
        return np.zeros(0)
    V, F = mesh.vertices, mesh.faces
    table = _incidence(mesh)
    _, near = mesh.__dict__["_inc"]["kd"].query(points, k=min(candidates, len(V)))
    near = near.reshape(len(points), -1)
    faces = table[near].reshape(len(points), -1)
    valid = faces >= 0
    rows = np.nonzero(valid)[0]
    fid = faces[valid]
    p = points[rows]
    tri = F[fid]
    if F.shape[1] == 3:
        dist = _point_triangle_distance(p, V[tri[:, 0]], V[tri[:, 1]], V[tri[:, 2]])
    else:
        a, b = V[tri[:, 0]], V[tri[:, 1]]
        seg = b - a
        t = np.clip(np.sum((p - a) * seg, 1) / np.maximum(np.sum(seg * seg, 1), 1e-300), 0, 1)
        dist = np.linalg.norm(p - (a + t[:, None] * seg), axis=1)
    out = np.full(len(points), np.inf)
    np.minimum.at(out, rows, dist)
    return out


def _mesh_bilateral(mesh: SurfaceMesh, sub: Array, plane: AffinePlane, ball: Ball, spacing: float) -> float:
    own = float(np.max(plane.dist(sub))) if len(sub) else 0.0
    far = float(np.max(distance_to_mesh(plane_ball_samples(plane, ball, spacing), mesh)))
    return max(own, far) / ball.radius


def flatness_profile(surface: Array | SurfaceMesh, d: int, centers: Array, scales, spacing: float) -> dict:
    """Bilateral flatness at every (center, scale) pair; max reported.

    For a mesh the plane is searched on the vertices and the plane-side
    distance is then measured to the triangulated surface, which gives an
    upper bound free of vertex spacing effects.
    """
    mesh = surface if isinstance(surface, SurfaceMesh) else None
    points = mesh.vertices if mesh is not None else np.atleast_2d(surface)
    kd = cKDTree(points)
    rows = []
    for ci, c in enumerate(np.atleast_2d(centers)):
        for s in scales:
            ball = Ball(c, s)
            res = vartheta(points, ball, d, spacing, kd=kd, refine="light")
            val = res.value
            if mesh is not None:
                sub = points[ball.contains(points)]
                val = min(_mesh_bilateral(mesh, sub, pl, ball, spacing) for pl in (res.plane, svd_plane(sub, d), fit_plane_linf(sub, d)[0]))
            rows.append({"center": ci, "scale": float(s), "vartheta": val})
    return {"grid": rows, "max": max((r["vartheta"] for r in rows), default=0.0)}


def local_graph_check(points: Array, x: Array, r: float, d: int, spacing: float) -> tuple[bool, float]:
    """Is the sample in B(x, r) a single-valued graph over its fitted plane?

    Two points whose projections are within spacing/2 of each other but whose
    heights differ by more than spacing/2 break the graph property. The
    Lipschitz estimate is the largest slope among pairs with projected gap in
    [spacing/2, 4 spacing].
    """
    points = np.atleast_2d(points)
    sub = points[Ball(x, r).contains(points)]
    if len(sub) <= d + 1:
        return True, 0.0
    plane = svd_plane(sub, d)
    u = plane.coords(sub)
    h = plane.offsets(sub) @ plane.normal_frame.T
    kd = cKDTree(u)
    close = kd.query_pairs(spacing / 2, output_type="ndarray")
    if len(close):
        gap = np.linalg.norm(h[close[:, 0]] - h[close[:, 1]], axis=1)
        if np.any(gap > spacing / 2):
            return False, float("inf")
    pairs = kd.query_pairs(4 * spacing, output_type="ndarray")
    if len(pairs) == 0:
        return True, 0.0
    du = np.linalg.norm(u[pairs[:, 0]] - u[pairs[:, 1]], axis=1)
    dh = np.linalg.norm(h[pairs[:, 0]] - h[pairs[:, 1]], axis=1)
    ok = du >= spacing / 2
    return True, float(np.max(dh[ok] / du[ok])) if np.any(ok) else 0.0


def big_projection_check(points: Array, ball: Ball, plane: AffinePlane, spacing: float) -> tuple[bool, float]:
    """Do projections of E ∩ B cover a spacing-net of the half-radius disk on the plane?"""
    sub = points[ball.contains(points)]
    proj = plane.project(sub)
    half = Ball(plane.project(ball.center), ball.radius / 2)
    disk = plane_ball_samples(plane, half, spacing)
    gap = float(np.max(cKDTree(proj).query(disk)[0]))
    return gap <= spacing, gap


def holder_fit(params: Array, images: Array, rng: np.random.Generator, pairs: int = 2000) -> dict:
    """Smallest tau with 1/4 |x-y|^(1+tau) <= |g x - g y| <= 10 |x-y|^(1-tau) on sampled pairs."""
    m = len(params)
    a = rng.integers(0, m, pairs)
    b = rng.integers(0, m, pairs)
    keep = a != b
    a, b = a[keep], b[keep]
    dx = np.linalg.norm(params[a] - params[b], axis=1)
    dg = np.linalg.norm(images[a] - images[b], axis=1)
    ldx = np.log(dx)
    tau = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        # lower: (1+tau) log dx <= log(4 dg); upper: log(dg/10) <= (1-tau) log dx
        low = np.where(ldx < 0, np.log(4 * dg) / ldx - 1, np.where(ldx > 0, -np.inf, -np.inf))
        up = np.where(ldx < 0, 1 - np.log(dg / 10) / ldx, -np.inf)
    need = np.concatenate([low[np.isfinite(low)], up[np.isfinite(up)]])
    if len(need):
        tau = max(0.0, float(need.max()))
    lower_ok = bool(np.all(0.25 * dx ** (1 + tau) <= dg * (1 + 1e-12)))
    upper_ok = bool(np.all(dg <= 10 * dx ** (1 - tau) * (1 + 1e-12)))
    lip = float(max(np.max(dg / dx), np.max(dx / dg)))
    return {"tau": tau, "lower_ok": lower_ok, "upper_ok": upper_ok, "pairs": int(len(a)), "bilipschitz_ratio": lip}


def tangent_variation(mesh: SurfaceMesh, r: float) -> float:
    """Largest (normal angle) * r / (center distance) over adjacent triangle pairs."""
    V, F = mesh.vertices, mesh.faces
    if F.shape[1] != 3:
        seg = V[F[:, 1]] - V[F[:, 0]]
        t = seg / np.linalg.norm(seg, axis=1)[:, None]
        mid = (V[F[:, 1]] + V[F[:, 0]]) / 2
        s = np.clip(np.abs(np.sum(t[1:] * t[:-1], 1)), 0, 1)
        ang = np.sqrt(1 - s**2)
        return float(np.max(ang * r / np.linalg.norm(mid[1:] - mid[:-1], axis=1)))
    nrm = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    cen = V[F].mean(axis=1)
    edges = {}
    pairs = []
    for f, tri in enumerate(F):
        for e in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[0], tri[2])):
            key = (min(e), max(e))
            if key in edges:
                pairs.append((edges[key], f))
            else:
                edges[key] = f
    pairs = np.array(pairs)
    s = np.clip(np.abs(np.sum(nrm[pairs[:, 0]] * nrm[pairs[:, 1]], 1)), 0, 1)
    ang = np.sqrt(np.maximum(1 - s**2, 0))
    dist = np.linalg.norm(cen[pairs[:, 0]] - cen[pairs[:, 1]], axis=1)
    return float(np.max(ang * r / dist))


def run_david_toro(
    system: CoherentNetSystem,
    k_max: int | None = None,
    count: int = 41,
    center: Array | None = None,
    seed: int = 0,
    profile_scales: int = 3,
    patches: int = 9,
) -> tuple[SurfaceMesh, dict]:
    """Compose sigma_1 .. sigma_kmax on a grid window of the base plane.

    The window has ``count`` vertices per side at spacing r_kmax / 4.
    """
    k_max = system.stages if k_max is None else k_max
    if system.report.get("separation_violations"):
        raise CoherenceError("net system is not separated")
    r_last = system.radii[k_max]
    spacing = r_last / 4
    P0 = system.base_plane
    center = P0.base if center is None else np.asarray(center, dtype=float)
    verts, faces, params = _grid_mesh(P0, center, count, spacing)
    state = SigmaState(0, verts, faces, params)
    for k in range(1, k_max + 1):
        state = sigma_step(state, system, k)
    mesh = SurfaceMesh(state.vertices, faces)
    rng = np.random.default_rng(seed)
    eps_max = [float(v) for v in system.report.get("eps_max", [])]
    stages = []
    for entry in state.log:
        k = entry["stage"]
        e = eps_max[k] if k < len(eps_max) else float("nan")
        stages.append(dict(entry, eps_max=e, C=entry["max_displacement"] / (e * entry["r"]) if e > 0 else 0.0))
    half = (count - 1) / 2 * spacing
    # net points of the last stage whose projection lies well inside the window
    inner = half - 2 * r_last
    last = system.centers[k_max]
    loc = P0.coords(last) - P0.coords(center)
    keep = np.all(np.abs(loc) <= inner, axis=1) if inner > 0 else np.zeros(len(last), dtype=bool)
    net_dist = distance_to_mesh(last[keep], mesh) if np.any(keep) else np.zeros(0)
    # flatness and graph checks on interior vertices only
    interior = np.nonzero(np.all(np.abs(params) <= half / 2, axis=1))[0]
    picks = interior[rng.choice(len(interior), size=min(patches, len(interior)), replace=False)] if len(interior) else np.zeros(0, dtype=int)
    scales = [0.45 * half * 0.5**i for i in range(profile_scales)]
    prof = flatness_profile(mesh, P0.d, mesh.vertices[picks], scales, spacing)
    graphs = []
    for v in picks:
        ok, lip = local_graph_check(mesh.vertices, mesh.vertices[v], min(r_last * 2, half / 2), P0.d, spacing)
        graphs.append({"vertex": int(v), "is_graph": ok, "lipschitz": lip})
    holder = holder_fit(params @ P0.frame, mesh.vertices, rng)
    diag = {
        "radii": system.radii[: k_max + 1],
        "ratio": system.ratio,
        "spacing": spacing,
        "vertex_count": int(len(verts)),
        "stages": stages,
        "net_to_mesh_max": float(net_dist.max()) if len(net_dist) else 0.0,
        "net_points_checked": int(len(net_dist)),
        "flatness": prof,
        "graph_checks": graphs,
        "holder": holder,
        "tangent_variation": tangent_variation(mesh, r_last),
        "eps_max": eps_max,
    }
    return mesh, diag


def diagnostics_json(diag: dict) -> str:
    from .io import to_json

    return to_json(diag)
