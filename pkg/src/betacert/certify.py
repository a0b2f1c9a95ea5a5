"""Multiscale flatness sums and the two-sided certificates built from them.

Two sums run over the cubes of a tree, truncated at the sample resolution
and restricted to cubes that meet the unit ball:

    beta side    1 + sum beta(C0 B_Q)^2 diam(Q)^d
    theta side   H + sum_{vartheta(3 B_Q) >= eps} diam(Q)^d

where H is a covering estimate of the d-measure of the sample. In net
mode the cubes are replaced by the net balls B(x, r_k) of a Christ tree
with weights r_k^d, and the theta side dilates by A instead of 3.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .beta import beta_content, check_exponent, vartheta
from .content import content, leaf_level
from .corona import beta_stopping_forest
from .geometry import Ball, Box, PointCloud
from .nets import CubeTree, build_dyadic_tree, build_tree

Array = NDArray[np.float64]

# plane search effort for each beta: seed planes only (an upper bound), a short polish, or a full search
REFINE = {"seeds": False, "light": "light", "full": True}


@dataclass
class CertifyParams:
    d: int
    p: float
    eps: float
    C0: float = 2.0
    A: float = 3.0
    mode: str = "dyadic"
    rho: float = 0.5
    dyadic_scale: float = 2.0
    net_scale: float = 1.0
    scale_cap: float = 1.0
    refine: str = "seeds"
    c_threshold: float = 0.05
    regularity_samples: int = 32
    regularity_scales: int = 6
    forest_eps: float | None = None
    seed: int = 0

    def validate(self, n: int) -> None:
        check_exponent(self.p, self.d)
        if not 0 < self.d < n:
            raise ValueError(f"need 0 < d < n, got d={self.d}, n={n}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.C0 < 1 or self.A < 1:
            raise ValueError("C0 and A must be at least 1")
        if self.refine not in REFINE:
            raise ValueError(f"refine must be one of {', '.join(REFINE)}, got {self.refine!r}")
        if self.mode not in ("dyadic", "net", "both"):
            raise ValueError(f"mode must be dyadic, net or both, got {self.mode!r}")


@dataclass
class Unit:
    """One summation term: a cube (dyadic mode) or a net ball (net mode)."""

    cube: int
    level: int
    center: Array
    radius: float
    weight: float


def _meets(tree: CubeTree, q: int, region: Ball | None) -> bool:
    """Does cube q hold a sample point in the region (default: the unit ball at the origin)?"""
    center = np.zeros(tree.points.shape[1]) if region is None else region.center
    radius = 1.0 if region is None else region.radius
    return bool(np.any(np.linalg.norm(tree.points[tree.members[q]] - center, axis=1) <= radius))


def summation_units(tree: CubeTree, d: int, mode: str, scale_cap: float = 1.0, region: Ball | None = None) -> list[Unit]:
    """Units with resolution <= scale <= scale_cap meeting the region, in index order."""
    out = []
    for q in range(tree.n_nodes):
        # the unit's own scale: cube side, or net-ball radius (side / 5)
        size = float(tree.side[q]) if mode == "dyadic" else float(tree.side[q]) / 5.0
        if size < tree.resolution * (1 - 1e-12) or size > scale_cap * (1 + 1e-12):
            continue
        if not _meets(tree, q, region):
            continue
        if mode == "dyadic":
            out.append(Unit(q, int(tree.level[q]), tree.center[q], float(tree.ball_radius[q]), float(tree.diam(q)) ** d))
        else:
            out.append(Unit(q, int(tree.level[q]), tree.center[q], size, size**d))
    return out


_STATE: dict = {}


def _init_worker(state: dict) -> None:
    _STATE.clear()
    _STATE.update(state)


def _beta_unit(u: Unit) -> float:
    st = _STATE
    return beta_content(st["tree"].points, Ball(u.center, st["C0"] * u.radius), st["d"], st["p"], st["tree"], refine=st["refine"]).value


def _theta_unit(u: Unit) -> tuple[float, str]:
    st = _STATE
    ball = Ball(u.center, st["factor"] * u.radius)
    if st["eps"] > 2:
        return 0.0, "normalization"
    tree = st["tree"]
    res = vartheta(
        tree.points,
        ball,
        st["d"],
        tree.resolution,
        st["window"],
        refine=True if st["exhaustive"] else "light",
        kd=st.setdefault("kd", cKDTree(tree.points)),
        threshold=None if st["exhaustive"] else st["eps"],
        slack=tree.resolution,
    )
    return res.value, res.info.get("decided", "search")


def _map_units(fn, units: list[Unit], state: dict, workers: int) -> list:
    """Evaluate fn over units in order, optionally in worker processes; results keep unit order."""
    if workers <= 1 or len(units) < 2 * workers:
        _init_worker(state)
        try:
            return [fn(u) for u in units]
        finally:
            _STATE.clear()
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(state,)) as pool:
        return list(pool.map(fn, units, chunksize=max(1, len(units) // (4 * workers))))


def beta_square_sum(
    tree: CubeTree,
    d: int,
    p: float,
    C0: float,
    mode: str = "dyadic",
    scale_cap: float = 1.0,
    refine: str = "seeds",
    workers: int = 1,
) -> tuple[float, list[dict]]:
    """sum over units of beta^{d,p}(C0 B)^2 times the unit weight, reduced in unit order."""
    check_exponent(p, d)
    refine = REFINE[refine] if isinstance(refine, str) else refine
    units = summation_units(tree, d, mode, scale_cap)
    state = {"tree": tree, "C0": C0, "d": d, "p": p, "refine": refine}
    rows = []
    total = 0.0
    for u, b in zip(units, _map_units(_beta_unit, units, state, workers)):
        term = b * b * u.weight
        total += term
        rows.append({"cube_id": u.cube, "level": u.level, "beta": b, "contribution": term, "weight": u.weight})
    return total, rows


def theta_sum(
    tree: CubeTree,
    d: int,
    eps: float,
    mode: str = "dyadic",
    A: float = 3.0,
    scale_cap: float = 1.0,
    window: Box | None = None,
    exhaustive: bool = False,
    workers: int = 1,
) -> tuple[float, list[dict]]:
    """sum of unit weights over units with vartheta(dilated ball) >= eps.

    The dilation is 3 in dyadic mode and A in net mode. Unless
    ``exhaustive``, each flatness evaluation stops once its comparison with
    eps is decided. Plane-side gaps below the sample resolution are ignored.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    units = summation_units(tree, d, mode, scale_cap)
    state = {"tree": tree, "d": d, "eps": eps, "factor": 3.0 if mode == "dyadic" else A, "window": window, "exhaustive": exhaustive}
    rows = []
    total = 0.0
    for u, (val, how) in zip(units, _map_units(_theta_unit, units, state, workers)):
        hit = val >= eps
        if hit:
            total += u.weight
        rows.append({"cube_id": u.cube, "level": u.level, "vartheta": val, "decided": how, "qualifies": hit, "theta_contribution": u.weight if hit else 0.0})
    return total, rows


def hausdorff_measure_estimate(tree: CubeTree, d: int, region: Ball | None = None) -> float:
    """sum of diam^d over occupied finest cubes (side >= resolution) meeting the region."""
    if len(tree.points) == 0:
        return 0.0
    L = leaf_level(tree)
    return float(sum(float(tree.diam(int(q))) ** d for q in tree.by_level[L] if _meets(tree, int(q), region)))


def lower_regularity_check(tree: CubeTree, d: int, samples: int = 32, scales: int = 6, r_max: float = 1.0, seed: int = 0) -> dict:
    """min over sampled centers x in E and radii r in [2 delta, r_max] of content(E ∩ B(x, r)) / r^d."""
    rng = np.random.default_rng(seed)
    m = len(tree.points)
    idx = np.sort(rng.choice(m, size=min(samples, m), replace=False))
    lo = 2 * tree.resolution
    if lo > r_max:
        return {"c": 0.0, "worst": None, "radii": []}
    radii = np.geomspace(lo, r_max, scales) if scales > 1 else np.array([lo])
    kd = cKDTree(tree.points)
    best = np.inf
    worst = None
    for i in idx:
        for r in radii:
            scope = np.asarray(kd.query_ball_point(tree.points[i], r), dtype=np.int64)
            val = content(scope, d, tree).value / r**d
            if val < best:
                best, worst = val, {"point": int(i), "radius": float(r)}
    return {"c": float(best), "worst": worst, "radii": radii.tolist()}


def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 else (0.0 if a == 0 else float("inf"))


@dataclass
class CertificateReport:
    params: dict
    sums: dict
    theorem1: dict
    theorem3: dict
    regularity_c: float
    breakdown: list[dict]
    warnings: list[str] = field(default_factory=list)
    forest: dict = field(default_factory=dict)
    cross_mode: dict | None = None
    truncation: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["cross_mode"] is None:
            del out["cross_mode"]
        return out

    def to_json(self) -> str:
        from .io import to_json

        return to_json(self.to_dict())


def _mode_sums(tree: CubeTree, cloud: PointCloud, params: CertifyParams, mode: str, workers: int) -> dict:
    bsum, brows = beta_square_sum(tree, params.d, params.p, params.C0, mode, params.scale_cap, params.refine, workers)
    tsum, trows = theta_sum(tree, params.d, params.eps, mode, params.A, params.scale_cap, cloud.window, workers=workers)
    rows = []
    for b, t in zip(brows, trows):
        rows.append(
            {
                "cube_id": b["cube_id"],
                "level": b["level"],
                "beta": b["beta"],
                "vartheta": t["vartheta"],
                "contribution": b["contribution"],
                "theta_contribution": t["theta_contribution"],
                "decided": t["decided"],
            }
        )
    return {"beta_square": bsum, "theta": tsum, "rows": rows, "hausdorff": hausdorff_measure_estimate(tree, params.d)}


def certify(cloud: PointCloud, params: CertifyParams, workers: int = 1) -> CertificateReport:
    """Both certificate directions for the sample inside the unit ball.

    ``workers`` caps the processes used for per-cube evaluations; the report
    does not depend on it.
    """
    params.validate(cloud.n)
    trees = {}
    if params.mode in ("dyadic", "both"):
        trees["dyadic"] = build_dyadic_tree(cloud, params.dyadic_scale)
    if params.mode in ("net", "both"):
        trees["net"] = build_tree(cloud, params.rho, params.net_scale)
    results = {m: _mode_sums(t, cloud, params, m, workers) for m, t in trees.items()}
    main = "dyadic" if "dyadic" in results else "net"
    tree, res = trees[main], results[main]
    H = res["hausdorff"]
    reg = lower_regularity_check(tree, params.d, params.regularity_samples, params.regularity_scales, seed=params.seed)
    warnings = []
    if reg["c"] < params.c_threshold:
        warnings.append(f"lower content regularity {reg['c']:.6g} is below the threshold {params.c_threshold:.6g}")
    beta_side = 1.0 + res["beta_square"]
    theta_side = H + res["theta"]
    # constructive side: the beta-sum stopping forest on the same betas
    betas = np.zeros(tree.n_nodes)
    for row in res["rows"]:
        betas[row["cube_id"]] = row["beta"]
    feps = params.forest_eps if params.forest_eps is not None else params.eps
    forest = beta_stopping_forest(tree, params.d, params.C0, feps, betas)
    mins = [q for reg_ in forest.regions for q, why in reg_.minimal.items() if why == "beta-sum"]
    forest_summary = {
        "eps": feps,
        "regions": len(forest.regions),
        "minimal_cubes": len(mins),
        "minimal_side_sum": float(sum(float(tree.side[q]) ** params.d for q in sorted(mins))),
    }
    cross = None
    if len(results) == 2:
        dy, nt = results["dyadic"], results["net"]
        cross = {
            "dyadic": {"beta_square": dy["beta_square"], "theta": dy["theta"], "hausdorff": dy["hausdorff"]},
            "net": {"beta_square": nt["beta_square"], "theta": nt["theta"], "hausdorff": nt["hausdorff"]},
            "beta_ratio": _ratio(1 + nt["beta_square"], 1 + dy["beta_square"]),
            "theta_side_ratio": _ratio(nt["hausdorff"] + nt["theta"], dy["hausdorff"] + dy["theta"]),
        }
    p_echo = asdict(params)
    p_echo["resolution"] = cloud.resolution
    p_echo["n"] = cloud.n
    levels = sorted({r["level"] for r in res["rows"]})
    return CertificateReport(
        params=p_echo,
        sums={"beta_square": res["beta_square"], "theta": res["theta"], "hausdorff": H, "one": 1.0},
        theorem1={"lhs": beta_side, "rhs": theta_side, "ratio": _ratio(beta_side, theta_side)},
        theorem3={"lhs": theta_side, "rhs": beta_side, "ratio": _ratio(theta_side, beta_side)},
        regularity_c=reg["c"],
        breakdown=res["rows"],
        warnings=warnings,
        forest=forest_summary,
        cross_mode=cross,
        truncation={"resolution": tree.resolution, "levels": levels, "mode": main, "cubes": len(res["rows"])},
    )
