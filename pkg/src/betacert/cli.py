"""Command-line front end.

Every command reads a sample from ``--in`` (CSV or JSON array of arrays) or
builds one with ``--gen name:args`` and writes deterministic outputs for a
given seed. Exit codes: 2 invalid configuration, 3 unreadable input,
4 failure inside a computation.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import io
from .geometry import Ball, PointCloud

EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_COMPUTE = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(src: str | None, fmt_name: str | None, gen: str | None, seed: int, d: int | None, resolution: float | None) -> PointCloud:
    from .generators import generate

    if (src is None) == (gen is None):
        _fail(EXIT_CONFIG, "give exactly one of --in and --gen")
    if gen is not None:
        try:
            cloud = generate(gen, seed)
        except (TypeError, ValueError) as err:
            _fail(EXIT_CONFIG, f"generator: {err}")
        if d is not None and d != cloud.d:
            _fail(EXIT_CONFIG, f"--d {d} disagrees with the generator's dimension {cloud.d}")
        if resolution is not None:
            cloud = PointCloud(cloud.points, cloud.d, resolution, cloud.window, cloud.meta)
        return cloud
    if d is None:
        _fail(EXIT_CONFIG, "--d is required with --in")
    try:
        return io.ingest(src, d, resolution, fmt_name)
    except io.InputError as err:
        _fail(EXIT_INPUT, str(err))
    except (OSError, ValueError) as err:
        _fail(EXIT_INPUT, str(err))


def _require(cond: bool, constraint: str) -> None:
    if not cond:
        _fail(EXIT_CONFIG, f"constraint violated: {constraint}")


def _check_p(p: float, d: int) -> None:
    from .beta import p_limit

    _require(1 <= p < p_limit(d), f"1 <= p < p(d) = {p_limit(d)} (got p={p}, d={d})")


def source_options(fn):
    opts = [
        click.option("--in", "src", type=click.Path(dir_okay=False), help="CSV or JSON array-of-arrays sample."),
        click.option("--format", "fmt_name", type=click.Choice(["csv", "json"]), help="Input format (default: from suffix)."),
        click.option("--gen", help="Generator spec, e.g. perturbed-plane:0.01."),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--d", type=int, help="Dimension of the set (required with --in)."),
        click.option("--resolution", type=float, help="Override the sample resolution."),
        click.option("--threads", type=int, default=1, show_default=True, help="Worker cap; outputs do not depend on it."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _guard(fn):
    """Map computation errors to the computation exit code."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SystemExit:
            raise
        except click.ClickException:
            raise
        except Exception as err:  # noqa: BLE001
            _fail(EXIT_COMPUTE, f"{type(err).__name__}: {err}")

    return wrapper


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Multiscale flatness, cube trees, stopping-time regions and certificates for point samples."""


# ---------------------------------------------------------------- profile helpers


def _beta_profile(cloud: PointCloud, tree, d: int, p: float, C0: float, workers: int = 1) -> list[dict]:
    from scipy.spatial import cKDTree

    from .beta import beta_content, beta_inf, vartheta
    from .certify import summation_units

    kd = cKDTree(cloud.points)
    rows = []
    for u in summation_units(tree, d, "dyadic" if tree.mode == "dyadic" else "net"):
        ball = Ball(u.center, C0 * u.radius)
        bi = beta_inf(cloud.points, ball, d, refine=False).value
        bp = beta_content(cloud.points, ball, d, p, tree, refine=False).value
        th = vartheta(cloud.points, Ball(u.center, 3 * u.radius), d, tree.resolution, cloud.window, refine=False, kd=kd, slack=tree.resolution).value
        rows.append({"level": u.level, "cube_id": u.cube, "beta_inf": bi, "beta_p": bp, "vartheta": th})
    return rows


PROFILE_COLUMNS = ["level", "cube_id", "beta_inf", "beta_p", "vartheta"]


def _certify_params(d, p, eps, C0, A, mode, refine, seed, c_threshold):
    from .certify import CertifyParams

    _check_p(p, d)
    _require(eps > 0, "eps > 0")
    _require(C0 >= 1, "C0 >= 1")
    _require(A >= 1, "A >= 1")
    return CertifyParams(d=d, p=p, eps=eps, C0=C0, A=A, mode=mode, refine=refine, seed=seed, c_threshold=c_threshold)


def certify_options(fn):
    opts = [
        click.option("--p", type=float, default=2.0, show_default=True),
        click.option("--eps", type=float, required=True, help="Flatness threshold (never defaulted)."),
        click.option("--C0", "C0", type=float, default=2.0, show_default=True, help="Ball dilation for the beta sum."),
        click.option("--A", "A", type=float, default=3.0, show_default=True, help="Ball dilation for net-mode theta."),
        click.option("--mode", type=click.Choice(["dyadic", "net", "both"]), default="dyadic", show_default=True),
        click.option("--refine", type=click.Choice(["seeds", "light", "full"]), default="seeds", show_default=True),
        click.option("--c-threshold", type=float, default=0.05, show_default=True, help="Warn below this lower regularity."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _figures(stem: Path, **figs) -> None:
    from . import plotting

    for suffix, (fn, args) in figs.items():
        fn(*args, stem.with_name(f"{stem.stem}_{suffix}.png"))


# ---------------------------------------------------------------- commands


@main.command()
@source_options
@certify_options
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Report JSON; the profile TSV and figures go alongside.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@_guard
def analyze(src, fmt_name, gen, seed, d, resolution, threads, p, eps, C0, A, mode, refine, c_threshold, out, figures):
    """Certificate report, per-cube flatness table and figures."""
    from . import plotting
    from .certify import certify
    from .nets import build_dyadic_tree, build_tree

    cloud = _load(src, fmt_name, gen, seed, d, resolution)
    params = _certify_params(cloud.d, p, eps, C0, A, mode, refine, seed, c_threshold)
    report = certify(cloud, params, workers=threads)
    out = Path(out)
    io.write_text(out, report.to_json())
    tree = build_dyadic_tree(cloud, params.dyadic_scale) if mode != "net" else build_tree(cloud, params.rho, params.net_scale)
    rows = _beta_profile(cloud, tree, cloud.d, p, C0)
    io.write_tsv(out.with_suffix(".tsv"), rows, PROFILE_COLUMNS)
    if figures:
        _figures(
            out,
            profile=(plotting.plot_beta_profile, (rows,)),
            certificate=(plotting.plot_certificate, (report.to_dict(),)),
        )
    click.echo(f"beta-side ratio {io.fmt(report.theorem1['ratio'])}, theta-side ratio {io.fmt(report.theorem3['ratio'])}")


@main.command()
@source_options
@click.option("--p", type=float, default=2.0, show_default=True)
@click.option("--center", help="Comma-separated ball center; omit for a per-cube profile.")
@click.option("--radius", type=float, help="Ball radius (with --center).")
@click.option("--C0", "C0", type=float, default=2.0, show_default=True)
@click.option("--tree", "tree_mode", type=click.Choice(["dyadic", "christ"]), default="dyadic", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="JSON for one ball, TSV for a profile.")
@_guard
def beta(src, fmt_name, gen, seed, d, resolution, threads, p, center, radius, C0, tree_mode, out):
    """Flatness numbers of one ball, or a per-cube profile table."""
    from .beta import beta_content, beta_inf, vartheta
    from .nets import build_dyadic_tree, build_tree

    cloud = _load(src, fmt_name, gen, seed, d, resolution)
    _check_p(p, cloud.d)
    tree = build_dyadic_tree(cloud, 2.0) if tree_mode == "dyadic" else build_tree(cloud)
    if center is None:
        rows = _beta_profile(cloud, tree, cloud.d, p, C0)
        io.write_tsv(out, rows, PROFILE_COLUMNS)
        click.echo(f"{len(rows)} cubes")
        return
    try:
        c = np.array([float(v) for v in center.split(",")])
    except ValueError:
        _fail(EXIT_CONFIG, "--center must be comma-separated numbers")
    _require(len(c) == cloud.n, f"center has {cloud.n} coordinates")
    _require(radius is not None and radius > 0, "--radius > 0 with --center")
    ball = Ball(c, radius)
    bi = beta_inf(cloud.points, ball, cloud.d)
    bp = beta_content(cloud.points, ball, cloud.d, p, tree)
    th = vartheta(cloud.points, ball, cloud.d, cloud.resolution, cloud.window, slack=cloud.resolution)
    result = {
        "ball": {"center": c.tolist(), "radius": radius},
        "beta_inf": {"value": bi.value, "plane": bi.plane.to_dict()},
        "beta_p": {"value": bp.value, "p": p, "plane": bp.plane.to_dict()},
        "vartheta": {"value": th.value, "plane": th.plane.to_dict()},
    }
    io.write_text(out, io.to_json(result))
    click.echo(f"beta_inf {io.fmt(bi.value)} beta_p {io.fmt(bp.value)} vartheta {io.fmt(th.value)}")


@main.command()
@source_options
@click.option("--tree", "tree_mode", type=click.Choice(["christ", "dyadic"]), default="christ", show_default=True)
@click.option("--rho", type=float, default=0.5, show_default=True)
@click.option("--scale", type=float, default=1.0, show_default=True)
@click.option("--k-max", type=int, help="Deepest level (default: down to the resolution).")
@click.option("--faithful", is_flag=True, help="rho = 1e-4 and the containment constant 1/500.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_guard
def cubes(src, fmt_name, gen, seed, d, resolution, threads, tree_mode, rho, scale, k_max, faithful, out):
    """Build a cube tree and check its structural properties."""
    from .nets import (
        FAITHFUL_C0,
        FAITHFUL_RHO,
        build_dyadic_tree,
        build_tree,
        check_containment,
        check_nesting,
        check_partition,
        measure_c0,
    )

    cloud = _load(src, fmt_name, gen, seed, d, resolution)
    if faithful:
        _require(tree_mode == "christ", "--faithful applies to Christ trees")
        rho = FAITHFUL_RHO
    _require(0 < rho < 1, "0 < rho < 1")
    _require(scale > 0, "scale > 0")
    tree = build_dyadic_tree(cloud, scale, k_max) if tree_mode == "dyadic" else build_tree(cloud, rho, scale, k_max)
    c0 = FAITHFUL_C0 if faithful else measure_c0(tree)
    doc = tree.to_dict()
    doc["checks"] = {
        "partition": check_partition(tree),
        "nesting": check_nesting(tree),
        "containment": check_containment(tree, c0) if tree_mode == "christ" else True,
        "c0": c0,
        "measured_c0": measure_c0(tree),
    }
    io.write_text(out, io.to_json(doc))
    click.echo(f"{tree.n_nodes} cubes over {tree.depth + 1} levels")


@main.command()
@source_options
@click.option("--kind", type=click.Choice(["angle", "beta"]), default="angle", show_default=True)
@click.option("--alpha", type=float, default=0.1, show_default=True, help="Angle threshold (angle regions).")
@click.option("--tau", type=float, help="Gap parameter (default 0.9 min(tau0, 1/16)).")
@click.option("--M", "M", type=float, default=4.0, show_default=True, help="Ball dilation for planes and betas.")
@click.option("--n-max", type=int, default=8, show_default=True)
@click.option("--eps", type=float, help="Beta-sum threshold (beta regions).")
@click.option("--p", type=float, default=1.0, show_default=True)
@click.option("--rho", type=float, default=0.5, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_guard
def corona(src, fmt_name, gen, seed, d, resolution, threads, kind, alpha, tau, M, n_max, eps, p, rho, out):
    """Stopping-time regions: angle layers or the beta-sum forest."""
    from . import corona as cor
    from .nets import build_tree

    cloud = _load(src, fmt_name, gen, seed, d, resolution)
    _require(0 < rho < 1, "0 < rho < 1")
    _require(M >= 1, "M >= 1")
    tree = build_tree(cloud, rho)
    if kind == "angle":
        tau = cor.default_tau(rho) if tau is None else tau
        _require(0 < alpha <= np.pi / 2, "0 < alpha <= pi/2")
        _require(0 < tau < cor.tau_zero(rho), f"0 < tau < tau0 = {cor.tau_zero(rho)}")
        planes = cor.assign_planes(tree, cloud.d, M)
        forest = cor.extend_layers(tree, planes, alpha, tau, n_max)
        rows = cor.layer_bounds(tree, forest)
        doc = forest.to_dict()
        doc["checks"] = {
            "stop_cubes": len(rows),
            "lower_bound_ok": sum(r["lower_ok"] for r in rows),
            "upper_bound_ok": sum(r["upper_ok"] for r in rows),
            "coherent": all(cor.is_coherent(tree, r) for r in forest.regions),
            "sibling_closed": all(cor.is_sibling_closed(tree, r) for r in forest.regions),
        }
    else:
        _require(eps is not None and eps > 0, "--eps > 0 for beta regions")
        _check_p(p, cloud.d)
        betas = cor.cube_betas(tree, cloud.d, M, p, refine=False)
        forest = cor.beta_stopping_forest(tree, cloud.d, M, eps, betas)
        doc = forest.to_dict()
        doc["checks"] = cor.minimal_cube_sum(tree, forest, cloud.d, betas)
    io.write_text(out, io.to_json(doc))
    click.echo(f"{len(forest.regions)} regions")


@main.command()
@source_options
@click.option("--stages", type=int, default=4, show_default=True)
@click.option("--ratio", "ratio_mode", type=click.Choice(["desk", "faithful"]), default="desk", show_default=True, help="Scale ratio 2 (desk) or 10 per stage.")
@click.option("--r0", type=float, help="Outer scale (default: the generator's, else 0.5).")
@click.option("--count", type=int, default=41, show_default=True, help="Mesh vertices per side.")
@click.option("--eps", type=float, help="Report net points whose compatibility number reaches eps.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="OBJ mesh; diagnostics JSON and a figure go alongside.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@_guard
def reifenberg(src, fmt_name, gen, seed, d, resolution, threads, stages, ratio_mode, r0, count, eps, out, figures):
    """Run the projection iteration from nets and planes of the sample."""
    from . import plotting
    from .reifenberg import DESK_RATIO, FAITHFUL_RATIO, derive_net_system, run_david_toro

    cloud = _load(src, fmt_name, gen, seed, d, resolution)
    _require(stages >= 0, "stages >= 0")
    _require(count >= 3, "count >= 3")
    _require(cloud.d in (1, 2), "d in {1, 2} for meshes")
    r0 = r0 if r0 is not None else float(cloud.meta.get("r0", 0.5))
    ratio = DESK_RATIO if ratio_mode == "desk" else FAITHFUL_RATIO
    system = derive_net_system(cloud.points, cloud.d, stages, ratio=ratio, r0=r0, eps=eps)
    mesh, diag = run_david_toro(system, count=count, seed=seed)
    diag["report"] = system.report
    diag["mode"] = ratio_mode
    out = Path(out)
    io.write_text(out, mesh.to_obj())
    io.write_text(out.with_suffix(".json"), io.to_json(diag))
    if figures:
        _figures(out, displacement=(plotting.plot_displacement, (diag,)))
    worst = max((s["displacement_over_r"] for s in diag["stages"]), default=0.0)
    click.echo(f"{len(diag['stages'])} stages, max displacement / r_k {io.fmt(worst)}")


@main.command()
@source_options
@certify_options
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--figures/--no-figures", default=False, show_default=True)
@_guard
def certify(src, fmt_name, gen, seed, d, resolution, threads, p, eps, C0, A, mode, refine, c_threshold, out, figures):
    """Both certificate directions as a JSON report."""
    from . import plotting
    from .certify import certify as run_certify

    cloud = _load(src, fmt_name, gen, seed, d, resolution)
    params = _certify_params(cloud.d, p, eps, C0, A, mode, refine, seed, c_threshold)
    report = run_certify(cloud, params, workers=threads)
    out = Path(out)
    io.write_text(out, report.to_json())
    if figures:
        _figures(out, certificate=(plotting.plot_certificate, (report.to_dict(),)))
    for w in report.warnings:
        click.echo(f"warning: {w}", err=True)
    click.echo(f"beta-side ratio {io.fmt(report.theorem1['ratio'])}, theta-side ratio {io.fmt(report.theorem3['ratio'])}")


if __name__ == "__main__":
    main()
