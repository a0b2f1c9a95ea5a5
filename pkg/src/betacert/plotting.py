"""Figures written next to the tabular outputs (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_beta_profile(rows: list[dict], path: str | Path) -> Path:
    """Per-level spread of the three flatness numbers."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, marker in (("beta_inf", "o"), ("beta_p", "s"), ("vartheta", "^")):
        lev = np.array([r["level"] for r in rows], dtype=float)
        val = np.array([r[key] for r in rows], dtype=float)
        ax.scatter(lev, val, s=8, marker=marker, alpha=0.5, label=key)
    ax.set_xlabel("level")
    ax.set_ylabel("value")
    ax.legend()
    ax.set_title("flatness by level")
    return _save(fig, path)


def plot_certificate(report: dict, path: str | Path) -> Path:
    """The two sides of the certificate and their parts."""
    s = report["sums"]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(["1", "beta sum"], [s["one"], s["beta_square"]], color=["0.6", "C0"], label="beta side")
    ax.bar(["H", "theta"], [s["hausdorff"], s["theta"]], color=["0.4", "C1"], label="theta side")
    ax.set_title(f"beta side {report['theorem1']['ratio']:.3g}, theta side {report['theorem3']['ratio']:.3g}")
    ax.legend()
    return _save(fig, path)


def plot_displacement(diag: dict, path: str | Path) -> Path:
    """Per-stage maximal displacement relative to the stage radius."""
    stages = [s["stage"] for s in diag["stages"]]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(stages, [s["displacement_over_r"] for s in diag["stages"]], "o-", label="max |sigma(y)-y| / r_k")
    ax.plot(stages, [s["eps_max"] for s in diag["stages"]], "s--", label="max eps_k")
    ax.set_xlabel("stage k")
    ax.set_yscale("symlog", linthresh=1e-6)
    ax.legend()
    return _save(fig, path)


def plot_points(points: np.ndarray, path: str | Path, highlight: np.ndarray | None = None) -> Path:
    """Planar view of a sample (first two coordinates)."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(points[:, 0], points[:, 1], s=2, c="0.3")
    if highlight is not None and len(highlight):
        ax.scatter(points[highlight, 0], points[highlight, 1], s=4, c="C3")
    ax.set_aspect("equal")
    return _save(fig, path)
