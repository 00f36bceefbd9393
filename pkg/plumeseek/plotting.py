"""Static figures of concentration fields and search runs.

Figures are drawn with the non-interactive Agg backend and written to disk;
nothing is ever shown on screen.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

from .diffusion import ConcentrationField  # noqa: E402
from .lattice import CompleteGrid, EnvironmentMap, build_complete_grid  # noqa: E402
from .models import RunRecord  # noqa: E402

__all__ = ["plot_field", "plot_run"]

logger = logging.getLogger(__name__)


def _segments(grid: CompleteGrid, link_ids) -> np.ndarray:
    return np.array([[grid.links[i].a, grid.links[i].b] for i in link_ids], dtype=float).reshape(-1, 2, 2)


def _finish(fig, path: Optional[Union[str, Path]]):
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        logger.info("Figure written to %s", path)
    return fig


def plot_field(
    field: ConcentrationField,
    path: Optional[Union[str, Path]] = None,
    *,
    env: Optional[EnvironmentMap] = None,
    log_scale: bool = True,
):
    """Heat map of the mean count per node, with the passable links of *env*."""
    grid = field.grid
    r = grid.radius + 1
    image = np.full((2 * r + 1, 2 * r + 1), np.nan)
    for (x, y), value in zip(grid.nodes, field.values):
        image[y + r, x + r] = value
    if log_scale:
        with np.errstate(divide="ignore"):
            image = np.where(image > 0, np.log10(image), np.nan)

    fig, ax = plt.subplots(figsize=(6, 6))
    mesh = ax.imshow(image, origin="lower", extent=(-r - 0.5, r + 0.5, -r - 0.5, r + 0.5), cmap="viridis")
    fig.colorbar(mesh, ax=ax, shrink=0.8, label="log10 mean count" if log_scale else "mean count")
    if env is not None:
        present = [link.id for link in grid.links if env.status[link.id]]
        ax.add_collection(LineCollection(_segments(grid, present), colors="white", linewidths=0.4, alpha=0.6))
    ax.plot(*field.source, marker="*", color="red", markersize=12, linestyle="none")
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"Mean count, A0 = {field.release_rate:g}")
    return _finish(fig, path)


def plot_run(
    run: Union[RunRecord, Mapping[str, Any]],
    path: Optional[Union[str, Path]] = None,
    *,
    grid: Optional[CompleteGrid] = None,
):
    """Path, believed-present links and particle support of a run, plus its count trace.

    *run* may be a :class:`RunRecord` or its JSON form.
    """
    data = run.to_dict() if isinstance(run, RunRecord) else run
    if grid is None:
        envd = data.get("environment", {})
        grid = build_complete_grid(envd["radius"], closed_disk=envd.get("closed_disk", False))

    fig, (ax, ax_counts) = plt.subplots(
        1, 2, figsize=(11, 5), gridspec_kw={"width_ratios": [1.2, 1]}
    )
    ax.add_collection(
        LineCollection(_segments(grid, range(grid.L)), colors="0.85", linewidths=0.5)
    )
    if data.get("links_present"):
        ax.add_collection(
            LineCollection(_segments(grid, data["links_present"]), colors="tab:blue", linewidths=1.2)
        )
    support = np.array(data.get("support") or [], dtype=float).reshape(-1, 2)
    if len(support):
        ax.scatter(support[:, 0], support[:, 1], s=30, color="tab:orange", label="particle support", zorder=3)
    traj = np.array(data["trajectory"], dtype=float)
    ax.plot(traj[:, 0], traj[:, 1], color="black", linewidth=1.5, label="path", zorder=4)
    ax.plot(*data["start"], marker="o", color="green", linestyle="none", label="start", zorder=5)
    ax.plot(*data["source"], marker="*", color="red", markersize=12, linestyle="none", label="source", zorder=5)
    ax.set_xlim(-grid.radius - 1.5, grid.radius + 1.5)
    ax.set_ylim(-grid.radius - 1.5, grid.radius + 1.5)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(f"Run {data['run_id']}: {data['outcome']} in {data['steps_taken']} step(s)")

    counts = data.get("counts") or []
    ax_counts.step(np.arange(1, len(counts) + 1), counts, where="mid")
    ax_counts.set_xlabel("step k")
    ax_counts.set_ylabel("count n")
    fig.tight_layout()
    return _finish(fig, path)
