"""Figure rendering: planner trees over the environment and solution
cost versus planning time, written as SVG files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle as MplCircle  # noqa: E402
from matplotlib.patches import Rectangle as MplRectangle  # noqa: E402
import numpy as np  # noqa: E402

from .dynamics import N_POS  # noqa: E402
from .environment import Circle, Env, Rect  # noqa: E402


def _draw_env(ax, env: Env):
    lo, hi = env.bounds
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    for obs in env.obstacles:
        if isinstance(obs, Rect):
            ax.add_patch(MplRectangle((obs.xmin, obs.ymin),
                                      obs.xmax - obs.xmin,
                                      obs.ymax - obs.ymin,
                                      facecolor="0.55", edgecolor="0.3"))
        elif isinstance(obs, Circle):
            ax.add_patch(MplCircle((obs.cx, obs.cy), obs.radius,
                                   facecolor="0.55", edgecolor="0.3"))


def plot_tree(env: Env, edge_polylines, solution_xy=None, start=None,
              goal=None, path=None, title=None):
    """Render obstacles, tree edges, and the solution polyline.

    `edge_polylines` is an iterable of (k, 2) position arrays; the
    solution (if any) is drawn on top as a thick line.  Saves SVG when
    `path` is given and returns the figure.
    """
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_env(ax, env)
    for P in edge_polylines:
        P = np.asarray(P)
        if len(P) >= 2:
            ax.plot(P[:, 0], P[:, 1], color="0.75", linewidth=0.5, zorder=1)
    if solution_xy is not None and len(solution_xy) >= 2:
        S = np.asarray(solution_xy)
        ax.plot(S[:, 0], S[:, 1], color="tab:blue", linewidth=2.2, zorder=3)
    if start is not None:
        ax.plot([start[0]], [start[1]], "o", color="tab:red", zorder=4)
    if goal is not None:
        ax.plot([goal[0]], [goal[1]], "*", color="tab:green",
                markersize=12, zorder=4)
    if title:
        ax.set_title(title)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, format="svg")
        plt.close(fig)
    return fig


def plot_result_tree(result, path=None, title=None):
    """Tree rendering straight from a PlanResult."""
    env = Env.from_json(result.settings["env"])
    polylines = [v.edge.states[:, :N_POS] for v in result.tree.vertices
                 if v.edge is not None]
    sol = (result.solution.states[:, :N_POS]
           if result.solution is not None else None)
    return plot_tree(env, polylines, solution_xy=sol,
                     start=result.settings["x_s"][:N_POS],
                     goal=result.settings["goal"], path=path, title=title)


def plot_cost_curves(curves, path=None, title=None, xlabel="planning time (s)",
                     ylabel="solution cost"):
    """Cost-vs-time chart: `curves` maps label -> (times, costs)."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for label, (ts, cs) in curves.items():
        ax.plot(ts, cs, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, format="svg")
        plt.close(fig)
    return fig


def plot_training_history(history, path=None):
    """Loss curves (epoch, train, validation) from a training report."""
    H = np.asarray(history, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(H[:, 0], H[:, 1], label="train")
    ax.plot(H[:, 0], H[:, 2], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, format="svg")
        plt.close(fig)
    return fig
