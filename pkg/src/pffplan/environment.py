"""Workspace bounds, obstacles, collision checking, and random environments.

The robot is treated as a point in position space; an optional inflation
margin can be applied to obstacles to emulate a footprint.  Collision is
boundary-inclusive (a point exactly on an obstacle boundary collides).
Trajectory checking is resolution-complete at a fixed arclength step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import N_POS, Trajectory

#: arclength resolution (m) for sampling a trajectory's position curve
COLLISION_STEP = 0.05


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise ValueError("rectangle must have positive extent")

    def inflated(self, margin):
        return Rect(self.xmin - margin, self.ymin - margin,
                    self.xmax + margin, self.ymax + margin)

    def contains(self, P):
        """Boundary-inclusive containment test for points P (..., 2)."""
        P = np.asarray(P, dtype=float)
        return ((P[..., 0] >= self.xmin) & (P[..., 0] <= self.xmax)
                & (P[..., 1] >= self.ymin) & (P[..., 1] <= self.ymax))

    def to_json(self):
        return {"type": "rect", "xmin": self.xmin, "ymin": self.ymin,
                "xmax": self.xmax, "ymax": self.ymax}


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")

    def inflated(self, margin):
        return Circle(self.cx, self.cy, self.radius + margin)

    def contains(self, P):
        P = np.asarray(P, dtype=float)
        d2 = (P[..., 0] - self.cx) ** 2 + (P[..., 1] - self.cy) ** 2
        return d2 <= self.radius ** 2

    def to_json(self):
        return {"type": "circle", "cx": self.cx, "cy": self.cy,
                "radius": self.radius}


def _obstacle_from_json(d):
    if d["type"] == "rect":
        return Rect(d["xmin"], d["ymin"], d["xmax"], d["ymax"])
    if d["type"] == "circle":
        return Circle(d["cx"], d["cy"], d["radius"])
    raise ValueError(f"unknown obstacle type {d['type']!r}")


@dataclass(frozen=True)
class Env:
    """Axis-aligned position-space bounds plus rect/circle obstacles."""

    bounds: np.ndarray  # (2, 2): rows [low, high] over (x, y)
    obstacles: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "bounds",
                           np.asarray(self.bounds, dtype=float))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        lo, hi = self.bounds
        if np.any(lo >= hi):
            raise ValueError("environment bounds must be a nonempty box")

    def inflated(self, margin: float) -> "Env":
        return Env(self.bounds.copy(),
                   tuple(o.inflated(margin) for o in self.obstacles))

    @property
    def diameter(self) -> float:
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo))

    def to_json(self):
        return {"bounds": self.bounds.tolist(),
                "obstacles": [o.to_json() for o in self.obstacles]}

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2)

    @classmethod
    def from_json(cls, d) -> "Env":
        return cls(np.asarray(d["bounds"], dtype=float),
                   tuple(_obstacle_from_json(o) for o in d["obstacles"]))

    @classmethod
    def load(cls, path) -> "Env":
        with open(path) as f:
            return cls.from_json(json.load(f))


def points_free(env: Env, P) -> np.ndarray:
    """Vectorized free-space test over points P (..., 2)."""
    P = np.asarray(P, dtype=float)
    lo, hi = env.bounds
    free = np.all((P >= lo) & (P <= hi), axis=-1)
    for obs in env.obstacles:
        free &= ~obs.contains(P)
    return free


def point_free(env: Env, p) -> bool:
    """True iff p is in bounds and strictly outside every obstacle."""
    return bool(points_free(env, np.asarray(p, dtype=float)))


def _resample_polyline(P, step):
    # P (n, 2); returns points along the polyline at arclength intervals
    # of `step`, plus all original knots
    seg = np.diff(P, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    pieces = [P]
    for k in range(len(seg)):
        if lengths[k] > step:
            n = int(lengths[k] // step)
            ts = (np.arange(1, n + 1) * step) / lengths[k]
            ts = ts[ts < 1.0]
            pieces.append(P[k] + ts[:, None] * seg[k])
    return np.concatenate(pieces, axis=0)


def trajectory_free(env: Env, traj: Trajectory,
                    step: float = COLLISION_STEP) -> bool:
    """Check the trajectory's position curve against the environment.

    The curve is sampled at every stored knot plus intermediate points
    at arclength spacing `step`.  Resolution-complete only: a sliver
    thinner than `step` between samples can be missed.
    """
    P = traj.states[:, :N_POS]
    if len(P) == 0:
        return True
    if len(P) > 1:
        P = _resample_polyline(P, step)
    return bool(np.all(points_free(env, P)))


def segment_free(env: Env, a, b, step: float = COLLISION_STEP) -> bool:
    """Straight-segment variant of trajectory_free for point pairs."""
    P = np.vstack([np.asarray(a, dtype=float), np.asarray(b, dtype=float)])
    return bool(np.all(points_free(env, _resample_polyline(P, step))))


def random_env(seed: int, n_obstacles=(3, 8), size_range=(0.5, 2.0),
               clearance: float = 1.0, bounds=((0.0, 0.0), (10.0, 10.0)),
               keep_free=((2.0, 2.0), (8.0, 8.0)),
               max_retries: int = 200) -> Env:
    """Generate a random environment, keeping clearance disks free.

    `keep_free` is a sequence of positions (by default the conventional
    start and goal used throughout the benchmarks) around which a disk
    of radius `clearance` must remain obstacle-free; colliding obstacles
    are re-drawn up to `max_retries` times each.
    """
    rng = np.random.default_rng(seed)
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds
    keep_free = [np.asarray(p, dtype=float) for p in keep_free]
    n = int(rng.integers(n_obstacles[0], n_obstacles[1] + 1))
    obstacles = []
    for _ in range(n):
        for _attempt in range(max_retries):
            shape = rng.random()
            if shape < 0.5:
                w, h = rng.uniform(size_range[0], size_range[1], size=2)
                cx = rng.uniform(lo[0], hi[0])
                cy = rng.uniform(lo[1], hi[1])
                obs = Rect(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
            else:
                r = rng.uniform(size_range[0], size_range[1]) / 2.0
                obs = Circle(rng.uniform(lo[0], hi[0]),
                             rng.uniform(lo[1], hi[1]), r)
            if all(_disk_clear(obs, p, clearance) for p in keep_free):
                obstacles.append(obs)
                break
    return Env(bounds, tuple(obstacles))


def _disk_clear(obs, center, radius):
    # conservative: obstacle must not intersect the disk
    if isinstance(obs, Circle):
        d = np.hypot(obs.cx - center[0], obs.cy - center[1])
        return d > obs.radius + radius
    # closest point on rect to the disk center
    px = min(max(center[0], obs.xmin), obs.xmax)
    py = min(max(center[1], obs.ymin), obs.ymax)
    return np.hypot(px - center[0], py - center[1]) > radius


def empty_env(bounds=((0.0, 0.0), (10.0, 10.0))) -> Env:
    return Env(np.asarray(bounds, dtype=float), ())


def corridor_env() -> Env:
    """Corridor-and-blocks benchmark fixture (10 m x 10 m workspace).

    A horizontal wall with a narrow gap separates start and goal
    regions, with two extra blocks cluttering the upper half.  This
    approximates the layout class used for double-integrator planner
    comparisons; the exact published layout is not numerically
    specified.
    """
    obstacles = (
        Rect(0.0, 4.5, 4.0, 5.5),
        Rect(5.5, 4.5, 10.0, 5.5),
        Rect(2.0, 7.0, 3.5, 8.5),
        Circle(7.0, 7.5, 0.9),
    )
    return Env(np.array([[0.0, 0.0], [10.0, 10.0]]), obstacles)
