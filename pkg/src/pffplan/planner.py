"""Sampling-based kinodynamic planners over pluggable steering backends.

Three planners share the same steering/collision primitives:

* ``plan_fmt_pff`` — ordered (FMT*-style) search over *partial-state*
  samples: only positions are sampled, and a partial-final-state-free
  (PFF) steering function picks the remaining final-state components
  optimally.  Vertices store the full state actually reached, so the
  planner tolerates inexact (e.g. learned) steering: a vertex is never
  re-targeted, and every accepted edge ends within a fixed radius of
  its sample.
* ``plan_fmt_full`` — the classical kinodynamic FMT* baseline: full
  states are sampled (velocity drawn uniformly from a box) and edges
  use exact full-state steering.
* ``plan_kino_rrt_star`` — an anytime RRT*-style baseline using PFF
  steering for extension and exact full-state steering for rewiring
  (which is why it only runs with the analytical linear backend).

Neighbor queries use the Euclidean distance between positions; the
unvisited sample set is indexed by a uniform grid with cell size equal
to the neighbor radius, with a brute-force implementation retained as a
cross-check oracle.
"""

from __future__ import annotations

import heapq
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import linear_steering as ls
from .dynamics import N_POS, SystemModel, Trajectory, DOUBLE_INTEGRATOR
from .environment import Env, point_free, points_free, trajectory_free
from .learning import Mlp, rollout_nn_steer

#: maximum steering endpoint error (m) for an edge to be accepted
EDGE_ACCEPT_RADIUS = 0.3
#: default ball radius (m) for declaring the goal reached
GOAL_TOLERANCE = 0.3
#: default neighbor radii (m) per system kind
DEFAULT_RADIUS = {"double_integrator": 1.5, "kinematic_car": 2.5}
#: velocity sampling box for full-state sampling (per non-position dim)
FULL_SAMPLE_BOX = (-2.0, 2.0)
#: minimum rejection-sampling acceptance rate before giving up
MIN_ACCEPT_RATE = 1e-4

LINEAR_BACKEND = "linear"
LEARNED_BACKEND = "learned"

OUTCOME_SUCCESS = "success"
OUTCOME_FAILURE = "failure"


class EnvironmentTooDenseError(RuntimeError):
    """Raised when rejection sampling cannot find free samples."""


class UnsupportedConfigurationError(ValueError):
    """Raised for planner/backend combinations that cannot work
    (e.g. rewiring with inexact learned steering)."""


# ---------------------------------------------------------------------------
# steering backends


class LinearPFFBackend:
    """Analytical PFF steering for a controllable linear system."""

    tag = LINEAR_BACKEND
    supports_rewiring = True
    supports_full = True

    def __init__(self, lin: ls.LinearSystem):
        self.lin = lin

    def segcost_batch(self, states, goal):
        """(costs, tf_hints) from each row of `states` to position `goal`."""
        return ls.segcost_pff_batch(self.lin, states, goal)

    def steer(self, x, goal, tf_hint=None) -> ls.SteeringResult:
        return ls.steer_pff(self.lin, x, goal, tf_hint=tf_hint)

    def segcost_full_batch(self, states, x_b):
        return ls.segcost_full_batch(self.lin, states, x_b)

    def segcost_full_grid(self, x_a, targets):
        return ls.segcost_full_grid(self.lin, x_a, targets)

    def steer_full(self, x_a, x_b, tf_hint=None) -> ls.SteeringResult:
        return ls.steer_full(self.lin, x_a, x_b, tf_hint=tf_hint)


class LearnedPFFBackend:
    """Neural PFF steering: cost head for edge scoring, control head for
    closed-loop rollout.  States outside the training box are scored as
    unreachable (the network would be extrapolating)."""

    tag = LEARNED_BACKEND
    supports_rewiring = False
    supports_full = False

    def __init__(self, system: SystemModel, control_net: Mlp, cost_net: Mlp):
        self.system = system
        self.control_net = control_net
        self.cost_net = cost_net

    def segcost_batch(self, states, goal):
        Z = np.atleast_2d(np.asarray(states, dtype=float)).copy()
        Z[:, :N_POS] -= goal
        costs = self.cost_net.forward(Z)[:, 0].astype(float)
        box = self.cost_net.train_box
        if box is None:
            box = self.control_net.train_box
        if box is not None:
            inside = np.all((Z >= box[0]) & (Z <= box[1]), axis=1)
            costs[~inside] = math.inf
        return costs, None

    def steer(self, x, goal, tf_hint=None) -> ls.SteeringResult:
        return rollout_nn_steer(self.system, self.control_net, x, goal)


# ---------------------------------------------------------------------------
# queries, vertices, trees, results


@dataclass
class PlanQuery:
    """One planning problem: environment, system, steering backend, and
    the planner tuning constants."""

    env: Env
    system: SystemModel
    backend: object  # LinearPFFBackend or LearnedPFFBackend
    x_s: np.ndarray
    goal: np.ndarray  # partial (position) goal
    m: int = 1000
    r: float = 1.5
    goal_tolerance: float = GOAL_TOLERANCE
    seed: int = 0

    def __post_init__(self):
        self.x_s = np.asarray(self.x_s, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)

    def validate(self):
        if self.m < 1:
            raise ValueError("sample count m must be >= 1")
        if self.r <= 0:
            raise ValueError("neighbor radius r must be positive")
        if self.x_s.shape != (self.system.n_x,):
            raise ValueError("start state has wrong dimension")
        if self.goal.shape != (N_POS,):
            raise ValueError("goal must be a position")
        if not point_free(self.env, self.x_s[:N_POS]):
            raise ValueError("start state is in collision")
        if not point_free(self.env, self.goal):
            raise ValueError("goal position is in collision")
        if isinstance(self.backend, LearnedPFFBackend):
            box = self.backend.control_net.train_box
            if box is not None:
                half = float(min(np.minimum(box[1][:N_POS],
                                            -box[0][:N_POS])))
                if self.r > half - self.goal_tolerance:
                    raise ValueError(
                        f"neighbor radius {self.r} exceeds the learned "
                        f"backend's reliable range "
                        f"{half - self.goal_tolerance:.2f} (training box "
                        f"half-width minus goal tolerance)")


@dataclass
class Vertex:
    id: int
    x: np.ndarray         # full state actually reached (fixed once created)
    xbar: np.ndarray      # partial-state sample this vertex answers for
    parent: int | None
    cost_to_come: float
    edge: Trajectory | None  # trajectory from parent's x to this x


class Tree:
    """Planner tree with contiguous per-vertex arrays for vector queries."""

    def __init__(self):
        self.vertices: list[Vertex] = []
        self.children: dict[int, list[int]] = {}

    def add(self, x, xbar, parent, cost, edge) -> Vertex:
        v = Vertex(len(self.vertices), np.asarray(x, dtype=float),
                   np.asarray(xbar, dtype=float), parent, float(cost), edge)
        self.vertices.append(v)
        self.children[v.id] = []
        if parent is not None:
            self.children[parent].append(v.id)
        return v

    def __len__(self):
        return len(self.vertices)

    def states(self, ids=None):
        vs = self.vertices if ids is None else [self.vertices[i] for i in ids]
        return np.array([v.x for v in vs])

    def positions(self, ids=None):
        return self.states(ids)[:, :N_POS]

    def costs(self, ids=None):
        vs = self.vertices if ids is None else [self.vertices[i] for i in ids]
        return np.array([v.cost_to_come for v in vs])


@dataclass
class PlanResult:
    """Outcome of one planner run plus everything needed to audit it."""

    outcome: str
    solution: Trajectory | None
    cost: float
    wall_time_s: float
    tree: Tree
    events: list          # (wall_time_s, best_cost) pairs
    settings: dict
    goal_vertex: int | None = None
    selection_costs: list = field(default_factory=list)

    def manifest(self) -> dict:
        return {
            "settings": self.settings,
            "outcome": self.outcome,
            "cost": (None if not math.isfinite(self.cost) else self.cost),
            "n_vertices": len(self.tree),
            "wall_time_s": self.wall_time_s,
        }

    def save(self, outdir: str):
        """Write manifest.json, trajectory.csv, events.csv, and a
        decimated tree_edges.csv for later re-rendering."""
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "manifest.json"), "w") as f:
            json.dump(self.manifest(), f, indent=2)
        if self.solution is not None:
            with open(os.path.join(outdir, "trajectory.csv"), "w") as f:
                f.write(self.solution.to_csv())
        with open(os.path.join(outdir, "events.csv"), "w") as f:
            f.write("wall_time_s,best_cost\n")
            for t, c in self.events:
                f.write(f"{float(t)!r},{float(c)!r}\n")
        with open(os.path.join(outdir, "tree_edges.csv"), "w") as f:
            f.write("edge_id,x,y\n")
            for v in self.tree.vertices:
                if v.edge is None:
                    continue
                P = v.edge.states[:, :N_POS]
                if len(P) > 24:
                    keep = np.linspace(0, len(P) - 1, 24).round().astype(int)
                    P = P[keep]
                for p in P:
                    f.write(f"{v.id},{float(p[0])!r},{float(p[1])!r}\n")


# ---------------------------------------------------------------------------
# sampling and neighbor queries


def sample_pff(env: Env, m: int, seed: int) -> np.ndarray:
    """m collision-free position samples, uniform over the free space."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = env.bounds
    out = []
    drawn = 0
    while len(out) < m:
        batch = max(256, m)
        P = rng.uniform(lo, hi, size=(batch, N_POS))
        drawn += batch
        free = P[points_free(env, P)]
        out.extend(free[:m - len(out)])
        if drawn >= 10_000 and (len(out) / drawn) < MIN_ACCEPT_RATE:
            raise EnvironmentTooDenseError(
                "free-space rejection sampling acceptance rate below "
                f"{MIN_ACCEPT_RATE}")
    return np.array(out)


def sample_full(env: Env, m: int, seed: int, n_x: int,
                vel_box=FULL_SAMPLE_BOX) -> np.ndarray:
    """m full-state samples: collision-free positions plus remaining
    components uniform in `vel_box`."""
    P = sample_pff(env, m, seed)
    rng = np.random.default_rng(seed + 1_000_003)
    V = rng.uniform(vel_box[0], vel_box[1], size=(m, n_x - N_POS))
    return np.hstack([P, V])


class _GridIndex:
    """Uniform-grid point index for fixed radius-`cell` ball queries."""

    def __init__(self, points: np.ndarray, cell: float):
        self.points = points
        self.cell = float(cell)
        self.buckets: dict[tuple, list] = {}
        for i, p in enumerate(points):
            self.buckets.setdefault(self._key(p), []).append(i)

    def _key(self, p):
        return (int(math.floor(p[0] / self.cell)),
                int(math.floor(p[1] / self.cell)))

    def query(self, center, r, alive=None) -> np.ndarray:
        """Indices of points within r of center, ascending; `alive`
        optionally masks out consumed points."""
        kx, ky = self._key(center)
        reach = int(math.ceil(r / self.cell))
        cand = []
        for dx in range(-reach, reach + 1):
            for dy in range(-reach, reach + 1):
                cand.extend(self.buckets.get((kx + dx, ky + dy), ()))
        if not cand:
            return np.empty(0, dtype=int)
        cand = np.array(sorted(cand), dtype=int)
        if alive is not None:
            cand = cand[alive[cand]]
        if not len(cand):
            return cand
        d = np.linalg.norm(self.points[cand] - np.asarray(center), axis=1)
        return cand[d <= r]


def near_brute(points: np.ndarray, center, r: float) -> np.ndarray:
    """Brute-force ball query; the oracle the grid index must match."""
    points = np.atleast_2d(points)
    if not len(points):
        return np.empty(0, dtype=int)
    d = np.linalg.norm(points - np.asarray(center, dtype=float), axis=1)
    return np.flatnonzero(d <= r)


def near_unvisited(x_c, samples: np.ndarray, r: float,
                   alive=None, index: _GridIndex | None = None) -> np.ndarray:
    """Unvisited sample indices within r of the position of state x_c."""
    center = np.asarray(x_c, dtype=float)[:N_POS]
    if index is not None:
        return index.query(center, r, alive)
    idx = near_brute(samples, center, r)
    if alive is not None:
        idx = idx[alive[idx]]
    return idx


def near_open(open_positions: np.ndarray, xbar, r: float) -> np.ndarray:
    """Open-vertex indices (into `open_positions`) within r of xbar."""
    return near_brute(open_positions, xbar, r)


# ---------------------------------------------------------------------------
# FMT* skeleton (partial-state and full-state variants)


def _argmin_tiebreak(costs: np.ndarray, ids: np.ndarray):
    """Index of the minimum cost; ties broken by the lowest vertex id."""
    best = np.min(costs)
    if not math.isfinite(best):
        return None
    tied = np.flatnonzero(costs == best)
    return tied[np.argmin(ids[tied])]


def _settings_dict(q: PlanQuery, planner: str) -> dict:
    return {
        "planner": planner,
        "system": q.system.kind,
        "backend": q.backend.tag,
        "x_s": [float(v) for v in q.x_s],
        "goal": [float(v) for v in q.goal],
        "m": q.m,
        "r": q.r,
        "goal_tolerance": q.goal_tolerance,
        "seed": q.seed,
        "env": q.env.to_json(),
    }


def plan_fmt_pff(q: PlanQuery) -> PlanResult:
    """Ordered search over partial-state samples with PFF steering."""
    q.validate()
    return _plan_fmt(q, full_state=False)


def plan_fmt_full(q: PlanQuery) -> PlanResult:
    """Kinodynamic FMT* baseline: full-state samples, exact steering."""
    q.validate()
    if not getattr(q.backend, "supports_full", False):
        raise UnsupportedConfigurationError(
            "full-state steering requires the analytical linear backend")
    return _plan_fmt(q, full_state=True)


def _plan_fmt(q: PlanQuery, full_state: bool) -> PlanResult:
    planner = "fmt_full" if full_state else "fmt_pff"
    t0 = time.perf_counter()
    backend = q.backend
    n_x = q.system.n_x

    # sample set: goal first (index 0), then the m random samples
    if full_state:
        goal_full = np.zeros(n_x)
        goal_full[:N_POS] = q.goal
        samples = np.vstack([goal_full[None, :],
                             sample_full(q.env, q.m, q.seed, n_x)])
    else:
        samples = np.vstack([q.goal[None, :], sample_pff(q.env, q.m, q.seed)])
    sample_pos = samples[:, :N_POS]
    alive = np.ones(len(samples), dtype=bool)
    index = _GridIndex(sample_pos, q.r)

    tree = Tree()
    root = tree.add(q.x_s, q.x_s[:N_POS], None, 0.0, None)
    open_set = {root.id}
    heap = [(0.0, root.id)]

    events: list = []
    selection_costs: list = []
    best_cost = math.inf
    goal_vertex = None
    x_c = root
    # segment costs and steering outcomes depend only on the
    # (parent vertex, sample) pair, so retried samples reuse them
    seg_cache: dict = {}
    failed_pairs: set = set()

    def goal_reached(v: Vertex) -> bool:
        if full_state:
            return bool(np.linalg.norm(v.x - samples[0]) <= q.goal_tolerance)
        return bool(np.linalg.norm(v.xbar - q.goal) <= q.goal_tolerance)

    while True:
        if goal_reached(x_c):
            goal_vertex = x_c.id
            best_cost = x_c.cost_to_come
            events.append((time.perf_counter() - t0, best_cost))
            break

        # X_open is frozen for the whole iteration: snapshot it once
        open_ids = np.array(sorted(open_set), dtype=int)
        open_states = tree.states(open_ids)
        open_pos = open_states[:, :N_POS]
        open_costs = tree.costs(open_ids)

        near_samples = near_unvisited(x_c.x, sample_pos, q.r,
                                      alive=alive, index=index)
        open_new = []
        for s_i in near_samples:
            target = samples[s_i]
            nbr = near_open(open_pos, sample_pos[s_i], q.r)
            if not len(nbr):
                continue
            nbr_ids = open_ids[nbr]
            missing = np.array([k for k, pid in enumerate(nbr_ids)
                                if (pid, s_i) not in seg_cache], dtype=int)
            if len(missing):
                sub = open_states[nbr[missing]]
                if full_state:
                    seg, tfs = backend.segcost_full_batch(sub, target)
                else:
                    seg, tfs = backend.segcost_batch(sub, target)
                for pos, k in enumerate(missing):
                    hint = float(tfs[pos]) if tfs is not None else None
                    seg_cache[(nbr_ids[k], s_i)] = (float(seg[pos]), hint)
            totals = open_costs[nbr] + np.array(
                [seg_cache[(pid, s_i)][0] for pid in nbr_ids])
            j = _argmin_tiebreak(totals, nbr_ids)
            if j is None:
                continue
            parent_id = int(nbr_ids[j])
            if (parent_id, s_i) in failed_pairs:
                continue
            hint = seg_cache[(parent_id, s_i)][1]
            if full_state:
                res = backend.steer_full(tree.vertices[parent_id].x, target,
                                         tf_hint=hint)
            else:
                res = backend.steer(tree.vertices[parent_id].x, target,
                                    tf_hint=hint)
            if (not res.success or res.endpoint_error > EDGE_ACCEPT_RADIUS
                    or not trajectory_free(q.env, res.trajectory)):
                failed_pairs.add((parent_id, s_i))
                continue
            # accumulate the materialized edge's cost (not the closed
            # form) so the tree's cost recursion is exact
            cost = (tree.vertices[parent_id].cost_to_come
                    + res.trajectory.cost)
            v = tree.add(res.final_state, sample_pos[s_i], parent_id, cost,
                         res.trajectory)
            alive[s_i] = False
            open_new.append(v.id)
            if goal_reached(v) and cost < best_cost:
                best_cost = cost
                events.append((time.perf_counter() - t0, best_cost))

        open_set.discard(x_c.id)
        for vid in open_new:
            open_set.add(vid)
            heapq.heappush(heap, (tree.vertices[vid].cost_to_come, vid))
        # lazy-deletion pop of the min-cost open vertex
        x_c = None
        while heap:
            cost, vid = heapq.heappop(heap)
            if vid in open_set:
                x_c = tree.vertices[vid]
                break
        if x_c is None:
            break
        selection_costs.append(x_c.cost_to_come)

    wall = time.perf_counter() - t0
    solution = None
    if goal_vertex is not None:
        solution = extract_solution(tree, goal_vertex)
        outcome = OUTCOME_SUCCESS
    else:
        outcome = OUTCOME_FAILURE
        best_cost = math.inf
    return PlanResult(outcome, solution, best_cost, wall, tree, events,
                      _settings_dict(q, planner), goal_vertex,
                      selection_costs)


# ---------------------------------------------------------------------------
# Kino-RRT* baseline


def plan_kino_rrt_star(q: PlanQuery, goal_bias: float = 0.05) -> PlanResult:
    """Anytime RRT*-style planner: PFF steering to extend, exact
    full-state steering to rewire (linear backend only)."""
    q.validate()
    if not getattr(q.backend, "supports_rewiring", False):
        raise UnsupportedConfigurationError(
            "Kino-RRT* rewiring needs exact steering; the learned backend "
            "cannot provide it")
    t0 = time.perf_counter()
    backend = q.backend
    rng = np.random.default_rng(q.seed)
    lo, hi = q.env.bounds

    tree = Tree()
    tree.add(q.x_s, q.x_s[:N_POS], None, 0.0, None)
    events: list = []
    goal_ids: set = set()
    best_cost = math.inf

    def sample_position():
        if rng.random() < goal_bias:
            return q.goal.copy()
        for _ in range(10_000):
            p = rng.uniform(lo, hi, size=N_POS)
            if point_free(q.env, p):
                return p
        raise EnvironmentTooDenseError("could not sample a free position")

    def note_goal(vid: int):
        nonlocal best_cost
        v = tree.vertices[vid]
        if np.linalg.norm(v.xbar - q.goal) <= q.goal_tolerance:
            goal_ids.add(vid)
        if goal_ids:
            cb = min(tree.vertices[g].cost_to_come for g in goal_ids)
            if cb < best_cost - 1e-12:
                best_cost = cb
                events.append((time.perf_counter() - t0, best_cost))

    def ancestors(vid: int) -> set:
        out = set()
        p = tree.vertices[vid].parent
        while p is not None:
            out.add(p)
            p = tree.vertices[p].parent
        return out

    for _ in range(q.m):
        xbar = sample_position()
        all_pos = tree.positions()
        nbr = near_brute(all_pos, xbar, q.r)
        if not len(nbr):
            nbr = np.array([int(np.argmin(
                np.linalg.norm(all_pos - xbar, axis=1)))])
        states = tree.states(nbr)
        costs = tree.costs(nbr)
        seg, tfs = backend.segcost_batch(states, xbar)
        j = _argmin_tiebreak(costs + seg, nbr)
        if j is None:
            continue
        parent_id = int(nbr[j])
        res = backend.steer(tree.vertices[parent_id].x, xbar,
                            tf_hint=float(tfs[j]) if tfs is not None else None)
        if not res.success or res.endpoint_error > EDGE_ACCEPT_RADIUS:
            continue
        if not trajectory_free(q.env, res.trajectory):
            continue
        v = tree.add(res.final_state,
                     xbar, parent_id,
                     tree.vertices[parent_id].cost_to_come
                     + res.trajectory.cost,
                     res.trajectory)
        note_goal(v.id)

        # rewire nearby vertices through v when it lowers their cost;
        # cheap grid estimates filter before exact steering
        cand = near_brute(tree.positions(), v.x[:N_POS], q.r)
        skip = ancestors(v.id) | {v.id, 0}
        cand = np.array([c for c in cand if c not in skip], dtype=int)
        if len(cand):
            targets = tree.states(cand)
            est, _tf = backend.segcost_full_grid(v.x, targets)
            # grid costs overestimate by at most the bracket slack
            promising = (v.cost_to_come + est
                         < tree.costs(cand) * 1.0 + 0.05 * est + 0.05)
            for c_i in cand[promising]:
                u = tree.vertices[int(c_i)]
                res2 = backend.steer_full(v.x, u.x)
                new_cost = v.cost_to_come + res2.trajectory.cost
                if not res2.success or new_cost >= u.cost_to_come - 1e-9:
                    continue
                if not trajectory_free(q.env, res2.trajectory):
                    continue
                _reparent(tree, u.id, v.id, res2.trajectory, new_cost)
                note_goal(u.id)
                for d in _descendants(tree, u.id):
                    note_goal(d)

    wall = time.perf_counter() - t0
    if goal_ids:
        gid = min(goal_ids,
                  key=lambda g: (tree.vertices[g].cost_to_come, g))
        return PlanResult(OUTCOME_SUCCESS, extract_solution(tree, gid),
                          tree.vertices[gid].cost_to_come, wall, tree,
                          events, _settings_dict(q, "kino_rrt_star"), gid)
    return PlanResult(OUTCOME_FAILURE, None, math.inf, wall, tree, events,
                      _settings_dict(q, "kino_rrt_star"), None)


def _reparent(tree: Tree, vid: int, new_parent: int, edge: Trajectory,
              new_cost: float):
    v = tree.vertices[vid]
    delta = new_cost - v.cost_to_come
    tree.children[v.parent].remove(vid)
    v.parent = new_parent
    v.edge = edge
    tree.children[new_parent].append(vid)
    v.cost_to_come = new_cost
    for d in _descendants(tree, vid):
        tree.vertices[d].cost_to_come += delta


def _descendants(tree: Tree, vid: int):
    stack = list(tree.children[vid])
    while stack:
        d = stack.pop()
        yield d
        stack.extend(tree.children[d])


# ---------------------------------------------------------------------------
# solution extraction


def extract_solution(tree: Tree, goal_vertex: int) -> Trajectory:
    """Concatenate the edges from the root to `goal_vertex` into one
    trajectory with monotone time; its cost is the sum of edge costs
    (equal to the goal vertex's cost-to-come)."""
    chain = []
    vid = goal_vertex
    while vid is not None:
        chain.append(tree.vertices[vid])
        vid = tree.vertices[vid].parent
    chain.reverse()
    if len(chain) == 1:
        x0 = chain[0].x
        return Trajectory(np.array([0.0]), x0[None, :].copy(),
                          np.zeros((0, 2)), 0.0)
    times = [np.array([0.0])]
    states = [chain[0].x[None, :]]
    controls = []
    cost = 0.0
    t_off = 0.0
    for v in chain[1:]:
        e = v.edge
        times.append(t_off + e.times[1:])
        states.append(e.states[1:])
        controls.append(e.controls)
        t_off += e.times[-1] - e.times[0]
        cost += e.cost
    return Trajectory(np.concatenate(times), np.vstack(states),
                      np.vstack(controls), cost)
