"""Analytical optimal steering for linear systems under cost 1 + u^T R u.

Two variants of the free-final-time steering problem are solved in
closed form through the weighted controllability Gramian
G(t) = int_0^t e^{A(t-s)} B R^-1 B^T e^{A^T(t-s)} ds:

* full steering fixes the entire final state x(t_f) = x_b, with
  candidate cost c(t) = t + (x_b - xbar(t))^T G(t)^-1 (x_b - xbar(t)),
  xbar(t) = e^{At} x_a;
* partial-final-state-free (PFF) steering fixes only the position block
  E x(t_f) = goal.  The transversality condition zeroes the costate of
  the free components, which reduces the candidate cost to
  c(t) = t + (goal - E xbar(t))^T (E G(t) E^T)^-1 (goal - E xbar(t))
  and induces the remaining final-state components.

The final time minimizes c(t) over a coarse log-spaced grid followed by
golden-section refinement.  Gramians come from the Van Loan augmented
exponential; for nilpotent augmented matrices (e.g. the double
integrator) the exponential is evaluated as an exact finite polynomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, expm
from scipy.optimize import fminbound

from .dynamics import Trajectory

#: final-time search window (s) and coarse grid size
TF_MIN = 0.05
TF_MAX = 20.0
TF_GRID_POINTS = 60
#: golden-section refinement tolerance on t_f (s)
TF_TOL = 1e-4
#: boundary residual below which a steering result counts as success
STEER_TOL = 1e-4
#: materialization grid step (s)
EDGE_DT = 0.01

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class LinearSystem:
    """Controllable LTI system x' = A x + B u with control weight R."""

    def __init__(self, A, B, R, n_partial: int = 2):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.R = np.asarray(R, dtype=float)
        self.n_partial = n_partial
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if self.B.shape[0] != n:
            raise ValueError("B row count must match A")
        if not np.allclose(self.R, self.R.T) or np.any(
                np.linalg.eigvalsh(self.R) <= 0):
            raise ValueError("R must be symmetric positive definite")
        ctrl = np.hstack([np.linalg.matrix_power(self.A, k) @ self.B
                          for k in range(n)])
        if np.linalg.matrix_rank(ctrl) < n:
            raise ValueError("(A, B) must be controllable")
        self.Rinv = np.linalg.inv(self.R)
        self._ctx = None

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


def double_integrator_linear() -> LinearSystem:
    """The 2D double integrator as an LTI system with R = I."""
    A = np.zeros((4, 4))
    A[0, 2] = A[1, 3] = 1.0
    B = np.zeros((4, 2))
    B[2, 0] = B[3, 1] = 1.0
    return LinearSystem(A, B, np.eye(2))


@dataclass
class SteeringResult:
    """Outcome of a steering query; inexact steering is first-class."""

    trajectory: Trajectory
    final_state: np.ndarray
    cost: float
    tf: float
    success: bool
    endpoint_error: float


def _failure(x_a) -> SteeringResult:
    x_a = np.asarray(x_a, dtype=float)
    traj = Trajectory(np.array([0.0]), x_a[None, :],
                      np.zeros((0, 2)), 0.0)
    return SteeringResult(traj, x_a.copy(), math.inf, 0.0, False, math.inf)


class _SteeringContext:
    """Per-system cache: augmented exponentials and grid tables."""

    def __init__(self, sys: LinearSystem):
        self.sys = sys
        n = sys.n_x
        S = sys.B @ sys.Rinv @ sys.B.T
        C = np.zeros((2 * n, 2 * n))
        C[:n, :n] = sys.A
        C[:n, n:] = S
        C[n:, n:] = -sys.A.T
        self.C = C
        # nilpotent fast path: e^{Ct} is then an exact finite polynomial
        powers = [np.eye(2 * n)]
        nilpotent = False
        for _ in range(2 * n + 1):
            powers.append(powers[-1] @ C)
            if not np.any(powers[-1]):
                nilpotent = True
                break
        self._powers = powers if nilpotent else None
        if nilpotent:
            self._power_stack = np.stack(powers)
            self._factorials = np.array(
                [math.factorial(k) for k in range(len(powers))])
        self._expC_cache = {}
        self.t_grid = np.geomspace(TF_MIN, TF_MAX, TF_GRID_POINTS)
        expAt, G = zip(*(self._exp_and_gramian(t) for t in self.t_grid))
        self.expAt_grid = np.stack(expAt)          # (K, n, n)
        self.G_grid = np.stack(G)                  # (K, n, n)
        self.Ginv_grid = np.linalg.inv(self.G_grid)
        n1 = sys.n_partial
        self.S1inv_grid = np.linalg.inv(self.G_grid[:, :n1, :n1])

    def _expC(self, t: float):
        key = round(t, 12)
        got = self._expC_cache.get(key)
        if got is not None:
            return got
        if self._powers is not None:
            T = t ** np.arange(len(self._powers)) / self._factorials
            out = np.tensordot(T, self._power_stack, axes=1)
        else:
            out = expm(self.C * t)
        if len(self._expC_cache) < 100000:
            self._expC_cache[key] = out
        return out

    def _exp_and_gramian(self, t: float):
        n = self.sys.n_x
        E = self._expC(t)
        expAt = E[:n, :n]
        G = E[:n, n:] @ expAt.T
        G = 0.5 * (G + G.T)
        return expAt, G

    # -- scalar candidate costs -------------------------------------------

    def cost_full(self, t, x_a, x_b):
        expAt, G = self._exp_and_gramian(t)
        y = x_b - expAt @ x_a
        try:
            return t + float(y @ np.linalg.solve(G, y))
        except np.linalg.LinAlgError:
            return math.inf

    def cost_pff(self, t, x_a, goal):
        n1 = self.sys.n_partial
        expAt, G = self._exp_and_gramian(t)
        y = goal - (expAt @ x_a)[:n1]
        if n1 == 2:
            # explicit symmetric 2x2 solve; these are the hot calls of
            # golden-section refinement
            a, b, c = G[0, 0], G[0, 1], G[1, 1]
            det = a * c - b * b
            if det <= 0.0 or a <= 0.0:
                return math.inf
            q = (c * y[0] * y[0] - 2.0 * b * y[0] * y[1]
                 + a * y[1] * y[1]) / det
            return t + float(q)
        try:
            return t + float(y @ np.linalg.solve(G[:n1, :n1], y))
        except np.linalg.LinAlgError:
            return math.inf

    # -- vectorized grid costs --------------------------------------------

    def grid_costs_full(self, x_a, Xb):
        """Costs on the t grid for targets Xb (..., n_x); returns (..., K)."""
        xbar = np.einsum("kij,j->ki", self.expAt_grid, x_a)
        y = np.asarray(Xb, dtype=float)[..., None, :] - xbar
        q = np.einsum("...ki,kij,...kj->...k", y, self.Ginv_grid, y)
        return self.t_grid + q

    def grid_costs_pff(self, Xa, goal):
        """Costs on the t grid for starts Xa (..., n_x); returns (..., K)."""
        n1 = self.sys.n_partial
        xbar = np.einsum("kpj,...j->...kp", self.expAt_grid[:, :n1, :], Xa)
        y = np.asarray(goal, dtype=float) - xbar
        q = np.einsum("...kp,kpq,...kq->...k", y, self.S1inv_grid, y)
        return self.t_grid + q

    # -- per-candidate costs at distinct times (nilpotent fast path) ------

    def _exp_many(self, ts):
        """e^{C t} for each entry of ts; nilpotent systems only."""
        T = (np.asarray(ts, dtype=float)[:, None]
             ** np.arange(len(self._powers)) / self._factorials)
        return np.tensordot(T, self._power_stack, axes=1)

    def cost_full_many(self, ts, Xa, x_b):
        """cost_full evaluated per row: ts (C,), Xa (C, n), x_b (n,)."""
        n = self.sys.n_x
        E = self._exp_many(ts)
        expAt = E[:, :n, :n]
        G = E[:, :n, n:] @ np.swapaxes(expAt, 1, 2)
        G = 0.5 * (G + np.swapaxes(G, 1, 2))
        y = x_b - np.einsum("cij,cj->ci", expAt, Xa)
        try:
            sol = np.linalg.solve(G, y[..., None])[..., 0]
        except np.linalg.LinAlgError:
            return np.array([self.cost_full(t, x, x_b)
                             for t, x in zip(ts, Xa)])
        return ts + np.einsum("ci,ci->c", y, sol)

    def cost_pff_many(self, ts, Xa, goal):
        """cost_pff evaluated per row: ts (C,), Xa (C, n), goal (n1,)."""
        n = self.sys.n_x
        n1 = self.sys.n_partial
        E = self._exp_many(ts)
        expAt = E[:, :n, :n]
        G1 = (E[:, :n1, n:] @ np.swapaxes(expAt, 1, 2))[:, :, :n1]
        y = goal - np.einsum("cpj,cj->cp", expAt[:, :n1, :], Xa)
        if n1 == 2:
            a = G1[:, 0, 0]
            b = 0.5 * (G1[:, 0, 1] + G1[:, 1, 0])
            c = G1[:, 1, 1]
            det = a * c - b * b
            with np.errstate(divide="ignore", invalid="ignore"):
                q = (c * y[:, 0] ** 2 - 2.0 * b * y[:, 0] * y[:, 1]
                     + a * y[:, 1] ** 2) / det
            q = np.where((det > 0.0) & (a > 0.0), q, math.inf)
            return ts + q
        try:
            sol = np.linalg.solve(G1, y[..., None])[..., 0]
        except np.linalg.LinAlgError:
            return np.array([self.cost_pff(t, x, goal)
                             for t, x in zip(ts, Xa)])
        return ts + np.einsum("cp,cp->c", y, sol)


def _context(sys: LinearSystem) -> _SteeringContext:
    if sys._ctx is None:
        sys._ctx = _SteeringContext(sys)
    return sys._ctx


def weighted_gramian(sys: LinearSystem, t: float) -> np.ndarray:
    """G(t) = int_0^t e^{A(t-s)} B R^-1 B^T e^{A^T(t-s)} ds."""
    if t <= 0:
        raise ValueError("t must be positive")
    _, G = _context(sys)._exp_and_gramian(t)
    return G


def _golden_minimize_batch(f, lo, hi, tol=TF_TOL):
    """Golden-section over many independent brackets at once; `f` maps a
    vector of times to a vector of costs (two evaluations per shrink,
    trading evaluations for full vectorization)."""
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while np.max(b - a) > tol:
        left = f1 <= f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        x1 = b - _GOLDEN * (b - a)
        x2 = a + _GOLDEN * (b - a)
        f1, f2 = f(x1), f(x2)
    left = f1 <= f2
    return np.where(left, x1, x2), np.where(left, f1, f2)


def _refine_tf_batch(ctx, grid, idx, cand, cost_many):
    """Refine grid minima for candidate rows `cand`; returns
    (tfs, costs) for those rows, never worse than the grid values."""
    k_last = len(ctx.t_grid) - 1
    lo = ctx.t_grid[np.maximum(idx[cand] - 1, 0)]
    hi = ctx.t_grid[np.minimum(idx[cand] + 1, k_last)]
    tfs, costs = _golden_minimize_batch(cost_many, lo, hi)
    grid_best = grid[cand, idx[cand]]
    worse = grid_best < costs
    tfs = np.where(worse, ctx.t_grid[idx[cand]], tfs)
    costs = np.where(worse, grid_best, costs)
    return tfs, costs


def _refine_tf(ctx, grid_costs, scalar_cost):
    """Grid argmin + bounded 1-D refinement; returns (tf, cost)."""
    if not np.any(np.isfinite(grid_costs)):
        return None
    i = int(np.nanargmin(grid_costs))
    lo = ctx.t_grid[max(i - 1, 0)]
    hi = ctx.t_grid[min(i + 1, len(ctx.t_grid) - 1)]
    if lo == hi:
        return float(ctx.t_grid[i]), float(grid_costs[i])
    tf, c, _err, _n = fminbound(scalar_cost, lo, hi, xtol=TF_TOL,
                                full_output=True)
    tf, c = float(tf), float(c)
    if grid_costs[i] < c:
        tf, c = float(ctx.t_grid[i]), float(grid_costs[i])
    return tf, c


def _materialize(sys: LinearSystem, x_a, tf: float, d, dt: float = EDGE_DT):
    """Roll out the optimal state/control trajectory for multiplier d.

    The optimal pair (x, y) with u = R^-1 B^T y evolves under the
    augmented matrix [[A, BR^-1B^T], [0, -A^T]], so the trajectory is
    propagated exactly with one matrix exponential per step size.
    """
    ctx = _context(sys)
    n = sys.n_x
    RinvBT = sys.Rinv @ sys.B.T
    expATtf = ctx._expC(tf)[:n, :n].T  # e^{A^T tf} via transpose identity
    z0 = np.concatenate([x_a, expATtf @ d])
    n_full = int(tf / dt)
    rem = tf - n_full * dt
    if rem < 1e-9:
        rem = 0.0
    knots = np.arange(n_full + 1) * dt
    if rem > 0.0:
        knots = np.append(knots, tf)
    hs = np.diff(knots)
    mids = knots[:-1] + 0.5 * hs

    if ctx._powers is not None:
        # nilpotent system: z(t) is an exact polynomial in t, so all
        # knot and midpoint evaluations vectorize
        pz = ctx._power_stack @ z0                # (J, 2n)
        ks = np.arange(len(pz))

        def evolve(ts):
            T = ts[:, None] ** ks / ctx._factorials
            return T @ pz

        Z = evolve(knots)
        Zmid = evolve(mids)
    else:
        Z = np.empty((len(knots), 2 * n))
        Z[0] = z0
        Zmid = np.empty((len(mids), 2 * n))
        Phi = ctx._expC(dt)
        Phi_half = ctx._expC(dt / 2.0)
        z = z0
        for k, h in enumerate(hs):
            if h == dt:
                Ph, Ph2 = Phi, Phi_half
            else:
                Ph, Ph2 = ctx._expC(h), ctx._expC(h / 2.0)
            Zmid[k] = Ph2 @ z
            z = Ph @ z
            Z[k + 1] = z

    U = Zmid[:, n:] @ RinvBT.T
    effort = np.einsum("ki,ij,kj->k", U, sys.R, U)
    quad_cost = float(np.sum((1.0 + effort) * hs))
    states = Z[:, :n]
    traj = Trajectory(knots, states,
                      U if len(U) else np.zeros((0, sys.n_u)), quad_cost)
    return traj, states[-1]


def _check_cost(closed_form, quadrature):
    # closed form and quadrature must agree; a mismatch means the
    # materialized control does not match the optimizer
    denom = max(abs(closed_form), 1e-6)
    if abs(closed_form - quadrature) / denom > 0.01:
        raise RuntimeError(
            f"steering cost mismatch: closed form {closed_form:.6g}, "
            f"quadrature {quadrature:.6g}")


def steer_full(sys: LinearSystem, x_a, x_b,
               tf_hint: float | None = None) -> SteeringResult:
    """Optimally steer from x_a to the fully specified final state x_b."""
    x_a = np.asarray(x_a, dtype=float)
    x_b = np.asarray(x_b, dtype=float)
    ctx = _context(sys)
    if tf_hint is None:
        found = _refine_tf(ctx, ctx.grid_costs_full(x_a, x_b),
                           lambda t: ctx.cost_full(t, x_a, x_b))
        if found is None:
            return _failure(x_a)
        tf, cost = found
    else:
        tf, cost = tf_hint, ctx.cost_full(tf_hint, x_a, x_b)
    if not math.isfinite(cost):
        return _failure(x_a)
    expAt, G = ctx._exp_and_gramian(tf)
    try:
        c, low = cho_factor(G)
    except np.linalg.LinAlgError:
        return _failure(x_a)
    d = cho_solve((c, low), x_b - expAt @ x_a)
    traj, x_end = _materialize(sys, x_a, tf, d)
    _check_cost(cost, traj.cost)
    err = float(np.linalg.norm(x_end - x_b))
    return SteeringResult(traj, x_end, cost, tf, err <= STEER_TOL, err)


def steer_pff(sys: LinearSystem, x_a, goal,
              tf_hint: float | None = None) -> SteeringResult:
    """Steer from x_a to a position goal, leaving the rest of the final
    state free (chosen optimally by the controller)."""
    x_a = np.asarray(x_a, dtype=float)
    goal = np.asarray(goal, dtype=float)
    n1 = sys.n_partial
    if goal.shape != (n1,):
        raise ValueError(f"goal must have shape ({n1},)")
    ctx = _context(sys)
    if tf_hint is None:
        found = _refine_tf(ctx, ctx.grid_costs_pff(x_a, goal),
                           lambda t: ctx.cost_pff(t, x_a, goal))
        if found is None:
            return _failure(x_a)
        tf, cost = found
    else:
        tf, cost = tf_hint, ctx.cost_pff(tf_hint, x_a, goal)
    if not math.isfinite(cost):
        return _failure(x_a)
    expAt, G = ctx._exp_and_gramian(tf)
    try:
        c, low = cho_factor(G[:n1, :n1])
    except np.linalg.LinAlgError:
        return _failure(x_a)
    mu = cho_solve((c, low), goal - (expAt @ x_a)[:n1])
    d = np.zeros(sys.n_x)
    d[:n1] = mu
    traj, x_end = _materialize(sys, x_a, tf, d)
    _check_cost(cost, traj.cost)
    err = float(np.linalg.norm(x_end[:n1] - goal))
    return SteeringResult(traj, x_end, cost, tf, err <= STEER_TOL, err)


def segcost_linear(sys: LinearSystem, x_a, goal) -> float:
    """PFF steering cost without materializing the trajectory."""
    tf_cost = segcost_tf_linear(sys, x_a, goal)
    return tf_cost[1] if tf_cost is not None else math.inf


def segcost_tf_linear(sys: LinearSystem, x_a, goal):
    """(t_f, cost) of the PFF steering problem, or None on failure."""
    x_a = np.asarray(x_a, dtype=float)
    goal = np.asarray(goal, dtype=float)
    ctx = _context(sys)
    return _refine_tf(ctx, ctx.grid_costs_pff(x_a, goal),
                      lambda t: ctx.cost_pff(t, x_a, goal))


def segcost_tf_full(sys: LinearSystem, x_a, x_b):
    """(t_f, cost) of the fully constrained steering problem, without
    materializing the trajectory; None on failure."""
    x_a = np.asarray(x_a, dtype=float)
    x_b = np.asarray(x_b, dtype=float)
    ctx = _context(sys)
    return _refine_tf(ctx, ctx.grid_costs_full(x_a, x_b),
                      lambda t: ctx.cost_full(t, x_a, x_b))


def segcost_pff_batch(sys: LinearSystem, Xa, goal, refine_margin=0.1):
    """PFF steering costs from many start states to one goal.

    Grid costs are evaluated vectorized for all starts; golden-section
    refinement runs only for starts whose grid cost is within
    `refine_margin` (relative, plus the same amount absolute) of the
    best grid cost — refinement can only lower a cost by less than the
    grid bracket allows, so others cannot become the minimum.  Returns
    (costs, tfs); unrefined entries carry their grid values.
    """
    Xa = np.atleast_2d(np.asarray(Xa, dtype=float))
    goal = np.asarray(goal, dtype=float)
    ctx = _context(sys)
    grid = ctx.grid_costs_pff(Xa, goal)  # (C, K)
    idx = np.argmin(grid, axis=1)
    costs = grid[np.arange(len(Xa)), idx].astype(float)
    tfs = ctx.t_grid[idx].astype(float)
    best = float(np.min(costs))
    cut = best * (1.0 + refine_margin) + refine_margin
    cand = np.flatnonzero(costs <= cut)
    if len(cand):
        # vectorized refinement pays off only for enough candidates
        if ctx._powers is not None and len(cand) >= 4:
            tfs[cand], costs[cand] = _refine_tf_batch(
                ctx, grid, idx, cand,
                lambda ts: ctx.cost_pff_many(ts, Xa[cand], goal))
        else:
            for c_i in cand:
                found = _refine_tf(ctx, grid[c_i],
                                   lambda t, x=Xa[c_i]:
                                   ctx.cost_pff(t, x, goal))
                if found is not None:
                    tfs[c_i], costs[c_i] = found
    return costs, tfs


def segcost_full_grid(sys: LinearSystem, x_a, Xb):
    """Grid-resolution full-steering cost estimates from one start to
    many targets (no golden-section refinement).

    Each returned cost is the minimum over the final-time grid, hence an
    upper bound on the true optimum that is tight to within the grid
    bracket; useful as a cheap filter before exact steering.
    """
    x_a = np.asarray(x_a, dtype=float)
    Xb = np.atleast_2d(np.asarray(Xb, dtype=float))
    ctx = _context(sys)
    grid = ctx.grid_costs_full(x_a, Xb)  # (C, K)
    idx = np.argmin(grid, axis=1)
    return (grid[np.arange(len(Xb)), idx].astype(float),
            ctx.t_grid[idx].astype(float))


def segcost_full_batch(sys: LinearSystem, Xa, x_b, refine_margin=0.1):
    """Full-steering analog of segcost_pff_batch (one target x_b)."""
    Xa = np.atleast_2d(np.asarray(Xa, dtype=float))
    x_b = np.asarray(x_b, dtype=float)
    ctx = _context(sys)
    xbar = np.einsum("kij,cj->cki", ctx.expAt_grid, Xa)
    y = x_b - xbar
    grid = ctx.t_grid + np.einsum("cki,kij,ckj->ck", y, ctx.Ginv_grid, y)
    idx = np.argmin(grid, axis=1)
    costs = grid[np.arange(len(Xa)), idx].astype(float)
    tfs = ctx.t_grid[idx].astype(float)
    best = float(np.min(costs))
    cut = best * (1.0 + refine_margin) + refine_margin
    cand = np.flatnonzero(costs <= cut)
    if len(cand):
        if ctx._powers is not None and len(cand) >= 4:
            tfs[cand], costs[cand] = _refine_tf_batch(
                ctx, grid, idx, cand,
                lambda ts: ctx.cost_full_many(ts, Xa[cand], x_b))
        else:
            for c_i in cand:
                found = _refine_tf(ctx, grid[c_i],
                                   lambda t, x=Xa[c_i]:
                                   ctx.cost_full(t, x, x_b))
                if found is not None:
                    tfs[c_i], costs[c_i] = found
    return costs, tfs
