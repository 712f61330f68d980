"""System models, RK4 integration, trajectory cost, and translation utilities.

Two systems are provided: a 2D double integrator (state [x1 x2 x3 x4] =
position then velocity, control = acceleration) and a kinematic car
(state [x y theta v], controls [turn rate, acceleration]).  The running
cost is c(x, u) = 1 + u^T R u, so trajectory cost trades duration
against control effort.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

DOUBLE_INTEGRATOR = "double_integrator"
KINEMATIC_CAR = "kinematic_car"

#: position components occupy the first N_POS state entries in both systems
N_POS = 2

#: fixed integration steps (s): fine grid for simulation/steering edges,
#: coarser grid for closed-loop neural-controller rollouts
SIM_DT = 0.01
ROLLOUT_DT = 0.05


class IntegrationError(RuntimeError):
    """Raised when forward integration produces a non-finite state."""


@dataclass(frozen=True)
class SystemModel:
    """A dynamical system with box control bounds and control cost weights."""

    kind: str
    control_bounds: np.ndarray  # (2, n_u) rows are [low, high]
    cost_weights: np.ndarray    # R, (n_u, n_u) symmetric positive definite

    def __post_init__(self):
        R = np.asarray(self.cost_weights, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("cost weight matrix must be square")
        if not np.allclose(R, R.T):
            raise ValueError("cost weight matrix must be symmetric")
        if np.any(np.linalg.eigvalsh(R) <= 0):
            raise ValueError("cost weight matrix must be positive definite")
        lo, hi = np.asarray(self.control_bounds, dtype=float)
        if np.any(lo >= hi):
            raise ValueError("control bounds must be a nonempty box")

    @property
    def n_x(self) -> int:
        return 4

    @property
    def n_u(self) -> int:
        return self.control_bounds.shape[1]

    def clamp_control(self, u):
        lo, hi = self.control_bounds
        return np.clip(u, lo, hi)


def double_integrator() -> SystemModel:
    """2D double integrator with unbounded accelerations and R = I."""
    bounds = np.array([[-np.inf, -np.inf], [np.inf, np.inf]])
    return SystemModel(DOUBLE_INTEGRATOR, bounds, np.eye(2))


def kinematic_car() -> SystemModel:
    """Kinematic car with unit-box controls and R = I."""
    bounds = np.array([[-1.0, -1.0], [1.0, 1.0]])
    return SystemModel(KINEMATIC_CAR, bounds, np.eye(2))


def wrap_angle(theta):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    wrapped = -((-np.asarray(theta) + np.pi) % (2.0 * np.pi) - np.pi)
    return wrapped


def derivative(system: SystemModel, x, u):
    """Evaluate the state derivative f(x, u).

    Double integrator: [x3, x4, u1, u2].  Car: [v cos(th), v sin(th), u1, u2].
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (system.n_x,):
        raise ValueError(f"state must have shape ({system.n_x},), got {x.shape}")
    if u.shape != (system.n_u,):
        raise ValueError(f"control must have shape ({system.n_u},), got {u.shape}")
    if system.kind == DOUBLE_INTEGRATOR:
        return np.array([x[2], x[3], u[0], u[1]])
    elif system.kind == KINEMATIC_CAR:
        theta, v = x[2], x[3]
        return np.array([v * math.cos(theta), v * math.sin(theta), u[0], u[1]])
    raise ValueError(f"unknown system kind {system.kind!r}")


def derivative_batch(system: SystemModel, X, U):
    """Vectorized f over rows of X (B, n_x) and U (B, n_u)."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    out = np.empty_like(X)
    if system.kind == DOUBLE_INTEGRATOR:
        out[:, 0] = X[:, 2]
        out[:, 1] = X[:, 3]
    elif system.kind == KINEMATIC_CAR:
        out[:, 0] = X[:, 3] * np.cos(X[:, 2])
        out[:, 1] = X[:, 3] * np.sin(X[:, 2])
    else:
        raise ValueError(f"unknown system kind {system.kind!r}")
    out[:, 2] = U[:, 0]
    out[:, 3] = U[:, 1]
    return out


@dataclass
class Trajectory:
    """Time-indexed state/control sequences with total cost.

    `controls` has one fewer row than `states`; controls[k] is held over
    [times[k], times[k+1]] (zero-order hold).
    """

    times: np.ndarray     # (n,)
    states: np.ndarray    # (n, n_x)
    controls: np.ndarray  # (n - 1, n_u)
    cost: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.controls = np.asarray(self.controls, dtype=float)
        if self.controls.size == 0:
            self.controls = self.controls.reshape(0, 2)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self.times) else 0.0

    @property
    def final_state(self):
        return self.states[-1]

    def to_csv(self) -> str:
        """Serialize as `t,x1..xn,u1..um`; controls blank on the last row."""
        buf = io.StringIO()
        n_x = self.states.shape[1]
        n_u = self.controls.shape[1] if self.controls.ndim == 2 else 2
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i+1}" for i in range(n_x)]
                        + [f"u{i+1}" for i in range(n_u)])
        for k, t in enumerate(self.times):
            row = [repr(float(t))] + [repr(float(v)) for v in self.states[k]]
            if k < len(self.controls):
                row += [repr(float(v)) for v in self.controls[k]]
            else:
                row += [""] * n_u
            writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, cost: float = 0.0) -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))
        header = rows[0]
        n_x = sum(1 for h in header if h.startswith("x"))
        times, states, controls = [], [], []
        for row in rows[1:]:
            times.append(float(row[0]))
            states.append([float(v) for v in row[1:1 + n_x]])
            tail = row[1 + n_x:]
            if any(v != "" for v in tail):
                controls.append([float(v) for v in tail])
        return cls(np.array(times), np.array(states), np.array(controls), cost)


def _rk4_step(system: SystemModel, x, u, dt: float):
    k1 = derivative(system, x, u)
    k2 = derivative(system, x + 0.5 * dt * k1, u)
    k3 = derivative(system, x + 0.5 * dt * k2, u)
    k4 = derivative(system, x + dt * k3, u)
    x_next = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if system.kind == KINEMATIC_CAR:
        x_next[2] = wrap_angle(x_next[2])
    return x_next


def _rk4_step_callable(system: SystemModel, x, u_of_t, t: float, dt: float):
    # control callable is sampled at the RK4 stage times, preserving
    # 4th-order accuracy for smooth control signals
    u1 = system.clamp_control(u_of_t(t))
    um = system.clamp_control(u_of_t(t + 0.5 * dt))
    u2 = system.clamp_control(u_of_t(t + dt))
    k1 = derivative(system, x, u1)
    k2 = derivative(system, x + 0.5 * dt * k1, um)
    k3 = derivative(system, x + 0.5 * dt * k2, um)
    k4 = derivative(system, x + dt * k3, u2)
    x_next = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if system.kind == KINEMATIC_CAR:
        x_next[2] = wrap_angle(x_next[2])
    return x_next, um


def integrate_rk4(system: SystemModel, x0, controls, dt: float,
                  horizon: float) -> Trajectory:
    """Forward-integrate with classic RK4.

    `controls` is either an array of per-step controls (zero-order hold,
    one row per step, reused cyclically if shorter than the horizon), a
    single control vector held constant, or a callable u(t) sampled at
    the RK4 stage times.  Controls are clamped to the system's bounds.
    Cost accumulates the running cost 1 + u^T R u per step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if horizon < dt:
        raise ValueError("horizon must be at least dt")
    x0 = np.asarray(x0, dtype=float)
    n_steps = int(round(horizon / dt))
    times = [0.0]
    states = [x0.copy()]
    used_controls = []
    R = system.cost_weights
    cost = 0.0
    x = x0.copy()
    for k in range(n_steps):
        t = k * dt
        if callable(controls):
            x, u = _rk4_step_callable(system, x, controls, t, dt)
        else:
            arr = np.atleast_2d(np.asarray(controls, dtype=float))
            u = system.clamp_control(arr[k % len(arr)])
            x = _rk4_step(system, x, u, dt)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"non-finite state at t={t + dt:.3f}")
        cost += (1.0 + float(u @ R @ u)) * dt
        used_controls.append(u)
        times.append(t + dt)
        states.append(x.copy())
    return Trajectory(np.array(times), np.array(states),
                      np.array(used_controls), cost)


def trajectory_cost(traj: Trajectory, system: SystemModel) -> float:
    """Recompute the cost integral of 1 + u^T R u over the trajectory.

    Under zero-order-hold controls the integrand is piecewise constant,
    so the per-interval rectangle sum is the exact quadrature.
    """
    if len(traj.times) < 2:
        return 0.0
    dts = np.diff(traj.times)
    U = traj.controls
    R = system.cost_weights
    effort = np.einsum("ki,ij,kj->k", U, R, U)
    return float(np.sum((1.0 + effort) * dts))


def translate(traj: Trajectory, offset) -> Trajectory:
    """Shift the position components of every state by `offset`.

    Times, controls, and cost are unchanged (both systems are
    translation invariant in position).
    """
    offset = np.asarray(offset, dtype=float)
    states = traj.states.copy()
    states[:, :N_POS] += offset
    return Trajectory(traj.times.copy(), states, traj.controls.copy(), traj.cost)
