"""Kinodynamic motion planning with partial-final-state-free steering.

Sampling-based planners (ordered FMT*-style search and an RRT*-style
baseline) plan over position samples only, using steering functions
that fix the final position and choose the remaining final-state
components optimally: in closed form for linear systems, or with a
learned neural controller for a kinematic car.
"""

from .dynamics import (SystemModel, Trajectory, double_integrator,
                       kinematic_car)
from .environment import Circle, Env, Rect, corridor_env, empty_env, random_env
from .linear_steering import (LinearSystem, SteeringResult,
                              double_integrator_linear, steer_full, steer_pff)
from .planner import (LearnedPFFBackend, LinearPFFBackend, PlanQuery,
                      PlanResult, plan_fmt_full, plan_fmt_pff,
                      plan_kino_rrt_star)

__version__ = "0.1.0"

__all__ = [
    "SystemModel", "Trajectory", "double_integrator", "kinematic_car",
    "Circle", "Env", "Rect", "corridor_env", "empty_env", "random_env",
    "LinearSystem", "SteeringResult", "double_integrator_linear",
    "steer_full", "steer_pff",
    "LearnedPFFBackend", "LinearPFFBackend", "PlanQuery", "PlanResult",
    "plan_fmt_full", "plan_fmt_pff", "plan_kino_rrt_star",
    "__version__",
]
