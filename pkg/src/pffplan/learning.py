"""From-scratch feed-forward networks for learned steering.

Two small MLPs (tanh hidden layers, linear output) are trained by
mini-batch SGD with momentum on data from the numerical steering
solver: a state-feedback controller (state -> control) and a cost
predictor (start state -> steering cost).  Closed-loop rollout of the
controller provides the steering function for nonlinear systems; it is
inexact by nature, so results carry an endpoint error and the planner
decides acceptance.

Car states are fed to the networks as [x, y, cos(theta), sin(theta), v]
so the heading input has no wrap discontinuity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (KINEMATIC_CAR, N_POS, ROLLOUT_DT, SystemModel,
                       Trajectory, _rk4_step)
from .linear_steering import SteeringResult

#: rollout termination: position tolerance, time limit, acceptance radius
ROLLOUT_STOP_RADIUS = 0.05
ROLLOUT_T_MAX = 15.0
ROLLOUT_ACCEPT_RADIUS = 0.3

FEATURE_IDENTITY = "identity"
FEATURE_CAR_ANGLE = "car_angle"


class TrainingError(RuntimeError):
    """Raised when training diverges (non-finite loss)."""


def apply_features(feature: str, X):
    """Map raw states to network inputs."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if feature == FEATURE_IDENTITY:
        return X
    if feature == FEATURE_CAR_ANGLE:
        return np.column_stack([X[:, 0], X[:, 1], np.cos(X[:, 2]),
                                np.sin(X[:, 2]), X[:, 3]])
    raise ValueError(f"unknown feature map {feature!r}")


@dataclass
class Dataset:
    """Rows of (state, control) pairs with optional cost targets.

    `cost_targets` holds the remaining cost-to-go from each row's state
    (NaN on rows that carry no cost label).
    """

    inputs: np.ndarray           # (n, n_x) raw states
    control_targets: np.ndarray  # (n, n_u)
    cost_targets: np.ndarray     # (n,), NaN where unlabeled
    box: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.control_targets = np.atleast_2d(
            np.asarray(self.control_targets, dtype=float))
        self.cost_targets = np.asarray(self.cost_targets, dtype=float)
        if len(self.inputs) != len(self.control_targets) or \
                len(self.inputs) != len(self.cost_targets):
            raise ValueError("dataset arrays must have equal row counts")

    def __len__(self):
        return len(self.inputs)

    def cost_rows(self):
        mask = ~np.isnan(self.cost_targets)
        return self.inputs[mask], self.cost_targets[mask]


@dataclass
class TrainConfig:
    epochs: int = 80
    batch_size: int = 128
    learning_rate: float = 0.02
    lr_decay: float = 0.02      # lr_e = lr / (1 + decay * epoch)
    momentum: float = 0.9
    validation_fraction: float = 0.1
    seed: int = 0
    hidden: tuple = (64, 64)

    def __post_init__(self):
        if not 0.0 < self.validation_fraction <= 0.5:
            raise ValueError("validation fraction must be in (0, 0.5]")


@dataclass
class Mlp:
    """Tanh MLP with input/target normalization baked in.

    `output_clip` (2, n_out) clamps predictions (control bounds);
    `floor_output` clips predictions below at 0 (cost head);
    `train_box` records the raw-state box the training data covered.
    """

    layer_dims: list
    weights: list
    biases: list
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray
    feature: str = FEATURE_IDENTITY
    output_clip: np.ndarray | None = None
    floor_output: bool = False
    train_box: np.ndarray | None = None

    def forward(self, X):
        """Denormalized predictions for raw-state rows X."""
        Z = (apply_features(self.feature, X) - self.in_mean) / self.in_std
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            Z = np.tanh(Z @ W.T + b)
        Z = Z @ self.weights[-1].T + self.biases[-1]
        Y = Z * self.out_std + self.out_mean
        if self.output_clip is not None:
            Y = np.clip(Y, self.output_clip[0], self.output_clip[1])
        if self.floor_output:
            Y = np.maximum(Y, 0.0)
        return Y

    def to_json(self):
        return {
            "format_version": 1,
            "layer_dims": list(self.layer_dims),
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "in_mean": self.in_mean.tolist(),
            "in_std": self.in_std.tolist(),
            "out_mean": self.out_mean.tolist(),
            "out_std": self.out_std.tolist(),
            "feature": self.feature,
            "output_clip": (None if self.output_clip is None
                            else self.output_clip.tolist()),
            "floor_output": self.floor_output,
            "train_box": (None if self.train_box is None
                          else self.train_box.tolist()),
        }

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f)

    @classmethod
    def from_json(cls, d) -> "Mlp":
        if d.get("format_version") != 1:
            raise ValueError("unsupported model format version")
        return cls(
            layer_dims=list(d["layer_dims"]),
            weights=[np.asarray(W, dtype=float) for W in d["weights"]],
            biases=[np.asarray(b, dtype=float) for b in d["biases"]],
            in_mean=np.asarray(d["in_mean"], dtype=float),
            in_std=np.asarray(d["in_std"], dtype=float),
            out_mean=np.asarray(d["out_mean"], dtype=float),
            out_std=np.asarray(d["out_std"], dtype=float),
            feature=d.get("feature", FEATURE_IDENTITY),
            output_clip=(None if d.get("output_clip") is None
                         else np.asarray(d["output_clip"], dtype=float)),
            floor_output=bool(d.get("floor_output", False)),
            train_box=(None if d.get("train_box") is None
                       else np.asarray(d["train_box"], dtype=float)),
        )

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path) as f:
            return cls.from_json(json.load(f))


def _init_params(dims, rng):
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = math.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-scale, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward_pass(weights, biases, Z):
    acts = [Z]
    for W, b in zip(weights[:-1], biases[:-1]):
        Z = np.tanh(Z @ W.T + b)
        acts.append(Z)
    acts.append(Z @ weights[-1].T + biases[-1])
    return acts


def _backward_pass(weights, acts, delta):
    """Gradients of the loss wrt weights/biases given dL/d(output)."""
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        gW[layer] = delta.T @ acts[layer]
        gb[layer] = np.sum(delta, axis=0)
        if layer > 0:
            delta = (delta @ weights[layer]) * (1.0 - acts[layer] ** 2)
    return gW, gb


def mse_gradients(weights, biases, Z, Y):
    """Mean-squared-error loss and parameter gradients for one batch."""
    acts = _forward_pass(weights, biases, Z)
    err = acts[-1] - Y
    loss = float(np.mean(err ** 2))
    delta = 2.0 * err / err.size
    gW, gb = _backward_pass(weights, acts, delta)
    return loss, gW, gb


def _normalize_stats(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < 1e-8, 1.0, std)
    return mean, std


def train(dataset: Dataset, cfg: TrainConfig, target: str = "control",
          feature: str = FEATURE_IDENTITY, output_clip=None,
          train_box=None):
    """Train an MLP on the dataset's control or cost targets.

    Deterministic given cfg.seed.  Returns (net, history) where history
    is a list of (epoch, train_loss, val_loss) rows; the returned
    parameters are the ones with the best validation loss.
    """
    if target == "control":
        raw_X, Y = dataset.inputs, dataset.control_targets
    elif target == "cost":
        raw_X, Y = dataset.cost_rows()
        Y = Y[:, None]
    else:
        raise ValueError("target must be 'control' or 'cost'")
    if len(raw_X) == 0:
        raise ValueError("dataset is empty")

    Z = apply_features(feature, raw_X)
    in_mean, in_std = _normalize_stats(Z)
    out_mean, out_std = _normalize_stats(Y)
    Zn = (Z - in_mean) / in_std
    Yn = (Y - out_mean) / out_std

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(Zn))
    n_val = max(1, int(len(Zn) * cfg.validation_fraction))
    if len(Zn) == 1:
        val_idx = train_idx = perm
    else:
        val_idx, train_idx = perm[:n_val], perm[n_val:]
    Zt, Yt = Zn[train_idx], Yn[train_idx]
    Zv, Yv = Zn[val_idx], Yn[val_idx]

    dims = [Zn.shape[1], *cfg.hidden, Yn.shape[1]]
    weights, biases = _init_params(dims, rng)
    mW = [np.zeros_like(W) for W in weights]
    mb = [np.zeros_like(b) for b in biases]

    best = (math.inf, None, None)
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate / (1.0 + cfg.lr_decay * epoch)
        order = rng.permutation(len(Zt))
        train_loss = 0.0
        n_batches = 0
        for start in range(0, len(Zt), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, gW, gb = mse_gradients(weights, biases, Zt[idx], Yt[idx])
            if not math.isfinite(loss):
                raise TrainingError(
                    f"loss diverged at epoch {epoch} (loss={loss})")
            train_loss += loss
            n_batches += 1
            for layer in range(len(weights)):
                mW[layer] = cfg.momentum * mW[layer] + gW[layer]
                mb[layer] = cfg.momentum * mb[layer] + gb[layer]
                weights[layer] -= lr * mW[layer]
                biases[layer] -= lr * mb[layer]
        val_pred = _forward_pass(weights, biases, Zv)[-1]
        val_loss = float(np.mean((val_pred - Yv) ** 2))
        history.append((epoch, train_loss / max(n_batches, 1), val_loss))
        if val_loss < best[0]:
            best = (val_loss, [W.copy() for W in weights],
                    [b.copy() for b in biases])

    net = Mlp(layer_dims=dims, weights=best[1], biases=best[2],
              in_mean=in_mean, in_std=in_std,
              out_mean=out_mean.ravel() if target == "cost" else out_mean,
              out_std=out_std.ravel() if target == "cost" else out_std,
              feature=feature,
              output_clip=(None if output_clip is None
                           else np.asarray(output_clip, dtype=float)),
              floor_output=(target == "cost"),
              train_box=(None if train_box is None
                         else np.asarray(train_box, dtype=float)))
    return net, history


def predict_control(net: Mlp, x):
    """Forward pass for one state; clamped to the control bounds."""
    return net.forward(np.asarray(x, dtype=float))[0]


def predict_cost(net: Mlp, x) -> float:
    """Predicted steering cost from state x (floored at zero)."""
    return float(net.forward(np.asarray(x, dtype=float))[0, 0])


def in_train_box(net: Mlp, x) -> bool:
    if net.train_box is None:
        return True
    lo, hi = net.train_box
    return bool(np.all(np.asarray(x) >= lo) and np.all(np.asarray(x) <= hi))


def rollout_nn_steer(system: SystemModel, net: Mlp, x_a, goal,
                     dt: float = ROLLOUT_DT,
                     t_max: float = ROLLOUT_T_MAX) -> SteeringResult:
    """Closed-loop steering: translate the goal to the origin, apply the
    controller until the position converges or time runs out.

    Fails immediately when the translated start falls outside the
    training box (the network would be extrapolating).  Success means
    the terminal position lies within the acceptance radius of the
    goal; looser endpoints are reported, not hidden.
    """
    x_a = np.asarray(x_a, dtype=float)
    goal = np.asarray(goal, dtype=float)
    x = x_a.copy()
    x[:N_POS] -= goal
    if not in_train_box(net, x):
        return _rollout_failure(x_a)

    R = system.cost_weights
    times = [0.0]
    states = [x.copy()]
    controls = []
    cost = 0.0
    t = 0.0
    while np.linalg.norm(x[:N_POS]) > ROLLOUT_STOP_RADIUS and t < t_max:
        u = system.clamp_control(predict_control(net, x))
        x = _rk4_step(system, x, u, dt)
        if not np.all(np.isfinite(x)):
            return _rollout_failure(x_a)
        t += dt
        cost += (1.0 + float(u @ R @ u)) * dt
        times.append(t)
        states.append(x.copy())
        controls.append(u)

    err = float(np.linalg.norm(x[:N_POS]))
    states = np.array(states)
    states[:, :N_POS] += goal
    traj = Trajectory(np.array(times), states,
                      np.array(controls) if controls else np.zeros((0, 2)),
                      cost)
    return SteeringResult(traj, states[-1].copy(), cost, t,
                          err <= ROLLOUT_ACCEPT_RADIUS, err)


def _rollout_failure(x_a) -> SteeringResult:
    traj = Trajectory(np.array([0.0]), np.asarray(x_a, dtype=float)[None, :],
                      np.zeros((0, 2)), 0.0)
    return SteeringResult(traj, np.asarray(x_a, dtype=float).copy(),
                          math.inf, 0.0, False, math.inf)


def gradient_check(seed: int = 0, dims=(3, 5, 2), n_points: int = 4,
                   eps: float = 1e-6) -> float:
    """Max relative error between backprop and central finite
    differences on a random small network; used as a self-test."""
    rng = np.random.default_rng(seed)
    weights, biases = _init_params(list(dims), rng)
    Z = rng.normal(size=(n_points, dims[0]))
    Y = rng.normal(size=(n_points, dims[-1]))
    _, gW, gb = mse_gradients(weights, biases, Z, Y)

    def loss_at(ws, bs):
        return float(np.mean((_forward_pass(ws, bs, Z)[-1] - Y) ** 2))

    worst = 0.0
    for layer in range(len(weights)):
        for arr, grad in ((weights[layer], gW[layer]),
                          (biases[layer], gb[layer])):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                i = it.multi_index
                orig = arr[i]
                arr[i] = orig + eps
                hi = loss_at(weights, biases)
                arr[i] = orig - eps
                lo = loss_at(weights, biases)
                arr[i] = orig
                fd = (hi - lo) / (2 * eps)
                denom = max(abs(fd), abs(grad[i]), 1e-8)
                worst = max(worst, abs(fd - grad[i]) / denom)
    return worst


def save_history_csv(history, path):
    with open(path, "w") as f:
        f.write("epoch,train_loss,val_loss\n")
        for epoch, tr, va in history:
            f.write(f"{epoch},{tr!r},{va!r}\n")
