"""Shared fixtures.

The car steering dataset and trained networks take minutes to build, so
they are cached under `.cache/` at the repository root: the first full
test run generates them and later runs load the cached artifacts.
Delete the directory to force regeneration.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from pffplan.dynamics import double_integrator, kinematic_car
from pffplan.environment import corridor_env
from pffplan.learning import (FEATURE_CAR_ANGLE, Mlp, TrainConfig, train)
from pffplan.linear_steering import double_integrator_linear
from pffplan.ocp_solver import dataset_from_csv, generate_dataset, save_dataset

CACHE_DIR = Path(__file__).resolve().parent.parent / ".cache"

CAR_DATASET_N = 2000
CAR_DATASET_SEED = 11
CAR_TRAIN_SEED = 0


@pytest.fixture(scope="session")
def di_system():
    return double_integrator()


@pytest.fixture(scope="session")
def car_system():
    return kinematic_car()


@pytest.fixture(scope="session")
def linear_di():
    return double_integrator_linear()


@pytest.fixture(scope="session")
def corridor():
    return corridor_env()


@pytest.fixture(scope="session")
def car_dataset_bundle(car_system):
    """(dataset, manifest, meta) for the 2000-trajectory car dataset."""
    stem = CACHE_DIR / f"car_dataset_n{CAR_DATASET_N}_seed{CAR_DATASET_SEED}"
    csv_path = stem.with_suffix(".csv")
    man_path = stem.with_suffix(".json")
    meta_path = Path(str(stem) + "_meta.json")
    if csv_path.exists() and man_path.exists():
        manifest = json.loads(man_path.read_text())
        dataset = dataset_from_csv(csv_path.read_text(),
                                   box=np.asarray(manifest["box"]))
        meta = (json.loads(meta_path.read_text()) if meta_path.exists()
                else {"generation_seconds": None})
    else:
        CACHE_DIR.mkdir(exist_ok=True)
        t0 = time.perf_counter()
        dataset, manifest = generate_dataset(car_system, CAR_DATASET_N,
                                             seed=CAR_DATASET_SEED)
        meta = {"generation_seconds": time.perf_counter() - t0}
        save_dataset(dataset, manifest, csv_path, man_path)
        meta_path.write_text(json.dumps(meta))
    return dataset, manifest, meta


@pytest.fixture(scope="session")
def car_models(car_system, car_dataset_bundle):
    """(control_net, cost_net, meta) trained on the cached car dataset."""
    control_path = CACHE_DIR / "car_control_model.json"
    cost_path = CACHE_DIR / "car_cost_model.json"
    meta_path = CACHE_DIR / "car_models_meta.json"
    if control_path.exists() and cost_path.exists() and meta_path.exists():
        return (Mlp.load(control_path), Mlp.load(cost_path),
                json.loads(meta_path.read_text()))
    dataset, _manifest, _meta = car_dataset_bundle
    cfg = TrainConfig(seed=CAR_TRAIN_SEED)
    t0 = time.perf_counter()
    control_net, control_hist = train(
        dataset, cfg, target="control", feature=FEATURE_CAR_ANGLE,
        output_clip=car_system.control_bounds, train_box=dataset.box)
    cost_net, cost_hist = train(
        dataset, cfg, target="cost", feature=FEATURE_CAR_ANGLE,
        train_box=dataset.box)
    meta = {
        "training_seconds": time.perf_counter() - t0,
        "control_val_loss": min(h[2] for h in control_hist),
        "cost_val_loss": min(h[2] for h in cost_hist),
    }
    CACHE_DIR.mkdir(exist_ok=True)
    control_net.save(control_path)
    cost_net.save(cost_path)
    meta_path.write_text(json.dumps(meta))
    return control_net, cost_net, meta
