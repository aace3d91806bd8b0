"""Shared fixtures.  The heavyweight objects (full-protocol dataset, fitted
models, closed-loop runs) are session-scoped and computed once on first use."""

import numpy as np
import pytest

from dmdmpc import dmdc, harness, plant
from dmdmpc.matio import SnapshotDataset
from dmdmpc.mpc import MpcConfig, MpcController

MASTER_SEED = 2025


# -- synthetic linear system (exact-recovery setting) -----------------------

@pytest.fixture(scope="session")
def linear_system():
    """Known stable (A, B) with persistently exciting inputs, n=8, q=2, m=200."""
    rng = np.random.default_rng(42)
    n, q, m = 8, 2, 200
    M = rng.standard_normal((n, n))
    A = 0.9 * M / np.abs(np.linalg.eigvals(M)).max()
    B = rng.standard_normal((n, q))
    inputs = rng.uniform(-1.0, 1.0, (q, m))
    states = np.empty((n, m))
    x = rng.standard_normal(n)
    for k in range(m):
        states[:, k] = x
        x = A @ x + B @ inputs[:, k]
    return A, B, SnapshotDataset(states, inputs, 1.0)


@pytest.fixture(scope="session")
def recovered_model(linear_system):
    _, _, ds = linear_system
    return dmdc.identify(ds, dmdc.TruncationRule.fixed(10), dmdc.TruncationRule.fixed(8))


# -- full-protocol plant, dataset, and models --------------------------------

@pytest.fixture(scope="session")
def plant_cfg():
    return plant.PlantConfig()


@pytest.fixture(scope="session")
def paper_dataset(plant_cfg):
    seed = harness.substream(MASTER_SEED, "excitation")
    return harness.generate_dataset(plant_cfg, 5000, 50, seed)


@pytest.fixture(scope="session")
def train_dataset(paper_dataset):
    return paper_dataset.head(harness.TRAIN_SIZE)


@pytest.fixture(scope="session")
def default_model(train_dataset, plant_cfg):
    return harness.identify_default(train_dataset, plant_cfg)


@pytest.fixture(scope="session")
def energy_model(train_dataset, plant_cfg):
    return dmdc.identify(train_dataset, offset=plant_cfg.boundary_temp)


@pytest.fixture(scope="session")
def mpc_cfg(plant_cfg):
    return MpcConfig(u_min=0.0, u_max=plant_cfg.u_max)


@pytest.fixture(scope="session")
def gaussian_ref():
    return harness.reference_field("gaussian")


@pytest.fixture(scope="session")
def gaussian_run(plant_cfg, default_model, mpc_cfg, gaussian_ref):
    ctrl = MpcController(default_model, mpc_cfg, gaussian_ref.realized)
    return harness.run_closed_loop(plant_cfg, ctrl, gaussian_ref, harness.CONTROL_STEPS)


@pytest.fixture(scope="session")
def compare_records(train_dataset, plant_cfg, mpc_cfg, default_model):
    refs = {k: harness.reference_field(k) for k in harness.REFERENCE_KINDS}
    return harness.compare_controllers(
        train_dataset, plant_cfg, mpc_cfg, refs, model=default_model
    )


@pytest.fixture(scope="session")
def ablation_cells(train_dataset, plant_cfg, mpc_cfg, gaussian_ref):
    return harness.ablation(
        train_dataset, [10, 20, 30, 40], [500, 1000, 2000, 3000],
        gaussian_ref, plant_cfg, mpc_cfg,
    )


# -- small plant for fast harness/CLI tests ----------------------------------

@pytest.fixture(scope="session")
def small_cfg():
    return plant.PlantConfig(
        grid_size=31, window_offset=6, window_size=18,
        actuators=plant.default_actuator_lattice(6, 18, 3),
        u_max=40.0, source_radius=4.0,
    )


@pytest.fixture(scope="session")
def small_dataset(small_cfg):
    return harness.generate_dataset(
        small_cfg, 400, 10, seed=harness.substream(7, "excitation")
    )


@pytest.fixture(scope="session")
def small_model(small_cfg, small_dataset):
    return harness.identify_default(small_dataset.head(300), small_cfg, s=20, r=12)
