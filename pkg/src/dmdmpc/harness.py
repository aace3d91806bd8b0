"""Experiment orchestration: excitation data, reference fields, closed-loop
runs, proxy-sensor baselines, and order/data ablations.

Conventions shared by all experiments: datasets store raw temperatures with
column k the observation at step k; identification references states to the
plant's boundary temperature; closed-loop runs start from the zero-input
steady state and record the full observation, the applied input, and tracking
metrics at every step.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dmdc, plant
from .matio import SnapshotDataset, split_snapshots, write_matrix
from .mpc import MpcConfig, MpcController

# default training protocol
TRAIN_SIZE = 3000
DEFAULT_S = 55
DEFAULT_R = 40
CONTROL_STEPS = 30


def substream(seed: int, name: str) -> int:
    """Deterministic named sub-seed derived from one master seed."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def generate_dataset(
    cfg: plant.PlantConfig, steps: int, hold: int, seed: int,
    lo: float = 0.0, hi: float = None,
) -> SnapshotDataset:
    """Simulate the plant from uniform ambient under held random step inputs."""
    if steps < 2:
        raise ValueError("need at least 2 steps")
    hi = cfg.u_max if hi is None else hi
    inputs = plant.excitation_signal(cfg.q, steps, hold, lo, hi, seed)
    states = np.empty((cfg.n, steps))
    st = plant.initial_state(cfg)
    for k in range(steps):
        states[:, k] = plant.observe_inner(cfg, st)
        st = plant.step(cfg, st, inputs[:, k])
    return SnapshotDataset(states, inputs, cfg.dt)


def identify_default(ds: SnapshotDataset, cfg: plant.PlantConfig,
                     s: int = DEFAULT_S, r: int = DEFAULT_R) -> dmdc.DmdcModel:
    """Fixed-order identification referenced to the boundary temperature."""
    return dmdc.identify(
        ds, dmdc.TruncationRule.fixed(s), dmdc.TruncationRule.fixed(r),
        offset=cfg.boundary_temp,
    )


# -- reference fields ------------------------------------------------------

@dataclass(frozen=True)
class ReferenceField:
    kind: str
    params: dict
    realized: np.ndarray


def reference_field(
    kind: str,
    window: int = 50,
    base: float = 20.0,
    amplitude: float = 6.0,
    sigma: float = 18.0,
    center: tuple = None,
    level: float = 28.0,
    slice_level: float = 24.5,
    x_min: float = 15.0,
    x_max: float = 35.0,
) -> ReferenceField:
    """Construct one of the test target fields (column-stacked vector).

    gaussian: base + amplitude * exp(-d^2 / (2 sigma^2)) around ``center``
    constant: ``level`` everywhere
    sliced-gaussian: the gaussian clipped at ``slice_level``
    """
    if center is None:
        center = ((window - 1) / 2.0, (window - 1) / 2.0)
    ii, jj = np.meshgrid(np.arange(window), np.arange(window), indexing="ij")
    if kind == "gaussian":
        fld = base + amplitude * np.exp(
            -(((ii - center[0]) ** 2 + (jj - center[1]) ** 2) / (2.0 * sigma**2))
        )
        params = {"amplitude": amplitude, "sigma": sigma, "center": list(center)}
    elif kind == "constant":
        fld = np.full((window, window), level)
        params = {"level": level}
    elif kind == "sliced-gaussian":
        fld = base + np.minimum(
            amplitude * np.exp(
                -(((ii - center[0]) ** 2 + (jj - center[1]) ** 2) / (2.0 * sigma**2))
            ),
            slice_level - base,
        )
        params = {"amplitude": amplitude, "sigma": sigma, "center": list(center),
                  "slice_level": slice_level}
    else:
        raise ValueError(f"unknown reference kind {kind!r}")
    realized = fld.flatten(order="F")
    if realized.min() < x_min or realized.max() > x_max:
        raise ValueError("reference values out of the state box")
    return ReferenceField(kind, params, realized)


REFERENCE_KINDS = ("gaussian", "constant", "sliced-gaussian")


# -- closed-loop records ---------------------------------------------------

@dataclass
class RunRecord:
    states: np.ndarray        # n x (steps+1): observation before each step + final
    inputs: np.ndarray        # q x steps
    l2_errors: np.ndarray     # steps+1
    max_abs_errors: np.ndarray
    violations: np.ndarray    # samples outside the state box, per recorded state
    meta: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.inputs.shape[1]

    @property
    def final_error(self) -> float:
        return float(self.l2_errors[-1])

    @property
    def initial_error(self) -> float:
        return float(self.l2_errors[0])


def tracking_metrics(states: np.ndarray, reference: np.ndarray,
                     x_min: float, x_max: float):
    """Per-column tracking metrics; the single source for stored and
    recomputed values."""
    err = reference[:, None] - states
    l2 = np.linalg.norm(err, axis=0)
    max_abs = np.abs(err).max(axis=0)
    violations = np.sum((states < x_min) | (states > x_max), axis=0)
    return l2, max_abs, violations.astype(int)


def run_closed_loop(
    cfg: plant.PlantConfig,
    controller: MpcController,
    ref: ReferenceField,
    steps: int = CONTROL_STEPS,
    meta: dict = None,
) -> RunRecord:
    """Receding-horizon loop against the plant from its ambient steady state."""
    n = cfg.n
    states = np.empty((n, steps + 1))
    inputs = np.empty((cfg.q, steps))
    st = plant.initial_state(cfg)
    states[:, 0] = plant.observe_inner(cfg, st)
    warnings = 0
    for k in range(steps):
        u, diag = controller.control_action(states[:, k])
        warnings += int(diag["warning"])
        inputs[:, k] = u
        st = plant.step(cfg, st, u)
        states[:, k + 1] = plant.observe_inner(cfg, st)

    x_min = float(np.min(controller.config.x_min))
    x_max = float(np.max(controller.config.x_max))
    l2, max_abs, violations = tracking_metrics(states, ref.realized, x_min, x_max)
    run_meta = {
        "reference": {"kind": ref.kind, **ref.params},
        "steps": steps,
        "solver_warnings": warnings,
        "x_min": x_min,
        "x_max": x_max,
        "model": {
            "r": controller.model.r, "s": controller.model.s,
            "n": controller.model.n, "q": controller.model.q,
            "m_train": controller.model.m_train, "offset": controller.model.offset,
        },
        "config_hash": _config_hash(cfg, controller.config, ref),
    }
    if meta:
        run_meta.update(meta)
    return RunRecord(states, inputs, l2, max_abs, violations, run_meta)


def _config_hash(cfg: plant.PlantConfig, mcfg: MpcConfig, ref: ReferenceField) -> str:
    payload = repr((cfg, mcfg.__dict__, ref.kind, sorted(ref.params.items())))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_run(directory, record: RunRecord, ref: ReferenceField = None) -> None:
    """Persist a closed-loop run: binary matrices, metrics CSV, and metadata."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(directory / "states.dmdmat", record.states)
    write_matrix(directory / "inputs.dmdmat", record.inputs)
    if ref is not None:
        write_matrix(directory / "reference.dmdmat", ref.realized.reshape(-1, 1))
    with open(directory / "metrics.csv", "w") as fh:
        fh.write("step,l2_error,max_abs_error,violations\n")
        for k in range(record.states.shape[1]):
            fh.write(
                f"{k},{record.l2_errors[k]:.17g},{record.max_abs_errors[k]:.17g},"
                f"{record.violations[k]}\n"
            )
    (directory / "run.json").write_text(json.dumps(record.meta, indent=2, sort_keys=True))


# -- model validation ------------------------------------------------------

def validate_rollout(model: dmdc.DmdcModel, ds: SnapshotDataset,
                     start: int, steps: int):
    """Roll the model over a validation segment and compare to the truth.

    Returns (true block, predicted block, per-step max-abs errors).
    """
    if start + steps >= ds.m:
        raise ValueError("validation window exceeds the dataset")
    pred = dmdc.rollout(model, ds.states[:, start], ds.inputs[:, start : start + steps])
    true = ds.states[:, start : start + steps + 1]
    err = np.abs(pred - true).max(axis=0)
    return true, pred, err


# -- proxy-sensor baseline -------------------------------------------------

def proxy_controller(
    ds: SnapshotDataset,
    sensor_indices: np.ndarray,
    config: MpcConfig,
    reference: ReferenceField,
    offset: float = 20.0,
) -> MpcController:
    """Standard-MPC baseline built from point sensors at the given pixels.

    The dataset's state rows are restricted to the sensor pixels and a
    full-order model (subject to the rank guard) is identified on that small
    state; the controller tracks the reference sampled at the same pixels but
    is evaluated against the full field by the caller.
    """
    sensor_indices = np.asarray(sensor_indices, int)
    if sensor_indices.min() < 0 or sensor_indices.max() >= ds.n:
        raise IndexError("sensor index out of range")
    sub = SnapshotDataset(ds.states[sensor_indices, :], ds.inputs, ds.dt)
    n_sub = len(sensor_indices)
    s_full = min(n_sub + sub.q, sub.m - 1)
    model = dmdc.identify(
        sub,
        dmdc.TruncationRule.fixed(s_full),
        dmdc.TruncationRule.fixed(min(n_sub, sub.m - 1)),
        offset=offset,
    )
    return MpcController(
        model, config, reference.realized[sensor_indices], obs_indices=sensor_indices
    )


def compare_controllers(
    ds: SnapshotDataset,
    cfg: plant.PlantConfig,
    config: MpcConfig,
    refs: dict,
    steps: int = CONTROL_STEPS,
    model: dmdc.DmdcModel = None,
) -> dict:
    """Closed-loop runs of the reduced-model controller and the proxy baseline
    for each reference; keys are (controller, reference kind)."""
    if model is None:
        model = identify_default(ds, cfg)
    sensors = plant.actuator_window_indices(cfg)
    records = {}
    for kind, ref in refs.items():
        ctrl = MpcController(model, config, ref.realized)
        records[("dmd", kind)] = run_closed_loop(
            cfg, ctrl, ref, steps, meta={"controller": "dmd"}
        )
        pctrl = proxy_controller(ds, sensors, config, ref, offset=cfg.boundary_temp)
        records[("proxy", kind)] = run_closed_loop(
            cfg, pctrl, ref, steps, meta={"controller": "proxy"}
        )
    return records


# -- ablations ---------------------------------------------------------------

def ablation(
    ds: SnapshotDataset,
    orders,
    sizes,
    ref: ReferenceField,
    cfg: plant.PlantConfig,
    config: MpcConfig,
    steps: int = CONTROL_STEPS,
    s: int = DEFAULT_S,
):
    """Closed-loop tracking error versus model order and training-set size.

    Runs an order sweep at the largest size and a size sweep at the largest
    order; SVD factors are computed once per size and shared across orders.
    Returns a list of cell dicts with the sweep tag, (r, m), the error
    trajectory, and the final error.
    """
    orders = sorted(orders)
    sizes = sorted(sizes)
    cells = []
    factors_cache = {}

    def factors_for(m):
        if m not in factors_cache:
            sub = ds.head(m)
            X, Y, Ups = split_snapshots(sub)
            X = X - cfg.boundary_temp
            Y = Y - cfg.boundary_temp
            omega = np.vstack([X, Ups])
            factors_cache[m] = (sub, Y, dmdc._economy_svd(omega), dmdc._economy_svd(Y))
        return factors_cache[m]

    def run_cell(sweep, r, m):
        sub, Y, om_f, y_f = factors_for(m)
        model = dmdc._assemble_model(
            sub, Y, om_f, y_f,
            dmdc.TruncationRule.fixed(min(s, m - 1)),
            dmdc.TruncationRule.fixed(r),
            offset=cfg.boundary_temp,
        )
        ctrl = MpcController(model, config, ref.realized)
        rec = run_closed_loop(cfg, ctrl, ref, steps,
                              meta={"sweep": sweep, "r": r, "m": m})
        cells.append({
            "sweep": sweep, "r": r, "m": m,
            "errors": rec.l2_errors, "final_error": rec.final_error,
            "record": rec,
        })

    m_big = sizes[-1]
    for r in orders:
        run_cell("order", r, m_big)
    r_big = orders[-1]
    for m in sizes:
        if m == m_big:
            continue  # shared cell already run in the order sweep
        run_cell("size", r_big, m)
    # tag the shared cell into the size sweep as well
    shared = next(c for c in cells if c["sweep"] == "order" and c["r"] == r_big)
    cells.append({**shared, "sweep": "size"})
    return cells
