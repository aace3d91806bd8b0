"""Builders for synthetic run directories in the documented on-disk formats."""

import json
import struct

import numpy as np
import pytest


def write_dmdmat(path, mat):
    mat = np.asarray(mat, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sQQ", b"DMDMAT01", mat.shape[0], mat.shape[1]))
        fh.write(mat.astype("<f8").tobytes(order="C"))


def write_metrics(path, l2, max_abs=None, violations=None):
    l2 = np.asarray(l2, dtype=float)
    max_abs = l2 / 10 if max_abs is None else np.asarray(max_abs)
    violations = np.zeros_like(l2, dtype=int) if violations is None else violations
    with open(path, "w") as fh:
        fh.write("step,l2_error,max_abs_error,violations\n")
        for k in range(len(l2)):
            fh.write(f"{k},{l2[k]:.17g},{max_abs[k]:.17g},{violations[k]}\n")


def make_control_run(directory, steps=12, w=10, q_side=2, seed=0,
                     controller="dmd", kind="gaussian", with_reference=True):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    base = 20.0 + rng.uniform(0, 5, (w * w, 1))
    drift = np.linspace(0, 1, steps + 1)[None, :]
    states = base + drift * rng.uniform(-2, 2, (w * w, 1))
    write_dmdmat(directory / "states.dmdmat", states)
    write_dmdmat(directory / "inputs.dmdmat",
                 rng.uniform(0, 3, (q_side * q_side, steps)))
    if with_reference:
        write_dmdmat(directory / "reference.dmdmat",
                     20.0 + rng.uniform(0, 5, (w * w, 1)))
    errors = np.linspace(40.0, 4.0, steps + 1) * (1 + 0.05 * rng.uniform(size=steps + 1))
    write_metrics(directory / "metrics.csv", errors)
    meta = {
        "controller": controller,
        "reference": {"kind": kind},
        "steps": steps,
        "x_min": 15.0,
        "x_max": 35.0,
    }
    (directory / "run.json").write_text(json.dumps(meta, indent=2))
    return directory


def make_validate_run(directory, steps=8, w=10, q_side=2, seed=1):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    true = 20.0 + rng.uniform(0, 5, (w * w, steps + 1))
    write_dmdmat(directory / "true_states.dmdmat", true)
    write_dmdmat(directory / "predicted_states.dmdmat",
                 true + 1e-3 * rng.standard_normal(true.shape))
    write_dmdmat(directory / "inputs.dmdmat",
                 rng.uniform(0, 3, (q_side * q_side, steps)))
    return directory


@pytest.fixture
def control_run(tmp_path):
    return make_control_run(tmp_path / "control-gaussian")


@pytest.fixture
def validate_run(tmp_path):
    return make_validate_run(tmp_path / "validate")


@pytest.fixture
def compare_workspace(tmp_path):
    root = tmp_path / "compare"
    for i, kind in enumerate(("gaussian", "constant", "sliced-gaussian")):
        make_control_run(root / f"dmd-{kind}", seed=10 + i,
                         controller="dmd", kind=kind)
        make_control_run(root / f"proxy-{kind}", seed=20 + i,
                         controller="proxy", kind=kind)
    return root


@pytest.fixture
def ablate_workspace(tmp_path):
    root = tmp_path / "ablate"
    for i, r in enumerate((10, 20, 40)):
        d = make_control_run(root / f"order-r{r}", seed=30 + i)
        meta = json.loads((d / "run.json").read_text())
        meta.update({"sweep": "order", "r": r, "m": 3000})
        (d / "run.json").write_text(json.dumps(meta))
    for i, m in enumerate((500, 3000)):
        d = make_control_run(root / f"size-m{m}", seed=40 + i)
        meta = json.loads((d / "run.json").read_text())
        meta.update({"sweep": "size", "r": 40, "m": m})
        (d / "run.json").write_text(json.dumps(meta))
    return root
