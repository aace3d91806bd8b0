import json

import numpy as np
import pytest

from dmdmpc import harness, plant
from dmdmpc.matio import read_matrix
from dmdmpc.mpc import MpcConfig, MpcController


class TestReferenceFields:
    def test_constant_level(self):
        ref = harness.reference_field("constant", level=28.0)
        assert ref.realized.shape == (2500,)
        assert np.array_equal(ref.realized, np.full(2500, 28.0))

    def test_gaussian_zero_amplitude(self):
        ref = harness.reference_field("gaussian", amplitude=0.0)
        assert np.array_equal(ref.realized, np.full(2500, 20.0))

    def test_inactive_slice_equals_gaussian(self):
        g = harness.reference_field("gaussian", amplitude=5.0)
        s = harness.reference_field("sliced-gaussian", amplitude=5.0,
                                    slice_level=25.5)
        assert np.array_equal(g.realized, s.realized)

    def test_active_slice_clips_peak(self):
        s = harness.reference_field("sliced-gaussian", amplitude=6.0,
                                    slice_level=24.5)
        assert s.realized.max() == 24.5

    def test_out_of_box_rejected(self):
        with pytest.raises(ValueError, match="state box"):
            harness.reference_field("gaussian", amplitude=30.0)
        with pytest.raises(ValueError, match="state box"):
            harness.reference_field("constant", level=10.0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown reference kind"):
            harness.reference_field("triangle")

    def test_gaussian_peak_at_center(self):
        ref = harness.reference_field("gaussian", window=9, sigma=2.0,
                                      amplitude=4.0)
        field = ref.realized.reshape(9, 9, order="F")
        assert field[4, 4] == field.max() == 24.0


class TestGenerateDataset:
    def test_two_step_zero_amplitude(self, small_cfg):
        ds = harness.generate_dataset(small_cfg, 2, 1, seed=0, lo=0.0, hi=0.0)
        assert ds.m == 2
        assert np.array_equal(ds.states[:, 0], np.full(small_cfg.n, 20.0))
        assert np.array_equal(ds.states[:, 1], ds.states[:, 0])

    def test_determinism(self, small_cfg):
        a = harness.generate_dataset(small_cfg, 30, 5, seed=3)
        b = harness.generate_dataset(small_cfg, 30, 5, seed=3)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.inputs, b.inputs)

    def test_shapes(self, small_cfg):
        ds = harness.generate_dataset(small_cfg, 25, 5, seed=1)
        assert ds.states.shape == (small_cfg.n, 25)
        assert ds.inputs.shape == (small_cfg.q, 25)
        assert ds.dt == small_cfg.dt

    def test_substream_derivation(self):
        a = harness.substream(2025, "excitation")
        b = harness.substream(2025, "excitation")
        c = harness.substream(2025, "ablation")
        assert a == b != c
        assert harness.substream(2026, "excitation") != a


class TestClosedLoop:
    def test_already_at_target(self, small_cfg, small_model):
        ref = harness.reference_field(
            "constant", window=small_cfg.window_size, level=20.0,
        )
        cfg = MpcConfig(u_min=0.0, u_max=small_cfg.u_max)
        ctrl = MpcController(small_model, cfg, ref.realized)
        rec = harness.run_closed_loop(small_cfg, ctrl, ref, steps=5)
        assert rec.l2_errors.max() < 1e-2
        assert np.abs(rec.inputs).max() < 1e-3

    def test_metrics_recomputable(self, small_cfg, small_model):
        ref = harness.reference_field(
            "gaussian", window=small_cfg.window_size, sigma=6.0, amplitude=5.0,
        )
        cfg = MpcConfig(u_min=0.0, u_max=small_cfg.u_max)
        ctrl = MpcController(small_model, cfg, ref.realized)
        rec = harness.run_closed_loop(small_cfg, ctrl, ref, steps=5)
        l2, max_abs, violations = harness.tracking_metrics(
            rec.states, ref.realized, 15.0, 35.0
        )
        assert np.abs(l2 - rec.l2_errors).max() < 1e-12
        assert np.abs(max_abs - rec.max_abs_errors).max() < 1e-12
        assert np.array_equal(violations, rec.violations)

    def test_save_run_layout(self, small_cfg, small_model, tmp_path):
        ref = harness.reference_field(
            "gaussian", window=small_cfg.window_size, sigma=6.0, amplitude=5.0,
        )
        cfg = MpcConfig(u_min=0.0, u_max=small_cfg.u_max)
        ctrl = MpcController(small_model, cfg, ref.realized)
        rec = harness.run_closed_loop(small_cfg, ctrl, ref, steps=4)
        harness.save_run(tmp_path / "run", rec, ref)
        states = read_matrix(tmp_path / "run" / "states.dmdmat")
        inputs = read_matrix(tmp_path / "run" / "inputs.dmdmat")
        assert states.shape == (small_cfg.n, 5)
        assert inputs.shape == (small_cfg.q, 4)
        reference = read_matrix(tmp_path / "run" / "reference.dmdmat")
        assert reference.shape == (small_cfg.n, 1)
        rows = (tmp_path / "run" / "metrics.csv").read_text().splitlines()
        assert rows[0] == "step,l2_error,max_abs_error,violations"
        assert len(rows) == 6
        parsed = [float(x) for x in rows[1].split(",")]
        assert parsed[1] == rec.l2_errors[0]
        meta = json.loads((tmp_path / "run" / "run.json").read_text())
        assert meta["steps"] == 4
        assert "config_hash" in meta

    def test_validate_rollout_window_check(self, small_model, small_dataset):
        with pytest.raises(ValueError, match="exceeds"):
            harness.validate_rollout(small_model, small_dataset, 395, 50)

    def test_validate_rollout_shapes(self, small_model, small_dataset):
        true, pred, err = harness.validate_rollout(small_model, small_dataset, 300, 20)
        assert true.shape == pred.shape == (small_dataset.n, 21)
        assert err.shape == (21,)


class TestProxy:
    def test_index_out_of_range(self, small_dataset):
        ref = harness.reference_field("constant", window=18, level=22.0)
        with pytest.raises(IndexError):
            harness.proxy_controller(
                small_dataset, np.array([0, small_dataset.n]), MpcConfig(), ref
            )

    def test_proxy_dimensions(self, small_cfg, small_dataset):
        sensors = plant.actuator_window_indices(small_cfg)
        ref = harness.reference_field(
            "gaussian", window=small_cfg.window_size, sigma=6.0, amplitude=5.0,
        )
        cfg = MpcConfig(u_min=0.0, u_max=small_cfg.u_max)
        ctrl = harness.proxy_controller(
            small_dataset.head(300), sensors, cfg, ref,
            offset=small_cfg.boundary_temp,
        )
        assert ctrl.model.n == len(sensors) == small_cfg.q
        assert ctrl.model.q == small_cfg.q
        assert np.array_equal(ctrl.reference, ref.realized[sensors])

    def test_proxy_closed_loop_runs(self, small_cfg, small_dataset):
        sensors = plant.actuator_window_indices(small_cfg)
        ref = harness.reference_field(
            "gaussian", window=small_cfg.window_size, sigma=6.0, amplitude=5.0,
        )
        cfg = MpcConfig(u_min=0.0, u_max=small_cfg.u_max)
        ctrl = harness.proxy_controller(
            small_dataset.head(300), sensors, cfg, ref,
            offset=small_cfg.boundary_temp,
        )
        rec = harness.run_closed_loop(small_cfg, ctrl, ref, steps=5)
        assert rec.l2_errors[-1] < rec.l2_errors[0]


class TestAblation:
    def test_deterministic_cells(self, small_cfg, small_dataset):
        ref = harness.reference_field(
            "gaussian", window=small_cfg.window_size, sigma=6.0, amplitude=5.0,
        )
        cfg = MpcConfig(u_min=0.0, u_max=small_cfg.u_max)
        a = harness.ablation(small_dataset.head(300), [6, 12], [150, 300],
                             ref, small_cfg, cfg, steps=3, s=20)
        b = harness.ablation(small_dataset.head(300), [6, 12], [150, 300],
                             ref, small_cfg, cfg, steps=3, s=20)
        fa = [(c["sweep"], c["r"], c["m"], c["final_error"]) for c in a]
        fb = [(c["sweep"], c["r"], c["m"], c["final_error"]) for c in b]
        assert fa == fb

    def test_sweep_structure(self, small_cfg, small_dataset):
        ref = harness.reference_field(
            "gaussian", window=small_cfg.window_size, sigma=6.0, amplitude=5.0,
        )
        cfg = MpcConfig(u_min=0.0, u_max=small_cfg.u_max)
        cells = harness.ablation(small_dataset.head(300), [6, 12], [150, 300],
                                 ref, small_cfg, cfg, steps=3, s=20)
        order = [(c["r"], c["m"]) for c in cells if c["sweep"] == "order"]
        size = [(c["r"], c["m"]) for c in cells if c["sweep"] == "size"]
        assert order == [(6, 300), (12, 300)]
        assert sorted(size) == [(12, 150), (12, 300)]
