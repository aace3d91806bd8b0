"""Figure families rendered from run directories.

Every function takes a run directory (or a list of them), writes one image
file, and returns the output path.  Rendering is deterministic: the Agg
backend with pinned rc settings produces identical bytes for identical
inputs.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import runio

RC = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "svg.hashsalt": "dmdmpc-figs",
    "path.simplify": False,
}

CMAP = "inferno"


def _save(fig, out) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata={"Software": None} if out.suffix == ".png" else None)
    plt.close(fig)
    return out


def _snapshot_times(count: int, panels: int = 5) -> np.ndarray:
    return np.unique(np.linspace(0, count - 1, min(panels, count)).round().astype(int))


def plot_fields(run_dir, out):
    """Heatmap grid at evenly spaced times with a shared color scale.

    Control runs render observed fields plus target/error panels when a
    reference file is present; validation runs render true, predicted, and
    input rows.
    """
    run_dir = Path(run_dir)
    with plt.rc_context(RC):
        if (run_dir / "predicted_states.dmdmat").exists():
            true_p, pred_p, inputs_p = runio.require(
                run_dir, "true_states.dmdmat", "predicted_states.dmdmat",
                "inputs.dmdmat",
            )
            true = runio.field_stack(runio.read_matrix(true_p))
            pred = runio.field_stack(runio.read_matrix(pred_p))
            inputs = runio.read_matrix(inputs_p)
            times = _snapshot_times(true.shape[0])
            vmin = min(true.min(), pred.min())
            vmax = max(true.max(), pred.max())
            qside = int(round(np.sqrt(inputs.shape[0])))
            fig, axes = plt.subplots(3, len(times),
                                     figsize=(2.1 * len(times), 6.2),
                                     squeeze=False)
            for c, t in enumerate(times):
                axes[0][c].imshow(true[t], cmap=CMAP, vmin=vmin, vmax=vmax)
                axes[0][c].set_title(f"true t={t}")
                axes[1][c].imshow(pred[t], cmap=CMAP, vmin=vmin, vmax=vmax)
                axes[1][c].set_title(f"predicted t={t}")
                ti = min(t, inputs.shape[1] - 1)
                umap = inputs[:, ti].reshape(qside, qside, order="F")
                axes[2][c].imshow(umap, cmap="viridis",
                                  vmin=inputs.min(), vmax=inputs.max())
                axes[2][c].set_title(f"inputs t={ti}")
                for row in axes:
                    row[c].set_xticks([])
                    row[c].set_yticks([])
            fig.tight_layout()
            return _save(fig, out)

        (states_p,) = runio.require(run_dir, "states.dmdmat")
        fields = runio.field_stack(runio.read_matrix(states_p))
        ref_path = run_dir / "reference.dmdmat"
        reference = None
        if ref_path.exists():
            reference = runio.field_stack(runio.read_matrix(ref_path))[0]
        times = _snapshot_times(fields.shape[0])
        ncols = len(times) + (2 if reference is not None else 0)
        vmin = fields.min() if reference is None else min(fields.min(), reference.min())
        vmax = fields.max() if reference is None else max(fields.max(), reference.max())
        fig, axes = plt.subplots(1, ncols, figsize=(2.1 * ncols, 2.4),
                                 squeeze=False)
        axes = axes[0]
        for c, t in enumerate(times):
            axes[c].imshow(fields[t], cmap=CMAP, vmin=vmin, vmax=vmax)
            axes[c].set_title(f"t={t}")
            axes[c].set_xticks([])
            axes[c].set_yticks([])
        if reference is not None:
            axes[len(times)].imshow(reference, cmap=CMAP, vmin=vmin, vmax=vmax)
            axes[len(times)].set_title("target")
            err = reference - fields[-1]
            lim = np.abs(err).max() or 1.0
            axes[len(times) + 1].imshow(err, cmap="coolwarm", vmin=-lim, vmax=lim)
            axes[len(times) + 1].set_title("final error")
            for ax in axes[len(times):]:
                ax.set_xticks([])
                ax.set_yticks([])
        fig.tight_layout()
        return _save(fig, out)


def plot_surfaces(run_dir, out):
    """3D surface snapshots with the state box drawn as bounding planes."""
    run_dir = Path(run_dir)
    (states_p,) = runio.require(run_dir, "states.dmdmat")
    fields = runio.field_stack(runio.read_matrix(states_p))
    meta = runio.read_meta(run_dir)
    x_min = meta.get("x_min")
    x_max = meta.get("x_max")
    times = _snapshot_times(fields.shape[0], panels=4)
    w = fields.shape[1]
    X, Y = np.meshgrid(np.arange(w), np.arange(w), indexing="ij")
    with plt.rc_context(RC):
        fig = plt.figure(figsize=(3.0 * len(times), 3.2))
        for c, t in enumerate(times):
            ax = fig.add_subplot(1, len(times), c + 1, projection="3d")
            ax.plot_surface(X, Y, fields[t], cmap=CMAP, linewidth=0,
                            antialiased=False)
            for bound in (x_min, x_max):
                if bound is not None and np.isfinite(bound):
                    ax.plot_surface(X, Y, np.full_like(fields[t], bound),
                                    color="gray", alpha=0.25, linewidth=0)
            ax.set_title(f"t={t}")
            ax.set_zlabel("degC")
        fig.tight_layout()
        return _save(fig, out)


def plot_inputs(run_dir, out):
    """Actuator power trajectories over the run."""
    run_dir = Path(run_dir)
    (inputs_p,) = runio.require(run_dir, "inputs.dmdmat")
    inputs = runio.read_matrix(inputs_p)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.2, 3.2))
        for j in range(inputs.shape[0]):
            ax.plot(inputs[j], linewidth=0.8)
        ax.set_xlabel("step")
        ax.set_ylabel("actuator power")
        ax.set_title(runio.run_label(run_dir))
        fig.tight_layout()
        return _save(fig, out)


def plot_error_curves(run_dirs, out, log_scale: bool = False):
    """Overlaid tracking-error trajectories for one or more runs."""
    if isinstance(run_dirs, (str, Path)):
        run_dirs = [run_dirs]
    curves = []
    for run_dir in run_dirs:
        (metrics_p,) = runio.require(run_dir, "metrics.csv")
        metrics = runio.read_metrics(metrics_p)
        key = "l2_error" if "l2_error" in metrics else "max_abs_error"
        curves.append((runio.run_label(run_dir), metrics[key]))
    shortest = min(len(c) for _, c in curves)
    if any(len(c) != shortest for _, c in curves):
        warnings.warn("inconsistent step counts; truncating to the shortest run")
        curves = [(label, c[:shortest]) for label, c in curves]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.2, 3.4))
        for label, c in curves:
            ax.plot(c, label=label)
        if log_scale:
            ax.set_yscale("log")
        ax.set_xlabel("step")
        ax.set_ylabel("tracking error")
        if len(curves) > 1:
            ax.legend(fontsize=7)
        fig.tight_layout()
        return _save(fig, out)


def plot_ablation(ablate_dir, out):
    """Two-panel order/size figure from an ablate workspace."""
    ablate_dir = Path(ablate_dir)
    order_dirs = sorted(ablate_dir.glob("order-r*"),
                        key=lambda p: int(p.name.split("order-r")[1]))
    size_dirs = sorted(ablate_dir.glob("size-m*"),
                       key=lambda p: int(p.name.split("size-m")[1]))
    if not order_dirs and not size_dirs:
        raise FileNotFoundError(
            f"{ablate_dir}: missing expected run directories order-r*/ and size-m*/"
        )
    with plt.rc_context(RC):
        fig, axes = plt.subplots(2, 1, figsize=(5.4, 5.6), sharex=True)
        for d in order_dirs:
            m = runio.read_metrics(d / "metrics.csv")
            axes[0].plot(m["l2_error"], label=d.name.replace("order-", ""))
        axes[0].set_ylabel("tracking error")
        axes[0].set_title("model order")
        axes[0].legend(fontsize=7)
        for d in size_dirs:
            m = runio.read_metrics(d / "metrics.csv")
            axes[1].plot(m["l2_error"], label=d.name.replace("size-", ""))
        axes[1].set_ylabel("tracking error")
        axes[1].set_xlabel("step")
        axes[1].set_title("training-set size")
        axes[1].legend(fontsize=7)
        fig.tight_layout()
        return _save(fig, out)


def plot_compare(compare_dir, out):
    """Per-reference panels with paired controller curves (red vs black)."""
    compare_dir = Path(compare_dir)
    kinds = sorted(
        { p.name.split("-", 1)[1] for p in compare_dir.iterdir()
          if p.is_dir() and p.name.startswith(("dmd-", "proxy-")) }
    )
    if not kinds:
        raise FileNotFoundError(
            f"{compare_dir}: missing expected run directories dmd-*/ and proxy-*/"
        )
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, len(kinds), figsize=(3.2 * len(kinds), 3.0),
                                 squeeze=False)
        for c, kind in enumerate(kinds):
            ax = axes[0][c]
            for name, color in (("dmd", "red"), ("proxy", "black")):
                d = compare_dir / f"{name}-{kind}"
                if not d.exists():
                    continue
                m = runio.read_metrics(d / "metrics.csv")
                ax.plot(m["l2_error"], color=color, label=name)
            ax.set_title(kind)
            ax.set_xlabel("step")
            if c == 0:
                ax.set_ylabel("tracking error")
            ax.legend(fontsize=7)
        fig.tight_layout()
        return _save(fig, out)
