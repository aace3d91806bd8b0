"""Command-line pipeline: excite, identify, validate, control, compare, ablate.

All stages read and write one workspace directory (``--out``):

    dataset/    states.dmdmat inputs.dmdmat dataset.meta
    model/      Ur.dmdmat Atil.dmdmat Btil.dmdmat S_omega.dmdmat S_y.dmdmat model.meta energy.csv
    validate/   true_states.dmdmat predicted_states.dmdmat inputs.dmdmat metrics.csv
    control-*/  states.dmdmat inputs.dmdmat reference.dmdmat metrics.csv run.json
    compare/    {dmd,proxy}-<kind>/ ... summary.csv
    ablate/     order-r*/ size-m*/ ... table.csv

Every stage writes a ``manifest.cfg`` with the fully resolved configuration,
and identical config + seed reproduce byte-identical outputs.  Exit codes:
0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dmdc, harness, plant
from .config import ConfigError, RunConfig, parse_config
from .matio import load_dataset, save_dataset, write_csv
from .mpc import MpcController, variable_count


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="config file (sectioned key = value)")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--out", type=Path, default=Path("runs"),
                        help="workspace directory (default: runs)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = _Parser(prog="dmdmpc", description=__doc__.split("\n", 1)[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.add_parser("excite", parents=[common], help="simulate the plant under excitation")
    sub.add_parser("identify", parents=[common], help="fit and save the reduced model")
    sub.add_parser("validate", parents=[common], help="roll the model over validation data")
    pc = sub.add_parser("control", parents=[common], help="closed-loop run for one reference")
    pc.add_argument("--reference", choices=harness.REFERENCE_KINDS,
                    help="override [reference] kind")
    sub.add_parser("compare", parents=[common],
                   help="closed-loop runs of reduced-model and proxy controllers")
    sub.add_parser("ablate", parents=[common], help="order/size ablation grid")
    return parser


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig({})
    if args.seed is not None:
        cfg.set("run", "seed", int(args.seed))
    return cfg


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _manifest(directory: Path, cfg: RunConfig, args, command: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    body = (
        f"# resolved configuration for 'dmdmpc {command}'\n"
        f"# seed = {cfg.get('run', 'seed')}, out = {args.out}\n\n"
    ) + cfg.to_text()
    (directory / "manifest.cfg").write_text(body)


def _need(path: Path, hint: str) -> Path:
    if not path.exists():
        raise ConfigError(f"missing {path} (run `dmdmpc {hint}` first)")
    return path


def cmd_excite(args, cfg: RunConfig) -> int:
    pcfg = cfg.plant_config()
    steps, hold, low, high = cfg.excitation()
    seed = harness.substream(cfg.get("run", "seed"), "excitation")
    _say(args, f"simulating {steps} steps (hold {hold}) on a "
               f"{pcfg.grid_size}x{pcfg.grid_size} grid ...")
    ds = harness.generate_dataset(pcfg, steps, hold, seed, low, high)
    out = args.out / "dataset"
    save_dataset(out, ds)
    _manifest(out, cfg, args, "excite")
    _say(args, f"dataset: n={ds.n} q={ds.q} m={ds.m} -> {out}")
    return 0


def cmd_identify(args, cfg: RunConfig) -> int:
    pcfg = cfg.plant_config()
    run = cfg.run_values()
    ds = load_dataset(_need(args.out / "dataset", "excite"))
    train = ds.head(run["train_size"])
    s_rule, r_rule = cfg.truncation_rules()
    _say(args, f"identifying on m={train.m} snapshots ...")
    model = dmdc.identify(train, s_rule, r_rule, offset=pcfg.boundary_temp)

    p_om = dmdc.energy_profile(model.sigma_omega)
    p_y = dmdc.energy_profile(model.sigma_y)
    s_energy = dmdc.select_order(model.sigma_omega, dmdc.TruncationRule.energy(dmdc.ENERGY_OMEGA))
    r_energy = dmdc.select_order(model.sigma_y, dmdc.TruncationRule.energy(dmdc.ENERGY_Y))
    _say(args, f"selected s={model.s} (p_s={p_om[model.s-1]:.9f}), "
               f"r={model.r} (p_r={p_y[model.r-1]:.9f})")
    _say(args, f"energy rule (tau={dmdc.ENERGY_OMEGA:.10g}/{dmdc.ENERGY_Y:.10g}) "
               f"would select s={s_energy}, r={r_energy}")
    if not args.quiet:
        print(" order   p_omega       p_y")
        for v in range(0, min(60, len(p_y)), 5):
            print(f"  {v+1:4d}   {p_om[v]:.9f}   {p_y[v]:.9f}")

    out = args.out / "model"
    dmdc.save_model(out, model)
    k = min(len(p_om), len(p_y), 200)
    table = np.column_stack([np.arange(1.0, k + 1), p_om[:k], p_y[:k]])
    write_csv(out / "energy.csv", table)
    _manifest(out, cfg, args, "identify")
    _say(args, f"model: n={model.n} q={model.q} r={model.r} s={model.s} -> {out}")
    return 0


def cmd_validate(args, cfg: RunConfig) -> int:
    run = cfg.run_values()
    ds = load_dataset(_need(args.out / "dataset", "excite"))
    model = dmdc.load_model(_need(args.out / "model", "identify"))
    start = min(run["validation_start"], ds.m - run["validation_steps"] - 1)
    true, pred, err = harness.validate_rollout(model, ds, start, run["validation_steps"])
    max_abs = float(err.max())
    scale = float(np.abs(true - model.offset).max())
    rel = max_abs / scale if scale > 0 else 0.0
    _say(args, f"validation rollout over steps {start}..{start+run['validation_steps']}: "
               f"max-abs error {max_abs:.3e} (relative {rel:.3e})")

    out = args.out / "validate"
    out.mkdir(parents=True, exist_ok=True)
    from .matio import write_matrix
    write_matrix(out / "true_states.dmdmat", true)
    write_matrix(out / "predicted_states.dmdmat", pred)
    write_matrix(out / "inputs.dmdmat", ds.inputs[:, start : start + run["validation_steps"]])
    with open(out / "metrics.csv", "w") as fh:
        fh.write("step,max_abs_error\n")
        for k, e in enumerate(err):
            fh.write(f"{k},{e:.17g}\n")
    _manifest(out, cfg, args, "validate")
    tol = run["validate_tol"]
    if max_abs > tol:
        print(f"validation FAILED: {max_abs:.3e} > tolerance {tol:.3e}", file=sys.stderr)
        return 2
    _say(args, f"validation ok (tolerance {tol:.3e}) -> {out}")
    return 0


def _load_model_and_data(args, cfg: RunConfig):
    run = cfg.run_values()
    ds = load_dataset(_need(args.out / "dataset", "excite"))
    model = dmdc.load_model(_need(args.out / "model", "identify"))
    return ds.head(run["train_size"]), model, run


def cmd_control(args, cfg: RunConfig) -> int:
    pcfg = cfg.plant_config()
    train, model, run = _load_model_and_data(args, cfg)
    kind = args.reference or cfg.get("reference", "kind")
    ref = harness.reference_field(kind, **cfg.reference_params(pcfg))
    mcfg = cfg.mpc_config(pcfg)
    _say(args, f"closed loop: {run['control_steps']} steps, reference '{kind}', "
               f"{variable_count(mcfg, model)} decision variables")
    ctrl = MpcController(model, mcfg, ref.realized)
    rec = harness.run_closed_loop(pcfg, ctrl, ref, run["control_steps"],
                                  meta={"controller": "dmd", "seed": cfg.get("run", "seed")})
    out = args.out / f"control-{kind}"
    harness.save_run(out, rec, ref)
    _manifest(out, cfg, args, "control")
    _say(args, f"tracking error: initial {rec.initial_error:.3f}, final {rec.final_error:.3f} "
               f"({100*rec.final_error/max(rec.initial_error,1e-300):.2f}%) -> {out}")
    return 2 if rec.meta["solver_warnings"] else 0


def cmd_compare(args, cfg: RunConfig) -> int:
    pcfg = cfg.plant_config()
    train, model, run = _load_model_and_data(args, cfg)
    params = cfg.reference_params(pcfg)
    refs = {k: harness.reference_field(k, **params) for k in harness.REFERENCE_KINDS}
    mcfg = cfg.mpc_config(pcfg)
    _say(args, f"running {2 * len(refs)} closed loops ({run['control_steps']} steps each) ...")
    records = harness.compare_controllers(train, pcfg, mcfg, refs,
                                          run["control_steps"], model=model)
    out = args.out / "compare"
    out.mkdir(parents=True, exist_ok=True)
    rows = ["controller,reference,initial_error,final_error"]
    for (name, kind), rec in records.items():
        harness.save_run(out / f"{name}-{kind}", rec, refs[kind])
        rows.append(f"{name},{kind},{rec.initial_error:.17g},{rec.final_error:.17g}")
        _say(args, f"  {name:5s} {kind:16s} final error {rec.final_error:8.3f}")
    (out / "summary.csv").write_text("\n".join(rows) + "\n")
    _manifest(out, cfg, args, "compare")
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    pcfg = cfg.plant_config()
    train, model, run = _load_model_and_data(args, cfg)
    ref = harness.reference_field(cfg.get("reference", "kind"), **cfg.reference_params(pcfg))
    mcfg = cfg.mpc_config(pcfg)
    orders = run["ablation_orders"]
    sizes = [m for m in run["ablation_sizes"] if m <= train.m]
    _say(args, f"ablation: orders {orders} at m={max(sizes)}, sizes {sizes} at r={max(orders)}")
    cells = harness.ablation(train, orders, sizes, ref, pcfg, mcfg,
                             run["control_steps"], s=model.s)
    out = args.out / "ablate"
    out.mkdir(parents=True, exist_ok=True)
    rows = ["sweep,r,m,final_error"]
    for cell in cells:
        tag = f"order-r{cell['r']}" if cell["sweep"] == "order" else f"size-m{cell['m']}"
        harness.save_run(out / tag, cell["record"], ref)
        rows.append(f"{cell['sweep']},{cell['r']},{cell['m']},{cell['final_error']:.17g}")
        _say(args, f"  {tag:12s} final error {cell['final_error']:8.3f}")
    (out / "table.csv").write_text("\n".join(rows) + "\n")
    _manifest(out, cfg, args, "ablate")
    return 0


_COMMANDS = {
    "excite": cmd_excite,
    "identify": cmd_identify,
    "validate": cmd_validate,
    "control": cmd_control,
    "compare": cmd_compare,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("dmdmpc: error: a command is required", file=sys.stderr)
        return 1
    try:
        cfg = _load_config(args)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"dmdmpc: config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"dmdmpc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
