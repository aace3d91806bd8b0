"""Command-line front end: one subcommand per figure family.

    dmdmpc-figs fields   RUN_DIR  --out fields.png
    dmdmpc-figs surfaces RUN_DIR  --out surfaces.png
    dmdmpc-figs inputs   RUN_DIR  --out inputs.png
    dmdmpc-figs errors   RUN_DIR [RUN_DIR ...] --out errors.png [--log]
    dmdmpc-figs ablation ABLATE_DIR --out ablation.png
    dmdmpc-figs compare  COMPARE_DIR --out compare.png

Exit codes: 0 success, 1 usage error, 2 missing or unreadable inputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import families


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dmdmpc-figs",
                     description=__doc__.split("\n", 1)[0])
    sub = parser.add_subparsers(dest="family", metavar="FAMILY")
    for name, nargs in (("fields", 1), ("surfaces", 1), ("inputs", 1),
                        ("errors", "+"), ("ablation", 1), ("compare", 1)):
        p = sub.add_parser(name)
        p.add_argument("run_dir", nargs=nargs, type=Path)
        p.add_argument("--out", type=Path, required=True, help="output image path")
        if name == "errors":
            p.add_argument("--log", action="store_true", help="log-scale error axis")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.family is None:
        print("dmdmpc-figs: error: a figure family is required", file=sys.stderr)
        return 1
    try:
        if args.family == "errors":
            out = families.plot_error_curves(args.run_dir, args.out,
                                             log_scale=args.log)
        else:
            run_dir = args.run_dir[0] if isinstance(args.run_dir, list) else args.run_dir
            fn = {
                "fields": families.plot_fields,
                "surfaces": families.plot_surfaces,
                "inputs": families.plot_inputs,
                "ablation": families.plot_ablation,
                "compare": families.plot_compare,
            }[args.family]
            out = fn(run_dir, args.out)
    except (FileNotFoundError, ValueError) as exc:
        print(f"dmdmpc-figs: error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
