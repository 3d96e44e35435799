"""Command-line entry point: ``lintrain {build,train,verify,bounds,experiment,compare}``.

Every RunConfig field is a flag.  ``--config FILE`` reads flat key=value
lines; flags given on the command line win over the file.  The default
output directory is taken from $LINTRAIN_OUTPUT_DIR, else runs/<subcommand>.
"""

import argparse
import dataclasses
import sys

from lintrain.experiment import OUTPUT_ENV, SUBCOMMANDS, RunConfig, run_experiment
from lintrain.reports import fmt

HELP = {
    "build": "size the architecture and write arch.txt, params.bin and dataset.csv",
    "train": "certified masked gradient descent on the output layer",
    "verify": "empirical checks of the random-initialization lemmas",
    "bounds": "Jacobian, trace-norm and capacity bound sweeps",
    "experiment": "natural vs corrupted label run with accuracy and weight-norm traces",
    "compare": "align two experiment runs and check the orderings",
}


def _add_fields(parser):
    for f in dataclasses.fields(RunConfig):
        if f.name == "subcommand":
            continue
        names = [f"--{f.name.replace('_', '-')}"]
        if "_" in f.name:
            names.append(f"--{f.name}")
        if f.type is bool:
            parser.add_argument(*names, dest=f.name, action=argparse.BooleanOptionalAction,
                                default=argparse.SUPPRESS, help=f"(default {fmt(f.default)})")
        else:
            parser.add_argument(*names, dest=f.name, default=argparse.SUPPRESS,
                                metavar=f.name.upper(), help=f"(default {fmt(f.default)})")
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="flat key=value file; command-line flags take precedence")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lintrain", description=__doc__.split("\n\n")[0],
        epilog=f"Output directory default: ${OUTPUT_ENV} or runs/<subcommand>.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        _add_fields(sub.add_parser(name, help=HELP[name], description=HELP[name]))
    return parser


def config_from_args(argv=None):
    args = vars(build_parser().parse_args(argv))
    subcommand = args.pop("subcommand")
    config_path = args.pop("config")
    cli_values = {k: v if isinstance(v, bool) else RunConfig.parse_value(k, v)
                  for k, v in args.items()}
    file_values = RunConfig.read_file(config_path) if config_path else {}
    file_values.pop("subcommand", None)
    return RunConfig.build(subcommand, file_values, cli_values)


def main(argv=None):
    try:
        cfg = config_from_args(argv)
        result = run_experiment(cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for key, value in result.summary.items():
        print(f"{key}: {fmt(value)}")
    for path in result.files:
        print(f"wrote {path}")
    for failure in result.failures:
        print(f"FAILED: {failure}", file=sys.stderr)
    return result.exit_status


if __name__ == "__main__":
    sys.exit(main())
