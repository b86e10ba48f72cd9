import argparse
import sys

from src.custom_logging import enable_console_logging
from src.main import plot_command, run_command, verify_command


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="socdiffuse",
                                     description="Reference-guided diffusion sampling experiments and checks.")
    parser.add_argument("--verbose", action="store_true", help="Mirror the log to stderr.")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(command: argparse.ArgumentParser) -> None:
        command.add_argument("--seed", type=int, default=None, help="Run this single seed.")
        command.add_argument("--out-dir", default=None, help="Directory for CSV/JSON/SVG artifacts.")
        command.add_argument("--threads", type=int, default=None, help="Worker threads for seed dispatch.")

    run = commands.add_parser("run", help="Run the experiment described by a config file.")
    run.add_argument("config", type=str, help="Path to the experiment TOML file.")
    add_run_flags(run)

    verify = commands.add_parser("verify", help="Run a verification suite.")
    verify.add_argument("suite", type=str, help="Suite name, e.g. optimal-control, afa, all.")
    add_run_flags(verify)

    plot = commands.add_parser("plot", help="Plot an emitted CSV as SVG.")
    plot.add_argument("csv", type=str, help="Trajectory or step/value CSV.")
    plot.add_argument("out", type=str, help="SVG output path.")
    return parser


if __name__ == "__main__":
    args = build_parser().parse_args()
    if args.verbose:
        enable_console_logging()

    if args.command == "run":
        code = run_command(args.config, seed=args.seed, out_dir=args.out_dir, threads=args.threads)
    elif args.command == "verify":
        code = verify_command(args.suite, seed=args.seed, out_dir=args.out_dir, threads=args.threads)
    else:
        code = plot_command(args.csv, args.out)
    sys.exit(code)
