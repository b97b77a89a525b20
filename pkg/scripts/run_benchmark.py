"""Run the full synthesis-and-verification pipeline on one benchmark.

Thin front end over the package CLI; kept as a script so the common case is
one command with no config file:

    python3 scripts/run_benchmark.py vdp --out-dir out/vdp
"""

import argparse
import sys

from nimreg.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("benchmark", choices=("harmonic", "vdp", "static"))
    ap.add_argument("--kappa", default=None, help="high-gain parameter (default: search)")
    ap.add_argument("--k", default=None, help="error feedback gain (default: search)")
    ap.add_argument("--baseline", action="store_true",
                    help="swap the driver for its best linear fit")
    ap.add_argument("--out-dir", default="out")
    ap.add_argument("--seed", default="0")
    args = ap.parse_args()

    argv = ["run", "--benchmark", args.benchmark, "--out-dir", args.out_dir,
            "--seed", args.seed]
    if args.kappa is not None:
        argv += ["--kappa", args.kappa]
    if args.k is not None:
        argv += ["--k", args.k]
    if args.baseline:
        argv += ["--baseline"]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
