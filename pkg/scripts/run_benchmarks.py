"""Run every builtin scenario and write CSV, verdict JSON and a summary SVG.

    python scripts/run_benchmarks.py [--out out/benchmarks] [--jobs 4]

The Hopf Theorem 1 scenarios integrate to t = 150 at h = 1e-3 and take about
a minute each on one core.
"""
import argparse
import os
import sys
import tempfile

from adareg.cli import main
from adareg.scenarios import BUILTINS


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default=os.path.join("out", "benchmarks"))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-plot", action="store_true")
    return p.parse_args()


def main_():
    args = parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        configs = []
        for name in BUILTINS:
            path = os.path.join(tmp, f"{name}.yaml")
            with open(path, "w") as fh:
                fh.write(f"scenario: {name}\n")
            configs.append(path)
        argv = ["run", *configs, "--out", args.out, "--jobs", str(args.jobs)]
        if not args.no_plot:
            argv.append("--plot")
        code = main(argv)
    print(f"exit code {code}; outputs under {args.out}/<scenario>/")
    return code


if __name__ == "__main__":
    sys.exit(main_())
