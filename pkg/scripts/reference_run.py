"""Generate the synthetic scenario and run the full logic tree, disaggregation and tornado on it.

Usage: python3 scripts/reference_run.py [WORKDIR] [--seed N]
"""
import argparse
import sys
import time
from pathlib import Path

from pfha.cli import main


def run(workdir: Path, seed: int) -> int:
    data, out = workdir / "data", workdir / "results"
    steps = [
        ["synth", "--out", str(data), "--seed", str(seed)],
        ["grid-build", "--config", str(data / "config.yaml")],
        ["compute", "--config", str(data / "config.yaml"), "--out", str(out)],
        ["disagg", "--config", str(data / "config.yaml"), "--out", str(out), "--threshold", "0.8", "--dimension", "size_inertia_epsilon"],
        ["tornado", "--config", str(data / "config.yaml"), "--out", str(out), "--threshold", "0.8"],
        ["validate", "--config", str(data / "config.yaml"), "--out", str(out)],
    ]
    for argv in steps:
        t0 = time.perf_counter()
        code = main(argv)
        print(f"[{argv[0]}] exit {code} in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
        if code:
            return code
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("workdir", nargs="?", default="reference_run")
    ap.add_argument("--seed", type=int, default=7)
    a = ap.parse_args()
    sys.exit(run(Path(a.workdir), a.seed))
