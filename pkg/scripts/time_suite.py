"""Run every bundled scenario sequentially and report wall time and status.

Run:  python3 scripts/time_suite.py [--out DIR] [--budget SECONDS]

Exits nonzero if any scenario fails or exceeds the per-scenario budget.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
import time

from pdflow.runner import EXIT_OK, run_scenario
from pdflow.scenario import bundled_paths, load_scenario


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default=None, help="artifact root (default: a temporary directory)")
    ap.add_argument("--budget", type=float, default=30.0)
    args = ap.parse_args(argv)
    bad = 0
    with tempfile.TemporaryDirectory() as tmp:
        out = args.out or tmp
        for path in bundled_paths():
            sc = load_scenario(path)
            start = time.perf_counter()
            res = run_scenario(sc, out)
            elapsed = time.perf_counter() - start
            flag = "" if elapsed <= args.budget else "  OVER BUDGET"
            bad += res.exit_code != EXIT_OK or bool(flag)
            print(f"{sc.name:<28} exit {res.exit_code}  {elapsed:6.1f}s{flag}", flush=True)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
