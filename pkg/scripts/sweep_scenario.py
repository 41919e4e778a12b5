"""Re-run one bundled scenario under parameter overrides and print the verdicts.

Run:  python3 scripts/sweep_scenario.py t4_r0_s1 'problem.a_scale=0.15' \
          'problem.a_scale=1.0;schedule.alpha=1.0;integration.t_end=300'

Each override set is a ``;``-separated list of ``dotted.path=json`` assignments.
This is how the instance sizes in scripts/make_scenarios.py were chosen: slow
dual dynamics (small ||A||) leave the fitted exponents in their transient.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import tempfile
import time

from pdflow.runner import run_scenario
from pdflow.scenario import bundled_dir, parse_scenario


def apply_overrides(doc, spec):
    out = copy.deepcopy(doc)
    for assignment in filter(None, spec.split(";")):
        key, value = assignment.split("=", 1)
        *path, last = key.split(".")
        target = out
        for part in path:
            target = target[part]
        target[last] = json.loads(value)
    return out


def _cell(v):
    return v if isinstance(v, str) else f"{v:.3f}"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("scenario", help="bundled scenario name")
    ap.add_argument("overrides", nargs="*", default=[""])
    args = ap.parse_args(argv)
    with open(os.path.join(bundled_dir(), args.scenario + ".json")) as fh:
        base = json.load(fh)
    with tempfile.TemporaryDirectory() as tmp:
        for spec in args.overrides or [""]:
            start = time.perf_counter()
            res = run_scenario(parse_scenario(apply_overrides(base, spec)), tmp, write=False)
            elapsed = time.perf_counter() - start
            checks = {k: v["verdict"] for k, v in res.report.get("expectations", {}).items()}
            print(f"[{spec or 'as bundled'}] {elapsed:.1f}s {checks}")
            for r in res.rate_rows:
                print(f"    {r['entry']:<16} {r['diagnostic']:<24} measured {_cell(r['measured'])}"
                      f"  predicted {_cell(r['predicted'])}  {r['verdict']}")


if __name__ == "__main__":
    main()
