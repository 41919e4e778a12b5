"""Command-line front end.

    pdflow run <config> [--out DIR] [--seed N] [--rel-tol X] [--quiet]
    pdflow suite <dir> [--out DIR] [--jobs N] [--quiet]
    pdflow catalog

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 check failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from pdflow import catalog
from pdflow.errors import (ConfigurationError, NumericalError, PdflowError, RejectedInputError,
                           ResolutionError)
from pdflow.runner import (EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, ScenarioResult,
                           run_scenario)
from pdflow.scenario import load_scenario

DEFAULT_OUT = "pdflow_out"
SUMMARY_FIELDS = ("scenario", "table", "entry", "diagnostic", "predicted", "measured", "verdict")


def output_root(arg=None):
    """``--out`` beats ``PDFLOW_OUT`` beats the default."""
    return arg or os.environ.get("PDFLOW_OUT") or DEFAULT_OUT


def _say(quiet, msg, stream=None):
    if not quiet:
        print(msg, file=stream or sys.stdout)


def execute(path, out_root, seed=None, rel_tol=None):
    """Load and run one scenario file; never raises for scenario-level failures."""
    try:
        sc = load_scenario(path)
        return run_scenario(sc, out_root, seed=seed, rel_tol=rel_tol)
    except (ConfigurationError, RejectedInputError, ResolutionError) as exc:
        where = getattr(exc, "field", None)
        msg = f"config error in {path}" + (f" [{where}]" if where else "") + f": {exc}"
        return ScenarioResult(os.path.splitext(os.path.basename(path))[0], EXIT_CONFIG,
                              {"status": "config_error", "error": msg})
    except PdflowError as exc:
        return ScenarioResult(os.path.splitext(os.path.basename(path))[0], EXIT_NUMERICAL,
                              {"status": "numerical_failure", "error": str(exc)})


def _describe(res: ScenarioResult):
    if res.exit_code in (EXIT_CONFIG,):
        return res.report["error"]
    if res.exit_code == EXIT_NUMERICAL:
        err = res.report.get("error", {})
        msg = err.get("message", err) if isinstance(err, dict) else err
        return f"{res.name}: numerical failure: {msg}"
    lines = [f"{res.name}: {res.report['status']} ({res.report['regime']['tag']})"]
    for name, e in res.report["expectations"].items():
        mark = "ok" if e["as_expected"] else "UNEXPECTED"
        lines.append(f"  {name:<12} {e['verdict']:<5} expected {e['expected']:<5} {mark}")
    for row in res.rate_rows:
        lines.append(f"  {row['entry']:<16} {row['diagnostic']:<24} predicted {_cell(row['predicted'])}"
                     f"  measured {_cell(row['measured'])}  {row['verdict']}")
    return "\n".join(lines)


def _cell(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return "" if v is None else str(v)


def cmd_run(args):
    res = execute(args.config, output_root(args.out), seed=args.seed, rel_tol=args.rel_tol)
    stream = sys.stderr if res.exit_code in (EXIT_CONFIG, EXIT_NUMERICAL) else sys.stdout
    if res.exit_code in (EXIT_CONFIG, EXIT_NUMERICAL):
        print(_describe(res), file=stream)
    else:
        _say(args.quiet, _describe(res))
        _say(args.quiet, f"artifacts in {res.out_dir}")
    return res.exit_code


def _suite_rows(res: ScenarioResult):
    if res.exit_code in (EXIT_CONFIG, EXIT_NUMERICAL) or "expectations" not in res.report:
        return [{"scenario": res.name, "table": "", "entry": "", "diagnostic": "",
                 "predicted": "", "measured": res.report.get("status", ""), "verdict": "ERROR"}]
    rows = []
    for name, e in res.report["expectations"].items():
        if name == "rates":
            continue
        verdict = e["verdict"] if e["as_expected"] else f"{e['verdict']} (expected {e['expected']})"
        rows.append({"scenario": res.name, "table": "", "entry": "", "diagnostic": f"check:{name}",
                     "predicted": e["expected"], "measured": e["verdict"], "verdict": verdict})
    for r in res.rate_rows:
        rows.append({k: r.get(k, "") for k in SUMMARY_FIELDS})
    return rows


def write_summary(out_root, results):
    rows = [row for res in results for row in _suite_rows(res)]
    os.makedirs(out_root, exist_ok=True)
    with open(os.path.join(out_root, "summary.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: _cell(row[k]) for k in SUMMARY_FIELDS})
    lines = ["# pdflow suite summary", ""]
    groups = [("T1", "Table 1: Lagrangian gap"), ("T2", "Table 2: speed and distance"),
              ("T3", "Table 3: optimal time scalings"), ("T4", "Table 4: constant time scaling"),
              ("", "Checks and errors")]
    for table, title in groups:
        sel = [r for r in rows if r["table"] == table]
        if not sel:
            continue
        lines += [f"## {title}", "", "| " + " | ".join(SUMMARY_FIELDS) + " |",
                  "|" + "---|" * len(SUMMARY_FIELDS)]
        lines += ["| " + " | ".join(_cell(r[k]) for k in SUMMARY_FIELDS) + " |" for r in sel]
        lines.append("")
    with open(os.path.join(out_root, "summary.md"), "w") as fh:
        fh.write("\n".join(lines))
    return rows


def _run_one(job):
    path, out_root = job
    try:
        return execute(path, out_root)
    except Exception as exc:  # a crash becomes an ERROR row, the suite carries on
        return ScenarioResult(os.path.splitext(os.path.basename(path))[0], EXIT_NUMERICAL,
                              {"status": "crash", "error": f"{type(exc).__name__}: {exc}"})


def cmd_suite(args):
    if not os.path.isdir(args.dir):
        print(f"usage error: {args.dir} is not a directory", file=sys.stderr)
        return EXIT_CONFIG
    paths = sorted(os.path.join(args.dir, f) for f in os.listdir(args.dir) if f.endswith(".json"))
    if not paths:
        print(f"usage error: no scenario configs (*.json) in {args.dir}", file=sys.stderr)
        return EXIT_CONFIG
    out_root = output_root(args.out)
    jobs = [(p, out_root) for p in paths]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    names = [r.name for r in results]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        print(f"config error: duplicate scenario names {dupes}", file=sys.stderr)
        return EXIT_CONFIG
    write_summary(out_root, results)
    for res in results:
        _say(args.quiet, _describe(res))
    failed = [r.name for r in results if r.exit_code != EXIT_OK]
    _say(args.quiet, f"{len(results) - len(failed)}/{len(results)} scenarios ok; "
                     f"summary in {os.path.join(out_root, 'summary.md')}")
    return EXIT_OK if not failed else EXIT_CHECK


def cmd_catalog(args):
    print(catalog.format_catalog())
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="pdflow", description=__doc__.split("\n")[0] or None)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output root (default $PDFLOW_OUT or ./pdflow_out)")
    run.add_argument("--seed", type=int, default=None, help="override the initialization seed")
    run.add_argument("--rel-tol", type=float, default=None, help="override the relative tolerance")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=cmd_run)
    suite = sub.add_parser("suite", help="run every config in a directory")
    suite.add_argument("dir")
    suite.add_argument("--out", default=None)
    suite.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    suite.add_argument("--quiet", action="store_true")
    suite.set_defaults(func=cmd_suite)
    cat = sub.add_parser("catalog", help="print the encoded rate tables")
    cat.set_defaults(func=cmd_catalog)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PdflowError as exc:  # anything not mapped inside the commands
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(exc, NumericalError) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
