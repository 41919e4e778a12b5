"""Scenario pipeline: integrate, audit, fit, compare, write artifacts.

Layout of one run: ``<out>/<scenario>/{trajectory.csv, energy.csv, rates.json,
report.json, plots/*.svg, plots/*.csv}``.  ``report.json`` holds no timings so
identical inputs give identical bytes.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from pdflow import catalog, plots
from pdflow.dynamics import (PhaseState, SamplePlan, audit_grid, default_init, integrate,
                             log_indices, verify_rescaling_equivalence)
from pdflow.errors import ConfigurationError, NumericalError, PdflowError
from pdflow.lyapunov import (check_appendix_conditions, check_decrease_inequality,
                             energy_eps_trace, theta_eta_for_regime)
from pdflow.problem import ergodic_average_on_grid, problem_from_dict
from pdflow.rates import (WindowPolicy, compare_to_catalog, fit_rate, fit_rate_scaled,
                          safe_float)
from pdflow.scenario import Scenario
from pdflow.schedule import (FAIL, INCONCLUSIVE, PASS, check_beta_condition,
                             check_parameter_constraints, check_perturbation_condition,
                             classify, log_grid)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4
DIAGNOSTICS = ("lagrangian_gap", "objective_gap", "feasibility", "speed", "distance")


@dataclass
class ScenarioResult:
    name: str
    exit_code: int
    report: dict
    rate_rows: list = field(default_factory=list)  # flat rows for suite summaries
    out_dir: str = ""


def _upper(v):
    return {PASS: "PASS", FAIL: "FAIL", INCONCLUSIVE: "INCONCLUSIVE"}.get(v, v)


def _jsonable(obj):
    """Recursively convert numpy scalars / arrays and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return safe_float(obj)
    return obj


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def build_problem(spec: dict):
    if "file" in spec:
        try:
            with open(spec["file"]) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot load problem file {spec['file']}: {exc}",
                                     field="problem.file") from exc
        return problem_from_dict(doc)
    return problem_from_dict(spec)


def initial_state(sc: Scenario, p, seed_override=None):
    t0 = sc.schedule.t0
    init = sc.integration.init
    if init == "saddle":
        x_star, lam_star = p.saddle_point
        return PhaseState.at_rest(t0, x_star, lam_star)
    if isinstance(init, dict):
        zeros_x, zeros_l = [0.0] * p.n, [0.0] * p.m
        try:
            return PhaseState(t0, np.asarray(init["x"], float), np.asarray(init["lam"], float),
                              np.asarray(init.get("vx", zeros_x), float),
                              np.asarray(init.get("vlam", zeros_l), float))
        except PdflowError as exc:
            raise ConfigurationError(str(exc), field="integration.init") from exc
    seed = sc.integration.seed if seed_override is None else seed_override
    return default_init(p, t0, seed)


# -- checks ---------------------------------------------------------------------

def run_conditions(sc, p, sch, regime, t_end):
    grid = log_grid(sch.t0, t_end, 512)
    reports = {"beta_condition": check_beta_condition(sch, regime, grid),
               "perturbation_condition": check_perturbation_condition(sch, regime),
               "parameter_constraints": check_parameter_constraints(sch, regime)}
    cfg = theta_eta_for_regime(sch, regime, rho=sc.regime.rho, p=p)
    reports["energy_conditions"] = check_appendix_conditions(cfg, sch, grid)
    out = {k: v.to_dict() for k, v in reports.items()}
    for v in out.values():
        v["verdict"] = _upper(v["verdict"])
    verdict = "FAIL" if any(v["verdict"] == "FAIL" for v in out.values()) else "PASS"
    return {"verdict": verdict, "reports": out}


def run_decrease(sc, traj, p, sch, regime):
    anchors = [None] + [np.asarray(a, dtype=float) for a in sc.regime.anchors]
    per_anchor = []
    trace0 = None
    for anchor in anchors:
        if anchor is not None and anchor.shape != (p.m,):
            raise ConfigurationError(f"anchor of length {anchor.size} for m={p.m}",
                                     field="regime.anchors")
        cfg = theta_eta_for_regime(sch, regime, rho=sc.regime.rho, p=p, anchor=anchor)
        trace = energy_eps_trace(traj, cfg, p, sch)
        rep = check_decrease_inequality(trace, traj, cfg, sch, slack_c=sc.checks.decrease_slack)
        d = rep.to_dict()
        d["verdict"] = _upper(d["verdict"])
        d["anchor"] = "lambda*" if anchor is None else anchor.tolist()
        d["E_eps_start"] = float(trace.E_eps[0])
        d["E_eps_end"] = float(trace.E_eps[-1])
        per_anchor.append(d)
        if trace0 is None:
            trace0 = trace
    verdict = "PASS" if all(d["verdict"] == "PASS" for d in per_anchor) else "FAIL"
    return {"verdict": verdict, "anchors": per_anchor}, trace0


def diagnostic_series(traj, p, names):
    """``name -> (t, |value|)`` for trajectory and ergodic diagnostics."""
    out = {}
    for k in DIAGNOSTICS:
        if k in names:
            out[k] = (traj.t, np.abs(np.asarray(traj.diagnostics[k], dtype=float)))
    if any(n.startswith("ergodic_") for n in names):
        x_star, lam_star = p.saddle_point
        xbar = ergodic_average_on_grid(traj.t, traj.x)
        t = traj.t[1:]
        resid = xbar @ p.A.T - p.b
        obj = p.objective_batch(xbar) - float(p.objective(x_star))
        lag = obj + resid @ lam_star
        out["ergodic_objective_gap"] = (t, np.abs(obj))
        out["ergodic_feasibility"] = (t, np.linalg.norm(resid, axis=1))
        out["ergodic_lagrangian_gap"] = (t, np.abs(lag))
    return out


def run_rates(sc, traj, p, sch, regime):
    spec = sc.checks.rates
    tau = regime.tau
    if spec.entries is None:
        entries = catalog.matching_entries(sch, regime)
    else:
        entries = [catalog.entry(k) for k in spec.entries]
    if not entries:
        raise ConfigurationError("no catalog entry matches this schedule", field="checks.rates")
    policy = WindowPolicy(t_lo=spec.window.get("t_lo"), t_hi=spec.window.get("t_hi"),
                          decades=spec.window.get("decades", 1.0), envelope=spec.envelope)
    names = {pr.diagnostic for e in entries for pr in _predictions(e, sch, tau)}
    series = diagnostic_series(traj, p, names)
    verdicts, fits_out, rows = [], {}, []
    for e in entries:
        fits = {}
        for pred in e.predictions(sch, tau):
            t, v = series[pred.diagnostic]
            if pred.kind == "exponent":
                fit = fit_rate((t, v), policy)
            else:
                plain = WindowPolicy(t_lo=policy.t_lo, t_hi=policy.t_hi, decades=policy.decades)
                fit = fit_rate_scaled((t, v), pred.weight, spec.bound_factor, plain)
            fits[pred.diagnostic] = fit
            fits_out[f"{e.key}:{pred.diagnostic}"] = fit.to_dict()
        verdict = compare_to_catalog(fits, e, sch, tau, slack=spec.slack)
        verdicts.append(verdict)
        for row in verdict.rows:
            rows.append({"scenario": sc.name, "entry": e.key, "table": e.table, "regime": e.regime,
                         "diagnostic": row.diagnostic, "predicted": row.predicted,
                         "measured": row.measured, "slack": row.slack, "verdict": row.verdict})
    ok = all(v.passed for v in verdicts)
    return {"verdict": "PASS" if ok else "FAIL", "policy": policy.to_dict(),
            "entries": [v.to_dict() for v in verdicts], "fits": fits_out}, rows


def _predictions(entry, sch, tau):
    if not entry.matches(sch, tau):
        raise ConfigurationError(f"schedule does not satisfy the constraints of catalog entry "
                                 f"{entry.key}", field="checks.rates.entries")
    return entry.predictions(sch, tau)


def run_speed_bound(sc, traj, sch):
    spec = sc.checks.speed_bound
    t = traj.t
    sel = t >= spec.after * sch.t0
    if sel.sum() < 10:
        raise ConfigurationError("speed_bound window holds fewer than 10 samples",
                                 field="checks.speed_bound.after")
    scaled = t[sel] ** spec.exponent * traj.speed[sel]
    running = np.maximum.accumulate(scaled)
    growth = float(running[-1] / running[0]) if running[0] > 0 else math.inf
    return {"verdict": "PASS" if growth <= spec.factor else "FAIL", "growth": growth,
            "exponent": spec.exponent, "after": spec.after, "factor": spec.factor}


def run_rescaling(sc, p):
    spec = sc.checks.rescaling
    p0, p1 = spec.p_span
    t_span = (math.exp(p0), math.exp(p1))
    kwargs = dict(tol=spec.tol, sigma=sc.schedule.sigma, seed=spec.seed,
                  rel_tol=min(sc.integration.rel_tol, 1e-9), abs_tol=min(sc.integration.abs_tol, 1e-12))
    good = verify_rescaling_equivalence(p, spec.alpha, t_span, (p0, p1), **kwargs)
    out = {"equivalence": good.to_dict()}
    ok = good.passed
    if spec.negative_control:
        bad = verify_rescaling_equivalence(p, spec.alpha, t_span, (p0, p1), chain_rule=False, **kwargs)
        out["mismatched_velocity"] = bad.to_dict()
        ok = ok and not bad.passed
    out["verdict"] = "PASS" if ok else "FAIL"
    return out


# -- driver ---------------------------------------------------------------------

def _expectations(sc, checks):
    """Per check: did it come out as expected (PASS unless declared otherwise)?"""
    out = {}
    for name, res in checks.items():
        expected = sc.expect.get(name, "PASS")
        out[name] = {"verdict": res["verdict"], "expected": expected,
                     "as_expected": res["verdict"] == expected}
    for name in sc.expect:
        if name not in checks:
            out[name] = {"verdict": "NOT_RUN", "expected": sc.expect[name], "as_expected": False}
    return out


def run_scenario(sc: Scenario, out_root, seed=None, rel_tol=None, write=True) -> ScenarioResult:
    """Run every configured check of ``sc``; write artifacts under ``out_root/sc.name``."""
    out_dir = os.path.join(out_root, sc.name)
    if seed is not None:
        sc.integration.seed = seed
    if rel_tol is not None:
        sc.integration.rel_tol = rel_tol
    p = build_problem(sc.problem)
    sch = sc.schedule
    regime = classify(sch, sc.regime.tau)
    t_end = sc.integration.t_end
    report = {"scenario": sc.name, "spec_version": sc.spec_version, "config": sc.to_dict(),
              "regime": {"tag": regime.tag, "tau": regime.tau,
                         "theoretical_rates": regime.theoretical_rates},
              "problem": {"name": p.name, "n": p.n, "m": p.m}}
    if write:
        os.makedirs(os.path.join(out_dir, "plots"), exist_ok=True)
    checks = {}
    if sc.checks.conditions:
        checks["conditions"] = run_conditions(sc, p, sch, regime, t_end)
    if sc.checks.rescaling is not None:
        checks["rescaling"] = run_rescaling(sc, p)

    init = initial_state(sc, p)
    grid = audit_grid(p, sch, sch.t0, t_end, per_period=sc.integration.per_period,
                      count=sc.integration.samples)
    try:
        traj = integrate(p, sch, init, t_end, rel_tol=sc.integration.rel_tol,
                         abs_tol=sc.integration.abs_tol, sample_plan=SamplePlan(times=grid))
    except NumericalError as exc:
        report["status"] = "numerical_failure"
        report["error"] = {"type": type(exc).__name__, "message": str(exc), "t": exc.t,
                           "norm_x": exc.norm_x}
        last = exc.last_good
        if last is not None:
            report["error"]["last_state"] = {"t": last.t, "x": last.x, "lam": last.lam,
                                             "vx": last.vx, "vlam": last.vlam}
        report["checks"] = checks
        if write:
            dump_json(os.path.join(out_dir, "report.json"), report)
        return ScenarioResult(sc.name, EXIT_NUMERICAL, _jsonable(report), out_dir=out_dir)

    report["integrator"] = traj.integrator_stats.to_dict()
    report["samples"] = int(len(traj))
    trace = None
    if sc.checks.decrease:
        checks["decrease"], trace = run_decrease(sc, traj, p, sch, regime)
    rate_rows = []
    rates_doc = None
    if sc.checks.rates is not None:
        rates_doc, rate_rows = run_rates(sc, traj, p, sch, regime)
        checks["rates"] = {"verdict": rates_doc["verdict"],
                           "entries": [e["entry"] for e in rates_doc["entries"]]}
    if sc.checks.speed_bound is not None:
        checks["speed_bound"] = run_speed_bound(sc, traj, sch)

    expectations = _expectations(sc, checks)
    ok = all(e["as_expected"] for e in expectations.values())
    report["checks"] = checks
    report["expectations"] = expectations
    report["status"] = "ok" if ok else "check_failure"

    if write:
        idx = log_indices(traj.t, sc.integration.samples)
        traj.subsample(idx).to_csv(os.path.join(out_dir, "trajectory.csv"))
        if trace is not None:
            trace.to_csv(os.path.join(out_dir, "energy.csv"), idx)
            plots.write_energy(os.path.join(out_dir, "plots", "energy"), trace.t[idx],
                               trace.E_eps[idx])
        names = set(DIAGNOSTICS)
        if rates_doc is not None:
            names |= {r["diagnostic"] for r in rate_rows}
        for name, (t, v) in sorted(diagnostic_series(traj, p, names).items()):
            sub = log_indices(t, sc.integration.samples)
            plots.write_loglog(os.path.join(out_dir, "plots", name), t[sub], v[sub], name)
        dump_json(os.path.join(out_dir, "rates.json"),
                  {"scenario": sc.name, "regime": regime.tag,
                   "verdict": None if rates_doc is None else rates_doc["verdict"],
                   "rows": rate_rows, "fits": {} if rates_doc is None else rates_doc["fits"],
                   "policy": None if rates_doc is None else rates_doc["policy"]})
        dump_json(os.path.join(out_dir, "report.json"), report)
    return ScenarioResult(sc.name, EXIT_OK if ok else EXIT_CHECK, _jsonable(report),
                          _jsonable(rate_rows), out_dir)
