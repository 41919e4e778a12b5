"""Regenerate the bundled scenario configs.

Run:  python3 scripts/make_scenarios.py [--out DIR]

The instance parameters (a_scale, alpha, t_end) are chosen so every scenario
leaves its transient inside the fit window and finishes within about 30 s.
"""

from __future__ import annotations

import argparse
import json
import os

DEFAULT_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "pdflow", "scenarios")


def quad(a_scale=0.15):
    return {"kind": "random_quadratic", "n": 4, "m": 2, "seed": 1, "a_scale": a_scale}


def const(mu=1.0):
    return {"family": "constant", "mu": mu}


def power(mu, p):
    return {"family": "power", "mu": mu, "p": p}


def expo(mu, c, k, q):
    return {"family": "exponential_power", "mu": mu, "c": c, "k": k, "q": q}


SCENARIOS = []


def sc(name, desc, sched, t_end, tau=None, problem=None, rates=True, window=None, decrease=True,
       expect=None, extra_checks=None, beta_cap=None, conditions=True, entries=None):
    """Collect one scenario; ``sched`` is (alpha, r, delta, s, beta[, sigma[, perturbation]])."""
    s = {"alpha": sched[0], "r": sched[1], "delta": sched[2], "s": sched[3],
         "sigma": sched[5] if len(sched) > 5 else 1.0, "t0": 1.0, "beta": sched[4],
         "perturbation": sched[6] if len(sched) > 6 else {"family": "zero"}}
    integ = {"t_end": t_end, "rel_tol": 1e-8, "abs_tol": 1e-10, "samples": 400, "seed": 0,
             "init": "random", "per_period": 16}
    if beta_cap:
        integ["beta_cap"] = beta_cap
    checks = {"conditions": conditions, "decrease": decrease}
    if rates:
        checks["rates"] = {"entries": entries, "window": window or {}, "slack": 0.15,
                           "bound_factor": 2.0, "envelope": True}
    checks.update(extra_checks or {})
    SCENARIOS.append({"spec_version": 1, "name": name, "description": desc,
                      "problem": problem or quad(), "schedule": s,
                      "regime": {"tau": tau, "rho": None, "anchors": []},
                      "integration": integ, "checks": checks, "expect": expect or {}})


sc("t1_r0_power_beta", "r = 0, s = 1/2 with beta = t: Lagrangian gap O(1/(t^s beta)).",
   (3.0, 0.0, 0.5, 0.5, power(1.0, 1.0)), 200.0)
sc("t1_rmid_power_beta", "r = s = 1/2, tau = 0.6, beta = t^0.4: Lagrangian gap O(1/(t^tau beta)).",
   (3.0, 0.5, 1.0, 0.5, power(1.0, 0.4)), 300.0, tau=0.6)
sc("t1_r11_small_power_beta", "r = s = 1, alpha = 2.5, tau = 1/2, beta = t^(1/2).",
   (2.5, 1.0, 3 / 5.5, 1.0, power(1.0, 0.5)), 100.0, tau=0.5)
sc("t1_r11_large_power_beta", "r = s = 1, alpha = 6, delta = 1/4, beta = t: Lagrangian gap O(1/(t^2 beta)).",
   (6.0, 1.0, 0.25, 1.0, power(1.0, 1.0)), 100.0)
sc("t3_r0_exp_beta", "r = s = 0, beta = e^(t/delta): objective gap and feasibility O(e^(-t/delta)); pre-cap window.",
   (3.0, 0.0, 0.5, 0.0, expo(1.0, 2.0, 1.0, 0.0)), 5.75, window={"t_lo": 2.0}, beta_cap=1e5)
sc("t3_r0_power_beta", "r = 0, s = 1, delta = 1/2, beta = 2t: objective gap and feasibility O(1/t^2).",
   (0.5, 0.0, 0.5, 1.0, power(2.0, 1.0)), 50.0,
   problem=quad(0.6))
sc("t3_rmid_exp_beta", "r = s = 1/2, tau = 0.6, beta = e^(2 sqrt(t)) / t^tau; pre-cap window.",
   (3.0, 0.5, 1.0, 0.5, expo(1.0, 2.0, 0.5, 0.6)), 25.0, tau=0.6, beta_cap=1e5,
   problem=quad(0.5))
sc("t3_rmid_power_beta", "r = 1/2, s = 1, alpha = 1, delta = 1/2, tau = 1.4, beta = t^0.6: O(1/t^2).",
   (1.0, 0.5, 0.5, 1.0, power(1.0, 0.6)), 100.0, tau=1.4, problem=quad(1.0))
sc("t3_r11_small_power_beta", "r = s = 1, alpha = 3, delta = 1/3, beta = t^3: O(1/t^3).",
   (3.0, 1.0, 1 / 3, 1.0, power(1.0, 3.0)), 15.0, tau=3.0, problem=quad(0.3))
sc("t3_r11_large_power_beta", "r = s = 1, alpha = 5, delta = 1/3, beta = t: O(1/t^3).",
   (5.0, 1.0, 1 / 3, 1.0, power(1.0, 1.0)), 50.0, problem=quad(1.0))
sc("t4_r0_s0", "r = s = 0, beta = 1: ergodic rates O(1/sqrt(t)) and O(1/t).",
   (3.0, 0.0, 0.5, 0.0, const()), 10000.0)
sc("t4_r0_s", "r = 0, s = 1/2, beta = 1: O(1/t^(s/2)) and O(1/t^s).",
   (3.0, 0.0, 0.5, 0.5, const()), 1000.0)
sc("t4_r0_s1", "r = 0, s = 1, alpha = delta = 1, beta = 1: O(1/t); speed O(1/sqrt(t)).",
   (1.0, 0.0, 1.0, 1.0, const()), 300.0, problem=quad(1.0),
   extra_checks={"speed_bound": {"exponent": 0.5, "after": 10.0, "factor": 2.0}})
sc("t4_rmid_slt1", "r = s = 1/2, tau = 0.6, beta = 1: O(1/t^(tau/2)) and O(1/t^tau).",
   (3.0, 0.5, 1.0, 0.5, const()), 1000.0, tau=0.6)
sc("t4_rmid_s1", "r = 1/2, s = 1, alpha = 1, delta = 1/1.4, tau = 1.4, beta = 1: O(1/t^tau).",
   (1.0, 0.5, 1 / 1.4, 1.0, const()), 300.0, tau=1.4, problem=quad(1.0))
sc("t4_r11_small", "r = s = 1, alpha = 3, tau = 0, delta = 1/2, beta = 1: O(1/t^(2 alpha/3)).",
   (3.0, 1.0, 0.5, 1.0, const()), 1000.0, tau=0.0)
sc("r11_large_quadratic", "r = s = 1, alpha = 4, delta = 1/2, beta = 1: O(1/t^2).",
   (4.0, 1.0, 0.5, 1.0, const()), 1000.0)
sc("r11_large_perturbed", "As r11_large_quadratic with eps(t) = 0.1 t^-3 e_0.",
   (4.0, 1.0, 0.5, 1.0, const(), 1.0, {"family": "power_decay", "c": 0.1, "d": 3.0}), 1000.0)
sc("beta_too_fast", "Negative control: beta = 0.01 e^(5t) grows faster than e^(t/delta) allows; the energy must fail to decrease.",
   (3.0, 0.0, 0.5, 0.0, expo(0.01, 5.0, 1.0, 0.0)), 2.5, rates=False,
   expect={"decrease": "FAIL", "conditions": "FAIL"})
sc("rescaling_equivalence", "The r = s = 1 flow and its exponential time rescaling agree; velocities without the chain-rule factor do not.",
   (4.0, 1.0, 0.5, 1.0, const()), 10.0, rates=False, decrease=False, conditions=False,
   extra_checks={"rescaling": {"alpha": 4.0, "p_span": [0.5, 3.0], "tol": 1e-4,
                               "negative_control": True, "seed": 0}})


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default=DEFAULT_DIR)
    args = ap.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    for doc in SCENARIOS:
        with open(os.path.join(args.out, doc["name"] + ".json"), "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    print(f"wrote {len(SCENARIOS)} scenarios to {os.path.normpath(args.out)}")


if __name__ == "__main__":
    main()
