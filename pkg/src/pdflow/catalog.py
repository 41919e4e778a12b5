"""Machine-readable catalog of the predicted convergence rates.

Four tables: Lagrangian-gap rates under the growth conditions (T1), trajectory
speed and distance (T2), optimal time scalings (T3) and constant time scaling
(T4).  Each entry states which schedules it covers and, for a concrete
schedule, what it predicts per diagnostic: either a power-law exponent (when
the rate is a power of ``t``) or a weight ``w(t)`` such that ``w * value`` stays
bounded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from pdflow.schedule import (R0, R11_LARGE, R11_SMALL, RMID, ConstantScaling,
                             ExponentialPowerScaling, PowerScaling, is_one, is_zero, regime_tag)

GAP, OBJ, FEAS = "lagrangian_gap", "objective_gap", "feasibility"
SPEED, DIST = "speed", "distance"
ERG_GAP, ERG_OBJ, ERG_FEAS = "ergodic_lagrangian_gap", "ergodic_objective_gap", "ergodic_feasibility"

_TOL = 1e-9


@dataclass
class Prediction:
    diagnostic: str
    kind: str  # "exponent" or "scaled"
    exponent: Optional[float] = None
    weight: Optional[Callable] = None
    weight_label: str = ""

    def describe(self):
        if self.kind == "exponent":
            return self.exponent
        return f"bounded * {self.weight_label}"


@dataclass
class RateCatalogEntry:
    key: str
    table: str
    row: str
    regime: str
    theorem: str
    beta_text: str
    formulas: dict
    applies: Callable = field(repr=False)
    predict: Callable = field(repr=False)
    needs_tau: bool = False

    def matches(self, sch, tau=None):
        if regime_tag(sch.r, sch.s, sch.alpha) != self.regime:
            return False
        if self.needs_tau and tau is None:
            return False
        return bool(self.applies(sch, tau))

    def predictions(self, sch, tau=None):
        return self.predict(sch, tau)

    def summary(self, sch, tau=None):
        return {p.diagnostic: p.describe() for p in self.predictions(sch, tau)}

    def to_dict(self):
        return {"key": self.key, "table": self.table, "row": self.row, "regime": self.regime,
                "theorem": self.theorem, "beta": self.beta_text, "rates": self.formulas}


# -- helpers ----------------------------------------------------------------------

def _gap_prediction(diag, sch, a, label):
    """Rate ``O(1 / (t**a beta(t)))``: an exponent for power-law scalings,
    otherwise boundedness of ``t**a beta(t) * value``."""
    p = sch.beta.power_exponent()
    if p is not None:
        return Prediction(diag, "exponent", exponent=-a - p)
    beta = sch.beta
    return Prediction(diag, "scaled", weight=lambda t: np.power(t, a) * beta(t),
                      weight_label=f"t^{a:g} beta(t) [{label}]")


def _exp(diag, e):
    return Prediction(diag, "exponent", exponent=float(e))


def _is_exp_family(beta, c, k, q):
    return (isinstance(beta, ExponentialPowerScaling) and abs(beta.c - c) <= _TOL * max(1, c)
            and abs(beta.k - k) <= _TOL and abs(beta.q - q) <= _TOL)


def _is_power(beta, p):
    e = beta.power_exponent()
    return e is not None and abs(e - p) <= _TOL


def _is_const(beta):
    return isinstance(beta, ConstantScaling) or (isinstance(beta, PowerScaling) and beta.p == 0)


def _scaled_exp(diag, sch):
    beta = sch.beta
    return Prediction(diag, "scaled", weight=beta.growth,
                      weight_label=f"exp({beta.c:g} t^{beta.k:g})")


def _mid(sch):
    return 0 < sch.r < 1 and not is_one(sch.r)


# -- the four tables --------------------------------------------------------------

def _table1():
    return [
        RateCatalogEntry(
            "T1.r0", "T1", "r = 0, s in [0,1]", R0, "th_th1",
            "t^s beta' <= (1/delta - s t^(s-1)) beta", {GAP: "O(1/(t^s beta))"},
            applies=lambda sch, tau: True,
            predict=lambda sch, tau: [_gap_prediction(GAP, sch, sch.s, "t^s beta")]),
        RateCatalogEntry(
            "T1.rmid", "T1", "r in (0,1), s in [r,1]", RMID, "th_th2",
            "t^s beta' <= (1/delta - tau t^(s-1)) beta, tau in (0, r+s)",
            {GAP: "O(1/(t^tau beta)), tau in (0, r+s)"},
            applies=lambda sch, tau: 0 < tau < sch.r + sch.s,
            predict=lambda sch, tau: [_gap_prediction(GAP, sch, tau, "t^tau beta")],
            needs_tau=True),
        RateCatalogEntry(
            "T1.r11_small", "T1", "r = s = 1, alpha <= 3", R11_SMALL, "th_th3",
            "t beta' <= tau beta, tau in [0, alpha]",
            {GAP: "O(1/(t^(2(alpha-tau)/3) beta))"},
            applies=lambda sch, tau: 0 <= tau <= sch.alpha,
            predict=lambda sch, tau: [_gap_prediction(GAP, sch, 2 * (sch.alpha - tau) / 3,
                                                      "t^(2(alpha-tau)/3) beta")],
            needs_tau=True),
        RateCatalogEntry(
            "T1.r11_large", "T1", "r = s = 1, alpha > 3", R11_LARGE, "th_th4",
            "t beta' <= (1/delta - 2) beta", {GAP: "O(1/(t^2 beta))"},
            applies=lambda sch, tau: True,
            predict=lambda sch, tau: [_gap_prediction(GAP, sch, 2.0, "t^2 beta")]),
    ]


def _table2():
    return [
        RateCatalogEntry(
            "T2.r0_s0", "T2", "r = s = 0", R0, "th_th1", "as T1",
            {SPEED: "bounded", DIST: "bounded"},
            applies=lambda sch, tau: is_zero(sch.s),
            predict=lambda sch, tau: [_exp(SPEED, 0.0), _exp(DIST, 0.0)]),
        RateCatalogEntry(
            "T2.r0_s", "T2", "r = 0, s in (0,1]", R0, "th_th1", "as T1",
            {SPEED: "O(1/t^(s/2))", DIST: "bounded"},
            applies=lambda sch, tau: not is_zero(sch.s),
            predict=lambda sch, tau: [_exp(SPEED, -sch.s / 2), _exp(DIST, 0.0)]),
        RateCatalogEntry(
            "T2.rmid", "T2", "r in (0,1), s in [r,1]", RMID, "th_th2", "as T1",
            {SPEED: "O(1/t^rho), rho in (0, (r+s)/2)",
             DIST: "t^rho I bounded, rho in (-(r+s)/2, 0)"},
            applies=lambda sch, tau: 0 < tau < sch.r + sch.s,
            predict=lambda sch, tau: [_exp(SPEED, -tau / 2),
                                      _exp(DIST, (sch.r + sch.s - tau) / 2)],
            needs_tau=True),
        RateCatalogEntry(
            "T2.r11_a3_t0", "T2", "r = s = 1, alpha = 3, tau = 0", R11_SMALL, "th_th3", "as T1",
            {SPEED: "O(1/t^rho), rho in (0,1)", DIST: "t^rho I bounded, rho in (-1, 0)"},
            applies=lambda sch, tau: abs(sch.alpha - 3) <= _TOL and abs(tau) <= _TOL,
            predict=lambda sch, tau: [_exp(SPEED, -1.0), _exp(DIST, 1.0)],
            needs_tau=True),
        RateCatalogEntry(
            "T2.r11_small", "T2", "r = s = 1, alpha <= 3, 0 <= alpha - tau < 3", R11_SMALL,
            "th_th3", "as T1",
            {SPEED: "O(1/t^((alpha-tau)/3))", DIST: "t^((alpha-tau)/3 - 1) I bounded"},
            applies=lambda sch, tau: (0 <= sch.alpha - tau < 3
                                      and not (abs(sch.alpha - 3) <= _TOL and abs(tau) <= _TOL)),
            predict=lambda sch, tau: [_exp(SPEED, -(sch.alpha - tau) / 3),
                                      _exp(DIST, 1 - (sch.alpha - tau) / 3)],
            needs_tau=True),
        RateCatalogEntry(
            "T2.r11_large", "T2", "r = s = 1, alpha > 3", R11_LARGE, "th_th4", "as T1",
            {SPEED: "O(1/t)", DIST: "bounded"},
            applies=lambda sch, tau: True,
            predict=lambda sch, tau: [_exp(SPEED, -1.0), _exp(DIST, 0.0)]),
    ]


def _table3():
    def exp_c(sch):
        return 1.0 / (sch.delta * (1 - sch.s))

    return [
        RateCatalogEntry(
            "T3.r0_slt1", "T3", "r = 0, s in [0,1)", R0, "th_th1_2",
            "mu exp(t^(1-s) / (delta (1-s))) / t^s",
            {OBJ: "O(exp(-t^(1-s) / (delta (1-s))))", FEAS: "same"},
            applies=lambda sch, tau: (sch.s < 1 and not is_one(sch.s)
                                      and _is_exp_family(sch.beta, exp_c(sch), 1 - sch.s, sch.s)),
            predict=lambda sch, tau: [_scaled_exp(OBJ, sch), _scaled_exp(FEAS, sch)]),
        RateCatalogEntry(
            "T3.r0_s1", "T3", "r = 0, s = 1", R0, "th_th1_3", "mu t^(1/delta - 1)",
            {OBJ: "O(1/t^(1/delta))", FEAS: "same"},
            applies=lambda sch, tau: is_one(sch.s) and _is_power(sch.beta, 1 / sch.delta - 1),
            predict=lambda sch, tau: [_exp(OBJ, -1 / sch.delta), _exp(FEAS, -1 / sch.delta)]),
        RateCatalogEntry(
            "T3.rmid_slt1", "T3", "r in (0,1), s in [r,1)", RMID, "th_th2_1",
            "mu exp(t^(1-s) / (delta (1-s))) / t^tau, tau in (0, r+s)",
            {OBJ: "O(exp(-t^(1-s) / (delta (1-s))))", FEAS: "same"},
            applies=lambda sch, tau: (sch.s < 1 and not is_one(sch.s) and 0 < tau < sch.r + sch.s
                                      and _is_exp_family(sch.beta, exp_c(sch), 1 - sch.s, tau)),
            predict=lambda sch, tau: [_scaled_exp(OBJ, sch), _scaled_exp(FEAS, sch)],
            needs_tau=True),
        RateCatalogEntry(
            "T3.rmid_s1", "T3", "r in (0,1), s = 1", RMID, "th_th2_2",
            "mu t^(1/delta - tau), tau in (0, r+1)",
            {OBJ: "O(1/t^(1/delta))", FEAS: "same"},
            applies=lambda sch, tau: (is_one(sch.s) and 0 < tau < sch.r + 1
                                      and _is_power(sch.beta, 1 / sch.delta - tau)),
            predict=lambda sch, tau: [_exp(OBJ, -1 / sch.delta), _exp(FEAS, -1 / sch.delta)],
            needs_tau=True),
        RateCatalogEntry(
            "T3.r11_small", "T3", "r = s = 1, alpha <= 3", R11_SMALL, "cor_th3_2", "mu t^alpha",
            {OBJ: "O(1/t^alpha)", FEAS: "same"},
            applies=lambda sch, tau: (abs(sch.delta - 1 / sch.alpha) <= 1e-12
                                      and _is_power(sch.beta, sch.alpha)),
            predict=lambda sch, tau: [_exp(OBJ, -sch.alpha), _exp(FEAS, -sch.alpha)]),
        RateCatalogEntry(
            "T3.r11_large", "T3", "r = s = 1, alpha > 3", R11_LARGE, "th_th4_1",
            "mu t^(1/delta - 2)", {OBJ: "O(1/t^(1/delta))", FEAS: "same"},
            applies=lambda sch, tau: _is_power(sch.beta, 1 / sch.delta - 2),
            predict=lambda sch, tau: [_exp(OBJ, -1 / sch.delta), _exp(FEAS, -1 / sch.delta)]),
    ]


def _table4():
    const = "beta = 1"
    return [
        RateCatalogEntry(
            "T4.r0_s0", "T4", "r = 0, s = 0", R0, "th_th1", const,
            {ERG_OBJ: "O(1/sqrt(t)) ergodic", ERG_FEAS: "O(1/sqrt(t)) ergodic",
             ERG_GAP: "O(1/t) ergodic"},
            applies=lambda sch, tau: is_zero(sch.s) and _is_const(sch.beta),
            predict=lambda sch, tau: [_exp(ERG_OBJ, -0.5), _exp(ERG_FEAS, -0.5),
                                      _exp(ERG_GAP, -1.0)]),
        RateCatalogEntry(
            "T4.r0_s", "T4", "r = 0, s in (0,1)", R0, "th_th1", const,
            {OBJ: "O(1/t^(s/2))", FEAS: "O(1/t^(s/2))", GAP: "O(1/t^s)"},
            applies=lambda sch, tau: (0 < sch.s < 1 and not is_zero(sch.s) and not is_one(sch.s)
                                      and _is_const(sch.beta)),
            predict=lambda sch, tau: [_exp(OBJ, -sch.s / 2), _exp(FEAS, -sch.s / 2),
                                      _exp(GAP, -sch.s)]),
        RateCatalogEntry(
            "T4.r0_s1", "T4", "r = 0, s = 1, delta = 1", R0, "th_th1_3", const,
            {OBJ: "O(1/t)", FEAS: "O(1/t)", GAP: "O(1/t)"},
            applies=lambda sch, tau: (is_one(sch.s) and abs(sch.delta - 1) <= _TOL
                                      and _is_const(sch.beta)),
            predict=lambda sch, tau: [_exp(OBJ, -1.0), _exp(FEAS, -1.0), _exp(GAP, -1.0)]),
        RateCatalogEntry(
            "T4.rmid_slt1", "T4", "r in (0,1), s in [r,1)", RMID, "th_th2", const,
            {OBJ: "O(1/t^(tau/2)), tau in (0, r+s)", FEAS: "same", GAP: "O(1/t^tau)"},
            applies=lambda sch, tau: (sch.s < 1 and not is_one(sch.s) and 0 < tau < sch.r + sch.s
                                      and _is_const(sch.beta)),
            predict=lambda sch, tau: [_exp(OBJ, -tau / 2), _exp(FEAS, -tau / 2),
                                      _exp(GAP, -tau)],
            needs_tau=True),
        RateCatalogEntry(
            "T4.rmid_s1", "T4", "r in (0,1), s = 1, delta (r+1) >= 1, delta tau <= 1", RMID,
            "cor_th2", const,
            {OBJ: "O(1/t^tau), tau in (0, r+1)", FEAS: "same", GAP: "same"},
            applies=lambda sch, tau: (is_one(sch.s) and 0 < tau < sch.r + 1
                                      and sch.delta * (sch.r + 1) >= 1 - _TOL
                                      and sch.delta * tau <= 1 + _TOL and _is_const(sch.beta)),
            predict=lambda sch, tau: [_exp(OBJ, -tau), _exp(FEAS, -tau), _exp(GAP, -tau)],
            needs_tau=True),
        RateCatalogEntry(
            "T4.r11_small", "T4", "r = s = 1, alpha <= 3, delta = 3/(2 alpha)", R11_SMALL,
            "cor_th3_1", const,
            {OBJ: "O(1/t^(2 alpha/3))", FEAS: "same", GAP: "same"},
            applies=lambda sch, tau: (abs(sch.delta - 1.5 / sch.alpha) <= _TOL
                                      and _is_const(sch.beta)),
            predict=lambda sch, tau: [_exp(d, -2 * sch.alpha / 3) for d in (OBJ, FEAS, GAP)]),
        RateCatalogEntry(
            "T4.r11_large", "T4", "r = s = 1, alpha > 3, delta = 1/2", R11_LARGE, "cor_th4_1",
            const, {OBJ: "O(1/t^2)", FEAS: "same", GAP: "same"},
            applies=lambda sch, tau: abs(sch.delta - 0.5) <= _TOL and _is_const(sch.beta),
            predict=lambda sch, tau: [_exp(d, -2.0) for d in (OBJ, FEAS, GAP)]),
    ]


CATALOG = _table1() + _table2() + _table3() + _table4()
BY_KEY = {e.key: e for e in CATALOG}

TABLE_TITLES = {
    "T1": "Lagrangian gap L(x(t), lam*) - L(x*, lam*) under the growth conditions on beta",
    "T2": "Trajectory speed ||x'|| + ||lam'|| and distance I = ||x - x*|| + ||lam - lam*||",
    "T3": "Optimal time scalings: |f(x(t)) - f*| and ||Ax(t) - b||",
    "T4": "Constant time scaling beta = 1",
}


def entry(key):
    return BY_KEY[key]


def matching_entries(sch, regime):
    return [e for e in CATALOG if e.matches(sch, regime.tau)]


def format_catalog():
    """Plain-text rendering of the four tables."""
    lines = []
    for table, title in TABLE_TITLES.items():
        lines.append(f"{table}: {title}")
        for e in (x for x in CATALOG if x.table == table):
            rates = "; ".join(f"{k}: {v}" for k, v in e.formulas.items())
            lines.append(f"  {e.key:<16} {e.row:<44} beta: {e.beta_text}")
            lines.append(f"  {'':<16} {rates}")
        lines.append("")
    return "\n".join(lines)
