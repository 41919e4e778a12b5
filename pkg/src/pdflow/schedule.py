"""Coefficient schedules, regime classification and hypothesis checks.

A schedule fixes damping ``alpha / t**r``, extrapolation ``delta * t**s``, a time
scaling ``beta(t)``, an augmented-Lagrangian penalty ``sigma`` and a perturbation
``eps(t)``.  Conditions are checked numerically on a log-spaced time grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from pdflow.errors import ConfigurationError

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"

R0, RMID, R11_SMALL, R11_LARGE = "R0", "RMID", "R11_SMALL", "R11_LARGE"
REGIMES = (R0, RMID, R11_SMALL, R11_LARGE)

# exponents this close to 0 or 1 are treated as exactly 0 or 1
_EXACT = 1e-12


def is_zero(v):
    return abs(v) <= _EXACT


def is_one(v):
    return abs(v - 1.0) <= _EXACT


# -- time scaling families ----------------------------------------------------

@dataclass(frozen=True)
class ConstantScaling:
    mu: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError("constant scaling needs mu > 0", field="beta.mu")

    def __call__(self, t):
        return self.mu * np.ones_like(np.asarray(t, dtype=float)) if np.ndim(t) else self.mu

    def derivative(self, t):
        return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0

    def power_exponent(self):
        return 0.0

    def to_dict(self):
        return {"family": "constant", "mu": self.mu}


@dataclass(frozen=True)
class PowerScaling:
    """``beta(t) = mu * t**p``."""

    mu: float = 1.0
    p: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError("power scaling needs mu > 0", field="beta.mu")

    def __call__(self, t):
        return self.mu * np.power(t, self.p)

    def derivative(self, t):
        return self.mu * self.p * np.power(t, self.p - 1.0)

    def power_exponent(self):
        return self.p

    def to_dict(self):
        return {"family": "power", "mu": self.mu, "p": self.p}


@dataclass(frozen=True)
class ExponentialPowerScaling:
    """``beta(t) = mu * exp(c * t**k) / t**q``.

    ``k = 1 - s`` reproduces the optimal families of the ``r = 0`` and
    ``0 < r < 1`` cases; ``k = 1, q = 0`` is ``mu * exp(c t)``.
    """

    mu: float = 1.0
    c: float = 1.0
    k: float = 1.0
    q: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError("exponential scaling needs mu > 0", field="beta.mu")
        if not self.c > 0:
            raise ConfigurationError("exponential scaling needs c > 0", field="beta.c")
        if self.q < 0:
            raise ConfigurationError("exponential scaling needs q >= 0", field="beta.q")

    def growth(self, t):
        """``exp(c t**k)``, the weight of the optimal-rate statements."""
        return np.exp(self.c * np.power(t, self.k))

    def __call__(self, t):
        return self.mu * np.exp(self.c * np.power(t, self.k)) / np.power(t, self.q)

    def derivative(self, t):
        return self(t) * (self.c * self.k * np.power(t, self.k - 1.0) - self.q / np.asarray(t))

    def power_exponent(self):
        return None

    def to_dict(self):
        return {"family": "exponential_power", "mu": self.mu, "c": self.c, "k": self.k,
                "q": self.q}


@dataclass(frozen=True)
class CustomScaling:
    value: Callable
    deriv: Callable
    label: str = "custom"

    def __call__(self, t):
        return self.value(t)

    def derivative(self, t):
        return self.deriv(t)

    def power_exponent(self):
        return None

    def to_dict(self):
        raise ConfigurationError("custom scaling families are not serializable", field="beta")


def scaling_from_dict(d):
    fam = d.get("family")
    args = {k: v for k, v in d.items() if k != "family"}
    cls = {"constant": ConstantScaling, "power": PowerScaling,
           "exponential_power": ExponentialPowerScaling}.get(fam)
    if cls is None:
        raise ConfigurationError(f"unknown scaling family {fam!r}", field="beta.family")
    try:
        return cls(**args)
    except TypeError as exc:
        raise ConfigurationError(f"bad scaling parameters {args}: {exc}", field="beta") from exc


# -- perturbation families ----------------------------------------------------

@dataclass(frozen=True)
class ZeroPerturbation:
    def __call__(self, t, n):
        return np.zeros(n)

    def norm(self, t):
        return 0.0 * np.asarray(t, dtype=float)

    @property
    def integrability_weight(self):
        return math.inf

    def to_dict(self):
        return {"family": "zero"}


@dataclass(frozen=True)
class PowerDecayPerturbation:
    """``eps(t) = c * t**(-d) * u`` with ``u`` a fixed unit vector (default e_0)."""

    c: float = 0.1
    d: float = 3.0
    direction: Optional[tuple] = None

    def __post_init__(self):
        if self.c < 0:
            raise ConfigurationError("perturbation magnitude c must be >= 0", field="perturbation.c")
        if not self.d > 0:
            raise ConfigurationError("perturbation decay d must be > 0", field="perturbation.d")
        if self.direction is not None:
            u = np.asarray(self.direction, dtype=float)
            if not np.linalg.norm(u) > 0:
                raise ConfigurationError("perturbation direction must be nonzero",
                                         field="perturbation.direction")
            object.__setattr__(self, "direction", tuple(float(v) for v in u))

    def unit(self, n):
        if self.direction is None:
            u = np.zeros(n)
            u[0] = 1.0
            return u
        u = np.asarray(self.direction, dtype=float)
        if u.shape != (n,):
            raise ConfigurationError(f"perturbation direction has dimension {u.shape[0]}, need {n}",
                                     field="perturbation.direction")
        return u / np.linalg.norm(u)

    def __call__(self, t, n):
        return self.c * t ** (-self.d) * self.unit(n)

    def norm(self, t):
        return self.c * np.power(t, -self.d)

    @property
    def integrability_weight(self):
        # int t^w c t^-d dt < inf  iff  w < d - 1; the supremum is reported
        return math.inf if self.c == 0 else self.d - 1.0

    def to_dict(self):
        out = {"family": "power_decay", "c": self.c, "d": self.d}
        if self.direction is not None:
            out["direction"] = list(self.direction)
        return out


@dataclass(frozen=True)
class CustomPerturbation:
    value: Callable
    weight: Optional[float] = None

    def __call__(self, t, n):
        return np.asarray(self.value(t), dtype=float) * np.ones(n) if np.ndim(self.value(t)) == 0 \
            else np.asarray(self.value(t), dtype=float)

    def norm(self, t):
        return np.array([np.linalg.norm(np.atleast_1d(self.value(s))) for s in np.atleast_1d(t)])

    @property
    def integrability_weight(self):
        return self.weight

    def to_dict(self):
        raise ConfigurationError("custom perturbations are not serializable", field="perturbation")


def perturbation_from_dict(d):
    fam = d.get("family", "zero")
    if fam == "zero":
        return ZeroPerturbation()
    if fam == "power_decay":
        try:
            return PowerDecayPerturbation(c=d.get("c", 0.1), d=d.get("d", 3.0),
                                          direction=d.get("direction"))
        except TypeError as exc:
            raise ConfigurationError(str(exc), field="perturbation") from exc
    raise ConfigurationError(f"unknown perturbation family {fam!r}", field="perturbation.family")


# -- schedule -------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    alpha: float
    r: float
    delta: float
    s: float
    beta: object = field(default_factory=ConstantScaling)
    sigma: float = 1.0
    perturbation: object = field(default_factory=ZeroPerturbation)
    t0: float = 1.0

    def __post_init__(self):
        checks = [
            ("alpha", self.alpha > 0, "alpha must be > 0"),
            ("delta", self.delta > 0, "delta must be > 0"),
            ("t0", self.t0 > 0, "t0 must be > 0"),
            ("sigma", self.sigma >= 0, "sigma must be >= 0"),
            ("r", 0 <= self.r <= 1, "r must lie in [0, 1]"),
            ("s", 0 <= self.s <= 1, "s must lie in [0, 1]"),
            ("s", self.r <= self.s, "need r <= s"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigurationError(f"schedule.{name}: {msg} (got {getattr(self, name)})",
                                         field=f"schedule.{name}")

    def damping(self, t):
        return self.alpha / t ** self.r

    def extrapolation(self, t):
        return self.delta * t ** self.s

    def eps(self, t, n):
        return self.perturbation(t, n)

    def to_dict(self):
        return {"alpha": self.alpha, "r": self.r, "delta": self.delta, "s": self.s,
                "sigma": self.sigma, "t0": self.t0, "beta": self.beta.to_dict(),
                "perturbation": self.perturbation.to_dict()}

    @classmethod
    def from_dict(cls, d):
        required = ("alpha", "r", "delta", "s")
        for key in required:
            if key not in d:
                raise ConfigurationError(f"schedule missing field {key!r}", field=f"schedule.{key}")
            if not isinstance(d[key], (int, float)) or isinstance(d[key], bool):
                raise ConfigurationError(f"schedule.{key} must be a number", field=f"schedule.{key}")
        return cls(
            alpha=float(d["alpha"]), r=float(d["r"]), delta=float(d["delta"]), s=float(d["s"]),
            beta=scaling_from_dict(d.get("beta", {"family": "constant", "mu": 1.0})),
            sigma=float(d.get("sigma", 1.0)),
            perturbation=perturbation_from_dict(d.get("perturbation", {"family": "zero"})),
            t0=float(d.get("t0", 1.0)),
        )


# -- regimes --------------------------------------------------------------------

@dataclass
class Regime:
    tag: str
    tau: Optional[float] = None
    theoretical_rates: dict = field(default_factory=dict)

    def require_tau(self):
        if self.tau is None:
            raise ConfigurationError(f"regime {self.tag} needs the auxiliary exponent tau",
                                     field="regime.tau")
        return self.tau


def regime_tag(r, s, alpha):
    if is_zero(r):
        return R0
    if r < 1 and not is_one(r):
        return RMID
    return R11_SMALL if alpha <= 3 else R11_LARGE


def classify(sch: Schedule, tau: Optional[float] = None) -> Regime:
    """Regime of ``(r, s, alpha)`` with the matching rate-catalog predictions."""
    from pdflow import catalog

    regime = Regime(regime_tag(sch.r, sch.s, sch.alpha), tau=tau)
    regime.theoretical_rates = {
        e.key: e.summary(sch, tau) for e in catalog.matching_entries(sch, regime)
    }
    return regime


# -- condition reports -----------------------------------------------------------

@dataclass
class ConditionReport:
    name: str
    verdict: str
    worst_margin: Optional[float] = None
    t1: Optional[float] = None
    first_violation: Optional[float] = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict == PASS

    def to_dict(self):
        return {"name": self.name, "verdict": self.verdict, "worst_margin": self.worst_margin,
                "t1": self.t1, "first_violation": self.first_violation, "details": self.details}


def log_grid(t0, t_end, num=512):
    return np.geomspace(t0, t_end, num)


def holds_from(grid, ok):
    """First grid time after which ``ok`` holds at every later point (None if it
    fails at the last point)."""
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return float(grid[0])
    if bad[-1] == len(grid) - 1:
        return None
    return float(grid[bad[-1] + 1])


def beta_condition_sides(sch: Schedule, regime: Regime, t):
    """``(lhs, rhs)`` of the regime's growth condition on the time scaling."""
    t = np.asarray(t, dtype=float)
    b, db = sch.beta(t), sch.beta.derivative(t)
    inv = 1.0 / sch.delta
    if regime.tag == R0:
        return t ** sch.s * db, (inv - sch.s * t ** (sch.s - 1.0)) * b
    if regime.tag == RMID:
        tau = regime.require_tau()
        return t ** sch.s * db, (inv - tau * t ** (sch.s - 1.0)) * b
    if regime.tag == R11_SMALL:
        tau = regime.require_tau()
        return t * db, tau * b
    return t * db, (inv - 2.0) * b


def check_beta_condition(sch: Schedule, regime: Regime, grid=None) -> ConditionReport:
    if grid is None:
        grid = log_grid(sch.t0, 1e3 * sch.t0)
    grid = np.asarray(grid, dtype=float)
    if grid.size < 100:
        raise ConfigurationError("beta condition grid needs at least 100 points", field="grid")
    lhs, rhs = beta_condition_sides(sch, regime, grid)
    margin = rhs - lhs
    ok = margin >= -1e-12 * np.maximum(1.0, np.abs(rhs))
    worst = int(np.argmin(margin))
    return ConditionReport(
        name="beta_condition",
        verdict=PASS if ok.all() else FAIL,
        worst_margin=float(margin[worst]),
        t1=holds_from(grid, ok),
        first_violation=None if ok.all() else float(grid[np.argmin(ok)]),
        details={"t_worst": float(grid[worst]), "regime": regime.tag},
    )


def required_perturbation_weight(sch: Schedule, regime: Regime):
    if regime.tag == R0:
        return sch.s / 2.0
    if regime.tag == RMID:
        return (sch.r + sch.s) / 2.0
    if regime.tag == R11_SMALL:
        return (sch.alpha - regime.require_tau()) / 3.0
    return 1.0


def check_perturbation_condition(sch: Schedule, regime: Regime) -> ConditionReport:
    required = required_perturbation_weight(sch, regime)
    declared = sch.perturbation.integrability_weight
    details = {"required_weight": required, "declared_weight": declared}
    if declared is None:
        return ConditionReport("perturbation_condition", INCONCLUSIVE, details=details)
    ok = declared > required
    return ConditionReport("perturbation_condition", PASS if ok else FAIL,
                           worst_margin=(declared - required) if math.isfinite(declared) else None,
                           details=details)


def _constraints_for(sch: Schedule, regime: Regime, theorem: Optional[str]):
    a, d, r, s, sig = sch.alpha, sch.delta, sch.r, sch.s, sch.sigma
    tau = regime.tau
    theorem = theorem or {R0: "th_th1", RMID: "th_th2", R11_SMALL: "th_th3",
                          R11_LARGE: "th_th4"}[regime.tag]

    def need_tau():
        return regime.require_tau()

    rows = []
    if theorem == "th_th1":
        if is_zero(s):
            rows.append(("alpha*delta > 1 (s = 0)", a * d > 1))
        if is_one(s):
            rows.append(("delta <= 1 (s = 1)", d <= 1))
        rows.append(("sigma > 0", sig > 0))
    elif theorem == "th_th1_1":
        rows += [("s = 0", is_zero(s)), ("alpha*delta > 1", a * d > 1)]
    elif theorem == "th_th1_2":
        rows.append(("0 < s < 1", 0 < s < 1 and not is_zero(s) and not is_one(s)))
    elif theorem == "th_th1_3":
        rows += [("s = 1", is_one(s)), ("delta <= 1", d <= 1)]
    elif theorem in ("th_th2", "cor_th2", "th_th2_1", "th_th2_2"):
        t = need_tau()
        upper = r + 1 if theorem == "th_th2_2" else r + s
        rows.append((f"0 < tau < {upper:g}", 0 < t < upper))
        if theorem != "th_th2_2" and abs(s - r) <= _EXACT:
            rows.append(("alpha*delta > 1 (s = r)", a * d > 1))
        if theorem == "th_th2" and is_one(s):
            rows.append(("tau*delta <= 1 (s = 1)", t * d <= 1))
        if theorem == "cor_th2" and is_one(s):
            rows.append(("delta*(r+s) >= 1 (s = 1)", d * (r + s) >= 1))
        if theorem == "th_th2_1":
            rows.append(("r <= s < 1", s < 1 and not is_one(s)))
        if theorem == "th_th2_2":
            rows += [("s = 1", is_one(s)), ("delta*tau <= 1", d * t <= 1)]
    elif theorem in ("th_th3", "th_th3_1"):
        t = need_tau()
        rows += [("0 <= tau <= alpha <= 3", 0 <= t <= a <= 3),
                 ("delta = 3/(2 alpha + tau)", abs(d - 3.0 / (2 * a + t)) <= 1e-12)]
    elif theorem == "cor_th3_1":
        rows += [("alpha <= 3", a <= 3), ("delta = 3/(2 alpha)", abs(d - 1.5 / a) <= 1e-12)]
    elif theorem == "cor_th3_2":
        rows += [("alpha <= 3", a <= 3), ("delta = 1/alpha", abs(d - 1.0 / a) <= 1e-12)]
    elif theorem in ("th_th4", "th_th4_1"):
        rows.append(("2 <= 1/delta < alpha - 1", 2 <= 1.0 / d < a - 1))
    elif theorem == "cor_th4_1":
        rows += [("delta = 1/2", abs(d - 0.5) <= 1e-12), ("alpha > 3", a > 3)]
    else:
        raise ConfigurationError(f"unknown theorem key {theorem!r}", field="theorem")
    return theorem, rows


def check_parameter_constraints(sch: Schedule, regime: Regime, theorem=None) -> ConditionReport:
    """Parameter hypotheses of the regime's main theorem (or of ``theorem``)."""
    theorem, rows = _constraints_for(sch, regime, theorem)
    violated = [name for name, ok in rows if not ok]
    return ConditionReport(
        name="parameter_constraints",
        verdict=FAIL if violated else PASS,
        details={"theorem": theorem, "constraints": {name: bool(ok) for name, ok in rows},
                 "violated": violated},
    )
