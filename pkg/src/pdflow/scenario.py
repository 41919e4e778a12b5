"""Scenario documents: one JSON file per experiment.

A scenario names a problem, a schedule, optional regime overrides, the
integration settings, the checks to run and (for negative controls) the verdicts
it is expected to produce.  ``parse_scenario`` validates a document and
``Scenario.to_dict`` writes the canonical form back; the two round-trip.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

from pdflow.errors import ConfigurationError
from pdflow.schedule import ExponentialPowerScaling, Schedule

SPEC_VERSION = 1
DEFAULT_BETA_CAP = 1e8
CHECK_NAMES = ("conditions", "decrease", "rates", "speed_bound", "rescaling")
VERDICTS = ("PASS", "FAIL")


def _reject_unknown(d, allowed, where):
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigurationError(f"unknown field(s) {extra} in {where}", field=f"{where}.{extra[0]}")


def _number(d, key, where, default=None, positive=False, allow_none=False):
    v = d.get(key, default)
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigurationError(f"{where}.{key} must be a finite number (got {v!r})",
                                 field=f"{where}.{key}")
    if positive and not v > 0:
        raise ConfigurationError(f"{where}.{key} must be positive (got {v!r})", field=f"{where}.{key}")
    return float(v)


def _object(d, key, where):
    v = d.get(key, {})
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigurationError(f"{where}.{key} must be an object", field=f"{where}.{key}")
    return v


@dataclass
class RegimeSpec:
    tau: Optional[float] = None
    rho: Optional[float] = None
    anchors: list = field(default_factory=list)  # extra dual anchors for the energy audit

    def to_dict(self):
        return {"tau": self.tau, "rho": self.rho, "anchors": [list(a) for a in self.anchors]}

    @classmethod
    def from_dict(cls, d):
        _reject_unknown(d, ("tau", "rho", "anchors"), "regime")
        anchors = d.get("anchors", [])
        if not isinstance(anchors, list) or not all(isinstance(a, list) for a in anchors):
            raise ConfigurationError("regime.anchors must be a list of vectors", field="regime.anchors")
        return cls(tau=_number(d, "tau", "regime", allow_none=True),
                   rho=_number(d, "rho", "regime", allow_none=True),
                   anchors=[[float(v) for v in a] for a in anchors])


@dataclass
class IntegrationSpec:
    t_end: float
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    samples: int = 400
    seed: Optional[int] = None
    init: object = "random"  # "random", "saddle" or {"x", "lam", "vx", "vlam"}
    per_period: int = 16
    beta_cap: float = DEFAULT_BETA_CAP

    def to_dict(self):
        return {"t_end": self.t_end, "rel_tol": self.rel_tol, "abs_tol": self.abs_tol,
                "samples": self.samples, "seed": self.seed, "init": self.init,
                "per_period": self.per_period, "beta_cap": self.beta_cap}

    @classmethod
    def from_dict(cls, d):
        where = "integration"
        _reject_unknown(d, ("t_end", "rel_tol", "abs_tol", "samples", "seed", "init", "per_period",
                            "beta_cap"), where)
        if "t_end" not in d:
            raise ConfigurationError("integration.t_end is required", field="integration.t_end")
        init = d.get("init", "random")
        if isinstance(init, dict):
            _reject_unknown(init, ("x", "lam", "vx", "vlam"), "integration.init")
            if "x" not in init or "lam" not in init:
                raise ConfigurationError("explicit init needs x and lam", field="integration.init")
        elif init not in ("random", "saddle"):
            raise ConfigurationError(f"integration.init must be 'random', 'saddle' or an object "
                                     f"(got {init!r})", field="integration.init")
        seed = d.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise ConfigurationError("integration.seed must be an integer", field="integration.seed")
        if init == "random" and seed is None:
            raise ConfigurationError("integration.seed is mandatory for random initialization",
                                     field="integration.seed")
        out = cls(t_end=_number(d, "t_end", where, positive=True),
                  rel_tol=_number(d, "rel_tol", where, 1e-8, positive=True),
                  abs_tol=_number(d, "abs_tol", where, 1e-10, positive=True),
                  samples=int(_number(d, "samples", where, 400, positive=True)),
                  seed=seed, init=init,
                  per_period=int(_number(d, "per_period", where, 16, positive=True)),
                  beta_cap=_number(d, "beta_cap", where, DEFAULT_BETA_CAP, positive=True))
        if out.samples < 10:
            raise ConfigurationError("integration.samples must be at least 10",
                                     field="integration.samples")
        return out


@dataclass
class RateCheckSpec:
    entries: Optional[list] = None  # catalog keys; None means every matching entry
    window: dict = field(default_factory=dict)  # t_lo, t_hi, decades
    slack: float = 0.15
    bound_factor: float = 2.0
    envelope: bool = True

    def to_dict(self):
        return {"entries": self.entries, "window": dict(self.window), "slack": self.slack,
                "bound_factor": self.bound_factor, "envelope": self.envelope}

    @classmethod
    def from_dict(cls, d):
        from pdflow.catalog import BY_KEY

        where = "checks.rates"
        _reject_unknown(d, ("entries", "window", "slack", "bound_factor", "envelope"), where)
        entries = d.get("entries")
        if entries is not None:
            if not isinstance(entries, list):
                raise ConfigurationError("checks.rates.entries must be a list", field=f"{where}.entries")
            unknown = [e for e in entries if e not in BY_KEY]
            if unknown:
                raise ConfigurationError(f"unknown catalog entries {unknown}", field=f"{where}.entries")
        window = _object(d, "window", where)
        _reject_unknown(window, ("t_lo", "t_hi", "decades"), f"{where}.window")
        window = {k: _number(window, k, f"{where}.window", positive=True) for k in window}
        return cls(entries=entries, window=window,
                   slack=_number(d, "slack", where, 0.15),
                   bound_factor=_number(d, "bound_factor", where, 2.0, positive=True),
                   envelope=bool(d.get("envelope", True)))


@dataclass
class SpeedBoundSpec:
    exponent: float  # checks that t**exponent * speed stays bounded
    after: float = 10.0  # in units of t0
    factor: float = 2.0

    def to_dict(self):
        return {"exponent": self.exponent, "after": self.after, "factor": self.factor}

    @classmethod
    def from_dict(cls, d):
        where = "checks.speed_bound"
        _reject_unknown(d, ("exponent", "after", "factor"), where)
        return cls(exponent=_number(d, "exponent", where),
                   after=_number(d, "after", where, 10.0, positive=True),
                   factor=_number(d, "factor", where, 2.0, positive=True))


@dataclass
class RescalingSpec:
    alpha: float
    p_span: list
    tol: float = 1e-4
    negative_control: bool = True
    seed: int = 0

    def to_dict(self):
        return {"alpha": self.alpha, "p_span": list(self.p_span), "tol": self.tol,
                "negative_control": self.negative_control, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        where = "checks.rescaling"
        _reject_unknown(d, ("alpha", "p_span", "tol", "negative_control", "seed"), where)
        span = d.get("p_span")
        if not (isinstance(span, list) and len(span) == 2 and span[0] < span[1]):
            raise ConfigurationError("checks.rescaling.p_span must be [p0, p1] with p0 < p1",
                                     field=f"{where}.p_span")
        return cls(alpha=_number(d, "alpha", where), p_span=[float(v) for v in span],
                   tol=_number(d, "tol", where, 1e-4, positive=True),
                   negative_control=bool(d.get("negative_control", True)),
                   seed=int(d.get("seed", 0)))


@dataclass
class ChecksSpec:
    conditions: bool = True
    decrease: bool = True
    decrease_slack: float = 1.0
    rates: Optional[RateCheckSpec] = None
    speed_bound: Optional[SpeedBoundSpec] = None
    rescaling: Optional[RescalingSpec] = None

    def to_dict(self):
        return {"conditions": self.conditions, "decrease": self.decrease,
                "decrease_slack": self.decrease_slack,
                "rates": None if self.rates is None else self.rates.to_dict(),
                "speed_bound": None if self.speed_bound is None else self.speed_bound.to_dict(),
                "rescaling": None if self.rescaling is None else self.rescaling.to_dict()}

    @classmethod
    def from_dict(cls, d):
        where = "checks"
        _reject_unknown(d, ("conditions", "decrease", "decrease_slack", "rates", "speed_bound",
                            "rescaling"), where)

        def sub(key, spec_cls):
            v = d.get(key)
            if v is None or v is False:
                return None
            if v is True:
                v = {}
            if not isinstance(v, dict):
                raise ConfigurationError(f"checks.{key} must be an object", field=f"checks.{key}")
            return spec_cls.from_dict(v)

        return cls(conditions=bool(d.get("conditions", True)), decrease=bool(d.get("decrease", True)),
                   decrease_slack=_number(d, "decrease_slack", where, 1.0, positive=True),
                   rates=sub("rates", RateCheckSpec), speed_bound=sub("speed_bound", SpeedBoundSpec),
                   rescaling=sub("rescaling", RescalingSpec))


@dataclass
class Scenario:
    name: str
    problem: dict
    schedule: Schedule
    integration: IntegrationSpec
    regime: RegimeSpec = field(default_factory=RegimeSpec)
    checks: ChecksSpec = field(default_factory=ChecksSpec)
    expect: dict = field(default_factory=dict)
    description: str = ""
    spec_version: int = SPEC_VERSION

    def to_dict(self):
        return {"spec_version": self.spec_version, "name": self.name,
                "description": self.description, "problem": self.problem,
                "schedule": self.schedule.to_dict(), "regime": self.regime.to_dict(),
                "integration": self.integration.to_dict(), "checks": self.checks.to_dict(),
                "expect": dict(self.expect)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @property
    def is_negative_control(self):
        return any(v == "FAIL" for v in self.expect.values())


def _check_beta_cap(sch: Schedule, integ: IntegrationSpec):
    if isinstance(sch.beta, ExponentialPowerScaling):
        b_end = float(sch.beta(integ.t_end))
        if not b_end <= integ.beta_cap:
            raise ConfigurationError(
                f"beta(t_end) = {b_end:.3g} exceeds the cap {integ.beta_cap:.3g}; "
                f"shorten integration.t_end", field="integration.t_end")


def parse_scenario(d: dict, base_dir: Optional[str] = None) -> Scenario:
    """Validate a scenario document (already decoded from JSON)."""
    if not isinstance(d, dict):
        raise ConfigurationError("scenario document must be a JSON object", field="<root>")
    _reject_unknown(d, ("spec_version", "name", "description", "problem", "schedule", "regime",
                        "integration", "checks", "expect"), "scenario")
    version = d.get("spec_version")
    if version != SPEC_VERSION:
        raise ConfigurationError(f"spec_version must be {SPEC_VERSION} (got {version!r})",
                                 field="spec_version")
    name = d.get("name")
    if not isinstance(name, str) or not name or any(c in name for c in "/\\ "):
        raise ConfigurationError("name must be a nonempty string without spaces or slashes",
                                 field="name")
    for key in ("problem", "schedule", "integration"):
        if not isinstance(d.get(key), dict):
            raise ConfigurationError(f"{key} must be an object", field=key)
    problem = dict(d["problem"])
    if "file" in problem:
        if base_dir is not None and not os.path.isabs(problem["file"]):
            problem["file"] = os.path.normpath(os.path.join(base_dir, problem["file"]))
    elif "kind" not in problem:
        raise ConfigurationError("problem needs a 'kind' or a 'file'", field="problem.kind")
    sched = d["schedule"]
    _reject_unknown(sched, ("alpha", "r", "delta", "s", "sigma", "t0", "beta", "perturbation"),
                    "schedule")
    schedule = Schedule.from_dict(sched)
    integration = IntegrationSpec.from_dict(d["integration"])
    _check_beta_cap(schedule, integration)
    expect = _object(d, "expect", "scenario")
    for k, v in expect.items():
        if k not in CHECK_NAMES:
            raise ConfigurationError(f"expect.{k}: unknown check", field=f"expect.{k}")
        if v not in VERDICTS:
            raise ConfigurationError(f"expect.{k} must be one of {VERDICTS}", field=f"expect.{k}")
    desc = d.get("description", "")
    if not isinstance(desc, str):
        raise ConfigurationError("description must be a string", field="description")
    return Scenario(name=name, problem=problem, schedule=schedule, integration=integration,
                    regime=RegimeSpec.from_dict(_object(d, "regime", "scenario")),
                    checks=ChecksSpec.from_dict(_object(d, "checks", "scenario")),
                    expect=dict(expect), description=desc, spec_version=version)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file; JSON syntax errors carry line and column."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}", field="<file>") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}",
                                 field=f"<json line {exc.lineno}>") from exc
    return parse_scenario(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def bundled_dir():
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")


def bundled_paths():
    d = bundled_dir()
    return sorted(os.path.join(d, f) for f in os.listdir(d) if f.endswith(".json"))
