"""Empirical convergence exponents and their comparison with predicted rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from pdflow.errors import ConfigurationError, RejectedInputError, ResolutionError

FLOOR = 1e-13
DEFAULT_SLACK = 0.15


@dataclass
class WindowPolicy:
    """Fit window ``[t_lo, t_hi]``; by default the last ``decades`` of the series."""

    t_lo: Optional[float] = None
    t_hi: Optional[float] = None
    decades: float = 1.0
    floor: float = FLOOR
    min_points: int = 10
    envelope: bool = False
    envelope_half_width: float = 0.25  # decades on each side

    def bounds(self, t):
        hi = float(t[-1]) if self.t_hi is None else min(float(self.t_hi), float(t[-1]))
        lo = hi / 10 ** self.decades if self.t_lo is None else float(self.t_lo)
        return max(lo, float(t[0])), hi

    def to_dict(self):
        return {"t_lo": self.t_lo, "t_hi": self.t_hi, "decades": self.decades,
                "floor": self.floor, "min_points": self.min_points, "envelope": self.envelope}


@dataclass
class RateFit:
    exponent: Optional[float]
    intercept: Optional[float]
    r_squared: Optional[float]
    window: tuple
    n_points: int
    n_censored: int = 0
    underflow: bool = False

    def to_dict(self):
        return {"kind": "exponent", "exponent": self.exponent, "intercept": self.intercept,
                "r_squared": self.r_squared, "window": list(self.window),
                "n_points": self.n_points, "n_censored": self.n_censored,
                "underflow": self.underflow}


@dataclass
class BoundednessReport:
    ratio: Optional[float]
    bounded: bool
    bound_factor: float
    window: tuple
    n_points: int
    underflow: bool = False

    def to_dict(self):
        return {"kind": "scaled", "ratio": self.ratio, "bounded": self.bounded,
                "bound_factor": self.bound_factor, "window": list(self.window),
                "n_points": self.n_points, "underflow": self.underflow}


def _as_series(samples):
    if isinstance(samples, tuple) and len(samples) == 2 and np.ndim(samples[0]) == 1:
        t, v = samples
    else:
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise RejectedInputError("samples must be (t, value) pairs or a (t, values) tuple")
        t, v = arr[:, 0], arr[:, 1]
    t, v = np.asarray(t, dtype=float), np.asarray(v, dtype=float)
    if t.shape != v.shape:
        raise RejectedInputError("time and value arrays differ in length")
    if np.any(np.diff(t) <= 0):
        raise RejectedInputError("sample times must be strictly increasing")
    if np.any(t <= 0):
        raise RejectedInputError("sample times must be positive for a log-log fit")
    return t, v


def _range_max(v, lo, hi):
    """``max(v[lo[i]:hi[i]])`` for every ``i`` (windows nonempty), via a sparse table."""
    n = v.size
    table = [v]
    k = 1
    while 2 * k <= n:
        prev = table[-1]
        table.append(np.maximum(prev[:-k], prev[k:]))
        k *= 2
    length = hi - lo
    level = np.floor(np.log2(length)).astype(int)
    out = np.empty(lo.size)
    for j in np.unique(level):
        sel = level == j
        span = 1 << j
        tab = table[j]
        out[sel] = np.maximum(tab[lo[sel]], tab[hi[sel] - span])
    return out


def envelope(t, v, half_width=0.25):
    """Running maximum over the centered window ``[t 10**-w, t 10**w]``."""
    t, v = np.asarray(t, dtype=float), np.asarray(v, dtype=float)
    f = 10.0 ** half_width
    lo = np.searchsorted(t, t / f, side="left")
    hi = np.searchsorted(t, t * f, side="right")
    return _range_max(v, lo, hi)


def fit_rate(samples, policy: Optional[WindowPolicy] = None) -> RateFit:
    """Least-squares slope of ``log(value)`` against ``log(t)`` on the window.

    Values at or below ``policy.floor`` are censored.  When fewer than
    ``min_points`` survive and some were censored the fit reports underflow: the
    series already sits at the numerical floor.
    """
    policy = policy or WindowPolicy()
    t, v = _as_series(samples)
    if policy.envelope:
        v = envelope(t, v, policy.envelope_half_width)
    lo, hi = policy.bounds(t)
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    tw, vw = t[sel], v[sel]
    if tw.size < policy.min_points:
        raise ResolutionError(f"fit window [{lo:.4g}, {hi:.4g}] holds {tw.size} samples, "
                              f"need {policy.min_points}")
    keep = vw > policy.floor
    censored = int((~keep).sum())
    if keep.sum() < policy.min_points:
        return RateFit(None, None, None, (lo, hi), int(keep.sum()), censored, underflow=True)
    x, y = np.log(tw[keep]), np.log(vw[keep])
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0:
        raise ResolutionError("fit window has a single distinct time")
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    ss_res = float(((y - intercept - slope * x) ** 2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    # a flat series (spread at rounding level) is fitted perfectly by slope 0
    flat = ss_tot <= y.size * (1e-12 * max(1.0, abs(ym))) ** 2
    r2 = 1.0 if flat else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(slope, intercept, r2, (lo, hi), int(keep.sum()), censored)


def fit_rate_scaled(samples, scale: Callable, bound_factor=2.0,
                    policy: Optional[WindowPolicy] = None) -> BoundednessReport:
    """Is ``w(t) * value(t)`` bounded on the window?

    The ratio compares the maximum of the product over the window with its
    maximum over the first quarter decade of the window (the start value,
    robust to oscillation).  Bounded iff ``ratio <= bound_factor``.
    """
    policy = policy or WindowPolicy()
    t, v = _as_series(samples)
    lo, hi = policy.bounds(t)
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    tw, vw = t[sel], v[sel]
    if tw.size < policy.min_points:
        raise ResolutionError(f"window [{lo:.4g}, {hi:.4g}] holds {tw.size} samples, "
                              f"need {policy.min_points}")
    if np.all(vw <= policy.floor):
        return BoundednessReport(None, True, bound_factor, (lo, hi), int(tw.size), underflow=True)
    prod = np.asarray(scale(tw), dtype=float) * vw
    head = tw <= tw[0] * 10 ** 0.25
    start = float(prod[head].max())
    if not start > 0:
        raise ResolutionError("scaled series vanishes at the window start")
    ratio = float(prod.max() / start)
    return BoundednessReport(ratio, ratio <= bound_factor, bound_factor, (lo, hi), int(tw.size))


# -- comparison against the catalog ---------------------------------------------------

@dataclass
class ComparisonRow:
    diagnostic: str
    predicted: object
    measured: object
    slack: float
    verdict: str
    kind: str

    def to_dict(self):
        return {"diagnostic": self.diagnostic, "predicted": self.predicted,
                "measured": self.measured, "slack": self.slack, "verdict": self.verdict,
                "kind": self.kind}


@dataclass
class ComparisonVerdict:
    entry: str
    regime: str
    rows: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.verdict in ("PASS", "NOT_MEASURED") for r in self.rows)

    def to_dict(self):
        return {"entry": self.entry, "regime": self.regime, "rows": [r.to_dict() for r in self.rows]}


def compare_to_catalog(fits: dict, entry, sch, tau=None, slack=DEFAULT_SLACK) -> ComparisonVerdict:
    """Verdict per predicted diagnostic: measured exponent ``<= predicted + slack``
    (rates are upper bounds), or boundedness for weight-scaled predictions."""
    from pdflow.schedule import regime_tag

    if not entry.matches(sch, tau):
        raise ConfigurationError(f"schedule does not satisfy the constraints of catalog entry "
                                 f"{entry.key} ({regime_tag(sch.r, sch.s, sch.alpha)})")
    out = ComparisonVerdict(entry.key, entry.regime)
    for pred in entry.predictions(sch, tau):
        fit = fits.get(pred.diagnostic)
        if fit is None:
            out.rows.append(ComparisonRow(pred.diagnostic, pred.describe(), None, slack,
                                          "NOT_MEASURED", pred.kind))
            continue
        if pred.kind == "exponent":
            if not isinstance(fit, RateFit):
                raise ConfigurationError(f"{pred.diagnostic}: exponent prediction needs a RateFit")
            if fit.underflow:
                verdict, measured = "PASS", "underflow"
            else:
                measured = fit.exponent
                verdict = "PASS" if fit.exponent <= pred.exponent + slack else "FAIL"
            out.rows.append(ComparisonRow(pred.diagnostic, pred.exponent, measured, slack,
                                          verdict, pred.kind))
        else:
            if not isinstance(fit, BoundednessReport):
                raise ConfigurationError(f"{pred.diagnostic}: scaled prediction needs a "
                                         "BoundednessReport")
            measured = "underflow" if fit.underflow else fit.ratio
            out.rows.append(ComparisonRow(pred.diagnostic, pred.describe(), measured, slack,
                                          "PASS" if fit.bounded else "FAIL", pred.kind))
    return out


def safe_float(v):
    """JSON-friendly float (None for NaN / inf)."""
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None
