"""Second-order primal-dual flow, its integration, and time rescaling.

The flow is

    x'' + (alpha / t**r) x' = -beta(t) [grad f(x) + A^T (lam + delta t**s lam') + sigma A^T (Ax - b)] + eps(t)
    lam'' + (alpha / t**r) lam' = beta(t) [A (x + delta t**s x') - b]

State vectors are flattened as ``[x, lam, vx, vlam]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from pdflow.errors import (ConfigurationError, DomainError, NumericalError, RejectedInputError)
from pdflow.integrator import IntegratorStats, dopri5
from pdflow.problem import Problem
from pdflow.schedule import (ConstantScaling, ExponentialPowerScaling, PowerScaling, Schedule,
                             ZeroPerturbation)


@dataclass
class PhaseState:
    t: float
    x: np.ndarray
    lam: np.ndarray
    vx: np.ndarray
    vlam: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        self.vx = np.atleast_1d(np.asarray(self.vx, dtype=float))
        self.vlam = np.atleast_1d(np.asarray(self.vlam, dtype=float))
        if self.vx.shape != self.x.shape or self.vlam.shape != self.lam.shape:
            raise RejectedInputError("velocity shapes must match position shapes")
        if not np.isfinite(self.t) or not all(np.all(np.isfinite(v)) for v in self.flat_parts()):
            raise RejectedInputError("phase state must be finite")

    def flat_parts(self):
        return (self.x, self.lam, self.vx, self.vlam)

    def flat(self):
        return np.concatenate(self.flat_parts())

    @classmethod
    def from_flat(cls, t, y, n, m):
        return cls(t, y[:n], y[n:n + m], y[n + m:2 * n + m], y[2 * n + m:])

    @classmethod
    def at_rest(cls, t, x, lam):
        x, lam = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(lam, float))
        return cls(t, x, lam, np.zeros_like(x), np.zeros_like(lam))


def default_init(p: Problem, t0=1.0, seed=0):
    """Seeded random unit primal vector, zero multiplier, zero velocities."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(p.n)
    return PhaseState.at_rest(t0, x / np.linalg.norm(x), np.zeros(p.m))


@dataclass
class SamplePlan:
    """Sample times: ``count`` log-spaced points, or an explicit increasing grid."""

    count: int = 400
    times: Optional[Sequence[float]] = None

    def grid(self, t0, t_end):
        if self.times is not None:
            ts = np.asarray(self.times, dtype=float)
            if ts.ndim != 1 or ts.size < 2 or np.any(np.diff(ts) <= 0):
                raise RejectedInputError("explicit sample times must be strictly increasing")
            if ts[0] < t0 or ts[-1] > t_end * (1 + 1e-12):
                raise RejectedInputError("explicit sample times must lie in [t0, t_end]")
            return np.minimum(ts, t_end)
        if self.count < 2:
            raise RejectedInputError("sample plan needs at least two samples")
        ts = np.geomspace(t0, t_end, self.count)
        ts[0], ts[-1] = t0, t_end
        return ts


@dataclass
class Trajectory:
    """Samples stored column-wise: ``t`` (N,), ``x`` (N, n), ``lam`` (N, m), ..."""

    t: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    vx: np.ndarray
    vlam: np.ndarray
    integrator_stats: IntegratorStats = field(default_factory=IntegratorStats)
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    @property
    def samples(self):
        return [self[i] for i in range(len(self))]

    def __getitem__(self, i):
        return PhaseState(float(self.t[i]), self.x[i], self.lam[i], self.vx[i], self.vlam[i])

    @property
    def speed(self):
        return np.linalg.norm(self.vx, axis=1) + np.linalg.norm(self.vlam, axis=1)

    def compute_diagnostics(self, p: Problem):
        """Per-sample Lagrangian gap (against the stored multiplier), objective gap,
        feasibility, speed and distance to the saddle point.  Gaps and distance are
        NaN when ``p`` carries no saddle point."""
        resid = self.x @ p.A.T - p.b
        feas = np.linalg.norm(resid, axis=1)
        if p.saddle_point is None:
            lag = obj = dist = np.full(len(self), np.nan)
        else:
            x_star, lam_star = p.saddle_point
            f = p.objective_batch(self.x)
            f_star = float(p.objective(x_star))
            obj = f - f_star
            dist = (np.linalg.norm(self.x - x_star, axis=1)
                    + np.linalg.norm(self.lam - lam_star, axis=1))
            lag = obj + resid @ lam_star - float(lam_star @ (p.A @ x_star - p.b))
            floor = -1e-10 * np.maximum(1.0, np.maximum(abs(f_star), np.abs(f)))
            if np.any(lag < floor):
                i = int(np.argmin(lag - floor))
                raise DomainError(f"negative saddle gap {lag[i]:.3e} at t={self.t[i]:.6g}")
        self.diagnostics = {"lagrangian_gap": lag, "objective_gap": obj, "feasibility": feas,
                            "speed": self.speed, "distance": dist}
        return self.diagnostics

    def subsample(self, idx):
        """Trajectory restricted to the sample indices ``idx``."""
        idx = np.asarray(idx)
        return Trajectory(self.t[idx], self.x[idx], self.lam[idx], self.vx[idx], self.vlam[idx],
                          self.integrator_stats,
                          {k: np.asarray(v)[idx] for k, v in self.diagnostics.items()})

    def columns(self):
        names = ["t"]
        blocks = [self.t[:, None]]
        for label, arr in (("x", self.x), ("lam", self.lam), ("vx", self.vx), ("vlam", self.vlam)):
            names += [f"{label}[{j}]" for j in range(arr.shape[1])]
            blocks.append(arr)
        for key in ("lagrangian_gap", "objective_gap", "feasibility", "speed"):
            names.append(key)
            blocks.append(np.asarray(self.diagnostics.get(key, np.full(len(self), np.nan)))[:, None])
        return names, np.hstack(blocks)

    def to_csv(self, path):
        names, data = self.columns()
        write_csv(path, names, data)


def fmt(v):
    """17 significant digits, enough to round-trip an IEEE double."""
    return format(float(v), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _frequency_constants(p: Problem, sch: Schedule):
    norm_a = float(np.linalg.norm(p.A, 2)) if p.A.size else 0.0
    return norm_a, p.curvature_bound() + (sch.sigma + 1.0) * norm_a ** 2


def oscillation_frequency(p: Problem, sch: Schedule, t):
    """Rough upper bound on the local angular frequency of the flow at ``t``.

    The ``delta t**s`` coupling acts like a gyroscopic term of frequency
    ``beta delta t**s ||A||``; the gradient and penalty terms add ``sqrt(beta L)``.
    """
    t = np.asarray(t, dtype=float)
    norm_a, stiff = _frequency_constants(p, sch)
    bt = np.asarray(sch.beta(t), dtype=float)
    return bt * sch.delta * t ** sch.s * norm_a + np.sqrt(bt * stiff)


# DOPRI5 is stable on the imaginary axis only for |h omega| < 1 and on the
# negative real axis up to about 3.3; both caps keep a margin.
OSCILLATORY_STEP = 0.9
DAMPING_STEP = 3.0


def stability_step(p: Problem, sch: Schedule):
    """Step cap ``t -> min(0.9 / omega(t), 3 t**r / alpha)`` for the explicit solver."""
    norm_a, stiff = _frequency_constants(p, sch)

    def cap(t):
        bt = float(sch.beta(t))
        omega = bt * sch.delta * t ** sch.s * norm_a + math.sqrt(bt * stiff)
        damp = sch.alpha / t ** sch.r
        return min(OSCILLATORY_STEP / omega if omega > 0 else math.inf,
                   DAMPING_STEP / damp if damp > 0 else math.inf)

    return cap


def audit_grid(p: Problem, sch: Schedule, t0, t_end, per_period=16, count=400):
    """Sample grid that is log-spaced (``count`` points) and in addition resolves
    every local oscillation period with ``per_period`` points."""
    norm_a, stiff = _frequency_constants(p, sch)
    ratio = (t_end / t0) ** (1.0 / (count - 1)) - 1.0
    ts = [t0]
    t = t0
    while t < t_end:
        bt = float(sch.beta(t))
        omega = bt * sch.delta * t ** sch.s * norm_a + math.sqrt(bt * stiff)
        h = t * ratio if omega <= 0 else min(t * ratio, 2 * math.pi / (per_period * omega))
        t = min(t + h, t_end)
        ts.append(t)
    return np.array(ts)


def log_indices(t, count=400):
    """Indices of the samples nearest to ``count`` log-spaced times."""
    targets = np.geomspace(t[0], t[-1], count)
    idx = np.searchsorted(t, targets).clip(0, len(t) - 1)
    lower = (idx - 1).clip(0)
    closer = np.abs(t[lower] - targets) < np.abs(t[idx] - targets)
    idx = np.where(closer, lower, idx)
    return np.unique(idx)


# -- right-hand side ----------------------------------------------------------------

def make_flat_rhs(p: Problem, sch: Schedule):
    """Return ``f(t, y)`` on flat states ``[x, lam, vx, vlam]``."""
    n, m = p.n, p.m
    A, At, b = p.A, p.A.T, p.b
    grad = p.gradient
    alpha, r, delta, s, sigma = sch.alpha, sch.r, sch.delta, sch.s, sch.sigma
    beta = sch.beta
    pert = None if isinstance(sch.perturbation, ZeroPerturbation) else sch.perturbation
    i1, i2, i3 = n, n + m, 2 * n + m

    if getattr(p, "Q", None) is not None and not getattr(p, "force_generic_rhs", False):
        return _affine_rhs(p, sch, pert)

    def f(t, y):
        x, lam, vx, vlam = y[:i1], y[i1:i2], y[i2:i3], y[i3:]
        damp = alpha / t ** r if r else alpha
        ext = delta * t ** s if s else delta
        bt = float(beta(t))
        g = grad(x)
        resid = A @ x - b
        dvx = -damp * vx - bt * (g + At @ (lam + ext * vlam + sigma * resid))
        if pert is not None:
            dvx = dvx + pert(t, n)
        dvlam = -damp * vlam + bt * (resid + ext * (A @ vx))
        out = np.empty_like(y)
        out[:i1] = vx
        out[i1:i2] = vlam
        out[i2:i3] = dvx
        out[i3:] = dvlam
        return out

    return f


def _affine_rhs(p, sch, pert):
    """Quadratic objectives make the flow affine in the state:
    ``y' = (M0 + damp Md + beta (Mb + ext Me)) y + beta cb + eps``, where ``M0``
    (positions take velocities) and ``Md`` (damping) are applied as slices."""
    n, m = p.n, p.m
    A, Q = p.A, p.Q
    N = 2 * (n + m)
    ix, il, ivx, ivl = slice(0, n), slice(n, n + m), slice(n + m, 2 * n + m), slice(2 * n + m, N)
    Mb, Me = np.zeros((N, N)), np.zeros((N, N))
    Mb[ivx, ix] = -(Q + sch.sigma * A.T @ A)
    Mb[ivx, il] = -A.T
    Mb[ivl, ix] = A
    Me[ivx, ivl] = -A.T
    Me[ivl, ivx] = A
    cb = np.zeros(N)
    cb[ivx] = -(p.c - sch.sigma * A.T @ p.b)
    cb[ivl] = -p.b
    alpha, r, delta, s, beta = sch.alpha, sch.r, sch.delta, sch.s, sch.beta
    W = np.vstack([Mb, Me])  # one matvec for both beta-weighted blocks
    nv = n + m

    def f(t, y):
        damp = alpha / t ** r if r else alpha
        ext = delta * t ** s if s else delta
        bt = float(beta(t))
        z = W @ y
        out = bt * (z[:N] + cb) + (bt * ext) * z[N:]
        out[:nv] += y[nv:]
        out[nv:] -= damp * y[nv:]
        if pert is not None:
            out[ivx] += pert(t, n)
        return out

    return f


def rhs(state: PhaseState, p: Problem, sch: Schedule):
    """``(dx, dlam, dvx, dvlam)`` of the flow at ``state``."""
    if not state.t >= sch.t0 * (1 - 1e-12) or state.t <= 0:
        raise DomainError(f"rhs evaluated at t={state.t} before t0={sch.t0}")
    g = np.asarray(p.gradient(state.x), dtype=float)
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite gradient", t=state.t, norm_x=float(np.linalg.norm(state.x)))
    y = state.flat()
    d = make_flat_rhs(p, sch)(state.t, y)
    n, m = p.n, p.m
    return d[:n], d[n:n + m], d[n + m:2 * n + m], d[2 * n + m:]


def integrate(p: Problem, sch: Schedule, init: PhaseState, t_end: float, rel_tol=1e-9,
              abs_tol=1e-11, sample_plan: Optional[SamplePlan] = None, max_steps=2_000_000,
              diagnostics=True) -> Trajectory:
    """Integrate the flow from ``init`` (at ``t0 = init.t``) to ``t_end``."""
    t0 = float(init.t)
    if not t_end > t0:
        raise RejectedInputError(f"need t_end > t0 (got t_end={t_end}, t0={t0})")
    if abs(t0 - sch.t0) > 1e-12 * max(1.0, sch.t0):
        raise RejectedInputError(f"initial time {t0} differs from schedule t0={sch.t0}")
    for name, tol in (("rel_tol", rel_tol), ("abs_tol", abs_tol)):
        if not 0 < tol <= 1e-2:
            raise ConfigurationError(f"{name} must lie in (0, 1e-2] (got {tol})",
                                     field=f"integration.{name}")
    if init.x.shape != (p.n,) or init.lam.shape != (p.m,):
        raise RejectedInputError("initial state dimensions do not match the problem")
    plan = sample_plan or SamplePlan()
    ts = plan.grid(t0, t_end)
    n, m = p.n, p.m

    def last_good(t, y):
        return PhaseState.from_flat(t, y, n, m)

    Y, stats = dopri5(make_flat_rhs(p, sch), t0, init.flat(), t_end, ts, rel_tol=rel_tol,
                      abs_tol=abs_tol, max_steps=max_steps, on_divergence=last_good,
                      max_step=stability_step(p, sch))
    traj = Trajectory(ts, Y[:, :n], Y[:, n:n + m], Y[:, n + m:2 * n + m], Y[:, 2 * n + m:], stats)
    if diagnostics:
        traj.compute_diagnostics(p)
    return traj


# -- time rescaling -----------------------------------------------------------------

@dataclass
class RescaledSchedule:
    upsilon: np.ndarray
    upsilon_dot: np.ndarray
    schedule: Schedule


def time_rescale_map(kind: str, p_grid, alpha: float, kappa: Optional[float] = None,
                     delta: float = 0.5, sigma: float = 1.0) -> RescaledSchedule:
    """Rewrite the ``r = s = 1``, ``beta = 1`` flow in the variable ``p`` with ``t = upsilon(p)``.

    ``exponential``: ``upsilon = e**p`` gives constant damping ``alpha - 1``,
    extrapolation ``delta`` and scaling ``e**(2p)``.  ``power``: ``upsilon = p**kappa``
    gives damping ``(1 + (alpha - 1) kappa) / p``, extrapolation ``(delta / kappa) p`` and
    scaling ``kappa**2 p**(2 (kappa - 1))``.
    """
    p_grid = np.asarray(p_grid, dtype=float)
    if kind == "exponential":
        ups, dups = np.exp(p_grid), np.exp(p_grid)
        if not p_grid[0] > 0:
            raise DomainError("the rescaled flow needs an initial time p0 > 0")
        sch = Schedule(alpha=alpha - 1.0, r=0.0, delta=delta, s=0.0,
                       beta=ExponentialPowerScaling(mu=1.0, c=2.0, k=1.0, q=0.0), sigma=sigma,
                       t0=float(p_grid[0]))
    elif kind == "power":
        if kappa is None or not kappa > 0:
            raise DomainError(f"power rescaling needs kappa > 0 (got {kappa})")
        if np.any(p_grid <= 0):
            raise DomainError("power rescaling needs p > 0")
        ups, dups = p_grid ** kappa, kappa * p_grid ** (kappa - 1.0)
        beta = ConstantScaling(kappa ** 2) if kappa == 1 else PowerScaling(kappa ** 2, 2 * (kappa - 1))
        sch = Schedule(alpha=1.0 + (alpha - 1.0) * kappa, r=1.0, delta=delta / kappa, s=1.0,
                       beta=beta, sigma=sigma, t0=float(p_grid[0]))
    else:
        raise ConfigurationError(f"unknown rescaling kind {kind!r}", field="rescaling.kind")
    if np.any(np.diff(ups) <= 0) or np.any(dups <= 0):
        raise DomainError("rescaling map must be strictly increasing on the grid")
    return RescaledSchedule(ups, dups, sch)


@dataclass
class EquivalenceReport:
    max_discrepancy: float
    tol: float
    passed: bool
    checkpoints: int
    chain_rule: bool

    def to_dict(self):
        return {"max_discrepancy": self.max_discrepancy, "tol": self.tol, "passed": self.passed,
                "checkpoints": self.checkpoints, "chain_rule": self.chain_rule}


def verify_rescaling_equivalence(p: Problem, alpha: float, t_span, p_span, tol=1e-4,
                                 init: Optional[PhaseState] = None, sigma=1.0, rel_tol=1e-9,
                                 abs_tol=1e-12, checkpoints=60, chain_rule=True, seed=0):
    """Integrate the ``t``-flow and its exponential rescaling; compare ``x(e**p)`` with
    ``xbar(p)`` at log-spaced checkpoints.  ``chain_rule=False`` omits the factor
    ``e**p0`` on the initial velocity (a negative control)."""
    t0, t1 = map(float, t_span)
    p0, p1 = map(float, p_span)
    if not alpha > 3:
        raise ConfigurationError("rescaling equivalence is stated for alpha > 3", field="alpha")
    if not (math.isclose(math.exp(p0), t0, rel_tol=1e-12) and math.isclose(math.exp(p1), t1, rel_tol=1e-12)):
        raise RejectedInputError("spans do not match: need t_span = exp(p_span)")
    if not p0 > 0:
        raise RejectedInputError("p_span must start at p0 > 0 (t0 > 1)")
    if init is None:
        rng = np.random.default_rng(seed)
        init = PhaseState(t0, rng.standard_normal(p.n), rng.standard_normal(p.m),
                          rng.standard_normal(p.n), rng.standard_normal(p.m))
    base = Schedule(alpha=alpha, r=1.0, delta=0.5, s=1.0, beta=ConstantScaling(1.0), sigma=sigma,
                    t0=t0)
    ps = np.linspace(p0, p1, checkpoints)
    resc = time_rescale_map("exponential", ps, alpha, delta=0.5, sigma=sigma)
    factor = math.exp(p0) if chain_rule else 1.0
    init_bar = PhaseState(p0, init.x, init.lam, init.vx * factor, init.vlam * factor)
    leg_t = integrate(p, base, PhaseState(t0, init.x, init.lam, init.vx, init.vlam), t1, rel_tol,
                      abs_tol, SamplePlan(times=np.clip(np.exp(ps), t0, t1)), diagnostics=False)
    leg_p = integrate(p, resc.schedule, init_bar, p1, rel_tol, abs_tol, SamplePlan(times=ps),
                      diagnostics=False)
    gap = np.linalg.norm(leg_t.x - leg_p.x, axis=1)
    worst = float(gap.max()) if gap.size else 0.0
    return EquivalenceReport(worst, tol, worst <= tol, int(ps.size), chain_rule)
