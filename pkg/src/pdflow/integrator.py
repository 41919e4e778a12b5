"""Dormand-Prince 5(4) integrator with PI step control and dense output.

Operates on flat state vectors ``y`` with a right-hand side ``f(t, y)``.  The
step is accepted when the embedded error estimate satisfies
``||err||_2 <= rel_tol * max(||y||, ||y_new||) + abs_tol``.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from pdflow.errors import DivergenceError, StiffnessError

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# fifth-order solution minus embedded fourth-order solution, FSAL stage last
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension: y(t + u h) = y + h * K^T (P @ [u, u^2, u^3, u^4])
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR, MAX_FACTOR = 0.2, 10.0
PI_ALPHA, PI_BETA = 0.7 / 5, 0.4 / 5


@dataclass
class IntegratorStats:
    steps_accepted: int = 0
    steps_rejected: int = 0
    max_error_estimate: float = 0.0  # largest accepted local error, absolute 2-norm
    error_budget: float = 0.0  # sum of accepted local errors

    def to_dict(self):
        return {"steps_accepted": self.steps_accepted, "steps_rejected": self.steps_rejected,
                "max_error_estimate": self.max_error_estimate, "error_budget": self.error_budget}


def _initial_step(f, t0, y0, f0, rel_tol, abs_tol, span):
    scale = abs_tol + rel_tol * np.abs(y0)
    d0 = np.linalg.norm(y0 / scale) / np.sqrt(y0.size)
    d1 = np.linalg.norm(f0 / scale) / np.sqrt(y0.size)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.linalg.norm((f1 - f0) / scale) / np.sqrt(y0.size) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def dopri5(f, t0, y0, t_end, sample_times, rel_tol=1e-8, abs_tol=1e-10, max_steps=2_000_000,
           on_divergence=None, max_step=None):
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t_end``.

    Returns ``(Y, stats)`` where ``Y[i]`` is the dense-output state at
    ``sample_times[i]`` (sorted, within ``[t0, t_end]``).  ``on_divergence(t, y)``
    builds the ``last_good`` payload of a numerical error from the last accepted state.
    ``max_step(t)``, if given, caps the step at ``t``.  Near an equilibrium the
    error estimate alone lets the step outgrow the stability region, and round-off
    then grows to the tolerance level before any step is rejected.
    """
    sample_times = np.asarray(sample_times, dtype=float)
    y = np.array(y0, dtype=float)
    out = np.empty((sample_times.size, y.size))
    stats = IntegratorStats()
    t = float(t0)
    k = np.empty((7, y.size))
    k[0] = f(t, y)
    h = _initial_step(f, t, y, k[0], rel_tol, abs_tol, t_end - t0)
    err_prev = 1e-4
    idx = 0
    while idx < sample_times.size and sample_times[idx] <= t:
        out[idx] = y
        idx += 1
    ynorm = np.linalg.norm(y)

    while t < t_end:
        if stats.steps_accepted + stats.steps_rejected >= max_steps:
            raise StiffnessError(f"step budget {max_steps} exhausted at t={t:.6g}", t=t,
                                 norm_x=float(ynorm),
                                 last_good=on_divergence(t, y) if on_divergence else None)
        if h < 1e-14 * max(abs(t), 1.0):
            raise StiffnessError(f"step size {h:.3e} underflow at t={t:.6g}", t=t,
                                 norm_x=float(ynorm),
                                 last_good=on_divergence(t, y) if on_divergence else None)
        if max_step is not None:
            h = min(h, max_step(t))
        last = t + h >= t_end
        if last:
            h = t_end - t
        for i in range(1, 6):
            k[i] = f(t + C[i] * h, y + h * (A[i] @ k[:i]))
        y_new = y + h * (B @ k[:6])
        k[6] = f(t + h, y_new)
        err_vec = h * (E @ k)
        err_abs = math.sqrt(float(err_vec @ err_vec))
        ynew_norm = math.sqrt(float(y_new @ y_new))
        if not (np.isfinite(err_abs) and np.isfinite(ynew_norm)):
            if h > 1e-14 * max(abs(t), 1.0) * 1e3:
                # a non-finite trial state may only mean the step was far too large
                stats.steps_rejected += 1
                h *= MIN_FACTOR
                continue
            payload = on_divergence(t, y) if on_divergence else None
            raise DivergenceError(f"non-finite state after t={t:.6g}", t=t, norm_x=float(ynorm),
                                  last_good=payload)
        err = err_abs / (abs_tol + rel_tol * max(ynorm, ynew_norm))
        if err <= 1.0:
            t_new = t_end if last else t + h
            while idx < sample_times.size and sample_times[idx] <= t_new:
                u = (sample_times[idx] - t) / h
                q = P @ np.array([u, u * u, u ** 3, u ** 4])
                out[idx] = y + h * (q @ k)
                idx += 1
            stats.steps_accepted += 1
            stats.error_budget += err_abs
            stats.max_error_estimate = max(stats.max_error_estimate, err_abs)
            t, y, ynorm = t_new, y_new, ynew_norm
            k[0] = k[6]
            err = max(err, 1e-10)
            fac = SAFETY * err ** -PI_ALPHA * err_prev ** PI_BETA
            h *= min(MAX_FACTOR, max(MIN_FACTOR, fac))
            err_prev = err
        else:
            stats.steps_rejected += 1
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)
    while idx < sample_times.size:
        out[idx] = y
        idx += 1
    return out, stats
