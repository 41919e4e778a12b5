"""Linearly constrained convex test problems, Lagrangians and saddle-point oracles.

Problems are ``min f(x) s.t. Ax = b`` with dense ``A`` (shape m x n).  A problem
may carry one representative saddle point ``(x*, lam*)``; every gap diagnostic is
anchored to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from pdflow.errors import (
    ConfigurationError,
    DegenerateProblemError,
    DomainError,
    RejectedInputError,
)

KKT_TOL = 1e-10


def _vec(v, name="vector"):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise RejectedInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(eq=False)
class Problem:
    """Constrained problem ``(f, grad f, A, b)`` with an optional saddle point."""

    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    A: np.ndarray
    b: np.ndarray
    saddle_point: Optional[tuple] = None
    name: str = "problem"
    kkt_tol: float = KKT_TOL
    kind: str = field(default="custom", init=False)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = _vec(self.b, "b")
        if self.A.shape[0] != self.b.shape[0]:
            raise RejectedInputError(
                f"A has {self.A.shape[0]} rows but b has dimension {self.b.shape[0]}"
            )
        if self.saddle_point is not None:
            self.saddle_point = self._validated_saddle(self.saddle_point)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def _validated_saddle(self, pair):
        x_star, lam_star = (_vec(pair[0], "x*"), _vec(pair[1], "lambda*"))
        if x_star.shape != (self.n,) or lam_star.shape != (self.m,):
            raise RejectedInputError(
                f"saddle point dimensions {x_star.shape}, {lam_star.shape} "
                f"do not match n={self.n}, m={self.m}"
            )
        stat, feas = kkt_residuals(self, x_star, lam_star)
        if stat > self.kkt_tol or feas > self.kkt_tol:
            raise ConfigurationError(
                f"stored saddle point violates KKT: stationarity {stat:.3e}, "
                f"feasibility {feas:.3e} (tol {self.kkt_tol:.0e})",
                field="saddle_point",
            )
        return x_star, lam_star

    def check_primal(self, x):
        x = _vec(x, "x")
        if x.shape != (self.n,):
            raise RejectedInputError(f"x has dimension {x.shape[0]}, expected {self.n}")
        return x

    def check_dual(self, lam):
        lam = _vec(lam, "lambda")
        if lam.shape != (self.m,):
            raise RejectedInputError(f"lambda has dimension {lam.shape[0]}, expected {self.m}")
        return lam

    @property
    def x_star(self):
        return self._require_saddle()[0]

    @property
    def lam_star(self):
        return self._require_saddle()[1]

    def _require_saddle(self):
        if self.saddle_point is None:
            raise ConfigurationError(f"problem {self.name!r} has no stored saddle point",
                                     field="saddle_point")
        return self.saddle_point

    def curvature_bound(self) -> float:
        """Upper bound on the Lipschitz constant of the gradient (1.0 if unknown)."""
        return 1.0

    def objective_batch(self, X):
        """``f`` applied to each row of ``X``."""
        return np.array([float(self.objective(x)) for x in X])

    def to_dict(self) -> dict:
        raise ConfigurationError(f"problem kind {self.kind!r} is not serializable")


class QuadraticProblem(Problem):
    """``f(x) = 1/2 x'Qx + c'x`` with Q symmetric positive semidefinite."""

    def __init__(self, Q, c, A, b, saddle_point=None, name="quadratic", kkt_tol=KKT_TOL):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        c = _vec(c, "c")
        if Q.shape[0] != Q.shape[1] or Q.shape[0] != c.shape[0]:
            raise RejectedInputError(f"Q shape {Q.shape} incompatible with c dimension {c.shape[0]}")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12:
            raise RejectedInputError("Q is not symmetric within 1e-12")
        if np.linalg.eigvalsh(Q).min() < -1e-10:
            raise RejectedInputError("Q is not positive semidefinite (eigenvalue < -1e-10)")
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[1] != Q.shape[0]:
            raise RejectedInputError(f"A has {A.shape[1]} columns, Q is {Q.shape[0]}x{Q.shape[0]}")
        self.Q = Q
        self.c = c
        super().__init__(
            objective=self._f, gradient=self._grad, A=A, b=b,
            saddle_point=saddle_point, name=name, kkt_tol=kkt_tol,
        )
        self.kind = "quadratic"

    def _f(self, x):
        return 0.5 * x @ (self.Q @ x) + self.c @ x

    def _grad(self, x):
        return self.Q @ x + self.c

    def curvature_bound(self):
        return float(np.linalg.eigvalsh(self.Q).max(initial=0.0))

    def objective_batch(self, X):
        X = np.atleast_2d(X)
        return 0.5 * np.einsum("ij,ij->i", X @ self.Q, X) + X @ self.c

    def with_saddle(self):
        """Copy with the exact saddle point from :func:`kkt_solve` attached."""
        x_star, lam_star = kkt_solve(self)
        return type(self)._rebuild(self, (x_star, lam_star))

    @classmethod
    def _rebuild(cls, q, saddle):
        return QuadraticProblem(q.Q, q.c, q.A, q.b, saddle_point=saddle, name=q.name,
                                kkt_tol=q.kkt_tol)

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind, "Q": self.Q.tolist(), "c": self.c.tolist(),
             "A": self.A.tolist(), "b": self.b.tolist()}
        if self.saddle_point is not None:
            d["saddle_point"] = {"x": self.saddle_point[0].tolist(),
                                 "lam": self.saddle_point[1].tolist()}
        return d


class LeastSquaresProblem(QuadraticProblem):
    """``f(x) = 1/2 ||Mx - y||^2`` subject to ``Ax = b``."""

    def __init__(self, M, y, A, b, saddle_point=None, name="least_squares", kkt_tol=KKT_TOL):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        y = _vec(y, "y")
        self.M = M
        self.y = y
        super().__init__(M.T @ M, -(M.T @ y), A, b, saddle_point=saddle_point, name=name,
                         kkt_tol=kkt_tol)
        self.kind = "least_squares"

    def _f(self, x):
        r = self.M @ x - self.y
        return 0.5 * r @ r

    def objective_batch(self, X):
        R = np.atleast_2d(X) @ self.M.T - self.y
        return 0.5 * np.einsum("ij,ij->i", R, R)

    @classmethod
    def _rebuild(cls, q, saddle):
        return LeastSquaresProblem(q.M, q.y, q.A, q.b, saddle_point=saddle, name=q.name,
                                   kkt_tol=q.kkt_tol)

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind, "M": self.M.tolist(), "y": self.y.tolist(),
             "A": self.A.tolist(), "b": self.b.tolist()}
        if self.saddle_point is not None:
            d["saddle_point"] = {"x": self.saddle_point[0].tolist(),
                                 "lam": self.saddle_point[1].tolist()}
        return d


class LogSumExpProblem(Problem):
    """``f(x) = logsumexp(Cx + d) + gamma/2 ||x||^2`` with affine constraints.

    Smooth, convex, not quadratic; the gradient is globally Lipschitz with
    constant ``||C||^2 + gamma``.  ``gamma > 0`` keeps the minimizer unique.
    """

    def __init__(self, C, d, A, b, gamma=0.1, saddle_point=None, name="logsumexp",
                 kkt_tol=KKT_TOL):
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.d = _vec(d, "d")
        self.gamma = float(gamma)
        if self.C.shape[0] != self.d.shape[0]:
            raise RejectedInputError("C rows must match d")
        if self.gamma < 0:
            raise RejectedInputError("gamma must be nonnegative")
        super().__init__(objective=self._f, gradient=self._grad, A=A, b=b,
                         saddle_point=saddle_point, name=name, kkt_tol=kkt_tol)
        self.kind = "logsumexp"

    def _f(self, x):
        return float(logsumexp(self.C @ x + self.d)) + 0.5 * self.gamma * (x @ x)

    def _grad(self, x):
        return self.C.T @ softmax(self.C @ x + self.d) + self.gamma * x

    def curvature_bound(self):
        return float(np.linalg.norm(self.C, 2) ** 2 + self.gamma)

    def _hess(self, x):
        p = softmax(self.C @ x + self.d)
        W = np.diag(p) - np.outer(p, p)
        return self.C.T @ W @ self.C + self.gamma * np.eye(self.n)

    def with_saddle(self, max_iter=100):
        """Newton's method on the KKT system, to ``kkt_tol``."""
        n, m = self.n, self.m
        x = np.linalg.lstsq(self.A, self.b, rcond=None)[0]
        lam = np.zeros(m)
        for _ in range(max_iter):
            r1 = self._grad(x) + self.A.T @ lam
            r2 = self.A @ x - self.b
            if max(np.linalg.norm(r1), np.linalg.norm(r2)) <= 0.1 * self.kkt_tol:
                break
            K = np.block([[self._hess(x), self.A.T], [self.A, np.zeros((m, m))]])
            step = np.linalg.solve(K, -np.concatenate([r1, r2]))
            x = x + step[:n]
            lam = lam + step[n:]
        return LogSumExpProblem(self.C, self.d, self.A, self.b, gamma=self.gamma,
                                saddle_point=(x, lam), name=self.name, kkt_tol=self.kkt_tol)

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind, "C": self.C.tolist(), "d": self.d.tolist(),
             "gamma": self.gamma, "A": self.A.tolist(), "b": self.b.tolist()}
        if self.saddle_point is not None:
            d["saddle_point"] = {"x": self.saddle_point[0].tolist(),
                                 "lam": self.saddle_point[1].tolist()}
        return d


def kkt_residuals(p: Problem, x, lam):
    """Norms of ``grad f(x) + A'lam`` and ``Ax - b``."""
    return (float(np.linalg.norm(p.gradient(x) + p.A.T @ lam)),
            float(np.linalg.norm(p.A @ x - p.b)))


def lagrangian(p: Problem, x, lam) -> float:
    x = p.check_primal(x)
    lam = p.check_dual(lam)
    return float(p.objective(x) + lam @ (p.A @ x - p.b))


def augmented_lagrangian(p: Problem, x, lam, sigma: float) -> float:
    if sigma < 0:
        raise RejectedInputError(f"penalty sigma must be >= 0, got {sigma}")
    x = p.check_primal(x)
    r = p.A @ x - p.b
    return lagrangian(p, x, lam) + 0.5 * sigma * float(r @ r)


def residuals(p: Problem, x, lam_ref, num_tol=1e-10):
    """Return ``(L(x, lam_ref) - L(x*, lam_ref), f(x) - f(x*), ||Ax - b||)``.

    When ``lam_ref`` is the stored multiplier the Lagrangian gap is a saddle gap
    and must be nonnegative up to ``num_tol`` (scaled by ``max(1, |f*|)``).
    """
    x_star, lam_star = p._require_saddle()
    x = p.check_primal(x)
    lam_ref = p.check_dual(lam_ref)
    f_x = float(p.objective(x))
    f_star = float(p.objective(x_star))
    r = p.A @ x - p.b
    lag_gap = (f_x - f_star) + float(lam_ref @ r) - float(lam_ref @ (p.A @ x_star - p.b))
    if np.array_equal(lam_ref, lam_star):
        floor = -num_tol * max(1.0, abs(f_star), abs(f_x))
        if lag_gap < floor:
            raise DomainError(f"negative saddle gap {lag_gap:.3e}; stored saddle point is wrong")
    return lag_gap, f_x - f_star, float(np.linalg.norm(r))


def kkt_solve(q: QuadraticProblem, tol=KKT_TOL):
    """Exact saddle point of a quadratic problem via the dense KKT system.

    Solves ``[[Q, A'], [A, 0]] [x; lam] = [-c; b]``.
    """
    Q, A = q.Q, q.A
    n, m = A.shape[1], A.shape[0]
    K = np.block([[Q, A.T], [A, np.zeros((m, m))]])
    rank = np.linalg.matrix_rank(K)
    if rank < n + m:
        raise DegenerateProblemError(
            f"KKT matrix of size {n + m} is singular (rank {rank}, defect {n + m - rank})",
            rank_defect=n + m - rank,
        )
    sol = np.linalg.solve(K, np.concatenate([-q.c, q.b]))
    x_star, lam_star = sol[:n], sol[n:]
    # one step of iterative refinement keeps ill-conditioned instances under tol
    res = np.concatenate([-q.c, q.b]) - K @ sol
    if np.linalg.norm(res) > 0:
        sol = sol + np.linalg.solve(K, res)
        x_star, lam_star = sol[:n], sol[n:]
    stat = np.linalg.norm(Q @ x_star + q.c + A.T @ lam_star)
    feas = np.linalg.norm(A @ x_star - q.b)
    if max(stat, feas) > tol:
        raise DegenerateProblemError(
            f"KKT solve residuals {stat:.2e}/{feas:.2e} exceed {tol:.0e}; system ill-conditioned"
        )
    return x_star, lam_star


def ergodic_average(samples: Sequence[tuple]):
    """Running time-average ``xbar(t) = int_{t0}^t x(s) ds / (t - t0)``.

    ``samples`` is a sorted sequence of ``(t, x)``.  The integral is the cumulative
    trapezoid rule on the sample grid, linearly interpolated between nodes.
    """
    if len(samples) < 2:
        raise RejectedInputError("ergodic_average needs at least two samples")
    ts = np.array([s[0] for s in samples], dtype=float)
    xs = np.array([np.atleast_1d(np.asarray(s[1], dtype=float)) for s in samples])
    if np.any(np.diff(ts) <= 0):
        raise RejectedInputError("sample times must be strictly increasing")
    dt = np.diff(ts)[:, None]
    cum = np.vstack([np.zeros((1, xs.shape[1])), np.cumsum(0.5 * dt * (xs[1:] + xs[:-1]), axis=0)])
    t0, t_hi = ts[0], ts[-1]
    scalar = np.ndim(samples[0][1]) == 0

    def xbar(t):
        if t <= t0:
            raise DomainError(f"ergodic average undefined for t={t} <= t0={t0}")
        if t > t_hi:
            raise DomainError(f"t={t} beyond last sample {t_hi}")
        integral = np.array([np.interp(t, ts, cum[:, j]) for j in range(cum.shape[1])])
        out = integral / (t - t0)
        return float(out[0]) if scalar else out

    return xbar


def ergodic_average_on_grid(ts, xs):
    """Vectorized variant: ``xbar`` at every sample time after the first."""
    ts = np.asarray(ts, dtype=float)
    xs = np.asarray(xs, dtype=float)
    dt = np.diff(ts)[:, None]
    cum = np.cumsum(0.5 * dt * (xs[1:] + xs[:-1]), axis=0)
    return cum / (ts[1:] - ts[0])[:, None]


# -- catalog of test instances -------------------------------------------------

def random_quadratic(n=4, m=2, seed=0, rank=None, mu=0.5, L=2.0, a_scale=0.5, name=None,
                     planted=True):
    """Seeded quadratic with spectrum in ``[mu, L]`` (or ``rank`` < n for a
    rank-deficient Q) and ``A`` with singular values in ``[0.6, 1] * a_scale``.

    With ``planted`` the data ``c, b`` are built around a random saddle point with
    unit-scale ``x*`` and ``lam*``; otherwise ``c`` and ``b`` are random and ``lam*``
    scales like ``1 / a_scale``.
    """
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    k = n if rank is None else rank
    eig = np.zeros(n)
    eig[:k] = np.linspace(mu, L, k) if k > 1 else L
    Q = (U * eig) @ U.T
    Q = 0.5 * (Q + Q.T)
    c = rng.standard_normal(n)
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    W, _ = np.linalg.qr(rng.standard_normal((m, m)))
    sv = a_scale * np.linspace(1.0, 0.6, m) if m > 1 else np.array([a_scale])
    A = (W * sv) @ V[:m]
    b = rng.standard_normal(m)
    if planted:
        x_star = rng.standard_normal(n) / np.sqrt(n)
        lam_star = rng.standard_normal(m) / np.sqrt(m)
        c = -(Q @ x_star + A.T @ lam_star)
        b = A @ x_star
    label = name or (f"quadratic_n{n}_m{m}_s{seed}" + ("" if rank is None else f"_rank{rank}"))
    return QuadraticProblem(Q, c, A, b, name=label).with_saddle()


def random_least_squares(n=4, m=2, rows=6, seed=0, a_scale=0.5, name=None):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((rows, n)) / np.sqrt(rows)
    y = rng.standard_normal(rows)
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = a_scale * V[:m]
    b = rng.standard_normal(m)
    return LeastSquaresProblem(M, y, A, b, name=name or f"least_squares_n{n}_m{m}_s{seed}").with_saddle()


def random_logsumexp(n=4, m=2, terms=6, seed=0, gamma=0.1, a_scale=0.5, name=None):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((terms, n)) / np.sqrt(n)
    d = rng.standard_normal(terms)
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = a_scale * V[:m]
    b = rng.standard_normal(m)
    return LogSumExpProblem(C, d, A, b, gamma=gamma,
                            name=name or f"logsumexp_n{n}_m{m}_s{seed}").with_saddle()


def zero_problem(n=2, m=1):
    """``f = 0, A = 0, b = 0``: every point is a saddle point."""
    return Problem(objective=lambda x: 0.0, gradient=lambda x: np.zeros_like(x),
                   A=np.zeros((m, n)), b=np.zeros(m),
                   saddle_point=(np.zeros(n), np.zeros(m)), name="zero")


def problem_from_dict(d: dict) -> Problem:
    """Inverse of ``Problem.to_dict``; also accepts generator specs such as
    ``{"kind": "random_quadratic", "n": 4, "m": 2, "seed": 0}``."""
    kind = d.get("kind")
    try:
        saddle = None
        if "saddle_point" in d and d["saddle_point"] is not None:
            sp = d["saddle_point"]
            saddle = (sp["x"], sp["lam"])
        if kind == "quadratic":
            q = QuadraticProblem(d["Q"], d["c"], d["A"], d["b"], saddle_point=saddle,
                                 name=d.get("name", "quadratic"))
            return q if saddle is not None else q.with_saddle()
        if kind == "least_squares":
            q = LeastSquaresProblem(d["M"], d["y"], d["A"], d["b"], saddle_point=saddle,
                                    name=d.get("name", "least_squares"))
            return q if saddle is not None else q.with_saddle()
        if kind == "logsumexp":
            q = LogSumExpProblem(d["C"], d["d"], d["A"], d["b"], gamma=d.get("gamma", 0.1),
                                 saddle_point=saddle, name=d.get("name", "logsumexp"))
            return q if saddle is not None else q.with_saddle()
        gen_args = {k: v for k, v in d.items() if k != "kind"}
        if kind == "random_quadratic":
            return random_quadratic(**gen_args)
        if kind == "random_least_squares":
            return random_least_squares(**gen_args)
        if kind == "random_logsumexp":
            return random_logsumexp(**gen_args)
        if kind == "zero":
            return zero_problem(**gen_args)
    except KeyError as exc:
        raise ConfigurationError(f"problem of kind {kind!r} missing field {exc}",
                                 field=f"problem.{exc.args[0]}") from exc
    except TypeError as exc:
        raise ConfigurationError(f"bad problem parameters: {exc}", field="problem") from exc
    raise ConfigurationError(f"unknown problem kind {kind!r}", field="problem.kind")
