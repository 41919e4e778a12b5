import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from pdflow.dynamics import (PhaseState, SamplePlan, Trajectory, audit_grid, default_init, integrate,
                             log_indices, make_flat_rhs, oscillation_frequency, rhs,
                             time_rescale_map, verify_rescaling_equivalence)
from pdflow.errors import (ConfigurationError, DomainError, NumericalError, RejectedInputError,
                           StiffnessError)
from pdflow.integrator import dopri5
from pdflow.problem import Problem, QuadraticProblem, random_logsumexp, random_quadratic, zero_problem
from pdflow.schedule import (ConstantScaling, ExponentialPowerScaling, PowerDecayPerturbation,
                             PowerScaling, Schedule)

from conftest import random_state

SCHEDULES = [
    Schedule(alpha=4, r=1, delta=0.5, s=1),
    Schedule(alpha=3, r=0, delta=0.5, s=0, sigma=0.0),
    Schedule(alpha=3, r=0.5, delta=1.0, s=0.5, beta=PowerScaling(1.0, 0.4), sigma=2.0),
    Schedule(alpha=3, r=0, delta=0.5, s=1, beta=PowerScaling(2.0, 1.0),
             perturbation=PowerDecayPerturbation(0.1, 3.0)),
    Schedule(alpha=3, r=0, delta=0.5, s=0, beta=ExponentialPowerScaling(1.0, 2.0, 1.0, 0.0)),
]


def reference_rhs(p, sch):
    """Hand transcription of the flow, kept deliberately separate from the package."""
    n, m = p.n, p.m

    def f(t, y):
        x, lam, vx, vlam = y[:n], y[n:n + m], y[n + m:2 * n + m], y[2 * n + m:]
        a_t = sch.alpha / t ** sch.r
        d_t = sch.delta * t ** sch.s
        b_t = float(sch.beta(t))
        acc_x = -a_t * vx - b_t * (p.gradient(x) + p.A.T @ (lam + d_t * vlam)
                                   + sch.sigma * p.A.T @ (p.A @ x - p.b)) + sch.eps(t, n)
        acc_l = -a_t * vlam + b_t * (p.A @ (x + d_t * vx) - p.b)
        return np.concatenate([vx, vlam, acc_x, acc_l])

    return f


# -- right-hand side -----------------------------------------------------------------------

def test_rhs_vanishes_at_saddle(quad):
    for sch in SCHEDULES[:3] + SCHEDULES[4:]:
        parts = rhs(PhaseState.at_rest(2.0, quad.x_star, quad.lam_star), quad, sch)
        assert all(np.allclose(v, 0, atol=1e-12) for v in parts)


def test_rhs_zero_problem_is_pure_damping():
    p = zero_problem(3, 2)
    sch = Schedule(alpha=3, r=0.5, delta=1.0, s=0.5)
    st_ = PhaseState(4.0, [1.0, 2, 3], [4.0, 5], [1.0, -1, 2], [0.5, 0.5])
    dx, dl, dvx, dvl = rhs(st_, p, sch)
    assert np.allclose(dvx, -1.5 * st_.vx) and np.allclose(dvl, -1.5 * st_.vlam)
    assert np.array_equal(dx, st_.vx) and np.array_equal(dl, st_.vlam)


def test_rhs_one_dimensional_hand_value(tiny):
    sch = Schedule(alpha=4, r=1, delta=0.5, s=1, sigma=0.0)
    dx, dl, dvx, dvl = rhs(PhaseState(1.0, [1.0], [0.0], [0.0], [0.0]), tiny, sch)
    assert dvx == pytest.approx([-1.0]) and dvl == pytest.approx([1.0])


def test_rhs_rejects_time_before_t0(quad):
    with pytest.raises(DomainError):
        rhs(PhaseState.at_rest(0.5, quad.x_star, quad.lam_star), quad, SCHEDULES[0])


def test_rhs_flags_nonfinite_gradient():
    p = Problem(lambda x: 0.0, lambda x: np.full_like(x, np.nan), np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(NumericalError) as err:
        rhs(PhaseState.at_rest(1.0, [3.0, 4.0], [0.0]), p, SCHEDULES[1])
    assert err.value.norm_x == pytest.approx(5.0) and err.value.t == 1.0


@pytest.mark.parametrize("sch", SCHEDULES, ids=range(len(SCHEDULES)))
@given(seed=st.integers(0, 2**31 - 1))
def test_affine_fast_path_matches_generic_and_reference(sch, seed):
    p = random_quadratic(4, 2, seed=seed % 30)
    rng = np.random.default_rng(seed)
    fast = make_flat_rhs(p, sch)
    p.force_generic_rhs = True
    generic = make_flat_rhs(p, sch)
    ref = reference_rhs(p, sch)
    for _ in range(3):
        s = random_state(rng, 4, 2, t=float(rng.uniform(1, 5)))
        y = s.flat()
        scale = np.abs(ref(s.t, y)).max() + 1.0
        assert np.allclose(fast(s.t, y), ref(s.t, y), rtol=0, atol=1e-12 * scale)
        assert np.allclose(generic(s.t, y), ref(s.t, y), rtol=0, atol=1e-12 * scale)


@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_rhs_affine_in_velocities(seed, a, b):
    p = random_logsumexp(4, 2, seed=seed % 10)
    sch = SCHEDULES[2]
    rng = np.random.default_rng(seed)
    f = make_flat_rhs(p, sch)
    t, x, lam = 2.5, rng.standard_normal(4), rng.standard_normal(2)
    v1, v2 = rng.standard_normal(6), rng.standard_normal(6)

    def at(v):
        return f(t, np.concatenate([x, lam, v]))

    base = at(np.zeros(6))
    lhs = at(a * v1 + b * v2) - base
    rhs_ = a * (at(v1) - base) + b * (at(v2) - base)
    assert np.allclose(lhs, rhs_, rtol=0, atol=1e-12 * (1 + np.abs(lhs).max()))


# -- integrator ----------------------------------------------------------------------------

def test_dopri5_exponential_decay():
    ts = np.linspace(0, 5, 11)
    Y, stats = dopri5(lambda t, y: -y, 0.0, np.array([1.0]), 5.0, ts, rel_tol=1e-10, abs_tol=1e-12)
    assert np.allclose(Y[:, 0], np.exp(-ts), atol=1e-9)
    assert stats.steps_accepted > 0 and stats.max_error_estimate <= 1e-9


def test_dopri5_dense_output_matches_step_endpoints():
    f = lambda t, y: np.array([y[1], -y[0]])
    dense = np.linspace(0, 6, 301)
    Y, _ = dopri5(f, 0.0, np.array([1.0, 0.0]), 6.0, dense, rel_tol=1e-10, abs_tol=1e-12)
    assert np.allclose(Y[:, 0], np.cos(dense), atol=1e-8)


def test_pure_damping_closed_form():
    p = zero_problem(1, 1)
    alpha = 2.0
    sch = Schedule(alpha=alpha, r=0, delta=0.5, s=0)
    traj = integrate(p, sch, PhaseState(1.0, [0.0], [0.0], [1.0], [0.0]), 6.0, 1e-10, 1e-12,
                     SamplePlan(times=[1.0, 3.0, 6.0]))
    assert traj.x[-1, 0] == pytest.approx((1 - math.exp(-alpha * 5)) / alpha, abs=1e-6)


def test_saddle_start_stays_put(quad):
    for sch in SCHEDULES[:3]:
        traj = integrate(quad, sch, PhaseState.at_rest(1.0, quad.x_star, quad.lam_star), 100.0,
                         1e-8, 1e-10)
        y0 = np.concatenate([quad.x_star, quad.lam_star])
        drift = np.abs(np.hstack([traj.x, traj.lam]) - y0).max()
        assert drift <= 10 * 1e-10


def test_harmonic_energy_conserved_over_one_period():
    p = QuadraticProblem([[1.0]], [0.0], np.zeros((1, 1)), [0.0])
    sch = Schedule(alpha=1e-8, r=0, delta=0.5, s=0)
    traj = integrate(p, sch, PhaseState(1.0, [1.0], [0.0], [0.0], [0.0]), 1 + 2 * math.pi, 1e-10,
                     1e-12, SamplePlan(count=200))
    energy = 0.5 * traj.vx[:, 0] ** 2 + 0.5 * traj.x[:, 0] ** 2
    assert np.abs(energy - 0.5).max() <= 1e-4
    ref = integrate(p, sch, PhaseState(1.0, [1.0], [0.0], [0.0], [0.0]), 1 + 2 * math.pi, 1e-12,
                    1e-14, SamplePlan(count=200))
    assert np.abs(ref.x - traj.x).max() <= 1e-8


@pytest.mark.parametrize("sch", SCHEDULES, ids=range(len(SCHEDULES)))
def test_integrate_matches_scipy_reference(quad, sch):
    t_end = 6.0 if isinstance(sch.beta, ExponentialPowerScaling) else 30.0
    init = default_init(quad, 1.0, seed=5)
    ts = np.geomspace(1.0, t_end, 40)
    traj = integrate(quad, sch, init, t_end, 1e-10, 1e-12, SamplePlan(times=ts), diagnostics=False)
    ref = solve_ivp(reference_rhs(quad, sch), (1.0, t_end), init.flat(), method="DOP853",
                    t_eval=ts, rtol=1e-12, atol=1e-14)
    ours = np.hstack([traj.x, traj.lam, traj.vx, traj.vlam])
    assert np.abs(ours - ref.y.T).max() <= 1e-6 * (1 + np.abs(ref.y).max())


def test_halving_tolerances_is_self_consistent(quad):
    sch = SCHEDULES[0]
    init = default_init(quad, 1.0, seed=0)
    coarse = integrate(quad, sch, init, 50.0, 1e-7, 1e-9, SamplePlan(count=50))
    fine = integrate(quad, sch, init, 50.0, 5e-8, 5e-10, SamplePlan(count=50))
    for key in ("lagrangian_gap", "feasibility"):
        diff = abs(coarse.diagnostics[key][-1] - fine.diagnostics[key][-1])
        assert diff <= coarse.integrator_stats.error_budget


def test_integrate_validation(quad):
    sch = SCHEDULES[0]
    init = default_init(quad)
    with pytest.raises(RejectedInputError):
        integrate(quad, sch, init, 1.0)
    with pytest.raises(ConfigurationError):
        integrate(quad, sch, init, 5.0, rel_tol=0.1)
    with pytest.raises(RejectedInputError):
        integrate(quad, sch, PhaseState.at_rest(2.0, init.x, init.lam), 5.0)
    with pytest.raises(RejectedInputError):
        integrate(quad, sch, PhaseState.at_rest(1.0, np.zeros(3), init.lam), 5.0)
    with pytest.raises(RejectedInputError):
        PhaseState(1.0, [np.nan], [0.0], [0.0], [0.0])


def test_finite_time_blowup_reports_last_state():
    p = Problem(lambda x: -0.25 * float(np.sum(x ** 4)), lambda x: -x ** 3, np.zeros((1, 1)),
                np.zeros(1))
    sch = Schedule(alpha=1, r=0, delta=0.5, s=0)
    with pytest.raises(StiffnessError) as err:
        integrate(p, sch, PhaseState.at_rest(1.0, [2.0], [0.0]), 10.0, diagnostics=False)
    last = err.value.last_good
    assert isinstance(last, PhaseState) and 1.0 < last.t < 10.0 and abs(last.x[0]) > 10


def test_sample_plan_validation():
    with pytest.raises(RejectedInputError):
        SamplePlan(times=[1.0, 1.0, 2.0]).grid(1.0, 2.0)
    with pytest.raises(RejectedInputError):
        SamplePlan(times=[0.5, 2.0]).grid(1.0, 2.0)
    ts = SamplePlan(count=7).grid(1.0, 100.0)
    assert ts[0] == 1.0 and ts[-1] == 100.0 and np.allclose(np.diff(np.log(ts)), math.log(100) / 6)


@given(t_end=st.floats(2.0, 60.0), per_period=st.integers(4, 32), idx=st.integers(0, 4))
def test_audit_grid_resolves_oscillations(quad, t_end, per_period, idx):
    sch = SCHEDULES[idx]
    if isinstance(sch.beta, ExponentialPowerScaling):
        t_end = min(t_end, 6.0)
    g = audit_grid(quad, sch, 1.0, t_end, per_period=per_period, count=100)
    assert g[0] == 1.0 and g[-1] == t_end and np.all(np.diff(g) > 0)
    period = 2 * math.pi / oscillation_frequency(quad, sch, g[:-1])
    # differences of large neighbouring times lose about eps * t / h
    assert np.all(np.diff(g) <= period / per_period + 1e-15 * g[1:] * 8)


def test_log_indices_unique_sorted():
    t = np.linspace(1, 1000, 5000)
    idx = log_indices(t, 100)
    assert np.all(np.diff(idx) > 0) and idx[0] == 0 and idx[-1] == 4999


def test_trajectory_csv_layout(tmp_path, quad):
    traj = integrate(quad, SCHEDULES[0], default_init(quad), 5.0, sample_plan=SamplePlan(count=12))
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == (["t"] + [f"x[{i}]" for i in range(4)] + ["lam[0]", "lam[1]"]
                       + [f"vx[{i}]" for i in range(4)] + ["vlam[0]", "vlam[1]"]
                       + ["lagrangian_gap", "objective_gap", "feasibility", "speed"])
    assert len(rows) == 13
    assert float(rows[5][1]) == traj.x[4, 0]  # 17 significant digits round-trip


def test_diagnostics_without_saddle_are_nan():
    p = QuadraticProblem(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [1.0])
    traj = integrate(p, SCHEDULES[0], PhaseState.at_rest(1.0, [0.0, 0.0], [0.0]), 3.0,
                     sample_plan=SamplePlan(count=5))
    assert np.all(np.isnan(traj.diagnostics["objective_gap"]))
    assert np.allclose(traj.diagnostics["feasibility"][0], 1.0)


# -- time rescaling -----------------------------------------------------------------------

def test_time_rescale_exponential():
    r = time_rescale_map("exponential", np.linspace(0.5, 3, 20), alpha=4.0)
    assert r.schedule.alpha == 3.0 and r.schedule.r == 0 and r.schedule.delta == 0.5
    assert r.schedule.beta(1.5) == pytest.approx(math.exp(3.0))
    assert np.allclose(r.upsilon, np.exp(np.linspace(0.5, 3, 20)))


def test_time_rescale_power():
    one = time_rescale_map("power", np.linspace(1, 5, 10), alpha=4.0, kappa=1.0)
    assert one.schedule.alpha == 4.0 and one.schedule.delta == 0.5 and one.schedule.beta(3.0) == 1.0
    assert np.allclose(one.upsilon, np.linspace(1, 5, 10))
    two = time_rescale_map("power", np.linspace(1, 5, 10), alpha=4.0, kappa=2.0)
    assert two.schedule.alpha == 7.0 and two.schedule.r == 1.0
    assert two.schedule.beta(3.0) == pytest.approx(4 * 9.0)
    with pytest.raises(DomainError):
        time_rescale_map("power", np.linspace(1, 5, 10), alpha=4.0, kappa=0.0)
    with pytest.raises(ConfigurationError):
        time_rescale_map("log", np.linspace(1, 5, 10), alpha=4.0)


def test_rescaling_equivalence_and_negative_control(quad):
    span = (0.5, 3.0)
    t_span = tuple(math.exp(v) for v in span)
    good = verify_rescaling_equivalence(quad, 4.0, t_span, span, tol=1e-4)
    bad = verify_rescaling_equivalence(quad, 4.0, t_span, span, tol=1e-4, chain_rule=False)
    assert good.passed and good.max_discrepancy < 1e-6
    assert not bad.passed and bad.max_discrepancy > 1e-4


def test_rescaling_zero_problem_is_exact():
    p = zero_problem(2, 1)
    init = PhaseState.at_rest(math.exp(0.5), [1.0, 2.0], [3.0])
    rep = verify_rescaling_equivalence(p, 4.0, (math.exp(0.5), math.exp(2.0)), (0.5, 2.0), init=init)
    assert rep.max_discrepancy == 0.0


def test_rescaling_preconditions(quad):
    with pytest.raises(ConfigurationError):
        verify_rescaling_equivalence(quad, 3.0, (math.exp(0.5), math.exp(1)), (0.5, 1.0))
    with pytest.raises(RejectedInputError):
        verify_rescaling_equivalence(quad, 4.0, (2.0, 3.0), (0.5, 1.0))
