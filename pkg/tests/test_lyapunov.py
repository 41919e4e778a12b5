import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pdflow.dynamics import PhaseState, SamplePlan, Trajectory, default_init, integrate
from pdflow.errors import ConfigurationError, RejectedInputError, ResolutionError
from pdflow.lyapunov import (EnergyConfig, appendix_configurations, check_appendix_conditions,
                             check_decrease_inequality, chain_rule_energy_derivative,
                             decompose_energy_derivative, energy, energy_eps_trace,
                             theta_eta_for_regime)
from pdflow.problem import QuadraticProblem, random_quadratic
from pdflow.schedule import (R0, R11_LARGE, R11_SMALL, RMID, ConstantScaling, PowerDecayPerturbation,
                             Regime, Schedule, log_grid)

from conftest import random_state

R11L = Schedule(alpha=4.0, r=1.0, delta=0.5, s=1.0)


def oracle_energy(t, x, lam, vx, vlam, theta, eta, rho, beta, sigma, p, x_star, anchor):
    """Independent transcription of the energy used as a cross-check."""
    def lag(z):
        r = p.A @ z - p.b
        return p.objective(z) + anchor @ r + 0.5 * sigma * r @ r

    e0 = t ** (2 * rho) * beta * (lag(x) - lag(x_star))
    px = theta * (x - x_star) + t ** rho * vx
    pl = theta * (lam - anchor) + t ** rho * vlam
    e1 = 0.5 * px @ px + 0.5 * eta * (x - x_star) @ (x - x_star)
    e2 = 0.5 * pl @ pl + 0.5 * eta * (lam - anchor) @ (lam - anchor)
    return e0, e1, e2


def configs_for(p):
    return [(lab, sch, theta_eta_for_regime(sch, reg, rho, p=p))
            for lab, sch, reg, rho in appendix_configurations()]


# -- closed-form coefficients --------------------------------------------------------

def test_r11_large_coefficients():
    cfg = theta_eta_for_regime(R11L, Regime(R11_LARGE))
    assert cfg.rho == 1.0
    assert cfg.theta(7.0) == pytest.approx(2.0) and cfg.eta(7.0) == pytest.approx(2.0)
    assert cfg.dtheta(7.0) == 0.0 and cfg.deta(7.0) == 0.0


def test_r11_small_coefficients():
    sch = Schedule(alpha=3.0, r=1.0, delta=0.5, s=1.0)
    cfg = theta_eta_for_regime(sch, Regime(R11_SMALL, tau=0.0), rho=1.0)
    for t in (1.0, 3.0, 50.0):
        assert cfg.theta(t) == pytest.approx(2.0) and cfg.eta(t) == pytest.approx(0.0, abs=1e-15)


def test_r0_s0_eta_satisfies_cross_term_condition():
    sch = Schedule(alpha=3.0, r=0.0, delta=0.5, s=0.0)
    cfg = theta_eta_for_regime(sch, Regime(R0))
    assert cfg.eta(2.0) == pytest.approx((3.0 * 0.5 - 1) / 0.25)
    assert check_appendix_conditions(cfg, sch).verdict == "pass"
    halved = EnergyConfig(cfg.rho, cfg.theta, cfg.dtheta, lambda t: cfg.eta(t) / 2,
                          lambda t: cfg.deta(t) / 2)
    rep = check_appendix_conditions(halved, sch)
    assert rep.verdict == "fail"
    assert rep.details["conditions"]["cross_term_cancellation"]["verdict"] == "fail"


def test_rmid_coefficients_formula():
    sch = Schedule(alpha=3.0, r=0.5, delta=0.5, s=1.0)
    cfg = theta_eta_for_regime(sch, Regime(RMID, tau=1.4))
    assert cfg.rho == pytest.approx(0.7)
    t = 4.0
    assert cfg.theta(t) == pytest.approx(2 * t ** (0.7 - 1.0))


@pytest.mark.parametrize("regime,rho", [(Regime(R11_SMALL, tau=0.5), 0.9),
                                        (Regime(R11_SMALL, tau=0.5), -0.1)])
def test_rho_outside_range_is_rejected(regime, rho):
    sch = Schedule(alpha=2.5, r=1.0, delta=0.5, s=1.0)
    with pytest.raises(ConfigurationError) as err:
        theta_eta_for_regime(sch, regime, rho=rho)
    assert err.value.field == "regime.rho"


def test_rho_pinned_regimes_reject_other_values():
    with pytest.raises(ConfigurationError):
        theta_eta_for_regime(Schedule(alpha=3.0, r=0.0, delta=0.5, s=0.5), Regime(R0), rho=0.5)
    with pytest.raises(ConfigurationError):
        theta_eta_for_regime(R11L, Regime(R11_LARGE), rho=0.5)


def test_regime_must_match_schedule():
    with pytest.raises(ConfigurationError):
        theta_eta_for_regime(R11L, Regime(R0))


@pytest.mark.parametrize("rho", [0.0, 0.25, 0.5])
def test_r11_small_any_admissible_rho_passes_conditions(rho):
    sch = Schedule(alpha=2.5, r=1.0, delta=3.0 / 5.5, s=1.0)
    cfg = theta_eta_for_regime(sch, Regime(R11_SMALL, tau=0.5), rho=rho)
    assert check_appendix_conditions(cfg, sch).verdict == "pass"


# -- condition certificates ------------------------------------------------------------

@pytest.mark.parametrize("lab,sch,reg,rho", appendix_configurations(),
                         ids=[c[0] for c in appendix_configurations()])
def test_reference_configurations_pass(lab, sch, reg, rho):
    rep = check_appendix_conditions(theta_eta_for_regime(sch, reg, rho), sch)
    assert rep.verdict == "pass"


def test_r11_large_holds_on_whole_grid():
    grid = log_grid(1.0, 1e6, 800)
    rep = check_appendix_conditions(theta_eta_for_regime(R11L, Regime(R11_LARGE)), R11L, grid)
    assert rep.verdict == "pass" and rep.t1 == 1.0 and rep.first_violation is None


def test_r0_half_power_localizes_t1():
    # eta(t) = (alpha - t**-s / delta) / delta is nonnegative exactly for t >= (1 / (alpha delta))**(1/s)
    sch = Schedule(alpha=1.0, r=0.0, delta=0.25, s=0.5)
    grid = log_grid(1.0, 1e3, 512)
    rep = check_appendix_conditions(theta_eta_for_regime(sch, Regime(R0)), sch, grid)
    t1 = rep.details["conditions"]["nonnegativity"]["t1"]
    i = np.searchsorted(grid, 16.0)
    assert rep.verdict == "pass" and grid[i - 1] < 16.0 <= t1 <= grid[i + 1]
    assert rep.details["eventually"] and rep.first_violation == 1.0


def test_scaled_theta_breaks_multiplier_cancellation():
    cfg = theta_eta_for_regime(R11L, Regime(R11_LARGE)).scaled_theta(1.1)
    rep = check_appendix_conditions(cfg, R11L)
    cond = rep.details["conditions"]["multiplier_cancellation"]
    assert rep.verdict == "fail" and cond["t1"] is None and cond["first_violation"] == 1.0


# -- energy evaluation -------------------------------------------------------------------

def test_energy_at_saddle_is_zero(quad):
    for lab, sch, cfg in configs_for(quad):
        e = energy(PhaseState.at_rest(20.0, quad.x_star, quad.lam_star), cfg, quad, sch)
        assert e == pytest.approx((0, 0, 0, 0), abs=1e-12)


def test_energy_collapses_with_zero_coefficients(quad):
    z = lambda t: 0.0 * np.asarray(t, dtype=float)
    cfg = EnergyConfig(0.0, z, z, z, z, quad.saddle_point, sigma=1.0)
    s = random_state(np.random.default_rng(0), 4, 2, t=3.0)
    sch = Schedule(alpha=3.0, r=0.0, delta=0.5, s=0.0)
    r = quad.A @ s.x - quad.b
    lag = quad.objective(s.x) + quad.lam_star @ r + 0.5 * r @ r - quad.objective(quad.x_star)
    want = lag + 0.5 * s.vx @ s.vx + 0.5 * s.vlam @ s.vlam
    assert energy(s, cfg, quad, sch)[3] == pytest.approx(want, rel=1e-12)


def test_energy_one_dimensional_hand_value(tiny):
    sch = Schedule(alpha=4.0, r=1.0, delta=0.5, s=1.0, sigma=0.0)
    cfg = theta_eta_for_regime(sch, Regime(R11_LARGE), p=tiny)
    assert cfg.sigma == 0.0
    e = energy(PhaseState(1.0, [1.0], [0.0], [0.0], [0.0]), cfg, tiny, sch)
    assert e == pytest.approx((0.5, 3.0, 0.0, 3.5))
    o = oracle_energy(1.0, np.ones(1), np.zeros(1), np.zeros(1), np.zeros(1), 2.0, 2.0, 1.0, 1.0,
                      0.0, tiny, np.zeros(1), np.zeros(1))
    assert e[:3] == pytest.approx(o)


@given(seed=st.integers(0, 2**31 - 1), which=st.integers(0, 6), anchored=st.booleans())
def test_energy_matches_oracle(quad, seed, which, anchored):
    lab, sch, cfg = configs_for(quad)[which]
    rng = np.random.default_rng(seed)
    if not anchored:
        cfg = cfg.with_anchor(rng.standard_normal(2))
    s = random_state(rng, 4, 2)
    o = oracle_energy(s.t, s.x, s.lam, s.vx, s.vlam, float(cfg.theta(s.t)), float(cfg.eta(s.t)),
                      cfg.rho, float(sch.beta(s.t)), cfg.sigma, quad, quad.x_star, cfg.anchor)
    e = energy(s, cfg, quad, sch)
    assert np.allclose(e[:3], o, rtol=1e-10, atol=1e-10)


@given(seed=st.integers(0, 2**31 - 1), which=st.integers(0, 6))
def test_energy_components_nonnegative_with_saddle_anchor(quad, seed, which):
    lab, sch, cfg = configs_for(quad)[which]
    t1 = check_appendix_conditions(cfg, sch).t1
    rng = np.random.default_rng(seed)
    s = random_state(rng, 4, 2, t=float(t1 * rng.uniform(1.0, 50.0)))
    assert min(energy(s, cfg, quad, sch)[:3]) >= -1e-10


def test_energy_rejects_bad_dimensions(quad):
    cfg = theta_eta_for_regime(R11L, Regime(R11_LARGE), p=quad)
    with pytest.raises(RejectedInputError):
        energy(PhaseState.at_rest(1.0, np.zeros(3), np.zeros(2)), cfg, quad, R11L)


def test_missing_saddle_is_a_configuration_error():
    p = QuadraticProblem(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [1.0])
    cfg = theta_eta_for_regime(R11L, Regime(R11_LARGE), p=p)
    with pytest.raises(ConfigurationError):
        energy(PhaseState.at_rest(1.0, [0.0, 0.0], [0.0]), cfg, p, R11L)


# -- traces and the decrease certificate -------------------------------------------------

def perturbed_run(p, t_end=60.0, count=600, eps=0.1):
    sch = Schedule(alpha=4.0, r=1.0, delta=0.5, s=1.0,
                   perturbation=PowerDecayPerturbation(eps, 3.0))
    traj = integrate(p, sch, default_init(p, 1.0, seed=1), t_end, 1e-10, 1e-12,
                     SamplePlan(count=count))
    return sch, traj


def test_trace_needs_200_samples(quad):
    sch = R11L
    traj = integrate(quad, sch, default_init(quad), 5.0, sample_plan=SamplePlan(count=199))
    cfg = theta_eta_for_regime(sch, Regime(R11_LARGE), p=quad)
    with pytest.raises(ResolutionError):
        energy_eps_trace(traj, cfg, quad, sch)


def test_trace_without_perturbation_has_no_correction(quad):
    traj = integrate(quad, R11L, default_init(quad), 20.0, sample_plan=SamplePlan(count=300))
    cfg = theta_eta_for_regime(R11L, Regime(R11_LARGE), p=quad)
    tr = energy_eps_trace(traj, cfg, quad, R11L)
    assert np.array_equal(tr.E_eps, tr.E_total) and not tr.perturbation_integral.any()


def test_constant_saddle_trajectory_has_zero_energy_under_perturbation(quad):
    sch = Schedule(alpha=4.0, r=1.0, delta=0.5, s=1.0, perturbation=PowerDecayPerturbation(0.5, 1.0))
    t = np.geomspace(1.0, 100.0, 250)
    ones = np.ones((t.size, 1))
    traj = Trajectory(t, ones * quad.x_star, ones * quad.lam_star, np.zeros((t.size, 4)),
                      np.zeros((t.size, 2)))
    tr = energy_eps_trace(traj, theta_eta_for_regime(sch, Regime(R11_LARGE), p=quad), quad, sch)
    assert np.abs(tr.E_total).max() <= 1e-12 and np.abs(tr.perturbation_integral).max() <= 1e-12


def test_saddle_start_decrease_passes(quad):
    traj = integrate(quad, R11L, PhaseState.at_rest(1.0, quad.x_star, quad.lam_star), 50.0,
                     sample_plan=SamplePlan(count=300))
    cfg = theta_eta_for_regime(R11L, Regime(R11_LARGE), p=quad)
    rep = check_decrease_inequality(energy_eps_trace(traj, cfg, quad, R11L), traj, cfg, R11L)
    assert rep.passed


def test_r11_large_perturbed_run_is_monotone(quad):
    sch, traj = perturbed_run(quad)
    cfg = theta_eta_for_regime(sch, Regime(R11_LARGE), p=quad)
    tr = energy_eps_trace(traj, cfg, quad, sch)
    rep = check_decrease_inequality(tr, traj, cfg, sch)
    assert rep.passed and rep.monotone_ok and rep.t1 == 1.0
    # running maximum after t1 is attained at t1
    slack = 1e-6 * np.abs(tr.E_eps).max()
    assert np.all(tr.E_eps <= tr.E_eps[0] + slack)
    assert np.all(np.minimum.accumulate(tr.E_total) >= -1e-10)


def test_decrease_also_holds_for_other_anchors(quad):
    sch, traj = perturbed_run(quad)
    cfg = theta_eta_for_regime(sch, Regime(R11_LARGE), p=quad, anchor=quad.lam_star + 1.0)
    tr = energy_eps_trace(traj, cfg, quad, sch)
    assert not tr.anchored_at_saddle
    rep = check_decrease_inequality(tr, traj, cfg, sch)
    assert rep.passed and rep.monotone_ok is None


def test_boundedness_transfer(quad):
    sch, traj = perturbed_run(quad)
    cfg = theta_eta_for_regime(sch, Regime(R11_LARGE), p=quad)
    tr = energy_eps_trace(traj, cfg, quad, sch)
    P = cfg.theta(traj.t)[:, None] * (traj.x - quad.x_star) + traj.t[:, None] ** cfg.rho * traj.vx
    eps_norm = traj.t ** cfg.rho * np.array([np.linalg.norm(sch.eps(t, 4)) for t in traj.t])
    budget = math.sqrt(2 * abs(tr.E_eps[0])) + np.trapezoid(eps_norm, traj.t)
    assert np.linalg.norm(P, axis=1).max() <= budget + 1e-6


def test_decrease_rejects_misaligned_grids(quad):
    traj = integrate(quad, R11L, default_init(quad), 20.0, sample_plan=SamplePlan(count=300))
    other = integrate(quad, R11L, default_init(quad), 21.0, sample_plan=SamplePlan(count=300))
    cfg = theta_eta_for_regime(R11L, Regime(R11_LARGE), p=quad)
    with pytest.raises(RejectedInputError):
        check_decrease_inequality(energy_eps_trace(traj, cfg, quad, R11L), other, cfg, R11L)


def exponential_run(p, c, t_end):
    from pdflow.schedule import ExponentialPowerScaling
    sch = Schedule(alpha=3.0, r=0.0, delta=0.5, s=0.0, beta=ExponentialPowerScaling(0.01, c, 1.0, 0.0))
    traj = integrate(p, sch, default_init(p, 1.0, seed=1), t_end, 1e-10, 1e-12,
                     SamplePlan(count=2000))
    cfg = theta_eta_for_regime(sch, Regime(R0), p=p)
    return check_decrease_inequality(energy_eps_trace(traj, cfg, p, sch), traj, cfg, sch)


def test_admissible_exponential_beta_decreases(quad):
    # e^(t / delta) = e^(2t) is the fastest admissible growth when delta = 1/2
    assert exponential_run(quad, 1.0, 8.0).passed


def test_too_fast_beta_breaks_decrease(quad):
    rep = exponential_run(quad, 5.0, 2.5)
    assert not rep.passed and rep.first_violation is not None


# -- derivative decomposition --------------------------------------------------------------

@given(seed=st.integers(0, 2**31 - 1), which=st.integers(0, 6), anchored=st.booleans(),
       perturbed=st.booleans())
def test_decomposition_matches_chain_rule(seed, which, anchored, perturbed):
    p = random_quadratic(4, 2, seed=seed % 20, a_scale=0.7)
    lab, sch, reg, rho = appendix_configurations()[which]
    if perturbed:
        sch = Schedule(sch.alpha, sch.r, sch.delta, sch.s, sch.beta, sch.sigma,
                       PowerDecayPerturbation(0.3, 1.5))
    rng = np.random.default_rng(seed)
    cfg = theta_eta_for_regime(sch, reg, rho, p=p,
                               anchor=None if anchored else rng.standard_normal(2))
    s = random_state(rng, 4, 2)
    terms = decompose_energy_derivative(s, cfg, p, sch)
    direct = chain_rule_energy_derivative(s, cfg, p, sch)
    scale = abs(terms.V1) + abs(terms.V2) + abs(terms.V3) + abs(terms.V4) + abs(terms.V5) + abs(direct)
    assert abs(terms.total - direct) <= 1e-8 * scale
    assert abs(terms.a4_residual) <= 1e-9 * scale
    if check_appendix_conditions(cfg, sch).t1 <= s.t:
        assert abs(terms.V2) <= 1e-10 * (1 + scale)


def test_decomposition_vanishes_at_saddle(quad):
    for lab, sch, cfg in configs_for(quad):
        terms = decompose_energy_derivative(PhaseState.at_rest(5.0, quad.x_star, quad.lam_star),
                                            cfg, quad, sch)
        assert max(abs(v) for v in (terms.V1, terms.V2, terms.V3, terms.V4, terms.V5)) <= 1e-12


def test_decomposition_tracks_broken_cancellation(quad):
    cfg = theta_eta_for_regime(R11L, Regime(R11_LARGE), p=quad).scaled_theta(1.1)
    s = random_state(np.random.default_rng(4), 4, 2, t=3.0)
    terms = decompose_energy_derivative(s, cfg, quad, R11L)
    assert abs(terms.a4_residual) > 1e-3
    assert terms.total == pytest.approx(chain_rule_energy_derivative(s, cfg, quad, R11L), rel=1e-8)


def test_decomposition_matches_finite_difference_along_flow(tiny):
    sch = Schedule(alpha=4.0, r=1.0, delta=0.5, s=1.0, sigma=0.0,
                   perturbation=PowerDecayPerturbation(0.2, 2.0))
    cfg = theta_eta_for_regime(sch, Regime(R11_LARGE), p=tiny)
    tc, h = 1.7, 1e-4
    traj = integrate(tiny, sch, PhaseState(1.0, [0.8], [-0.3], [0.5], [0.1]), 2.0, 1e-12, 1e-14,
                     SamplePlan(times=[1.0, tc - h, tc, tc + h, 2.0]), diagnostics=False)
    states = [PhaseState(traj.t[i], traj.x[i], traj.lam[i], traj.vx[i], traj.vlam[i])
              for i in (1, 2, 3)]
    e_lo, e_hi = (energy(s, cfg, tiny, sch)[3] for s in (states[0], states[2]))
    fd = (e_hi - e_lo) / (2 * h)
    # the perturbation term V5 is part of dE/dt; E_eps subtracts it
    assert decompose_energy_derivative(states[1], cfg, tiny, sch).total == pytest.approx(fd, abs=1e-5)
