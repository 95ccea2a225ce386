import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from heralded_ecs import analytic as an
from heralded_ecs import dynamics as dy
from heralded_ecs import hilbert as h

OMEGA = 2 * math.pi * 1e6


def _beta_quadrature(p):
    """β from its ODE β̇ = iΩβ − iλ, then the three integrals by adaptive quadrature."""
    W = p.Omega

    def beta(tau):
        return p.lambda_e / W * (1 - np.exp(1j * W * tau))

    def integrals(t):
        i_abs = quad(lambda u: abs(beta(u)) ** 2, 0, t, limit=200)[0]
        i_re = quad(lambda u: beta(u).real ** 2, 0, t, limit=200)[0]
        return abs(beta(t)) ** 2, i_abs, i_re

    return beta, integrals


def test_beta_solves_its_ode():
    p = an.AnalyticParams(0.3, 1.0, 0.05)
    beta, _ = _beta_quadrature(p)
    t, eps = 1.7, 1e-6
    deriv = (beta(t + eps) - beta(t - eps)) / (2 * eps)
    assert abs(deriv - (1j * p.Omega * beta(t) - 1j * p.lambda_e)) < 1e-8


@given(
    lam=st.floats(0.01, 0.5),
    gamma=st.floats(0.0, 0.08),
    n_bar=st.floats(0.0, 5.0),
    n0=st.floats(0.0, 5.0),
    gx=st.floats(0.0, 0.1),
    t=st.floats(0.1, 15.0),
)
def test_log_trace_matches_quadrature_oracle(lam, gamma, n_bar, n0, gx, t):
    p = an.AnalyticParams(lam, 1.0, gamma, n_bar, n_initial=n0, gamma_x=gx)
    _, integrals = _beta_quadrature(p)
    b2, i_abs, i_re = integrals(t)
    oracle = -(n0 + 0.5) * b2 - (n_bar + 0.5) * gamma * i_abs - 2 * gx * i_re
    assert abs(an.log_trace_magnitude(t, p) - oracle) < 1e-9 * max(1.0, abs(oracle))


@pytest.mark.parametrize("gamma,n_bar,n0,gx", [(0.0, 0.0, 0.0, 0.0), (0.03, 1.0, 0.5, 0.0), (0.02, 0.5, 0.0, 0.01)])
def test_trace_and_phase_match_single_mode_master_equation(gamma, n_bar, n0, gx):
    T, lam = 30, 0.2
    p = an.AnalyticParams(lam, 1.0, gamma, n_bar, n_initial=n0, gamma_x=gx)
    gen = dy.site_factor_generator(1.0, lam, gamma, n_bar, T, "left")
    if gx:
        x = h.position(T).dense()
        gen = dy.Generator(gen.space, gen.A_left - gx * x @ x, gen.A_right_T.T - gx * x @ x,
                           [(c, L, RT.T) for c, L, RT in gen.sandwiches] + [(2 * gx, x, x)])
    ts = [0.0, 1.0, 2.5, 2 * math.pi, 9.0]
    Xs = dy.integrate(gen, h.thermal_state(n0, T).dense(), ts, dy.IntegratorConfig(), gen.default_dt())
    tr = np.array([np.trace(X) for X in Xs])
    assert np.max(np.abs(np.log(np.abs(tr)) - an.log_trace_magnitude(ts, p))) < 1e-8
    if not gx:
        assert np.max(np.abs(np.angle(tr) - an.phase(ts, p))) < 1e-8


def test_closed_form_equals_zeta_form_for_thermal_start():
    p = an.AnalyticParams(0.1, 1.0, 0.01, 3.0, gamma_q_tilde=0.02)
    t = np.linspace(0, 20, 50)
    C = an.concurrence_analytic(t, p)
    assert np.allclose(C, np.exp(-0.04 * t - 2 * 3.5 * an.zeta_exact(t, p)), atol=1e-13)


def test_zeta_approximation_is_first_order():
    t = np.linspace(0, 4 * math.pi, 200)
    devs = []
    for g in (1e-3, 2e-3):
        p = an.AnalyticParams(0.2, 1.0, g)
        devs.append(np.max(np.abs(an.zeta(t, p) - an.zeta_exact(t, p))))
    assert devs[0] < 1e-3 * 0.1
    # linear in γ: the approximation drops half of the γt term
    assert 1.8 < devs[1] / devs[0] < 2.2


def test_closed_revival_is_unity_without_noise():
    p = an.AnalyticParams(0.3, 1.0)
    assert abs(an.concurrence_analytic(2 * math.pi, p) - 1) < 1e-12
    assert abs(an.concurrence_analytic(2 * math.pi, p, method="approx") - 1) < 1e-12


def test_displacement_trajectory_loop():
    p = an.AnalyticParams(0.1, 1.0)
    assert abs(an.displacement_trajectory(math.pi, p) - (-0.2)) < 1e-12
    assert abs(an.displacement_trajectory(2 * math.pi, p)) < 1e-12


def test_heralded_relaxation_factor():
    p = an.AnalyticParams(0.0, 1.0, gamma_q=0.1)
    t = 3.0
    assert math.isclose(an.heralded_concurrence_analytic(t, p), 1 / (2 - math.exp(-0.3)))
    assert math.isclose(an.concurrence_analytic(t, p), math.exp(-0.3))


def test_bose_einstein_table_one():
    n = an.bose_einstein(OMEGA, 0.025)
    assert 515 < n < 525
    r = an.decoherence_rates(OMEGA, 0.025, 1e5)
    assert math.isclose(r.gamma_m, OMEGA / 1e5)
    assert math.isclose(r.Gamma_dec, (2 * n + 1) * r.gamma_m)
    assert abs(r.Gamma_th / r.Gamma_th_high_T - 1) < 2e-3


@given(st.floats(0, 3))
def test_success_probabilities(alpha):
    pp, pm = an.success_probabilities(alpha)
    assert math.isclose(pp + pm, 1.0)
    assert math.isclose(pp - pm, math.exp(-4 * alpha**2), abs_tol=1e-15)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        an.AnalyticParams(0.1, 0.0)
    with pytest.raises(ValueError):
        an.AnalyticParams(0.1, 1.0, gamma_m=-1)
    with pytest.warns(UserWarning):
        an.AnalyticParams(0.1, 1.0, gamma_m=0.5)
    with pytest.raises(ValueError):
        an.concurrence_analytic(1.0, an.AnalyticParams(0.1, 1.0), method="nope")


def test_curve_container():
    c = an.curve("concurrence", [0.0, 1.0, 2.0], an.AnalyticParams(0.1, 1.0))
    assert c.values.shape == (3,)
    with pytest.raises(ValueError):
        an.AnalyticCurve(np.array([1.0, 0.5]), np.zeros(2), "zeta")
