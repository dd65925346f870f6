import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowssep.paths import ControlPath, DensityProfile, MassPath
from slowssep.ratefunc import (anti_relaxation_control, appendix_cost,
                               closed_form_H, entropy_S, eval_A_G,
                               eval_I_closed, eval_J, quasi_potential_V,
                               profile_potential_W, relaxation_path,
                               reversed_relaxation_path, sup_I_numeric)


def test_A_G_pointwise_value():
    # gamma=1/2, a=1/2, G=log 2: 2*(1/4)*(2-1) + 2*(1/4)*(1/2-1) = 1/4
    assert eval_A_G(0.5, math.log(2.0), 0.5) == pytest.approx(0.25)
    assert eval_A_G(0.3, 0.0, 0.4) == 0.0


@given(a=st.floats(0.01, 0.99), g=st.floats(-3, 3),
       gamma=st.floats(0.05, 0.95))
@settings(max_examples=100, deadline=None)
def test_A_G_dominates_linear_part(a, g, gamma):
    # convexity in G gives A_G(a) >= A_0(a) + dA/dG(0) * G = 2(gamma-a)...
    # equivalently J's integrand is maximized at the closed-form control
    lin = 2.0 * (gamma * (1.0 - a) - (1.0 - gamma) * a) * g
    assert eval_A_G(a, g, gamma) >= lin - 1e-12


def test_J_constant_path_constant_control():
    # a == 1/2, G == log 2, gamma = 1/2, T = 1:
    # boundary and dG terms vanish; J = -int A_G = -1/4
    a = MassPath(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    G = ControlPath.constant(math.log(2.0), 1.0)
    rep = eval_J(a, G, 0.5)
    assert rep.value == pytest.approx(-0.25, abs=1e-12)
    assert rep.error_estimate < 1e-12


def test_J_requires_matching_window():
    a = MassPath(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        eval_J(a, ControlPath.zero(2.0), 0.5)


def test_entropy_values_and_edges():
    assert entropy_S(0.5, 0.5) == 0.0
    assert entropy_S(0.75, 0.5) == pytest.approx(0.13081203594113694)
    assert entropy_S(1.0, 0.5) == pytest.approx(math.log(2.0))
    assert entropy_S(0.0, 0.5) == pytest.approx(math.log(2.0))
    with pytest.raises(ValueError):
        entropy_S(1.2, 0.5)


@given(m1=st.floats(0.0, 1.0), m2=st.floats(0.0, 1.0),
       lam=st.floats(0.0, 1.0), gamma=st.floats(0.05, 0.95))
@settings(max_examples=100, deadline=None)
def test_entropy_convex_nonnegative(m1, m2, lam, gamma):
    s12 = entropy_S(lam * m1 + (1 - lam) * m2, gamma)
    assert s12 <= lam * entropy_S(m1, gamma) \
        + (1 - lam) * entropy_S(m2, gamma) + 1e-12
    assert s12 >= 0.0
    assert entropy_S(gamma, gamma) == pytest.approx(0.0, abs=1e-15)


def test_relaxation_is_free_and_unforced():
    a = relaxation_path(0.9, 0.4, np.linspace(0.0, 4.0, 2001))
    rep = eval_I_closed(a, 0.4)
    assert abs(rep.value) < 1e-12
    assert np.max(np.abs(rep.control.values)) < 1e-12
    num = sup_I_numeric(a, 0.4)
    assert abs(num.value) < 1e-8       # quadrature floor of the node scheme
    assert np.max(np.abs(num.control.values)) < 1e-6


def test_holding_cost_of_constant_path():
    # holding a == m costs T * sup_g(-A_g(m)) with explicit optimizer
    m, gamma, T = 0.9, 0.5, 1.0
    a = MassPath(np.linspace(0.0, T, 101), np.full(101, m))
    expected = T * 2.0 * (math.sqrt(gamma * (1 - m))
                          - math.sqrt((1 - gamma) * m)) ** 2
    assert eval_I_closed(a, gamma).value == pytest.approx(expected, abs=1e-10)
    assert sup_I_numeric(a, gamma).value == pytest.approx(expected, abs=1e-8)


def test_numeric_sup_matches_closed_form():
    t = np.linspace(0.0, 2.0, 801)
    a = MassPath(t, 0.5 + 0.25 * np.sin(1.3 * t) * (1 - np.exp(-3 * t)))
    closed = eval_I_closed(a, 0.5).value
    numeric = sup_I_numeric(a, 0.5).value
    assert numeric == pytest.approx(closed, rel=1e-6)


def test_numeric_sup_coarse_basis_agrees():
    t = np.linspace(0.0, 2.0, 801)
    a = MassPath(t, 0.5 + 0.2 * np.sin(t))
    full = sup_I_numeric(a, 0.5).value
    coarse = sup_I_numeric(a, 0.5, basis_size=200).value
    assert coarse == pytest.approx(full, rel=1e-4)


def test_initial_mass_mismatch_is_infinite():
    a = MassPath(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    rep = sup_I_numeric(a, 0.5, initial_mass=0.3)
    assert math.isinf(rep.value)


def test_boundary_touching_path_can_be_infinite():
    # sitting at a == 1 cannot be sustained: removal pressure is escaped
    # only by G -> +inf, and the objective grows without bound
    a = MassPath(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    rep = sup_I_numeric(a, 0.5)
    assert math.isinf(rep.value)


def test_closed_form_H_rejects_boundary_paths():
    a = MassPath(np.array([0.0, 1.0]), np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        closed_form_H(a, 0.5)


def test_anti_relaxation_control_has_zero_lagrangian():
    path = reversed_relaxation_path(0.75, 0.5, 2.0, n=501)
    H = anti_relaxation_control(path, 0.5)
    lag = eval_A_G(path.values, H.values, 0.5)
    assert np.max(np.abs(lag)) < 1e-13


def test_appendix_cost_matches_quadrature():
    gamma, m, T1 = 0.5, 0.75, 2.0
    a = reversed_relaxation_path(m, gamma, T1, n=8001)
    rep = eval_I_closed(a, gamma)
    assert rep.value == pytest.approx(appendix_cost(m, a(0.0), gamma),
                                      abs=2e-6)


def test_appendix_cost_approaches_entropy():
    gamma, m = 0.4, 0.8
    for T1 in (6.0, 10.0):
        a0 = gamma + (m - gamma) * math.exp(-2.0 * T1)
        assert appendix_cost(m, a0, gamma) == pytest.approx(
            entropy_S(m, gamma), abs=5 * math.exp(-2.0 * T1))


def test_time_additivity_of_the_cost():
    t = np.linspace(0.0, 3.0, 1201)
    a = MassPath(t, 0.45 + 0.2 * np.sin(t) + 0.1 * np.sin(2.7 * t))
    total = eval_I_closed(a, 0.5).value
    for split in (0.75, 1.5, 2.25):
        head = eval_I_closed(a.restricted(0.0, split), 0.5).value
        tail = eval_I_closed(a.restricted(split, 3.0), 0.5).value
        assert abs(total - head - tail) < 1e-9


def test_quasi_potential_formula_and_numeric():
    rep = quasi_potential_V(0.75, 0.5, "numeric_inf", n=2001)
    s = entropy_S(0.75, 0.5)
    assert s <= rep.value <= s * 1.001
    assert quasi_potential_V(0.75, 0.5).value == pytest.approx(s)
    with pytest.raises(ValueError):
        quasi_potential_V(0.75, 0.5, "bogus")


def test_profile_potential_reduces_to_entropy_on_flats():
    rho = DensityProfile.constant(0.8, cells=4)
    assert profile_potential_W(rho, 0.5) == pytest.approx(entropy_S(0.8, 0.5))
    ramp = DensityProfile.from_function(lambda x: x, cells=4000)
    # int_0^1 S(x) dx = log 2 - 1/2 for gamma = 1/2
    assert profile_potential_W(ramp, 0.5) == pytest.approx(
        math.log(2.0) - 0.5, abs=1e-4)
