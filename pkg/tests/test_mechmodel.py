import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iiorbit.errors import DomainError
from iiorbit.mechmodel import (
    FURUTA_PARAMS,
    check_assumptions,
    default_furuta,
    default_pendubot,
    eval_el_dynamics,
    furuta_system,
    pendubot_system,
    system_from_expressions,
    wrap_angle,
)
from oracles import MatrixModel, furuta_matrices, pendubot_matrices

PROFILE_NAMES = ("m_uu", "m_au", "m_aa", "dm_uu", "dm_au", "dm_aa", "c_a", "c_bar_u", "c_p", "c_s", "c_r")


def test_furuta_derived_constants(furuta_sys):
    assert furuta_sys.params["a1"] == pytest.approx(1.8616, abs=1e-4)
    assert furuta_sys.params["a3"] / furuta_sys.params["J"] == pytest.approx(77.71, abs=1e-2)
    x1 = np.linspace(-3, 3, 11)
    assert np.allclose(furuta_sys.c_a(x1), 0.0)
    assert np.allclose(furuta_sys.c_bar_u(x1), -0.0012 * np.sin(x1) * np.cos(x1))
    assert np.all(furuta_sys.grad_a_V(x1, 0.3 * x1) == 0.0)


def test_pendubot_constants(pendubot_sys):
    p = pendubot_sys.params
    assert p["c2"] == pytest.approx(0.00234, rel=1e-3)
    assert p["c3"] == pytest.approx(0.00156, rel=1e-3)
    assert p["c5"] == pytest.approx(0.0078, rel=1e-3)
    assert p["c4"] == pytest.approx(0.0364, rel=1e-3)
    assert p["c1"] == pytest.approx(0.34346, rel=1e-4)
    assert pendubot_sys.m_au(np.pi / 2) == pytest.approx(p["c2"], abs=1e-15)


@pytest.mark.parametrize("make", [default_furuta, default_pendubot])
def test_positive_definite_on_grid(make):
    sys = make()
    x1 = np.linspace(-np.pi, np.pi, 1000)
    assert np.all(sys.det_mass(x1) > 0)
    assert np.all(sys.m_uu(x1) > 0)


@settings(max_examples=30, deadline=None)
@given(
    m=st.floats(0.01, 1.0), l=st.floats(0.05, 0.5), r=st.floats(0.05, 0.5),
    J=st.floats(1e-4, 1e-2), J_a=st.floats(1e-4, 1e-2),
)
def test_furuta_positive_definite_any_params(m, l, r, J, J_a):
    # det M = J^2 (a2 + sin^2 - a1^2 cos^2); PD is not guaranteed for every parameter set
    sys = furuta_system(m, l, r, J, J_a)
    x1 = np.linspace(-np.pi, np.pi, 1000)
    a1, a2 = sys.params["a1"], sys.params["a2"]
    expected = J**2 * (a2 + np.sin(x1) ** 2 - a1**2 * np.cos(x1) ** 2)
    assert np.allclose(sys.det_mass(x1), expected, rtol=1e-10, atol=1e-20)


@settings(max_examples=30, deadline=None)
@given(
    m1=st.floats(0.05, 1.0), m2=st.floats(0.01, 1.0), l1=st.floats(0.05, 0.5),
    lc1=st.floats(0.01, 0.3), lc2=st.floats(0.01, 0.3), I1=st.floats(1e-4, 0.5), I2=st.floats(1e-4, 0.05),
)
def test_pendubot_positive_definite_any_params(m1, m2, l1, lc1, lc2, I1, I2):
    sys = pendubot_system(m1, m2, l1, 0.3, lc1, lc2, I1, I2)
    x1 = np.linspace(-np.pi, np.pi, 1000)
    assert np.all(sys.det_mass(x1) > 0)
    assert np.all(sys.m_uu(x1) > 0)


def test_rejects_non_positive_parameters():
    with pytest.raises(DomainError):
        furuta_system(**{**FURUTA_PARAMS, "J": 0.0})
    with pytest.raises(DomainError):
        pendubot_system(0.2, -0.052, 0.2, 0.28, 0.13, 0.15, 0.338, 1.17e-3)


def test_rejects_non_finite_state(furuta_sys):
    with pytest.raises(DomainError):
        eval_el_dynamics(furuta_sys, [0.0, np.nan, 0.0, 0.0], 0.0)
    with pytest.raises(DomainError):
        eval_el_dynamics(furuta_sys, [0.0, 0.0, 0.0, 0.0], np.inf)


def test_equilibria(furuta_sys, pendubot_sys):
    assert np.all(eval_el_dynamics(furuta_sys, np.zeros(4), 0.0) == 0.0)
    assert np.allclose(eval_el_dynamics(pendubot_sys, [np.pi, np.pi, 0, 0], 0.0), 0.0, atol=1e-12)


@pytest.mark.parametrize("name", ["furuta", "pendubot"])
def test_el_dynamics_match_matrix_oracle(name):
    sys = default_furuta() if name == "furuta" else default_pendubot()
    oracle = MatrixModel(*(furuta_matrices() if name == "furuta" else pendubot_matrices()))
    rng = np.random.default_rng(7)
    xs = np.column_stack([rng.uniform(-np.pi, np.pi, (10_000, 2)), rng.uniform(-5, 5, (10_000, 2))])
    taus = rng.uniform(-0.5, 0.5, 10_000)
    worst = 0.0
    for x, tau in zip(xs, taus):
        a = eval_el_dynamics(sys, x, tau)
        b = oracle.field(x, tau)
        worst = max(worst, np.max(np.abs(a - b)) / (1.0 + np.max(np.abs(b))))
    assert worst < 1e-10


@pytest.mark.parametrize("make", [default_furuta, default_pendubot])
def test_profiles_are_2pi_periodic(make):
    sys = make()
    x1 = np.linspace(-4, 4, 101)
    for name in PROFILE_NAMES:
        f = getattr(sys, name)
        assert np.allclose(f(x1), f(x1 + 2 * np.pi), atol=1e-12), name
    x2 = np.linspace(-2, 2, 101)
    assert np.allclose(sys.V(x1, x2), sys.V(x1 + 2 * np.pi, x2), atol=1e-12)


@pytest.mark.parametrize("make", [default_furuta, default_pendubot])
def test_derivative_profiles_against_finite_differences(make):
    sys = make()
    h = 1e-6
    x1 = np.linspace(-3, 3, 61)
    x2 = np.linspace(-2.5, 2.5, 61)
    for f, df in (("m_uu", "dm_uu"), ("m_au", "dm_au"), ("m_aa", "dm_aa")):
        fd = (getattr(sys, f)(x1 + h) - getattr(sys, f)(x1 - h)) / (2 * h)
        assert np.allclose(fd, getattr(sys, df)(x1), atol=1e-8)
    fd_u = (sys.V(x1 + h, x2) - sys.V(x1 - h, x2)) / (2 * h)
    fd_a = (sys.V(x1, x2 + h) - sys.V(x1, x2 - h)) / (2 * h)
    fd_ua = (sys.grad_u_V(x1, x2 + h) - sys.grad_u_V(x1, x2 - h)) / (2 * h)
    assert np.allclose(fd_u, sys.grad_u_V(x1, x2), atol=1e-6)
    assert np.allclose(fd_a, sys.grad_a_V(x1, x2), atol=1e-6)
    assert np.allclose(fd_ua, sys.grad_ua_V(x1, x2), atol=1e-6)


def test_pendubot_grad_a_V_closed_form(pendubot_sys):
    p = pendubot_sys.params
    x1, x2 = np.meshgrid(np.linspace(-3, 3, 25), np.linspace(-3, 3, 25))
    expected = p["c4"] * 9.81 * np.sin(x2) + p["c5"] * 9.81 * np.sin(x2 + x1)
    assert np.allclose(pendubot_sys.grad_a_V(x1, x2), expected, atol=1e-14)


def test_christoffel_coefficients_against_oracle(furuta_sys, pendubot_sys):
    # C(q, qd) qd from the oracle, split by velocity monomials
    for sys, mats in ((furuta_sys, furuta_matrices), (pendubot_sys, pendubot_matrices)):
        oracle = MatrixModel(*mats())
        for x1 in np.linspace(-2.5, 2.5, 9):
            cu_aa, ca_aa = np.ravel(oracle.Cqd(x1, 0.0, 0.0, 1.0))
            cu_uu, ca_uu = np.ravel(oracle.Cqd(x1, 0.0, 1.0, 0.0))
            mixed = np.ravel(oracle.Cqd(x1, 0.0, 1.0, 1.0)) - [cu_aa + cu_uu, ca_aa + ca_uu]
            assert sys.c_bar_u(x1) == pytest.approx(cu_aa, abs=1e-14)
            assert sys.c_a(x1) == pytest.approx(cu_uu, abs=1e-14)
            assert sys.c_r(x1) == pytest.approx(ca_uu, abs=1e-14)
            assert sys.c_s(x1) == pytest.approx(ca_aa, abs=1e-14)
            assert sys.c_p(x1) == pytest.approx(mixed[1], abs=1e-14)
            assert mixed[0] == pytest.approx(0.0, abs=1e-14)


def test_assumptions_furuta():
    sys = default_furuta()
    ok = check_assumptions(sys, np.linspace(-1.4, 1.4, 1001))
    assert ok.passed and ok.m_au_ok
    bad = check_assumptions(sys, np.linspace(-np.pi, np.pi, 1001))
    assert not bad.passed and not bad.m_au_ok
    assert abs(abs(bad.argmin_m_au) - np.pi / 2) < 1e-9
    assert any("m_au" in v for v in bad.violations)


def test_assumptions_pendubot(pendubot_sys):
    rep = check_assumptions(pendubot_sys, np.linspace(-np.pi, np.pi, 1001))
    p = pendubot_sys.params
    assert rep.passed
    assert rep.min_abs_m_au >= p["c2"] - p["c3"] - 1e-15
    assert rep.pd_margin > 0


def test_c_bar_u_only_fails_when_required(pendubot_sys):
    grid = np.linspace(-1, 1, 101)
    assert check_assumptions(pendubot_sys, grid).passed
    assert not check_assumptions(pendubot_sys, grid, require_c_bar_u=True).passed


def test_wrap_angle():
    assert wrap_angle(np.pi) == pytest.approx(np.pi)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)


def test_expression_system_reproduces_pendubot(pendubot_sys):
    p = pendubot_sys.params
    params = {k: p[k] for k in ("c1", "c2", "c3", "c4", "c5")}
    params["g"] = 9.81
    sys = system_from_expressions(
        "pendubot-expr",
        m_uu="c2",
        m_au="c2 + c3*cos(x1)",
        m_aa="c1 + c2 + 2*c3*cos(x1)",
        V="-c4*g*cos(x2) - c5*g*cos(x2 + x1)",
        params=params,
    )
    x1 = np.linspace(-3, 3, 31)
    x2 = np.linspace(-2, 2, 31)
    for name in PROFILE_NAMES:
        assert np.allclose(getattr(sys, name)(x1), getattr(pendubot_sys, name)(x1), atol=1e-14), name
    for name in ("V", "grad_u_V", "grad_a_V", "grad_ua_V"):
        assert np.allclose(getattr(sys, name)(x1, x2), getattr(pendubot_sys, name)(x1, x2), atol=1e-14), name
