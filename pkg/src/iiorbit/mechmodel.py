"""Two-DOF underactuated Euler-Lagrange systems and the built-in benchmarks.

State convention: ``x = (x1, x2, x3, x4) = (q_u, q_a, dq_u, dq_a)``.  The
unactuated angle ``x1`` is stored unwrapped on the real line; every profile
of the built-in models is 2*pi periodic in ``x1``.

The equations of motion are

    m_uu q_u'' + m_au q_a'' + c_a x3^2 + c_bar_u x4^2 + dV/dq_u = 0
    m_au q_u'' + m_aa q_a'' + c_r x3^2 + c_p x3 x4 + c_s x4^2 + dV/dq_a = tau

All profile callables are vectorised: they accept floats or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, NamedTuple

import numpy as np
import sympy as sp

from .errors import DomainError
from .expr import X1, X2, parse_expression, to_numpy

G_DEFAULT = 9.81

Profile = Callable[[np.ndarray], np.ndarray]
Field2 = Callable[[np.ndarray, np.ndarray], np.ndarray]


class State4(NamedTuple):
    """Full plant state; ``x1`` in rad (unwrapped), ``x3, x4`` in rad/s."""

    x1: float
    x2: float
    x3: float
    x4: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


def wrap_angle(x):
    """Reduce an angle to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2.0 * np.pi)


def as_state(x) -> np.ndarray:
    """Validate and convert a 4-state; raises :class:`DomainError` if non-finite."""
    arr = np.asarray(x, dtype=float)
    if arr.shape[:1] != (4,):
        raise DomainError(f"expected a 4-state, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite state {arr}")
    return arr


def _const(value: float) -> Profile:
    def fn(x1):
        return value + np.zeros(np.shape(x1))

    return fn


@dataclass(frozen=True)
class MechanicalSystem:
    """Scalar profiles of a 2-DOF system satisfying A1 (everything depends on x1 only).

    ``c_r`` is the coefficient of ``x3**2`` in the actuated row; it is zero
    in the generic form but non-zero for both benchmark models.
    ``grad_ua_V`` is the mixed partial d2V/(dx2 dx1).
    """

    name: str
    m_uu: Profile
    m_au: Profile
    m_aa: Profile
    dm_uu: Profile
    dm_au: Profile
    dm_aa: Profile
    c_a: Profile
    c_bar_u: Profile
    c_p: Profile
    c_s: Profile
    c_r: Profile
    V: Field2
    grad_u_V: Field2
    grad_a_V: Field2
    grad_ua_V: Field2
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    def mass_matrix(self, x1) -> np.ndarray:
        """Inertia matrix; shape (2, 2) for scalar x1, (2, 2, N) for arrays."""
        muu, mau, maa = self.m_uu(x1), self.m_au(x1), self.m_aa(x1)
        return np.array([[muu, mau], [mau, maa]])

    def det_mass(self, x1):
        return self.m_uu(x1) * self.m_aa(x1) - self.m_au(x1) ** 2


def eval_el_dynamics(sys: MechanicalSystem, x, tau) -> np.ndarray:
    """State derivative of the Euler-Lagrange model under joint torque ``tau``."""
    x = as_state(x)
    tau = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(tau)):
        raise DomainError(f"non-finite torque {tau}")
    return _el_rhs(sys, x, tau)


def _el_rhs(sys: MechanicalSystem, x, tau):
    x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
    muu, mau, maa = sys.m_uu(x1), sys.m_au(x1), sys.m_aa(x1)
    r1 = -(sys.c_a(x1) * x3**2 + sys.c_bar_u(x1) * x4**2 + sys.grad_u_V(x1, x2))
    r2 = tau - (
        sys.c_r(x1) * x3**2 + sys.c_p(x1) * x3 * x4 + sys.c_s(x1) * x4**2 + sys.grad_a_V(x1, x2)
    )
    det = muu * maa - mau**2
    ddqu = (maa * r1 - mau * r2) / det
    ddqa = (muu * r2 - mau * r1) / det
    return np.array([x3, x4, ddqu, ddqa])


def _check_positive(**kwargs):
    for key, value in kwargs.items():
        if not (np.isfinite(value) and value > 0):
            raise DomainError(f"parameter {key} must be positive, got {value}")


def furuta_system(m: float, l: float, r: float, J: float, J_a: float, g: float = G_DEFAULT) -> MechanicalSystem:
    """Furuta pendulum; ``x1`` is the pendulum angle (0 = upright), ``x2`` the arm angle.

    ``2*l`` is the pendulum length, ``r`` the arm length, ``J`` the pendulum
    inertia and ``J_a`` the arm+motor inertia.
    """
    _check_positive(m=m, l=l, r=r, J=J, J_a=J_a, g=g)
    a1 = m * r * l / J
    a2 = (J_a + m * r**2) / J
    a3 = m * g * l
    sin, cos = np.sin, np.cos
    zero = _const(0.0)

    return MechanicalSystem(
        name="furuta",
        m_uu=_const(J),
        m_au=lambda x1: J * a1 * cos(x1),
        m_aa=lambda x1: J * (a2 + sin(x1) ** 2),
        dm_uu=zero,
        dm_au=lambda x1: -J * a1 * sin(x1),
        dm_aa=lambda x1: 2.0 * J * sin(x1) * cos(x1),
        c_a=zero,
        c_bar_u=lambda x1: -J * sin(x1) * cos(x1),
        c_p=lambda x1: 2.0 * J * sin(x1) * cos(x1),
        c_s=zero,
        c_r=lambda x1: -J * a1 * sin(x1),
        V=lambda x1, x2: a3 * cos(x1) + 0.0 * x2,
        grad_u_V=lambda x1, x2: -a3 * sin(x1) + 0.0 * x2,
        grad_a_V=lambda x1, x2: 0.0 * x1 + 0.0 * x2,
        grad_ua_V=lambda x1, x2: 0.0 * x1 + 0.0 * x2,
        params=dict(m=m, l=l, r=r, J=J, J_a=J_a, g=g, a1=a1, a2=a2, a3=a3),
    )


def pendubot_system(
    m1: float,
    m2: float,
    l1: float,
    l2: float,
    lc1: float,
    lc2: float,
    I1: float,
    I2: float,
    g: float = G_DEFAULT,
) -> MechanicalSystem:
    """Pendubot with the passive (second) link as ``x1`` (relative angle) and the actuated first link as ``x2``.

    ``l2`` does not enter the dynamics; it is kept in ``params`` for completeness.
    """
    _check_positive(m1=m1, m2=m2, l1=l1, l2=l2, lc1=lc1, lc2=lc2, I1=I1, I2=I2, g=g)
    c1 = m1 * lc1**2 + m2 * l1**2 + I1
    c2 = m2 * lc2**2 + I2
    c3 = m2 * l1 * lc2
    c4 = m1 * lc1 + m2 * l1
    c5 = m2 * lc2
    sin, cos = np.sin, np.cos
    zero = _const(0.0)

    return MechanicalSystem(
        name="pendubot",
        m_uu=_const(c2),
        m_au=lambda x1: c2 + c3 * cos(x1),
        m_aa=lambda x1: c1 + c2 + 2.0 * c3 * cos(x1),
        dm_uu=zero,
        dm_au=lambda x1: -c3 * sin(x1),
        dm_aa=lambda x1: -2.0 * c3 * sin(x1),
        c_a=zero,
        c_bar_u=lambda x1: c3 * sin(x1),
        c_p=lambda x1: -2.0 * c3 * sin(x1),
        c_s=zero,
        c_r=lambda x1: -c3 * sin(x1),
        V=lambda x1, x2: -c4 * g * cos(x2) - c5 * g * cos(x2 + x1),
        grad_u_V=lambda x1, x2: c5 * g * sin(x2 + x1),
        grad_a_V=lambda x1, x2: c4 * g * sin(x2) + c5 * g * sin(x2 + x1),
        grad_ua_V=lambda x1, x2: c5 * g * cos(x2 + x1),
        params=dict(m1=m1, m2=m2, l1=l1, l2=l2, lc1=lc1, lc2=lc2, I1=I1, I2=I2, g=g,
                    c1=c1, c2=c2, c3=c3, c4=c4, c5=c5),
    )


FURUTA_PARAMS = dict(m=0.0679, l=0.14, r=0.235, J=0.0012, J_a=0.0012)
PENDUBOT_PARAMS = dict(m1=0.2, m2=0.052, l1=0.2, l2=0.28, lc1=0.13, lc2=0.15, I1=3.38e-1, I2=1.17e-3)


def default_furuta(g: float = G_DEFAULT) -> MechanicalSystem:
    """Furuta model with the benchmark parameters (``J_a`` is not published; see README)."""
    return furuta_system(g=g, **FURUTA_PARAMS)


def default_pendubot(g: float = G_DEFAULT) -> MechanicalSystem:
    return pendubot_system(g=g, **PENDUBOT_PARAMS)


def system_from_expressions(
    name: str,
    m_uu: str,
    m_au: str,
    m_aa: str,
    V: str,
    params: Mapping[str, float] | None = None,
) -> MechanicalSystem:
    """Build a system from expression strings in ``x1`` (inertia) and ``x1, x2`` (potential).

    Coriolis coefficients and every derivative are obtained symbolically
    (Christoffel symbols of the inertia matrix).
    """
    params = dict(params or {})
    e_uu, e_au, e_aa = (parse_expression(s, ("x1",), params) for s in (m_uu, m_au, m_aa))
    e_V = parse_expression(V, ("x1", "x2"), params)
    d_uu, d_au, d_aa = (sp.diff(e, X1) for e in (e_uu, e_au, e_aa))
    half = sp.Rational(1, 2)
    coriolis = {
        "c_a": half * d_uu,
        "c_bar_u": -half * d_aa,
        "c_r": d_au,
        "c_p": d_aa,
        "c_s": sp.Integer(0),
    }
    one = lambda e: to_numpy(sp.simplify(e), (X1,))  # noqa: E731
    two = lambda e: to_numpy(sp.simplify(e), (X1, X2))  # noqa: E731
    return MechanicalSystem(
        name=name,
        m_uu=one(e_uu), m_au=one(e_au), m_aa=one(e_aa),
        dm_uu=one(d_uu), dm_au=one(d_au), dm_aa=one(d_aa),
        c_a=one(coriolis["c_a"]), c_bar_u=one(coriolis["c_bar_u"]),
        c_p=one(coriolis["c_p"]), c_s=one(coriolis["c_s"]), c_r=one(coriolis["c_r"]),
        V=two(e_V),
        grad_u_V=two(sp.diff(e_V, X1)),
        grad_a_V=two(sp.diff(e_V, X2)),
        grad_ua_V=two(sp.diff(e_V, X1, X2)),
        params=params,
    )


@dataclass(frozen=True)
class AssumptionReport:
    m_uu_min: float
    m_uu_max: float
    min_abs_m_au: float
    argmin_m_au: float
    min_abs_c_bar_u: float
    argmin_c_bar_u: float
    pd_margin: float
    threshold: float
    m_au_ok: bool
    c_bar_u_ok: bool
    pd_ok: bool
    bounded_ok: bool
    require_c_bar_u: bool

    @property
    def passed(self) -> bool:
        ok = self.m_au_ok and self.pd_ok and self.bounded_ok
        return ok and (self.c_bar_u_ok or not self.require_c_bar_u)

    @property
    def violations(self) -> list[str]:
        out = []
        if not self.m_au_ok:
            out.append(f"A2: |m_au| = {self.min_abs_m_au:.3g} at x1 = {self.argmin_m_au:.6g}")
        if not self.c_bar_u_ok:
            out.append(f"A2: |c_bar_u| = {self.min_abs_c_bar_u:.3g} at x1 = {self.argmin_c_bar_u:.6g}")
        if not self.pd_ok:
            out.append(f"A1: inertia not positive definite (margin {self.pd_margin:.3g})")
        if not self.bounded_ok:
            out.append("A2: m_uu not finite on the grid")
        return out


def check_assumptions(
    sys: MechanicalSystem, x1_grid, threshold: float = 1e-9, require_c_bar_u: bool = False
) -> AssumptionReport:
    """Grid check of A1/A2.

    A vanishing ``c_bar_u`` is always reported but only fails the check when
    ``require_c_bar_u`` is set: both benchmarks have ``c_bar_u = 0`` at their
    oscillation centre and the boundedness argument never divides by it.
    """
    grid = wrap_angle(np.atleast_1d(np.asarray(x1_grid, dtype=float)))
    if grid.size == 0:
        raise DomainError("empty grid")
    muu = np.broadcast_to(sys.m_uu(grid), grid.shape)
    mau = np.broadcast_to(sys.m_au(grid), grid.shape)
    maa = np.broadcast_to(sys.m_aa(grid), grid.shape)
    cbar = np.broadcast_to(sys.c_bar_u(grid), grid.shape)
    # smallest eigenvalue of the symmetric 2x2 inertia matrix
    tr, det = muu + maa, muu * maa - mau**2
    lam_min = 0.5 * (tr - np.sqrt(np.maximum(tr**2 - 4.0 * det, 0.0)))
    i_au = int(np.argmin(np.abs(mau)))
    i_cb = int(np.argmin(np.abs(cbar)))
    return AssumptionReport(
        m_uu_min=float(muu.min()),
        m_uu_max=float(muu.max()),
        min_abs_m_au=float(abs(mau[i_au])),
        argmin_m_au=float(grid[i_au]),
        min_abs_c_bar_u=float(abs(cbar[i_cb])),
        argmin_c_bar_u=float(grid[i_cb]),
        pd_margin=float(lam_min.min()),
        threshold=threshold,
        m_au_ok=bool(abs(mau[i_au]) >= threshold),
        c_bar_u_ok=bool(abs(cbar[i_cb]) >= threshold),
        pd_ok=bool(np.all(det > 0) and np.all(muu > 0)),
        bounded_ok=bool(np.all(np.isfinite(muu))),
        require_c_bar_u=require_c_bar_u,
    )
