"""Independent reference computations used by the tests.

Nothing here imports the package's model or control code: the inertia
matrices, Coriolis terms and control laws are rebuilt from the Lagrangian
with sympy, and integration goes through scipy.
"""

from __future__ import annotations

import numpy as np
import sympy as sp
from scipy import integrate

G = 9.81
FURUTA = dict(m=0.0679, l=0.14, r=0.235, J=0.0012, J_a=0.0012)
PENDUBOT = dict(m1=0.2, m2=0.052, l1=0.2, l2=0.28, lc1=0.13, lc2=0.15, I1=3.38e-1, I2=1.17e-3)

qu, qa, du, da = sp.symbols("qu qa du da", real=True)


def furuta_matrices(p=FURUTA, g=G):
    J = p["J"]
    a1 = p["m"] * p["r"] * p["l"] / J
    a2 = (p["J_a"] + p["m"] * p["r"] ** 2) / J
    a3 = p["m"] * g * p["l"]
    M = sp.Matrix([[J, J * a1 * sp.cos(qu)], [J * a1 * sp.cos(qu), J * (a2 + sp.sin(qu) ** 2)]])
    V = a3 * sp.cos(qu)
    return M, V


def pendubot_matrices(p=PENDUBOT, g=G):
    c1 = p["m1"] * p["lc1"] ** 2 + p["m2"] * p["l1"] ** 2 + p["I1"]
    c2 = p["m2"] * p["lc2"] ** 2 + p["I2"]
    c3 = p["m2"] * p["l1"] * p["lc2"]
    c4 = p["m1"] * p["lc1"] + p["m2"] * p["l1"]
    c5 = p["m2"] * p["lc2"]
    M = sp.Matrix([[c2, c2 + c3 * sp.cos(qu)], [c2 + c3 * sp.cos(qu), c1 + c2 + 2 * c3 * sp.cos(qu)]])
    V = -c4 * g * sp.cos(qa) - c5 * g * sp.cos(qa + qu)
    return M, V


class MatrixModel:
    """M(q) qdd + C(q, qd) qd + grad V = (0, tau) with C from Christoffel symbols."""

    def __init__(self, M, V):
        q = [qu, qa]
        qd = sp.Matrix([du, da])
        C = sp.zeros(2, 2)
        for k in range(2):
            for j in range(2):
                C[k, j] = sum(
                    sp.Rational(1, 2) * (sp.diff(M[k, j], q[i]) + sp.diff(M[k, i], q[j]) - sp.diff(M[i, j], q[k])) * qd[i]
                    for i in range(2)
                )
        gradV = sp.Matrix([sp.diff(V, qu), sp.diff(V, qa)])
        args = (qu, qa, du, da)
        self.M = sp.lambdify(args, M, "numpy")
        self.Cqd = sp.lambdify(args, C * qd, "numpy")
        self.gradV = sp.lambdify(args, gradV, "numpy")
        self.V = sp.lambdify(args, V, "numpy")

    def accel(self, x, tau):
        M = np.array(self.M(*x), dtype=float)
        rhs = np.array([0.0, tau]) - np.ravel(self.Cqd(*x)) - np.ravel(self.gradV(*x))
        return np.linalg.solve(M, rhs)

    def field(self, x, tau):
        qdd = self.accel(x, tau)
        return np.array([x[2], x[3], qdd[0], qdd[1]])

    def collocated_tau(self, x, u):
        """Torque giving qdd_a = u: eliminate qdd_u from the unactuated row."""
        M = np.array(self.M(*x), dtype=float)
        h = np.ravel(self.Cqd(*x)) + np.ravel(self.gradV(*x))
        qdd_u = -(M[0, 1] * u + h[0]) / M[0, 0]
        return M[1, 0] * qdd_u + M[1, 1] * u + h[1]


def furuta_law(p=FURUTA, k1=5.0, g1=5.0, g2=5.0, g=G):
    """Closed-form Furuta controller: K = -(1+k1)/a1 ln(sec + tan), s = -J k1."""
    J = p["J"]
    a1 = p["m"] * p["r"] * p["l"] / J
    a3 = p["m"] * g * p["l"]
    c = (1.0 + k1) / a1

    def K(x1):
        return -c * np.log(1.0 / np.cos(x1) + np.tan(x1))

    def dK(x1):
        return -c / np.cos(x1)

    def ddK(x1):
        return -c * np.sin(x1) / np.cos(x1) ** 2

    def u(x):
        x1, x2, x3, x4 = x
        z1, z2 = x2 - K(x1), x4 - dK(x1) * x3
        c_bar = -J * np.sin(x1) * np.cos(x1)
        gradu = -a3 * np.sin(x1)
        s = -J * k1
        return -(dK(x1) * c_bar * x4**2 - J * ddK(x1) * x3**2 + dK(x1) * gradu + J * (g1 * z1 + g2 * z2)) / s

    return K, dK, u


def pendubot_law(p=PENDUBOT, g1=10.0, g2=5.0, g=G):
    """k2 = -1: K = x1, s = 2 c2 + c3 cos x1."""
    c2 = p["m2"] * p["lc2"] ** 2 + p["I2"]
    c3 = p["m2"] * p["l1"] * p["lc2"]
    c5 = p["m2"] * p["lc2"]

    def u(x):
        x1, x2, x3, x4 = x
        z1, z2 = x2 - x1, x4 - x3
        s = 2 * c2 + c3 * np.cos(x1)
        c_bar = c3 * np.sin(x1)
        gradu = c5 * g * np.sin(x2 + x1)
        return -(c_bar * x4**2 + gradu + c2 * (g1 * z1 + g2 * z2)) / s

    return (lambda x1: x1), (lambda x1: 1.0 + 0.0 * x1), u


def closed_loop_reference(model: MatrixModel, law, x0, t_end, t_eval=None, rtol=1e-12, atol=1e-14):
    """scipy DOP853 run of the matrix-form plant under the closed-form law."""

    def rhs(t, x):
        return model.field(x, model.collocated_tau(x, law(x)))

    sol = integrate.solve_ivp(rhs, (0.0, t_end), np.asarray(x0, float), method="DOP853",
                              rtol=rtol, atol=atol, t_eval=t_eval, dense_output=t_eval is None)
    assert sol.success, sol.message
    return sol


def furuta_m_exact(x1, p=FURUTA, k1=5.0):
    """m = cos(x1)^(-2 kappa1) with kappa1 = (1+k1)(1+k1+a1^2)/(a1^2 k1)."""
    a1 = p["m"] * p["r"] * p["l"] / p["J"]
    kappa1 = (1 + k1) * (1 + k1 + a1**2) / (a1**2 * k1)
    return np.cos(x1) ** (-2.0 * kappa1)


def furuta_U_exact(x1, p=FURUTA, k1=5.0, g=G):
    a1 = p["m"] * p["r"] * p["l"] / p["J"]
    a3 = p["m"] * g * p["l"]
    kappa1 = (1 + k1) * (1 + k1 + a1**2) / (a1**2 * k1)
    e = 2.0 * kappa1 - 1.0
    return a3 / (p["J"] * k1) * (np.cos(x1) ** (-e) - 1.0) / e


def pendubot_m_exact(x1, p=PENDUBOT):
    c2 = p["m2"] * p["lc2"] ** 2 + p["I2"]
    c3 = p["m2"] * p["l1"] * p["lc2"]
    return ((2 * c2 + c3) / (2 * c2 + c3 * np.cos(x1))) ** 2


def pendubot_U_quad(x1, p=PENDUBOT, g=G):
    """U = -int_0^x1 rho m with rho = -c5 g sin(2s)/(2 c2 + c3 cos s), by scipy quad."""
    c2 = p["m2"] * p["lc2"] ** 2 + p["I2"]
    c3 = p["m2"] * p["l1"] * p["lc2"]
    c5 = p["m2"] * p["lc2"]

    def integrand(s):
        rho = -c5 * g * np.sin(2 * s) / (2 * c2 + c3 * np.cos(s))
        return -rho * pendubot_m_exact(s, p)

    # piecewise over half-periods so quad never sees cancelling lobes
    edges = np.linspace(0.0, x1, int(np.ceil(abs(x1) / (np.pi / 2))) + 1)
    return sum(integrate.quad(integrand, a, b, epsabs=1e-11, epsrel=1e-11)[0] for a, b in zip(edges[:-1], edges[1:]))
