"""I&I orbital-stabilization controller built from a generator K and the mapping s_frak.

Given K (with K', K'') and s_frak = m_uu + m_au K', the target oscillator is

    xi1' = xi2,    xi2' = rho(xi1) + beta(xi1) xi2^2

with energy H = m(xi1) xi2^2 / 2 + U(xi1).  ``m`` and ``U`` are integrals of
``beta`` and ``rho * m`` and are always obtained by quadrature; printed
closed forms are only used as cross-checks (see :mod:`iiorbit.verify`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np
import sympy as sp
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .errors import AssumptionViolation, SingularityError, SynthesisError
from .expr import X1, parse_expression, to_numpy
from .mechmodel import MechanicalSystem

QUAD_EPSABS = 1e-10
N_TABLE = 4096
S_SINGULAR_REL = 1e-8
S_TOUCH_REL = 1e-6
CONSISTENCY_TOL = 1e-9
FD_STEP = 1e-6
FD_TOL = 1e-5
K_SLOPE_MAX = 1e8

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)

Profile = Callable[[np.ndarray], np.ndarray]


def _quad(fn, a, b):
    val, _ = integrate.quad(fn, a, b, epsabs=QUAD_EPSABS, epsrel=1e-12, limit=200)
    return val


def _cell_nodes(left, right):
    """Gauss-Legendre nodes/weights on each cell [left_j, right_j]; shapes (ncell, 8)."""
    half = 0.5 * (right - left)[:, None]
    nodes = left[:, None] + half * (_GL_X[None, :] + 1.0)
    return nodes, half * _GL_W[None, :]


def table_grid(a: float, b: float, n: int) -> np.ndarray:
    """Uniform grid on [a, b] with the node nearest 0 moved onto 0 (when inside)."""
    grid = np.linspace(a, b, n)
    if a < 0.0 < b:
        j = int(np.argmin(np.abs(grid)))
        if 0 < j < n - 1:
            grid[j] = 0.0
    return grid


def _cumulative(fn, grid, start):
    """Values of ``start + int_{grid[0]}^{x} fn`` on ``grid`` (8-point GL per cell)."""
    nodes, weights = _cell_nodes(grid[:-1], grid[1:])
    inc = np.sum(weights * fn(nodes), axis=1)
    return start + np.concatenate([[0.0], np.cumsum(inc)])


class _Antiderivative:
    """Tabulated antiderivative with exact-slope Hermite interpolation and quad outside the table."""

    def __init__(self, fn: Profile, grid: np.ndarray, value0: float, period: float | None = None):
        self.fn = fn
        self.period = None
        self.lo, self.hi = float(grid[0]), float(grid[-1])
        if self.lo <= 0.0 <= self.hi:
            # accumulate outward from 0 so large tail values never cancel against the anchor
            nodes, weights = _cell_nodes(grid[:-1], grid[1:])
            inc = np.sum(weights * fn(nodes), axis=1)
            j = min(int(np.searchsorted(grid, 0.0, side="right")) - 1, grid.size - 2)
            zero = np.zeros(1)
            n_l, w_l = _cell_nodes(grid[j : j + 1], zero)
            n_r, w_r = _cell_nodes(zero, grid[j + 1 : j + 2])
            values = np.empty(grid.size)
            values[j] = value0 - float(np.sum(w_l * fn(n_l)))
            values[j + 1] = value0 + float(np.sum(w_r * fn(n_r)))
            values[j + 2 :] = values[j + 1] + np.cumsum(inc[j + 1 :])
            values[:j] = values[j] - np.cumsum(inc[:j][::-1])[::-1]
        else:
            values = _cumulative(fn, grid, value0 + _quad(fn, 0.0, self.lo))
        self.values = values
        self.spline = CubicHermiteSpline(grid, self.values, fn(grid))
        if period is not None:
            self._set_period(float(period))

    def _set_period(self, period):
        """Wrap arguments outside the table when fn is periodic with zero mean."""
        if not 0.0 < period <= self.hi - self.lo:
            raise SynthesisError(f"period {period:.6g} does not fit in the table [{self.lo:.6g}, {self.hi:.6g}]")
        drift = abs(float(self.spline(self.lo + period)) - self.values[0])
        if drift > 1e-9 * (1.0 + np.max(np.abs(self.values))):
            raise SynthesisError(f"integrand is not periodic with zero mean over {period:.6g} (drift {drift:.3g})")
        self.period = period

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.period is not None:
            x = np.where((x < self.lo) | (x > self.hi), self.lo + np.mod(x - self.lo, self.period), x)
        out = np.asarray(self.spline(x), dtype=float)
        outside = (x < self.lo) | (x > self.hi)
        if np.any(outside):
            out = np.array(out, copy=True)
            flat_x, flat_out = np.atleast_1d(x), np.atleast_1d(out)
            for i in np.flatnonzero(np.atleast_1d(outside)):
                xi = flat_x[i]
                end = self.lo if xi < self.lo else self.hi
                flat_out[i] = self.spline(end) + _quad(self.fn, end, xi)
            out = flat_out.reshape(out.shape)
        return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class GeneratorK:
    """K and its first two derivatives (vectorised callables of x1)."""

    K: Profile
    dK: Profile
    ddK: Profile

    @classmethod
    def from_derivative(cls, dK: Profile, ddK: Profile, interval, n_table: int = N_TABLE) -> "GeneratorK":
        """Recover K from K' by quadrature with K(0) = 0."""
        grid = table_grid(interval[0], interval[1], n_table)
        return cls(K=_Antiderivative(dK, grid, 0.0), dK=dK, ddK=ddK)

    def scaled_slope(self, factor: float) -> "GeneratorK":
        """Copy with K' multiplied by ``factor`` (K, K'' untouched); used for mutation tests."""
        dK = self.dK
        return GeneratorK(K=self.K, dK=lambda x1: factor * dK(x1), ddK=self.ddK)


@dataclass(frozen=True)
class SynthesisProfile:
    system: MechanicalSystem
    generator: GeneratorK
    s_frak: Profile
    gamma1: float
    gamma2: float
    interval: tuple[float, float]
    log_m: _Antiderivative
    potential: _Antiderivative
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    def K(self, x1):
        return self.generator.K(x1)

    def dK(self, x1):
        return self.generator.dK(x1)

    def ddK(self, x1):
        return self.generator.ddK(x1)

    def beta(self, x1):
        return _beta(self.system, self.generator, self.s_frak, x1)

    def rho(self, x1):
        return _rho(self.system, self.generator, self.s_frak, x1)

    def mass_m(self, x1):
        return np.exp(-2.0 * self.log_m(x1))

    def dmass_m(self, x1):
        """Derivative of the tabulated m (from the interpolant, not from beta)."""
        x1 = np.asarray(x1, dtype=float)
        inside = self._inside(x1)
        slope = np.where(inside, self.log_m.spline(x1, 1), self.beta(x1))
        return -2.0 * slope * self.mass_m(x1)

    def potential_U(self, x1):
        return self.potential(x1)

    def dpotential_U(self, x1):
        x1 = np.asarray(x1, dtype=float)
        inside = self._inside(x1)
        return np.where(inside, self.potential.spline(x1, 1), -self.rho(x1) * self.mass_m(x1))

    def _inside(self, x1):
        return (x1 >= self.interval[0]) & (x1 <= self.interval[1])


def _beta(sys, gen, s_frak, x1):
    dK = gen.dK(x1)
    return -(sys.c_bar_u(x1) * dK**2 + sys.c_a(x1) + sys.m_au(x1) * gen.ddK(x1)) / s_frak(x1)


def _rho(sys, gen, s_frak, x1):
    return -sys.grad_u_V(x1, gen.K(x1)) / s_frak(x1)


def make_profile(
    sys: MechanicalSystem,
    generator: GeneratorK,
    s_frak: Profile,
    gamma1: float,
    gamma2: float,
    interval: tuple[float, float],
    n_table: int = N_TABLE,
    meta: Mapping[str, object] | None = None,
    check_points: int = 2001,
    period: float | None = None,
) -> SynthesisProfile:
    """Validate A3 on ``interval`` and tabulate m and U."""
    if not (gamma1 > 0 and gamma2 > 0):
        raise SynthesisError(f"gains must be positive, got gamma1={gamma1}, gamma2={gamma2}")
    a, b = float(interval[0]), float(interval[1])
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise SynthesisError(f"bad operating interval {interval}")
    grid = np.linspace(a, b, check_points)

    s = np.broadcast_to(s_frak(grid), grid.shape)
    if not np.all(np.isfinite(s)):
        raise SynthesisError("s_frak is not finite on the operating interval")
    flips = np.flatnonzero(np.sign(s[:-1]) * np.sign(s[1:]) <= 0)
    if flips.size:
        x_bad = float(grid[flips[0]])
        raise SynthesisError(f"s_frak crosses zero near x1 = {x_bad:.6g}")
    # a double root does not flip sign, so refine every local minimum of |s|
    abs_s = np.abs(s)
    for j in np.flatnonzero((abs_s[1:-1] <= abs_s[:-2]) & (abs_s[1:-1] <= abs_s[2:])) + 1:
        res = optimize.minimize_scalar(
            lambda x: abs(float(s_frak(x))), bounds=(grid[j - 1], grid[j + 1]),
            method="bounded", options={"xatol": 1e-12},
        )
        if res.fun < S_TOUCH_REL * abs_s.max():
            raise SynthesisError(f"s_frak touches zero near x1 = {res.x:.6g}")

    with np.errstate(all="ignore"):
        K_vals = np.broadcast_to(generator.K(grid), grid.shape)
        dK = np.broadcast_to(generator.dK(grid), grid.shape)
    bad = ~(np.isfinite(K_vals) & (np.abs(dK) < K_SLOPE_MAX))
    if np.any(bad):
        x_bad = float(grid[np.flatnonzero(bad)[0]])
        raise SynthesisError(f"K or K' is unbounded on the operating interval near x1 = {x_bad:.6g}")
    resid = np.abs(s - sys.m_uu(grid) - sys.m_au(grid) * dK)
    if resid.max() > CONSISTENCY_TOL:
        j = int(np.argmax(resid))
        raise SynthesisError(
            f"A3(a): s_frak != m_uu + m_au K' (residual {resid[j]:.3g} at x1 = {grid[j]:.6g})"
        )
    _check_derivative(generator.K, generator.dK, grid, "K'")
    _check_derivative(generator.dK, generator.ddK, grid, "K''")

    table = table_grid(a, b, n_table)
    beta = lambda x1: _beta(sys, generator, s_frak, x1)  # noqa: E731
    rho = lambda x1: _rho(sys, generator, s_frak, x1)  # noqa: E731
    log_m = _Antiderivative(beta, table, 0.0, period)

    def rho_m(x1):
        return rho(x1) * np.exp(-2.0 * _log_m_exact(beta, log_m, x1))

    potential = _Antiderivative(lambda x1: -rho_m(x1), table, 0.0, period)
    m_vals = np.exp(-2.0 * log_m.values)
    if not np.all(np.isfinite(m_vals) & (m_vals > 0)) or not np.all(np.isfinite(potential.values)):
        raise AssumptionViolation("A3(b): m is not positive and finite on the operating interval")

    return SynthesisProfile(
        system=sys,
        generator=generator,
        s_frak=s_frak,
        gamma1=float(gamma1),
        gamma2=float(gamma2),
        interval=(a, b),
        log_m=log_m,
        potential=potential,
        meta=meta or {},
    )


def _log_m_exact(beta, log_m: _Antiderivative, x):
    """int_0^x beta at arbitrary nodes: table value at the cell's left node + GL on the remainder."""
    x = np.asarray(x, dtype=float)
    grid_lo, grid_hi = log_m.lo, log_m.hi
    if np.any((x < grid_lo) | (x > grid_hi)):
        return log_m(x)
    grid = log_m.spline.x
    j = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
    left = grid[j]
    half = 0.5 * (x - left)
    nodes = left[..., None] + half[..., None] * (_GL_X + 1.0)
    return log_m.values[j] + np.sum(half[..., None] * _GL_W * beta(nodes), axis=-1)


def _check_derivative(fn, dfn, grid, label):
    inner = grid[1:-1]
    fd = (fn(inner + FD_STEP) - fn(inner - FD_STEP)) / (2.0 * FD_STEP)
    exact = np.broadcast_to(dfn(inner), inner.shape)
    err = np.abs(fd - exact) / np.maximum(1.0, np.abs(exact))
    if err.max() > FD_TOL:
        j = int(np.argmax(err))
        raise SynthesisError(f"{label} is not the derivative (FD mismatch {err[j]:.3g} at x1 = {inner[j]:.6g})")


# -- direct quadrature (reference path used by tests and cross-checks) -------------------------

def mass_m_quad(profile: SynthesisProfile, x1: float) -> float:
    return float(np.exp(-2.0 * _quad(profile.beta, 0.0, float(x1))))


def potential_U_quad(profile: SynthesisProfile, x1: float) -> float:
    return -_quad(lambda s: profile.rho(s) * mass_m_quad(profile, s), 0.0, float(x1))


# -- built-in generators ---------------------------------------------------------------------

def furuta_generator(sys: MechanicalSystem, k1: float) -> tuple[GeneratorK, Profile]:
    """K from s_frak = -J k1 (valid on (-pi/2, pi/2))."""
    if not k1 > 0:
        raise SynthesisError("k1 must be positive")
    a1, J = sys.params["a1"], sys.params["J"]
    c = (1.0 + k1) / a1
    gen = GeneratorK(
        K=lambda x1: -c * np.log(1.0 / np.cos(x1) + np.tan(x1)),
        dK=lambda x1: -c / np.cos(x1),
        ddK=lambda x1: -c * np.sin(x1) / np.cos(x1) ** 2,
    )
    s_val = -J * k1
    return gen, lambda x1: s_val + np.zeros(np.shape(x1))


def pendubot_generator(sys: MechanicalSystem, k2: float) -> tuple[GeneratorK, Profile]:
    """K = -k2 x1 with s_frak = -k2 (c2 + c3 cos x1) + c2."""
    c2, c3 = sys.params["c2"], sys.params["c3"]
    gen = GeneratorK(
        K=lambda x1: -k2 * np.asarray(x1, dtype=float),
        dK=lambda x1: -k2 + np.zeros(np.shape(x1)),
        ddK=lambda x1: np.zeros(np.shape(x1)),
    )
    return gen, lambda x1: -k2 * (c2 + c3 * np.cos(x1)) + c2


def expression_generator(
    sys: MechanicalSystem,
    interval,
    K: str | None = None,
    dK: str | None = None,
    s_frak: str | None = None,
    params: Mapping[str, float] | None = None,
) -> tuple[GeneratorK, Profile]:
    """Generator from expression strings in ``x1``.

    Give either ``K`` or ``dK`` (K is then integrated from K(0) = 0).  When
    ``s_frak`` is omitted it is defined as m_uu + m_au K'.
    """
    if (K is None) == (dK is None):
        raise SynthesisError("give exactly one of K or dK")
    if K is not None:
        eK = parse_expression(K, ("x1",), params)
        e1 = sp.diff(eK, X1)
        gen = GeneratorK(to_numpy(eK), to_numpy(e1), to_numpy(sp.diff(e1, X1)))
    else:
        e1 = parse_expression(dK, ("x1",), params)
        gen = GeneratorK.from_derivative(to_numpy(e1), to_numpy(sp.diff(e1, X1)), interval)
    if s_frak is None:
        dKf = gen.dK

        def s_fn(x1):
            return sys.m_uu(x1) + sys.m_au(x1) * dKf(x1)
    else:
        s_fn = to_numpy(parse_expression(s_frak, ("x1",), params))
    return gen, s_fn


def furuta_profile(sys, k1=5.0, gamma1=5.0, gamma2=5.0, interval=(-1.45, 1.45), **kw) -> SynthesisProfile:
    gen, s = furuta_generator(sys, k1)
    return make_profile(sys, gen, s, gamma1, gamma2, interval, meta={"family": "furuta-k1", "k": k1}, **kw)


def pendubot_profile(sys, k2=-1.0, gamma1=10.0, gamma2=5.0, interval=(-np.pi, 3.0 * np.pi), **kw) -> SynthesisProfile:
    gen, s = pendubot_generator(sys, k2)
    if interval[1] - interval[0] >= 2.0 * np.pi:
        kw.setdefault("period", 2.0 * np.pi)
    return make_profile(sys, gen, s, gamma1, gamma2, interval, meta={"family": "pendubot-k2", "k": k2}, **kw)


# -- potential minima ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalPoint:
    x1: float
    U: float
    curvature: float

    @property
    def kind(self) -> str:
        if self.curvature > 0:
            return "minimum"
        if self.curvature < 0:
            return "maximum"
        return "degenerate"


def find_potential_minima(
    profile: SynthesisProfile, interval=None, n_scan: int = 20001, fd_step: float = 1e-5
) -> list[CriticalPoint]:
    """All interior critical points of U on ``interval`` (open), classified by the sign of U''.

    Raises :class:`AssumptionViolation` when none of them is a minimum.
    """
    a, b = interval if interval is not None else profile.interval
    xs = np.linspace(a, b, n_scan + 2)[1:-1]
    # m > 0, so U' = -rho m and -rho share their zeros and signs
    dU = lambda x: -profile.rho(x)  # noqa: E731
    vals = dU(xs)
    sgn = np.sign(vals)
    roots = [float(x) for x in xs[sgn == 0]]
    for j in np.flatnonzero(sgn[:-1] * sgn[1:] < 0):
        roots.append(optimize.bisect(dU, xs[j], xs[j + 1], xtol=1e-10))
    points = []
    for r in sorted(roots):
        d2 = (
            -profile.rho(r + fd_step) * profile.mass_m(r + fd_step)
            + profile.rho(r - fd_step) * profile.mass_m(r - fd_step)
        ) / (2.0 * fd_step)
        points.append(CriticalPoint(x1=r, U=float(profile.potential_U(r)), curvature=float(d2)))
    if not any(p.kind == "minimum" for p in points):
        raise AssumptionViolation(f"A3(c): U has no isolated minimum on ({a:.6g}, {b:.6g})")
    return points


def nearest_minimum(profile: SynthesisProfile, x1: float, interval=None) -> CriticalPoint:
    minima = [p for p in find_potential_minima(profile, interval) if p.kind == "minimum"]
    return min(minima, key=lambda p: abs(p.x1 - x1))


# -- control law ----------------------------------------------------------------------------------

def _guard(profile, sys, x1):
    s = profile.s_frak(x1)
    bad = np.abs(s) < S_SINGULAR_REL * np.maximum(1.0, np.abs(sys.m_uu(x1)))
    if np.any(bad):
        where = float(np.atleast_1d(x1)[np.flatnonzero(np.atleast_1d(bad))[0]])
        raise SingularityError(f"s_frak vanishes at x1 = {where:.6g}; control undefined", x1=where)
    dK = np.abs(profile.dK(x1))
    bad = ~(dK < K_SLOPE_MAX)
    if np.any(bad):
        where = float(np.atleast_1d(x1)[np.flatnonzero(np.atleast_1d(bad))[0]])
        raise SingularityError(f"K' unbounded at x1 = {where:.6g}", x1=where)
    return s


def phi(profile: SynthesisProfile, x):
    """Off-manifold coordinates z = (x2 - K(x1), x4 - K'(x1) x3)."""
    return np.array([x[1] - profile.K(x[0]), x[3] - profile.dK(x[0]) * x[2]])


def pi_map(profile: SynthesisProfile, xi):
    """Embedding of the target state into the plant state space."""
    return np.array([xi[0], profile.K(xi[0]), xi[1], profile.dK(xi[0]) * xi[1]])


def v_control(profile: SynthesisProfile, sys: MechanicalSystem, x, z):
    x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
    s = _guard(profile, sys, x1)
    dK, ddK, muu = profile.dK(x1), profile.ddK(x1), sys.m_uu(x1)
    num = (
        -dK * (sys.c_bar_u(x1) * x4**2 + sys.c_a(x1) * x3**2)
        - dK * sys.grad_u_V(x1, x2)
        + muu * ddK * x3**2
        - muu * (profile.gamma1 * z[0] + profile.gamma2 * z[1])
    )
    return num / s


def control_u(profile: SynthesisProfile, sys: MechanicalSystem, x):
    """The static I&I law u(x)."""
    x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
    s = _guard(profile, sys, x1)
    dK, ddK, muu = profile.dK(x1), profile.ddK(x1), sys.m_uu(x1)
    z1 = x2 - profile.K(x1)
    z2 = x4 - dK * x3
    return -(
        dK * (sys.c_bar_u(x1) * x4**2 + sys.c_a(x1) * x3**2)
        - muu * ddK * x3**2
        + dK * sys.grad_u_V(x1, x2)
        + muu * (profile.gamma1 * z1 + profile.gamma2 * z2)
    ) / s


def c_closed_form(profile: SynthesisProfile, sys: MechanicalSystem, xi):
    """Control on the manifold, c(pi(xi)), in its simplified closed form."""
    x1, x2 = xi[0], xi[1]
    s = _guard(profile, sys, x1)
    dK, ddK = profile.dK(x1), profile.ddK(x1)
    return -(
        dK * (sys.c_bar_u(x1) * dK**2 + sys.c_a(x1)) * x2**2
        + dK * sys.grad_u_V(x1, profile.K(x1))
        - sys.m_uu(x1) * ddK * x2**2
    ) / s
