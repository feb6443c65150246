"""The two-dimensional target oscillator and its Hamiltonian structure.

    xi1' = xi2,   xi2' = rho(xi1) + beta(xi1) xi2**2

with H = m(xi1) xi2**2 / 2 + U(xi1) and xi' = J(xi) grad H, J = [[0, 1/m], [-1/m, 0]].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .errors import AnalysisError, DegenerateOrbitError
from .integrators import IntegratorConfig, RawTrajectory, find_crossings, integrate
from .synthesis import SynthesisProfile, find_potential_minima, nearest_minimum

ORBIT_RTOL = 1e-10
ORBIT_ATOL = 1e-12


class TargetState(NamedTuple):
    xi1: float
    xi2: float


def target_field(profile: SynthesisProfile, xi):
    xi1, xi2 = xi[0], xi[1]
    return np.array([xi2 + 0.0 * xi1, profile.rho(xi1) + profile.beta(xi1) * xi2**2])


def hamiltonian(profile: SynthesisProfile, xi):
    xi1, xi2 = xi[0], xi[1]
    return 0.5 * profile.mass_m(xi1) * xi2**2 + profile.potential_U(xi1)


def grad_hamiltonian(profile: SynthesisProfile, xi, slopes: str = "integrand"):
    """(dH/dxi1, dH/dxi2) with m taken from the table.

    ``slopes="integrand"`` differentiates the quadratures exactly
    (m' = -2 beta m, U' = -rho m); ``slopes="spline"`` uses the derivative of
    the interpolants instead, which only agrees to interpolation accuracy.
    """
    xi1, xi2 = xi[0], xi[1]
    m = profile.mass_m(xi1)
    if slopes == "integrand":
        dm, dU = -2.0 * profile.beta(xi1) * m, -profile.rho(xi1) * m
    elif slopes == "spline":
        dm, dU = profile.dmass_m(xi1), profile.dpotential_U(xi1)
    else:
        raise ValueError(f"unknown slopes {slopes!r}")
    return np.array([0.5 * dm * xi2**2 + dU, m * xi2])


def J_matrix(profile: SynthesisProfile, xi1):
    inv_m = 1.0 / profile.mass_m(xi1)
    zero = np.zeros_like(inv_m)
    return np.array([[zero, inv_m], [-inv_m, zero]])


def hamiltonian_field(profile: SynthesisProfile, xi, slopes: str = "integrand"):
    """J(xi) grad H(xi); equal to :func:`target_field` up to table accuracy."""
    gH = grad_hamiltonian(profile, xi, slopes)
    inv_m = 1.0 / profile.mass_m(xi[0])
    return np.array([inv_m * gH[1], -inv_m * gH[0]])


def damped_aux_field(profile: SynthesisProfile, eta, r_damp: float):
    """(J - r I) grad H: the dissipative companion of the target field."""
    if not r_damp > 0:
        raise ValueError("r_damp must be positive")
    gH = grad_hamiltonian(profile, eta)
    return hamiltonian_field(profile, eta) - r_damp * gH


def simulate_target(profile: SynthesisProfile, xi0, cfg: IntegratorConfig) -> RawTrajectory:
    return integrate(lambda t, xi: target_field(profile, xi), np.asarray(xi0, dtype=float), cfg)


@dataclass(frozen=True)
class OrbitLevel:
    energy: float
    x_min: float
    H_min: float
    period: float
    period_alt: float
    turning_points: tuple[float, float]
    closure_error: float
    single_equilibrium: bool

    @property
    def period_mismatch(self) -> float:
        return abs(self.period - self.period_alt) / self.period


def _turning_point(profile, x_min, c, edge):
    """First x between x_min and ``edge`` where U(x) = c."""
    xs = np.linspace(x_min, edge, 4001)
    gap = profile.potential_U(xs) - c
    hit = np.flatnonzero(gap >= 0.0)
    if hit.size == 0:
        raise AnalysisError(
            f"level set H = {c:.6g} leaves the operating interval towards x1 = {edge:.6g}"
        )
    j = int(hit[0])
    if gap[j] == 0.0:
        return float(xs[j])
    return float(optimize.brentq(lambda x: profile.potential_U(x) - c, xs[j - 1], xs[j], xtol=1e-13))


def _crossings_until(profile, xi0, fn, direction, count, t_guess):
    """Integrate the target field, extending the horizon until ``count`` crossings are seen."""
    t_end = max(t_guess, 1.0)
    for _ in range(12):
        cfg = IntegratorConfig(method="rk45", rtol=ORBIT_RTOL, atol=ORBIT_ATOL, t_end=t_end)
        raw = simulate_target(profile, xi0, cfg)
        hits = find_crossings(raw, fn, direction, tol=1e-10)
        if len(hits) >= count:
            return hits
        t_end *= 2.0
    raise AnalysisError("no periodic return found on the target trajectory")


def orbit_from_ic(profile: SynthesisProfile, xi0) -> OrbitLevel:
    """Level set through ``xi0``: energy, enclosing minimum, period (two sections), closure."""
    xi0 = np.asarray(xi0, dtype=float)
    crit = nearest_minimum(profile, float(xi0[0]))
    c = float(hamiltonian(profile, xi0))
    if c - crit.U <= 1e-12 * max(1.0, abs(c)):
        raise DegenerateOrbitError(
            f"initial condition sits at the minimum x1* = {crit.x1:.9g}; the orbit is a point"
        )
    a, b = profile.interval
    lo = _turning_point(profile, crit.x1, c, a)
    hi = _turning_point(profile, crit.x1, c, b)
    others = [p for p in find_potential_minima(profile) if lo < p.x1 < hi and abs(p.x1 - crit.x1) > 1e-8]
    single = not others
    if not single:
        warnings.warn(
            f"level set H = {c:.6g} encloses other equilibria {[round(p.x1, 6) for p in others]}; "
            "it need not be a simple periodic orbit",
            RuntimeWarning,
            stacklevel=2,
        )

    # rough period guess from the linearisation at the minimum
    omega = np.sqrt(max(crit.curvature / float(profile.mass_m(crit.x1)), 1e-12))
    t_guess = 3.0 * 2.0 * np.pi / omega

    # two independent sections: xi2 = 0 and xi1 = x1*, both crossed upwards
    hits = _crossings_until(profile, xi0, lambda x: x[1], 1, 3, t_guess)
    period = hits[2][0] - hits[1][0]
    hits_alt = _crossings_until(profile, xi0, lambda x: x[0] - crit.x1, 1, 3, t_guess)
    period_alt = hits_alt[2][0] - hits_alt[1][0]

    cfg = IntegratorConfig(method="rk45", rtol=ORBIT_RTOL, atol=ORBIT_ATOL, t_end=period)
    back = simulate_target(profile, xi0, cfg)
    closure = float(np.linalg.norm(back.states[-1] - xi0))
    return OrbitLevel(
        energy=c,
        x_min=crit.x1,
        H_min=crit.U,
        period=float(period),
        period_alt=float(period_alt),
        turning_points=(lo, hi),
        closure_error=closure,
        single_equilibrium=single,
    )
