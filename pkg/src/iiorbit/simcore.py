"""Closed-loop simulation, section crossings, steady-orbit extraction and CSV export."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import AnalysisError, ConfigError, SingularityError, StepUnderflowError
from .integrators import IntegratorConfig, RawTrajectory, find_crossings, integrate, thin
from .mechmodel import MechanicalSystem, as_state, eval_el_dynamics
from .prefeedback import spong_form, u_pl
from .synthesis import SynthesisProfile, _guard, control_u, phi, v_control
from .target import hamiltonian

REPRESENTATIONS = ("el", "spong", "zx")
BLOWUP_STATE = 1e6  # |state| beyond this when the step collapses counts as a blow-up
NEAR_SINGULAR = 1e-3  # |s_frak| below this fraction of its interval maximum
CSV_COLUMNS = ("t", "x1", "x2", "x3", "x4", "z1", "z2", "u", "Hx")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (N, 4)
    z: np.ndarray  # (N, 2), phi(x)
    u: np.ndarray
    H_x: np.ndarray
    raw: RawTrajectory
    representation: str = "el"
    status: str = "ok"
    diagnostic: str = ""
    z_evolved: np.ndarray | None = None  # zx only: the integrated z states
    profile: SynthesisProfile | None = None

    def __len__(self):
        return self.times.size

    @property
    def singular(self) -> bool:
        return self.status == "singular"

    def interpolate(self, t) -> np.ndarray:
        """Plant state x at time(s) t from the dense output."""
        out = self.raw.interpolate(t)
        if self.representation != "zx":
            return out
        return zx_to_x(self.profile, np.asarray(out).T).T

    def rows(self) -> np.ndarray:
        return np.column_stack([self.times, self.states, self.z, self.u, self.H_x])


def closed_loop_field(sys: MechanicalSystem, profile: SynthesisProfile, representation: str = "el"):
    """Right-hand side ``f(t, state)`` of the closed loop in the chosen coordinates."""
    if representation == "el":

        def field(t, x):
            return eval_el_dynamics(sys, x, u_pl(sys, x, control_u(profile, sys, x)))

    elif representation == "spong":
        sf = spong_form(sys)

        def field(t, x):
            return sf(x, control_u(profile, sys, x))

    elif representation == "zx":
        g1, g2 = profile.gamma1, profile.gamma2

        def field(t, w):
            z1, z2, x1, x3 = w
            s = _guard(profile, sys, x1)
            dK = profile.dK(x1)
            x3dot = (
                profile.beta(x1) * x3**2
                - sys.grad_u_V(x1, profile.K(x1) + z1) / s
                - sys.c_bar_u(x1) * (z2 + 2.0 * dK * x3) * z2 / s
                + sys.m_au(x1) / s * (g1 * z1 + g2 * z2)
            )
            return np.array([z2, -g1 * z1 - g2 * z2, x3, x3dot])

    else:
        raise ValueError(f"representation must be one of {REPRESENTATIONS}, got {representation!r}")

    def guarded(t, state):
        # runaway states only occur on the way into a singularity of the control law
        if np.max(np.abs(state)) > BLOWUP_STATE:
            raise SingularityError(f"state exceeds {BLOWUP_STATE:g} (blow-up)")
        return field(t, state)

    return guarded


def zx_to_x(profile: SynthesisProfile, w):
    """Plant state from (z1, z2, x1, x3): x2 = K(x1) + z1, x4 = z2 + K'(x1) x3."""
    z1, z2, x1, x3 = w[0], w[1], w[2], w[3]
    return np.array([x1, profile.K(x1) + z1, x3, z2 + profile.dK(x1) * x3])


def simulate_closed_loop(
    sys: MechanicalSystem,
    profile: SynthesisProfile,
    x0,
    cfg: IntegratorConfig | None = None,
    representation: str = "el",
) -> Trajectory:
    """Integrate the closed loop from ``x0``.

    If the control becomes singular on the way (s_frak -> 0 or K' unbounded)
    the trajectory is truncated at the last good state and ``status`` is
    ``"singular"``; the run is never continued through the singularity.
    """
    cfg = cfg or IntegratorConfig()
    x0 = as_state(x0)
    field = closed_loop_field(sys, profile, representation)
    w0 = np.concatenate([phi(profile, x0), x0[[0, 2]]]) if representation == "zx" else x0
    try:
        raw = integrate(field, w0, cfg)
    except StepUnderflowError as exc:
        x = zx_to_x(profile, exc.state) if representation == "zx" else exc.state
        if exc.partial is None or not _near_singular(sys, profile, x):
            raise
        raw = exc.partial
        raw.status = "singular"
        raw.message = f"t = {exc.t:.9g}: step collapsed approaching a control singularity (x1 = {x[0]:.6g})"
    return annotate(sys, profile, raw, representation, stride=cfg.stride)


def _near_singular(sys, profile, x) -> bool:
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP_STATE:
        return True
    a, b = profile.interval
    s_scale = float(np.max(np.abs(profile.s_frak(np.linspace(a, b, 1001)))))
    return abs(float(profile.s_frak(x[0]))) < NEAR_SINGULAR * s_scale


def annotate(sys, profile, raw: RawTrajectory, representation: str, stride: int = 1) -> Trajectory:
    kept = thin(raw, stride)
    cols = kept.states.T
    if representation == "zx":
        z_ev, x = cols[:2], zx_to_x(profile, cols)
        u = v_control(profile, sys, x, z_ev)
    else:
        z_ev, x = None, cols
        u = control_u(profile, sys, x)
    return Trajectory(
        times=kept.times.copy(),
        states=x.T.copy(),
        z=phi(profile, x).T.copy(),
        u=np.asarray(u, dtype=float),
        H_x=np.asarray(hamiltonian(profile, (x[0], x[2])), dtype=float),
        raw=raw,
        representation=representation,
        status=raw.status,
        diagnostic=raw.message,
        z_evolved=None if z_ev is None else z_ev.T.copy(),
        profile=profile,
    )


# -- sections ---------------------------------------------------------------------------------

_NAMES = {"x1": 0, "x2": 1, "x3": 2, "x4": 3}


def _section_fn(section) -> Callable:
    if callable(section):
        return section
    if isinstance(section, str):
        if section not in _NAMES:
            raise ValueError(f"unknown section coordinate {section!r}")
        section = _NAMES[section]
    idx = int(section)
    return lambda x: x[idx]


def poincare_crossings(traj, section="x3", direction: int = 1, tol: float = 1e-9):
    """Crossings ``(t, state)`` of the zero set of ``section``.

    ``section`` is a coordinate name, an index, or a vectorised function of
    the state. Works on closed-loop :class:`Trajectory` objects (plant state
    x) and on raw trajectories of any dimension.
    """
    fn = _section_fn(section)
    if isinstance(traj, Trajectory):
        raw = traj.raw
        if traj.representation == "zx":
            prof = traj.profile
            hits = find_crossings(raw, lambda w: fn(zx_to_x(prof, w)), direction, tol)
            return [(t, zx_to_x(prof, s)) for t, s in hits]
        return find_crossings(raw, fn, direction, tol)
    return find_crossings(traj, fn, direction, tol)


@dataclass(frozen=True)
class OrbitSummary:
    period: float
    amplitude: np.ndarray
    mean: np.ndarray
    crossing_times: np.ndarray
    interval_spread: float
    converged: bool

    @property
    def intervals(self) -> np.ndarray:
        return np.diff(self.crossing_times)


def _dense(traj):
    if isinstance(traj, Trajectory):
        return traj.interpolate
    if isinstance(traj, RawTrajectory):
        return traj.interpolate
    spline = CubicSpline(np.asarray(traj.times), np.asarray(traj.states), axis=0)
    return spline


def _refined_extrema(t, y):
    """Max and min of a finely sampled series, refined by a parabola through the extreme sample."""
    out = []
    for j in (int(np.argmax(y)), int(np.argmin(y))):
        j = min(max(j, 1), y.size - 2)
        y0, y1, y2 = y[j - 1], y[j], y[j + 1]
        denom = y0 - 2.0 * y1 + y2
        out.append(y1 - 0.125 * (y2 - y0) ** 2 / denom if denom != 0.0 else y1)
    return out


def extract_steady_orbit(
    traj, tail_fraction: float = 0.2, section="x3", direction: int = 1, min_crossings: int = 5,
    spread_tol: float = 0.01,
) -> OrbitSummary:
    """Period, per-coordinate amplitude (half peak-to-peak) and mean over the tail.

    The mean is taken over a whole number of periods (first to last tail
    crossing) so it is not biased by a partial cycle.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must lie in (0, 1]")
    times = np.asarray(traj.times)
    t0 = times[-1] - tail_fraction * (times[-1] - times[0])
    if isinstance(traj, (Trajectory, RawTrajectory)):
        hits = poincare_crossings(traj, section, direction)
        tc = np.array([t for t, _ in hits if t >= t0])
    else:
        fn = _section_fn(section)
        dense = _dense(traj)
        from .integrators import RawTrajectory as _R

        states = np.asarray(traj.states)
        proxy = _R(times, states, dense(times, 1))
        tc = np.array([t for t, _ in find_crossings(proxy, fn, direction) if t >= t0])
    if tc.size < min_crossings:
        raise AnalysisError(
            f"only {tc.size} section crossings in the last {100 * tail_fraction:.0f}% of the run; "
            f"need {min_crossings}"
        )
    intervals = np.diff(tc)
    period = float(np.mean(intervals))
    spread = float((intervals.max() - intervals.min()) / period)

    dense = _dense(traj)
    n = max(2001, int(np.ceil((tc[-1] - tc[0]) / period * 4000)) + 1)
    ts = np.linspace(tc[0], tc[-1], n)
    ys = np.asarray(dense(ts)).reshape(n, -1)
    amp, mean = [], []
    for k in range(ys.shape[1]):
        hi, lo = _refined_extrema(ts, ys[:, k])
        amp.append(0.5 * (hi - lo))
        mean.append(np.trapezoid(ys[:, k], ts) / (ts[-1] - ts[0]))
    return OrbitSummary(
        period=period,
        amplitude=np.array(amp),
        mean=np.array(mean),
        crossing_times=tc,
        interval_spread=spread,
        converged=spread <= spread_tol,
    )


# -- CSV --------------------------------------------------------------------------------------

def format_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row in traj.rows():
        buf.write(",".join(format(v, ".17g") for v in row) + "\n")
    return buf.getvalue()


def write_csv(traj: Trajectory, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(format_csv(traj))
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Load a trajectory CSV, validating the header and row shape."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such CSV file: {path}")
    lines = path.read_text().splitlines()
    if not lines or tuple(lines[0].strip().split(",")) != CSV_COLUMNS:
        raise ConfigError(f"{path}: header must be {','.join(CSV_COLUMNS)}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if not body:
        raise ConfigError(f"{path}: no data rows")
    try:
        data = np.array([[float(v) for v in ln.split(",")] for ln in body])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(CSV_COLUMNS):
        raise ConfigError(f"{path}: every row needs {len(CSV_COLUMNS)} columns")
    if np.any(np.diff(data[:, 0]) <= 0):
        raise ConfigError(f"{path}: times are not strictly increasing")
    return {name: data[:, i] for i, name in enumerate(CSV_COLUMNS)}
