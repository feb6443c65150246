"""Explicit Runge-Kutta integrators with cubic Hermite dense output.

``field(t, x) -> dx`` may raise :class:`SingularityError`; the adaptive
scheme then shrinks the step, and when that no longer helps the returned
trajectory is truncated at the last good state with ``status == "singular"``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import SingularityError, StepUnderflowError

Field = Callable[[float, np.ndarray], np.ndarray]

H_MIN = 1e-14


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45"
    h: float = 1e-3
    rtol: float = 1e-9
    atol: float = 1e-11
    t_end: float = 30.0
    stride: int = 1
    h_max: float = np.inf

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError(f"unknown method {self.method!r} (rk45 or rk4)")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.method == "rk4" and not self.h > 0:
            raise ValueError("h must be positive")
        if self.method == "rk45" and not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if int(self.stride) < 1:
            raise ValueError("stride must be >= 1")


@dataclass
class RawTrajectory:
    """Accepted steps with their derivatives; ``interpolate`` is C1 cubic Hermite."""

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    status: str = "ok"
    message: str = ""

    def interpolate(self, t) -> np.ndarray:
        """State(s) at time(s) ``t``; shape (n,) for scalar t, (len(t), n) otherwise."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        ts = self.times
        if np.any(t_arr < ts[0] - 1e-12) or np.any(t_arr > ts[-1] + 1e-12):
            raise ValueError("interpolation outside the integrated time span")
        j = np.clip(np.searchsorted(ts, t_arr, side="right") - 1, 0, ts.size - 2)
        h = ts[j + 1] - ts[j]
        s = ((t_arr - ts[j]) / h)[:, None]
        y0, y1 = self.states[j], self.states[j + 1]
        f0, f1 = self.derivs[j] * h[:, None], self.derivs[j + 1] * h[:, None]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        out = h00 * y0 + h10 * f0 + h01 * y1 + h11 * f1
        return out[0] if np.ndim(t) == 0 else out

    def __len__(self):
        return self.times.size


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


def _rms(v):
    return float(np.sqrt(np.mean(v * v)))


def integrate(field: Field, x0, cfg: IntegratorConfig, t0: float = 0.0) -> RawTrajectory:
    x0 = np.array(x0, dtype=float)
    try:
        f0 = np.asarray(field(t0, x0), dtype=float)
    except SingularityError as exc:
        return RawTrajectory(np.array([t0]), x0[None, :], np.full((1, x0.size), np.nan), "singular", str(exc))
    if not np.all(np.isfinite(f0)):
        raise ValueError("field is not finite at the initial state")
    if cfg.method == "rk4":
        return _rk4(field, t0, x0, f0, cfg)
    return _dopri5(field, t0, x0, f0, cfg)


def _finish(ts, xs, fs, status="ok", message=""):
    return RawTrajectory(np.array(ts), np.array(xs), np.array(fs), status, message)


def _rk4(field, t0, x0, f0, cfg):
    t_end = t0 + cfg.t_end
    n = int(np.ceil(cfg.t_end / cfg.h - 1e-9))
    ts, xs, fs = [t0], [x0], [f0]
    t, x, k1 = t0, x0, f0
    for i in range(n):
        h = min(cfg.h, t_end - t) if i == n - 1 else cfg.h
        try:
            k2 = field(t + 0.5 * h, x + 0.5 * h * k1)
            k3 = field(t + 0.5 * h, x + 0.5 * h * k2)
            k4 = field(t + h, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = t0 + (i + 1) * cfg.h if i < n - 1 else t_end
            k1 = field(t, x)
        except SingularityError as exc:
            return _finish(ts, xs, fs, "singular", f"t = {t:.9g}: {exc}")
        ts.append(t)
        xs.append(x)
        fs.append(k1)
    return _finish(ts, xs, fs)


def _initial_step(field, t0, x0, f0, cfg):
    scale = cfg.atol + cfg.rtol * np.abs(x0)
    d0, d1 = _rms(x0 / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, cfg.t_end)
    try:
        f1 = field(t0 + h0, x0 + h0 * f0)
    except SingularityError:
        return h0 * 1e-3
    d2 = _rms((f1 - f0) / scale) / h0
    h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, cfg.h_max)


def _dopri5(field, t0, x0, f0, cfg):
    t_end = t0 + cfg.t_end
    ts, xs, fs = [t0], [x0], [f0]
    t, x, f = t0, x0, f0
    h = _initial_step(field, t0, x0, f0, cfg)
    rejected = False
    k = [None] * 7
    while t < t_end:
        if h < H_MIN * max(1.0, abs(t)):
            if rejected == "singular":
                return _finish(ts, xs, fs, "singular", f"t = {t:.9g}: step collapsed at a singularity")
            exc = StepUnderflowError(f"step size underflow at t = {t:.9g}", t, x)
            exc.partial = _finish(ts, xs, fs, "underflow", str(exc))
            raise exc
        last = t + h >= t_end
        if last:
            h = t_end - t
        k[0] = f
        try:
            for i in range(1, 7):
                xi = x + h * sum(a * kj for a, kj in zip(_A[i], k[:i]) if a != 0.0)
                k[i] = field(t + _C[i] * h, xi)
        except SingularityError:
            h *= 0.25
            rejected = "singular"
            continue
        x_new = xi  # stage 7 is evaluated at the 5th-order solution (FSAL)
        err_vec = h * sum(e * kj for e, kj in zip(_E, k) if e != 0.0)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = _rms(err_vec / scale)
        if not np.isfinite(err):
            h *= 0.25
            rejected = True
            continue
        if err <= 1.0:
            t = t_end if last else t + h
            x, f = x_new, k[6]
            ts.append(t)
            xs.append(x)
            fs.append(f)
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err**-0.2))
            if rejected:
                fac = min(fac, 1.0)
            h = min(h * fac, cfg.h_max)
            rejected = False
        else:
            h *= max(0.2, 0.9 * err**-0.2)
            rejected = True
    return _finish(ts, xs, fs)


def thin(raw: RawTrajectory, stride: int) -> RawTrajectory:
    """Keep every ``stride``-th sample (always keeps the last one)."""
    if stride <= 1:
        return raw
    idx = np.arange(0, len(raw), stride)
    if idx[-1] != len(raw) - 1:
        idx = np.append(idx, len(raw) - 1)
    return RawTrajectory(raw.times[idx], raw.states[idx], raw.derivs[idx], raw.status, raw.message)


def find_crossings(raw: RawTrajectory, fn, direction: int = 1, tol: float = 1e-9):
    """Zeros of ``fn(state)`` along ``raw``, localised by bisection on the dense output.

    ``fn`` must accept column-stacked states (n, N). ``direction`` is +1 for
    increasing, -1 for decreasing and 0 for either. Returns ``(t, state)`` pairs.
    """
    if len(raw) < 2:
        return []
    vals = np.asarray(fn(raw.states.T), dtype=float)
    lo, hi = vals[:-1], vals[1:]
    up = (lo < 0.0) & (hi >= 0.0)
    down = (lo > 0.0) & (hi <= 0.0)
    mask = up if direction > 0 else down if direction < 0 else up | down
    g = lambda t: float(fn(raw.interpolate(t)))  # noqa: E731
    out = []
    for j in np.flatnonzero(mask):
        ta, tb = raw.times[j], raw.times[j + 1]
        if hi[j] == 0.0:
            tc = tb
        else:
            tc = optimize.bisect(g, ta, tb, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
        out.append((float(tc), raw.interpolate(tc)))
    return out
