"""Command-line driver: simulate, sweep, verify, plotdata, demo.

Exit codes: 0 success, 1 verification failure, 2 the run hit a control
singularity (or the step size collapsed), 3 configuration or schema error.
Parallelism degree comes from ``IIORBIT_JOBS`` (default: CPU count).
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, build_scenario, demo_config, load, parse_vector
from .errors import AnalysisError, ConfigError, StepUnderflowError
from .simcore import CSV_COLUMNS, extract_steady_orbit, poincare_crossings, read_csv, simulate_closed_loop, write_csv
from .synthesis import nearest_minimum
from .verify import certify, d4_counterexample, D4_T_STAR, energy_convergence, z_decay_fit

EXIT_OK, EXIT_FAIL, EXIT_SINGULAR, EXIT_CONFIG = 0, 1, 2, 3
MAX_PLOT_POINTS = 5000
SWEEP_AXES = ("gamma-pairs", "k-parameter", "initial-conditions")


def jobs_from_env() -> int:
    raw = os.environ.get("IIORBIT_JOBS", "")
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"IIORBIT_JOBS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("IIORBIT_JOBS must be >= 1")
    return n


# -- run summary ----------------------------------------------------------------------------

@dataclass(frozen=True)
class RunSummary:
    status: str
    t_final: float
    orbit: str
    period: float
    interval_drift: float
    amplitude: tuple
    mean: tuple
    x1_range: tuple
    max_abs_x3: float
    max_abs_x4: float
    tail_H_mean: float
    tail_H_variation: float
    z_rate: float
    z_rate_predicted: float
    z_vacuous: bool
    diagnostic: str = ""

    def to_text(self) -> str:
        lines = []
        for key, val in asdict(self).items():
            if isinstance(val, tuple):
                val = ", ".join(f"{v:.10g}" for v in val)
            elif isinstance(val, float):
                val = f"{val:.10g}"
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"


def crossing_drift(traj, t_min: float) -> float:
    """Largest change between successive x3-section return times after ``t_min``."""
    tc = np.array([t for t, _ in poincare_crossings(traj, "x3", 1) if t >= t_min])
    if tc.size < 3:
        return float("nan")
    return float(np.max(np.abs(np.diff(np.diff(tc)))))


def summarize(sys, profile, traj, tail_fraction: float = 0.5) -> RunSummary:
    t, x = traj.times, traj.states
    t0 = t[-1] - tail_fraction * (t[-1] - t[0])
    tail = t >= t0
    x1_range = (float(x[:, 0].min()), float(x[:, 0].max()))
    H_tail = traj.H_x[tail]
    period, drift = float("nan"), float("nan")
    amp = mean = (float("nan"),) * 4
    try:
        crit = nearest_minimum(profile, float(np.clip(x[-1, 0], *profile.interval)))
        point_energy = H_tail.max() - crit.U <= 1e-9 * max(1.0, abs(crit.U))
    except AnalysisError:
        point_energy = False
    spans = np.ptp(x[tail], axis=0)
    if traj.singular:
        orbit = "aborted at a control singularity"
    elif point_energy and np.all(spans < 1e-8):
        orbit = "degenerate point orbit (equilibrium)"
    elif spans[0] > 2.0 * np.pi:
        orbit = "rotation (x1 does not oscillate)"
    else:
        try:
            o = extract_steady_orbit(traj, tail_fraction=tail_fraction)
            period, amp, mean = o.period, tuple(o.amplitude), tuple(o.mean)
            drift = crossing_drift(traj, t0)
            orbit = "periodic" if o.converged else "not converged"
        except AnalysisError as exc:
            orbit = f"no orbit detected ({exc})"
    H_var = float("nan")
    if not traj.singular:
        try:
            H_var = energy_convergence(sys, profile, traj, tail_fraction).tail_variation
        except (AnalysisError, ValueError):
            pass
    fit = z_decay_fit(traj, profile.gamma1, profile.gamma2)
    return RunSummary(
        status=traj.status,
        t_final=float(t[-1]),
        orbit=orbit,
        period=float(period),
        interval_drift=drift,
        amplitude=tuple(float(v) for v in amp),
        mean=tuple(float(v) for v in mean),
        x1_range=x1_range,
        max_abs_x3=float(np.max(np.abs(x[:, 2]))),
        max_abs_x4=float(np.max(np.abs(x[:, 3]))),
        tail_H_mean=float(np.mean(H_tail)),
        tail_H_variation=float(H_var),
        z_rate=fit.rate,
        z_rate_predicted=fit.predicted,
        z_vacuous=fit.vacuous,
        diagnostic=traj.diagnostic,
    )


def run_scenario(cfg: ScenarioConfig):
    """Build, simulate and summarise one scenario; returns (sys, profile, traj, summary)."""
    sys_, profile = build_scenario(cfg)
    traj = simulate_closed_loop(sys_, profile, np.array(cfg.x0), cfg.integrator, cfg.representation)
    return sys_, profile, traj, summarize(sys_, profile, traj, cfg.tail_fraction)


# -- commands -------------------------------------------------------------------------------

def cmd_simulate(cfg: ScenarioConfig, out=None) -> int:
    out = out or sys.stdout
    _, _, traj, summary = run_scenario(cfg)
    if cfg.csv:
        write_csv(traj, cfg.csv)
        Path(cfg.summary_path).write_text(summary.to_text())
        print(f"wrote {cfg.csv} and {cfg.summary_path}", file=out)
    print(summary.to_text(), end="", file=out)
    if traj.singular:
        print(f"aborted: {traj.diagnostic}", file=sys.stderr)
        return EXIT_SINGULAR
    return EXIT_OK


SWEEP_COLUMNS = (
    "index", "value", "status", "orbit", "period", "amp_x1", "mean_x1", "amp_x2",
    "max_abs_x3", "max_abs_x4", "tail_H_variation", "z_rate",
)


def sweep_configs(base: ScenarioConfig, axis: str, values) -> list[ScenarioConfig]:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    if not values:
        raise ConfigError("a sweep needs at least one value")
    out = []
    for i, text in enumerate(values):
        if axis == "gamma-pairs":
            g1, g2 = parse_vector(text, 2)
            cfg = base.replace(gamma1=g1, gamma2=g2)
        elif axis == "k-parameter":
            (k,) = parse_vector(text, 1)
            cfg = base.replace(k=k)
        else:
            cfg = base.replace(x0=parse_vector(text, 4))
        if base.csv:
            stem = Path(base.csv)
            cfg = cfg.replace(csv=str(stem.with_name(f"{stem.stem}_{i:03d}{stem.suffix or '.csv'}")), summary="")
        out.append(cfg)
    return out


def _sweep_one(args):
    i, text, cfg = args
    try:
        _, _, traj, s = run_scenario(cfg)
    except StepUnderflowError as exc:
        return {"index": i, "value": text, "status": "underflow", "orbit": str(exc)}
    if cfg.csv:
        write_csv(traj, cfg.csv)
        Path(cfg.summary_path).write_text(s.to_text())
    return {
        "index": i, "value": text, "status": s.status, "orbit": s.orbit, "period": s.period,
        "amp_x1": s.amplitude[0], "mean_x1": s.mean[0], "amp_x2": s.amplitude[1],
        "max_abs_x3": s.max_abs_x3, "max_abs_x4": s.max_abs_x4,
        "tail_H_variation": s.tail_H_variation, "z_rate": s.z_rate,
    }


def run_sweep(base: ScenarioConfig, axis: str, values, jobs: int | None = None) -> list[dict]:
    """One summary row per value, in input order whatever the degree of parallelism."""
    cfgs = sweep_configs(base, axis, values)
    tasks = [(i, v, c) for i, (v, c) in enumerate(zip(values, cfgs))]
    jobs = jobs or jobs_from_env()
    if jobs == 1 or len(tasks) == 1:
        rows = [_sweep_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    return sorted(rows, key=lambda r: r["index"])


def format_sweep(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([format(r[c], ".10g") if isinstance(r.get(c), float) else r.get(c, "") for c in SWEEP_COLUMNS])
    return buf.getvalue()


def cmd_sweep(base: ScenarioConfig, axis: str, values, table: str | None = None, out=None) -> int:
    out = out or sys.stdout
    rows = run_sweep(base, axis, values)
    text = format_sweep(rows)
    if table:
        Path(table).parent.mkdir(parents=True, exist_ok=True)
        Path(table).write_text(text)
    print(text, end="", file=out)
    return EXIT_SINGULAR if any(r["status"] != "ok" for r in rows) else EXIT_OK


def cmd_verify(cfg: ScenarioConfig, out_dir: str | None = None, d4: bool = False, scenario: str = "", out=None) -> int:
    out = out or sys.stdout
    sys_, profile = build_scenario(cfg)
    traj = simulate_closed_loop(sys_, profile, np.array(cfg.x0), cfg.integrator, cfg.representation)
    report = certify(sys_, profile, traj, scenario=scenario or cfg.system)
    text = report.to_text()
    if d4:
        text += "\n" + d4_report()
    if out_dir:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "certificate.txt").write_text(text)
        (d / "certificate.csv").write_text(report.to_csv())
    print(text, end="", file=out)
    if traj.singular:
        return EXIT_SINGULAR
    return EXIT_OK if report.passed else EXIT_FAIL


def d4_report() -> str:
    off = d4_counterexample(epsilon_on=False)
    on = d4_counterexample(epsilon_on=True)
    lines = [
        "decaying-perturbation counterexample",
        f"unperturbed: H drift {off.H_drift:.3e}, sup|xi| {off.sup_norm:.6g}",
        f"perturbed:   H(0) {on.H0:.6g}, H(end) {on.H_end:.6g}, sup|xi| {on.sup_norm:.6g}, "
        f"H doubles at t = {on.t_double if on.t_double is None else round(on.t_double, 9)} "
        f"(reference bound {D4_T_STAR})",
        f"verdict: {'unbounded growth' if on.unbounded_verdict else 'bounded'}",
    ]
    return "\n".join(lines) + "\n"


# -- plot data ------------------------------------------------------------------------------

def minmax_decimate(y: np.ndarray, max_points: int = MAX_PLOT_POINTS) -> np.ndarray:
    """Row indices keeping, per bucket, the min and max of every column (plus both ends)."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, c = y.shape
    if n <= max_points:
        return np.arange(n)
    n_buckets = max(1, (max_points - 2) // (2 * c))
    edges = np.linspace(0, n, n_buckets + 1).astype(int)
    keep = {0, n - 1}
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        block = y[a:b]
        keep.update((a + np.argmin(block, axis=0)).tolist())
        keep.update((a + np.argmax(block, axis=0)).tolist())
    return np.array(sorted(keep))


def _write_columns(path: Path, names, cols):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
    return path


def cmd_plotdata(csv_path: str, kind: str, out_prefix: str | None = None, columns=None,
                 max_points: int = MAX_PLOT_POINTS, out=None) -> int:
    out = out or sys.stdout
    data = read_csv(csv_path)
    prefix = Path(out_prefix) if out_prefix else Path(csv_path).with_suffix("")
    written = []
    if kind == "timeseries":
        cols = list(columns or CSV_COLUMNS[1:])
        bad = [c for c in cols if c not in CSV_COLUMNS[1:]]
        if bad:
            raise ConfigError(f"unknown columns {bad}")
        idx = minmax_decimate(np.column_stack([data[c] for c in cols]), max_points)
        written.append(_write_columns(Path(f"{prefix}_timeseries.csv"), ["t", *cols],
                                      [data["t"][idx]] + [data[c][idx] for c in cols]))
    elif kind == "phase":
        for tag, (p, v) in (("u", ("x1", "x3")), ("a", ("x2", "x4"))):
            idx = minmax_decimate(np.column_stack([data[p], data[v]]), max_points)
            written.append(_write_columns(Path(f"{prefix}_phase_{tag}.csv"), [p, v], [data[p][idx], data[v][idx]]))
    else:
        raise ConfigError(f"kind must be timeseries or phase, got {kind!r}")
    for w in written:
        print(f"wrote {w}", file=out)
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; here 2 means singularity, so use 3."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _add_overrides(p):
    p.add_argument("--config", help="scenario file (key = value with sections)")
    p.add_argument("--gamma1", type=float)
    p.add_argument("--gamma2", type=float)
    p.add_argument("--k1", "--k2", "--k", dest="k", type=float, help="generator parameter (k1 Furuta, k2 Pendubot)")
    p.add_argument("--x0", help="initial state x1,x2,x3,x4 (radians; 'pi' allowed)")
    p.add_argument("--t-end", type=float)
    p.add_argument("--method", choices=("rk45", "rk4"))
    p.add_argument("--h", type=float, help="fixed step for rk4")
    p.add_argument("--rtol", type=float)
    p.add_argument("--representation", choices=("el", "spong", "zx"))
    p.add_argument("--tail-fraction", type=float)


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    changes = {}
    for key in ("gamma1", "gamma2", "k", "representation"):
        val = getattr(args, key, None)
        if val is not None:
            changes[key] = val
    if getattr(args, "tail_fraction", None) is not None:
        changes["tail_fraction"] = args.tail_fraction
    if getattr(args, "x0", None):
        changes["x0"] = parse_vector(args.x0, 4)
    if changes:
        cfg = cfg.replace(**changes)
    integ = {}
    if getattr(args, "t_end", None) is not None:
        integ["t_end"] = args.t_end
    if getattr(args, "method", None):
        integ["method"] = args.method
    if getattr(args, "h", None) is not None:
        integ["h"] = args.h
    if getattr(args, "rtol", None) is not None:
        integ["rtol"] = args.rtol
    return cfg.with_integrator(**integ) if integ else cfg


def _base_config(args, default: str | None = None) -> ScenarioConfig:
    if getattr(args, "config", None):
        cfg = load(args.config)
    elif getattr(args, "demo", None) or default:
        cfg = demo_config(getattr(args, "demo", None) or default)
    else:
        raise ConfigError("give --config or --demo")
    return _apply_overrides(cfg, args)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="iiorbit", description="Orbital stabilisation of two-link underactuated systems")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one scenario, write CSV and summary")
    _add_overrides(p)
    p.add_argument("--demo", choices=("furuta", "pendubot"))
    p.add_argument("--out", help="trajectory CSV path (summary goes next to it)")

    p = sub.add_parser("demo", help="run a built-in benchmark scenario")
    p.add_argument("name", choices=("furuta", "pendubot"))
    _add_overrides(p)
    p.add_argument("--out", help="trajectory CSV path")

    p = sub.add_parser("sweep", help="run a family of scenarios in parallel")
    _add_overrides(p)
    p.add_argument("--demo", choices=("furuta", "pendubot"))
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", nargs="+", required=True,
                   help="'g1,g2' pairs, k values, or 'x1,x2,x3,x4' initial states")
    p.add_argument("--out", help="summary table CSV; per-run files go next to it")

    p = sub.add_parser("verify", help="certify the conditions and bounds for a scenario")
    _add_overrides(p)
    p.add_argument("--demo", choices=("furuta", "pendubot"))
    p.add_argument("--slope-factor", type=float, help="scale K' (mutation check)")
    p.add_argument("--d4", action="store_true", help="also run the decaying-perturbation counterexample")
    p.add_argument("--out", help="directory for certificate.txt / certificate.csv")

    p = sub.add_parser("plotdata", help="decimated plot-ready files from a trajectory CSV")
    p.add_argument("csv")
    p.add_argument("--kind", choices=("timeseries", "phase"), default="timeseries")
    p.add_argument("--columns", nargs="+")
    p.add_argument("--max-points", type=int, default=MAX_PLOT_POINTS)
    p.add_argument("--out", help="output prefix")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plotdata":
            if not 10 <= args.max_points <= MAX_PLOT_POINTS:
                raise ConfigError(f"--max-points must lie in [10, {MAX_PLOT_POINTS}]")
            return cmd_plotdata(args.csv, args.kind, args.out, args.columns, args.max_points)
        if args.command == "demo":
            cfg = _apply_overrides(demo_config(args.name), args) if not args.config else _base_config(args)
            if args.out:
                cfg = cfg.replace(csv=args.out, summary="")
            return cmd_simulate(cfg)
        cfg = _base_config(args)
        if args.command == "simulate":
            if args.out:
                cfg = cfg.replace(csv=args.out, summary="")
            return cmd_simulate(cfg)
        if args.command == "sweep":
            if args.out:
                cfg = cfg.replace(csv=str(Path(args.out).with_name(Path(args.out).stem + "_run.csv")), summary="")
            return cmd_sweep(cfg, args.axis, args.values, table=args.out)
        if args.command == "verify":
            if args.slope_factor is not None:
                cfg = cfg.replace(slope_factor=args.slope_factor)
            return cmd_verify(cfg, args.out, d4=args.d4)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepUnderflowError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    raise AssertionError(f"unhandled command {args.command}")


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
