"""Scenario configuration: a sectioned key = value text file.

Example::

    [system]
    name = furuta

    [params]
    J_a = 0.0012

    [synthesis]
    family = furuta-k1
    k = 5
    gamma1 = 5
    gamma2 = 5

    [initial]
    x0 = pi/9, 0.6, 0, 0

    [integrator]
    method = rk45
    t_end = 30

    [output]
    csv = out/furuta.csv

Angles are in radians. Numeric entries may be arithmetic in ``pi``
(parsed, never evaluated as code). A custom system gives expression strings
for the inertia entries and the potential, either inline in a ``[custom]``
section or in a separate file named by ``custom_file``.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, IIOrbitError
from .expr import parse_expression
from .integrators import IntegratorConfig
from .mechmodel import (
    FURUTA_PARAMS,
    PENDUBOT_PARAMS,
    G_DEFAULT,
    MechanicalSystem,
    furuta_system,
    pendubot_system,
    system_from_expressions,
)
from .synthesis import (
    SynthesisProfile,
    expression_generator,
    furuta_generator,
    make_profile,
    pendubot_generator,
)

SYSTEMS = ("furuta", "pendubot", "custom")
FAMILIES = ("furuta-k1", "pendubot-k2", "expression")
CUSTOM_KEYS = ("m_uu", "m_au", "m_aa", "V")

DEFAULT_INTERVALS = {
    "furuta-k1": (-1.45, 1.45),
    "pendubot-k2": (-np.pi, 3.0 * np.pi),
}
DEFAULT_FAMILY = {"furuta": "furuta-k1", "pendubot": "pendubot-k2", "custom": "expression"}


@dataclass(frozen=True)
class ScenarioConfig:
    system: str = "furuta"
    params: tuple[tuple[str, float], ...] = ()
    custom: tuple[tuple[str, str], ...] = ()
    family: str = "furuta-k1"
    k: float = 5.0
    K_expr: str = ""
    dK_expr: str = ""
    s_frak_expr: str = ""
    gamma1: float = 5.0
    gamma2: float = 5.0
    interval: tuple[float, float] | None = None
    period: float | None = None
    slope_factor: float = 1.0
    x0: tuple[float, float, float, float] = (np.pi / 9, 0.6, 0.0, 0.0)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    representation: str = "el"
    tail_fraction: float = 0.5
    csv: str = ""
    summary: str = ""

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f"system must be one of {SYSTEMS}, got {self.system!r}")
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.system == "custom" and self.family != "expression":
            raise ConfigError("a custom system needs family = expression")
        if self.system == "custom":
            missing = [k for k in CUSTOM_KEYS if k not in dict(self.custom)]
            if missing:
                raise ConfigError(f"custom system is missing {missing}")
        if self.family == "expression" and bool(self.K_expr) == bool(self.dK_expr):
            raise ConfigError("family = expression needs exactly one of K or dK")
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise ConfigError(f"gains must be positive, got ({self.gamma1}, {self.gamma2})")
        if len(self.x0) != 4 or not all(np.isfinite(self.x0)):
            raise ConfigError(f"x0 needs four finite values, got {self.x0}")
        if self.interval is not None:
            a, b = self.interval
            if not (np.isfinite(a) and np.isfinite(b) and a < b):
                raise ConfigError(f"bad operating interval {self.interval}")
        if not 0.0 < self.tail_fraction <= 1.0:
            raise ConfigError("tail_fraction must lie in (0, 1]")
        if not self.slope_factor > 0:
            raise ConfigError("slope_factor must be positive")
        if self.representation not in ("el", "spong", "zx"):
            raise ConfigError(f"unknown representation {self.representation!r}")

    def replace(self, **changes) -> "ScenarioConfig":
        try:
            return dataclasses.replace(self, **changes)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def with_integrator(self, **changes) -> "ScenarioConfig":
        try:
            integ = dataclasses.replace(self.integrator, **changes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self.replace(integrator=integ)

    @property
    def operating_interval(self) -> tuple[float, float]:
        if self.interval is not None:
            return self.interval
        if self.family in DEFAULT_INTERVALS:
            return DEFAULT_INTERVALS[self.family]
        raise ConfigError("family = expression needs an explicit interval")

    @property
    def summary_path(self) -> str:
        if self.summary:
            return self.summary
        return str(Path(self.csv).with_suffix(".summary.txt")) if self.csv else ""


def demo_config(name: str) -> ScenarioConfig:
    """Default scenarios of the two benchmarks (30 s runs)."""
    if name == "furuta":
        return ScenarioConfig()
    if name == "pendubot":
        return ScenarioConfig(
            system="pendubot",
            family="pendubot-k2",
            k=-1.0,
            gamma1=10.0,
            gamma2=5.0,
            x0=(np.pi / 3, np.pi / 1.5, 0.0, 0.0),
        )
    raise ConfigError(f"unknown demo {name!r} (furuta or pendubot)")


# -- parsing --------------------------------------------------------------------------------

def parse_number(text: str) -> float:
    """A float, possibly written as arithmetic in ``pi`` (e.g. ``pi/9``)."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    expr = parse_expression(text, ())
    if expr.free_symbols:
        raise ConfigError(f"not a number: {text!r}")
    try:
        value = float(expr)
    except (TypeError, ValueError):
        raise ConfigError(f"not a real number: {text!r}") from None
    if not np.isfinite(value):
        raise ConfigError(f"not a finite number: {text!r}")
    return value


def parse_vector(text: str, n: int | None = None) -> tuple[float, ...]:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    values = tuple(parse_number(p) for p in parts)
    if n is not None and len(values) != n:
        raise ConfigError(f"expected {n} values, got {len(values)} in {text!r}")
    return values


def _reader() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # parameter names are case sensitive
    return cp


_KNOWN = {
    "system": {"name", "custom_file"},
    "params": None,
    "custom": set(CUSTOM_KEYS),
    "synthesis": {"family", "k", "k1", "k2", "K", "dK", "s_frak", "gamma1", "gamma2", "interval", "period",
                  "slope_factor"},
    "initial": {"x0"},
    "integrator": {"method", "h", "rtol", "atol", "t_end", "stride", "h_max", "representation"},
    "output": {"csv", "summary", "tail_fraction"},
}


def loads(text: str, base_dir: Path | None = None) -> ScenarioConfig:
    cp = _reader()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from None
    for sec in cp.sections():
        if sec not in _KNOWN:
            raise ConfigError(f"unknown section [{sec}]")
        allowed = _KNOWN[sec]
        if allowed is not None:
            extra = set(cp[sec]) - allowed
            if extra:
                raise ConfigError(f"unknown keys in [{sec}]: {sorted(extra)}")

    def get(sec, key, default=None):
        return cp[sec][key].strip() if cp.has_option(sec, key) else default

    kw: dict = {}
    system = get("system", "name", "furuta")
    kw["system"] = system
    if cp.has_section("params"):
        kw["params"] = tuple((k, parse_number(v)) for k, v in cp["params"].items())

    custom = dict(cp["custom"]) if cp.has_section("custom") else {}
    cfile = get("system", "custom_file")
    if cfile:
        path = Path(cfile)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"custom system file not found: {path}")
        other = _reader()
        try:
            other.read_string(path.read_text())
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not other.has_section("custom"):
            raise ConfigError(f"{path}: needs a [custom] section")
        custom = {**dict(other["custom"]), **custom}
        if other.has_section("params"):
            extra = tuple((k, parse_number(v)) for k, v in other["params"].items())
            kw["params"] = extra + tuple(p for p in kw.get("params", ()) if p[0] not in dict(extra))
    if custom:
        kw["custom"] = tuple((k, custom[k].strip()) for k in CUSTOM_KEYS if k in custom)

    if system not in DEFAULT_FAMILY:
        raise ConfigError(f"system must be one of {SYSTEMS}, got {system!r}")
    kw["family"] = get("synthesis", "family", DEFAULT_FAMILY[system])
    k_keys = [key for key in ("k", "k1", "k2") if cp.has_option("synthesis", key)]
    if len(k_keys) > 1:
        raise ConfigError("give only one of k, k1, k2")
    if k_keys:
        kw["k"] = parse_number(get("synthesis", k_keys[0]))
    elif kw["family"] == "pendubot-k2":
        kw["k"] = -1.0
    for key, attr in (("K", "K_expr"), ("dK", "dK_expr"), ("s_frak", "s_frak_expr")):
        if cp.has_option("synthesis", key):
            kw[attr] = get("synthesis", key)
    for key in ("gamma1", "gamma2", "period", "slope_factor"):
        if cp.has_option("synthesis", key):
            kw[key] = parse_number(get("synthesis", key))
    if cp.has_option("synthesis", "interval"):
        kw["interval"] = parse_vector(get("synthesis", "interval"), 2)
    if cp.has_option("initial", "x0"):
        kw["x0"] = parse_vector(get("initial", "x0"), 4)

    integ = {}
    for key in ("h", "rtol", "atol", "t_end", "h_max"):
        if cp.has_option("integrator", key):
            integ[key] = parse_number(get("integrator", key))
    if cp.has_option("integrator", "method"):
        integ["method"] = get("integrator", "method")
    if cp.has_option("integrator", "stride"):
        try:
            integ["stride"] = int(get("integrator", "stride"))
        except ValueError:
            raise ConfigError("stride must be an integer") from None
    try:
        kw["integrator"] = IntegratorConfig(**integ)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cp.has_option("integrator", "representation"):
        kw["representation"] = get("integrator", "representation")
    for key in ("csv", "summary"):
        if cp.has_option("output", key):
            kw[key] = get("output", key)
    if cp.has_option("output", "tail_fraction"):
        kw["tail_fraction"] = parse_number(get("output", "tail_fraction"))
    return ScenarioConfig(**kw)


def load(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    return loads(path.read_text(), base_dir=path.parent)


def dumps(cfg: ScenarioConfig) -> str:
    """Serialise with full float precision; ``loads(dumps(c)) == c``."""
    num = repr
    cp = _reader()
    cp["system"] = {"name": cfg.system}
    if cfg.params:
        cp["params"] = {k: num(v) for k, v in cfg.params}
    if cfg.custom:
        cp["custom"] = dict(cfg.custom)
    syn = {"family": cfg.family, "k": num(cfg.k), "gamma1": num(cfg.gamma1), "gamma2": num(cfg.gamma2)}
    if cfg.K_expr:
        syn["K"] = cfg.K_expr
    if cfg.dK_expr:
        syn["dK"] = cfg.dK_expr
    if cfg.s_frak_expr:
        syn["s_frak"] = cfg.s_frak_expr
    if cfg.interval is not None:
        syn["interval"] = ", ".join(num(v) for v in cfg.interval)
    if cfg.period is not None:
        syn["period"] = num(cfg.period)
    if cfg.slope_factor != 1.0:
        syn["slope_factor"] = num(cfg.slope_factor)
    cp["synthesis"] = syn
    cp["initial"] = {"x0": ", ".join(num(float(v)) for v in cfg.x0)}
    ic = cfg.integrator
    integ = {"method": ic.method, "h": num(ic.h), "rtol": num(ic.rtol), "atol": num(ic.atol),
             "t_end": num(ic.t_end), "stride": str(ic.stride), "representation": cfg.representation}
    if np.isfinite(ic.h_max):
        integ["h_max"] = num(ic.h_max)
    cp["integrator"] = integ
    out = {"tail_fraction": num(cfg.tail_fraction)}
    if cfg.csv:
        out["csv"] = cfg.csv
    if cfg.summary:
        out["summary"] = cfg.summary
    cp["output"] = out
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# -- building -------------------------------------------------------------------------------

def build_system(cfg: ScenarioConfig) -> MechanicalSystem:
    params = dict(cfg.params)
    try:
        if cfg.system == "furuta":
            base = {**FURUTA_PARAMS, "g": G_DEFAULT}
            _check_overrides(params, base)
            return furuta_system(**{**base, **params})
        if cfg.system == "pendubot":
            base = {**PENDUBOT_PARAMS, "g": G_DEFAULT}
            _check_overrides(params, base)
            return pendubot_system(**{**base, **params})
        c = dict(cfg.custom)
        return system_from_expressions("custom", c["m_uu"], c["m_au"], c["m_aa"], c["V"], params)
    except ConfigError:
        raise
    except (IIOrbitError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot build system: {exc}") from None


def _check_overrides(params, base):
    unknown = set(params) - set(base)
    if unknown:
        raise ConfigError(f"unknown parameters {sorted(unknown)}; known: {sorted(base)}")


def build_scenario(cfg: ScenarioConfig) -> tuple[MechanicalSystem, SynthesisProfile]:
    """System and synthesized controller for ``cfg``; invalid choices raise ConfigError."""
    sys = build_system(cfg)
    interval = cfg.operating_interval
    try:
        if cfg.family == "furuta-k1":
            gen, s = furuta_generator(sys, cfg.k)
        elif cfg.family == "pendubot-k2":
            gen, s = pendubot_generator(sys, cfg.k)
        else:
            gen, s = expression_generator(
                sys, interval, K=cfg.K_expr or None, dK=cfg.dK_expr or None,
                s_frak=cfg.s_frak_expr or None, params=dict(cfg.params),
            )
        period = cfg.period
        if period is None and cfg.family == "pendubot-k2" and interval[1] - interval[0] >= 2.0 * np.pi:
            period = 2.0 * np.pi
        profile = make_profile(
            sys, gen, s, cfg.gamma1, cfg.gamma2, interval, period=period,
            meta={"family": cfg.family, "k": cfg.k},
        )
    except KeyError as exc:
        raise ConfigError(f"family {cfg.family} needs system parameter {exc}") from None
    except (IIOrbitError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid synthesis: {exc}") from None
    if cfg.slope_factor != 1.0:
        from .verify import perturb_slope

        profile = perturb_slope(profile, cfg.slope_factor)
    return sys, profile
