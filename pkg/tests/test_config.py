import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iiorbit.config import ScenarioConfig, build_scenario, demo_config, dumps, load, loads, parse_number, parse_vector
from iiorbit.errors import ConfigError
from iiorbit.integrators import IntegratorConfig

finite = st.floats(-10, 10, allow_nan=False)
positive = st.floats(0.01, 100, allow_nan=False)


def test_parse_number():
    assert parse_number("pi/9") == pytest.approx(np.pi / 9)
    assert parse_number(" 2*pi - 1 ") == pytest.approx(2 * np.pi - 1)
    assert parse_number("1e-3") == 1e-3
    for bad in ("x1", "1/0", "__import__('os')"):
        with pytest.raises((ConfigError, ValueError)):
            parse_number(bad)


def test_parse_vector():
    assert parse_vector("pi/3, pi/1.5, 0, 0", 4) == pytest.approx((np.pi / 3, 2 * np.pi / 3, 0, 0))
    with pytest.raises(ConfigError, match="expected 4"):
        parse_vector("1, 2", 4)


def test_demo_configs():
    f = demo_config("furuta")
    assert f.x0 == pytest.approx((np.pi / 9, 0.6, 0, 0)) and (f.gamma1, f.gamma2, f.k) == (5, 5, 5)
    p = demo_config("pendubot")
    assert p.x0 == pytest.approx((np.pi / 3, 2 * np.pi / 3, 0, 0)) and (p.gamma1, p.gamma2, p.k) == (10, 5, -1)
    assert p.operating_interval == pytest.approx((-np.pi, 3 * np.pi))
    with pytest.raises(ConfigError):
        demo_config("acrobot")


def test_load_example_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        """
[system]
name = pendubot

[synthesis]
k2 = -1          # K = x1
gamma1 = 10
gamma2 = 5

[initial]
x0 = pi/3, pi/1.5, 0, 0

[integrator]
t_end = 12
representation = zx

[output]
csv = out/p.csv
"""
    )
    cfg = load(path)
    assert cfg.system == "pendubot" and cfg.family == "pendubot-k2" and cfg.k == -1.0
    assert cfg.integrator.t_end == 12.0 and cfg.representation == "zx"
    assert cfg.summary_path == "out/p.summary.txt"
    sys_, prof = build_scenario(cfg)
    assert prof.K(1.0) == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(
    system=st.sampled_from(["furuta", "pendubot"]),
    k=finite,
    g1=positive,
    g2=positive,
    x0=st.tuples(finite, finite, finite, finite),
    t_end=positive,
    rtol=st.floats(1e-13, 1e-3),
    stride=st.integers(1, 50),
    rep=st.sampled_from(["el", "spong", "zx"]),
    tail=st.floats(0.01, 1.0),
    interval=st.one_of(st.none(), st.tuples(st.floats(-3, -0.1), st.floats(0.1, 3))),
    csv=st.sampled_from(["", "out/run.csv"]),
)
def test_round_trip(system, k, g1, g2, x0, t_end, rtol, stride, rep, tail, interval, csv):
    cfg = ScenarioConfig(
        system=system, family=f"{system}-k{1 if system == 'furuta' else 2}", k=k, gamma1=g1, gamma2=g2,
        x0=x0, integrator=IntegratorConfig(rtol=rtol, t_end=t_end, stride=stride), representation=rep,
        tail_fraction=tail, interval=interval, csv=csv, params=(("g", 9.80665),),
    )
    assert loads(dumps(cfg)) == cfg


def test_round_trip_custom_expressions():
    cfg = ScenarioConfig(
        system="custom", family="expression", dK_expr="1",
        custom=(("m_uu", "c2"), ("m_au", "c2 + c3*cos(x1)"), ("m_aa", "c1"), ("V", "-c4*g*cos(x2)")),
        params=(("c1", 0.3), ("c2", 0.002), ("c3", 0.001), ("c4", 0.03), ("g", 9.81)), interval=(-1.0, 1.0),
    )
    assert loads(dumps(cfg)) == cfg


@pytest.mark.parametrize(
    "text,msg",
    [
        ("[bogus]\nx = 1\n", "unknown section"),
        ("[synthesis]\nkk = 1\n", "unknown keys"),
        ("[synthesis]\nk1 = 1\nk2 = 2\n", "only one"),
        ("[synthesis]\ngamma1 = -1\n", "gains"),
        ("[initial]\nx0 = 1, 2, 3\n", "expected 4"),
        ("[integrator]\nmethod = euler\n", "unknown method"),
        ("[integrator]\nstride = 1.5\n", "integer"),
        ("[integrator]\nrepresentation = polar\n", "representation"),
        ("[system]\nname = acrobot\n", "system must be"),
        ("[output]\ntail_fraction = 0\n", "tail_fraction"),
        ("[synthesis]\ninterval = 1, -1\n", "interval"),
        ("no section here\n", "unparseable"),
        ("[system]\nname = custom\n", "custom"),
    ],
)
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        loads(text)


def test_missing_files(tmp_path):
    with pytest.raises(ConfigError, match="no such"):
        load(tmp_path / "none.ini")
    (tmp_path / "a.ini").write_text("[system]\nname = custom\ncustom_file = sys.ini\n[synthesis]\ndK = 1\n")
    with pytest.raises(ConfigError, match="not found"):
        load(tmp_path / "a.ini")


def test_custom_system_file(tmp_path, pendubot_prof):
    (tmp_path / "sys.ini").write_text(
        """
[custom]
m_uu = c2
m_au = c2 + c3*cos(x1)
m_aa = c1 + c2 + 2*c3*cos(x1)
V = -c4*g*cos(x2) - c5*g*cos(x2 + x1)

[params]
c1 = 0.34346
c2 = 0.00234
c3 = 0.00156
c4 = 0.0364
c5 = 0.0078
g = 9.81
"""
    )
    (tmp_path / "run.ini").write_text(
        "[system]\nname = custom\ncustom_file = sys.ini\n"
        "[synthesis]\ndK = 1\ninterval = -pi, 3*pi\nperiod = 2*pi\ngamma1 = 10\ngamma2 = 5\n"
    )
    cfg = load(tmp_path / "run.ini")
    _, prof = build_scenario(cfg)
    x1 = np.linspace(-2, 8, 21)
    assert np.allclose(prof.mass_m(x1), pendubot_prof.mass_m(x1), rtol=1e-9)
    assert np.allclose(prof.potential_U(x1), pendubot_prof.potential_U(x1), rtol=1e-8, atol=1e-9)


def test_build_errors():
    with pytest.raises(ConfigError, match="unknown parameters"):
        build_scenario(ScenarioConfig(params=(("mass", 1.0),)))
    with pytest.raises(ConfigError, match="cannot build"):
        build_scenario(ScenarioConfig(params=(("J", -1.0),)))
    with pytest.raises(ConfigError, match="invalid synthesis"):
        build_scenario(ScenarioConfig(interval=(-1.6, 1.6)))
    with pytest.raises(ConfigError, match="explicit interval"):
        ScenarioConfig(system="pendubot", family="expression", dK_expr="1").operating_interval


def test_short_pendubot_interval_has_no_period():
    _, prof = build_scenario(demo_config("pendubot").replace(interval=(-1.0, 1.0)))
    assert prof.log_m.period is None


def test_slope_factor_mutates_profile():
    _, base = build_scenario(demo_config("furuta"))
    _, bad = build_scenario(demo_config("furuta").replace(slope_factor=1.01))
    assert bad.dK(0.3) == pytest.approx(1.01 * base.dK(0.3))
    with pytest.raises(ConfigError):
        demo_config("furuta").replace(slope_factor=0.0)
    with pytest.raises(ConfigError):
        demo_config("furuta").with_integrator(t_end=-1.0)
