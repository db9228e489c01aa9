import math

import pytest

from lpv_lanekeep.config import DEFAULT_CONFIG, ConfigError, load_config, parse_config
from lpv_lanekeep.simulator import KMH


def test_defaults_parse():
    s = parse_config()
    assert s.m == 3 and s.T == 0.01 and s.collect_dt == 0.002
    assert [p.name for p in s.scenarios] == ["ramp", "curvy-85", "sweep-65", "interchange-90"]
    assert s.synthesis.alpha == 3.5 and s.synthesis.design_alpha == 4.0
    assert s.gamma_auto
    assert s.params.phi_max == 0.017
    assert s.sim.cruise == pytest.approx(80 * KMH)
    assert s.lti_speed == pytest.approx(50 * KMH)
    assert s.road.heading(s.road.length) == pytest.approx(math.pi + 0.5)


def test_default_text_equals_defaults():
    assert parse_config(DEFAULT_CONFIG) == parse_config()


def test_overrides_apply():
    s = parse_config("""
[vehicle]
phi_max = 0.02
[reduction]
m = 2
[synthesis]
gamma = 0.03     # fixed bound
synth_alpha = 5
[simulation]
speed_control = no
radius = 100
""")
    assert s.params.phi_max == 0.02 and s.m == 2
    assert not s.gamma_auto and s.synthesis.gamma == 0.03
    assert s.synthesis.design_alpha == 5.0
    assert not s.sim.speed_control
    assert s.road.max_abs_curvature == pytest.approx(0.01)


def test_keys_are_case_insensitive():
    assert parse_config("[vehicle]\nk_roll = 90000\n").params.K_roll == 90000.0


def test_helpers():
    s = parse_config()
    assert s.with_seed(7).sim.seed == 7
    assert s.with_m(5).m == 5
    assert not s.with_speed_control(False).sim.speed_control
    with pytest.raises(ConfigError):
        s.with_m(0)


@pytest.mark.parametrize("text", [
    "[vehicle]\nmass = 3\n",
    "[wheels]\nx = 1\n",
    "[vehicle]\nm = heavy\n",
    "[vehicle]\nm = -5\n",
    "[vehicle]\nm = inf\n",
    "[vehicle]\nsmall_angle = maybe\n",
    "[collection]\nscenarios =\n",
    "[collection]\nscenarios = moon\n",
    "[collection]\nT = 0.003\n",
    "[reduction]\nm = 6\n",
    "[synthesis]\nalpha = 0\n",
    "[synthesis]\nstate_scale = 1, 2\n",
    "[synthesis]\nblock22 = zero\n",
    "[simulation]\nctrl_dt = 0.0015\n",
    "[simulation]\ncruise_kmh = 0\n",
    "no section header\n",
])
def test_bad_config_raises(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[reduction]\nm = 4\n")
    s = load_config(path)
    assert s.m == 4 and s.source == str(path)
    assert load_config(None) == parse_config()
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
