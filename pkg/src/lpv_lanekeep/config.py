"""Run configuration: ``key = value`` pairs in ``[sections]`` with ``#`` comments.

The complete default configuration is embedded in :data:`DEFAULT_CONFIG`;
a user file only needs the keys it changes. Command-line flags override
both.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .controller import SynthesisConfig
from .simulator import KMH, DrivingProfile, RoadProfile, SimConfig, default_collection_scenarios
from .vehicle_model import ParameterError, VehicleParams

__all__ = ["ConfigError", "Settings", "DEFAULT_CONFIG", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


DEFAULT_CONFIG = """\
[vehicle]
m = 1650.0
m_s = 1400.0
I_z = 2900.0
I_x = 600.0
l_f = 1.2
l_r = 1.5
L = 5.0                # look-ahead distance [m]
h_rc = 0.45
K_roll = 95000.0
C_roll = 6000.0
g = 9.81
C_af0 = 65000.0
C_ar0 = 65000.0
phi_max = 0.017        # roll angle the speed cap aims for [rad]
track = 1.6
h_ra = 0.25
roll_share_front = 0.55
droop_gain = 0.6
droop_floor = 0.5
small_angle = false

[collection]
T = 0.01               # sampling period [s]
dt = 0.002             # plant step during collection [s]
scenarios = ramp, curvy-85, sweep-65, interchange-90

[reduction]
m = 3
cond_cap = 1e8

[synthesis]
alpha = 3.5            # decay rate proved by the certificate
synth_alpha =          # decay rate imposed in design; empty means alpha + 0.5
gamma = auto           # perturbation bound; auto estimates it from the training data
gain_cap = 10.0
rel_margin = 1e-7
block22 = tau
budget = 20000
state_scale = 0.5, 1.0, 0.05, 0.1
lti_speed_kmh = 50.0

[simulation]
radius = 80.0
straight = 150.0
blend = 40.0
sweep_deg = 180.0
cruise_kmh = 80.0
v_init_kmh = 80.0
speed_control = true
dt = 0.001
ctrl_dt = 0.01
decel = 1.5
kp = 1.2
kd = 0.05
a_min = -4.0
a_max = 2.0
delta_max = 0.5
roll_limit = 0.35
noise_std = 0.0
seed = 0
"""


@dataclass(frozen=True)
class Settings:
    params: VehicleParams = field(default_factory=VehicleParams)
    scenarios: tuple[DrivingProfile, ...] = ()
    T: float = 0.01
    collect_dt: float = 0.002
    m: int = 3
    cond_cap: float = 1e8
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    gamma_auto: bool = True
    lti_speed: float = 50.0 * KMH
    road: RoadProfile = field(default_factory=RoadProfile.interchange)
    sim: SimConfig = field(default_factory=SimConfig)
    source: str = "<defaults>"

    def with_seed(self, seed: int) -> "Settings":
        return replace(self, sim=replace(self.sim, seed=int(seed)))

    def with_m(self, m: int) -> "Settings":
        if not 1 <= int(m) <= 5:
            raise ConfigError(f"m must lie in 1..5, got {m}")
        return replace(self, m=int(m))

    def with_speed_control(self, on: bool) -> "Settings":
        return replace(self, sim=replace(self.sim, speed_control=bool(on)))


def _float(sec, key: str) -> float:
    try:
        value = float(sec[key])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[{sec.name}] {key}: expected a number, got {sec.get(key)!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"[{sec.name}] {key} must be finite")
    return value


def _bool(sec, key: str) -> bool:
    try:
        return sec.getboolean(key)
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key}: expected true/false") from exc


def _vehicle(sec) -> VehicleParams:
    kwargs = {}
    for f in fields(VehicleParams):
        if f.name in sec:
            kwargs[f.name] = _bool(sec, f.name) if f.name == "small_angle" else _float(sec, f.name)
    unknown = set(sec) - {f.name.lower() for f in fields(VehicleParams)}
    if unknown:
        raise ConfigError(f"[vehicle] unknown keys: {', '.join(sorted(unknown))}")
    try:
        return VehicleParams(**kwargs)
    except ParameterError as exc:
        raise ConfigError(f"[vehicle] {exc}") from exc


def _scenarios(sec) -> tuple[DrivingProfile, ...]:
    names = [n.strip() for n in sec.get("scenarios", "").split(",") if n.strip()]
    if not names:
        raise ConfigError("[collection] scenarios: at least one scenario is required")
    known = {p.name: p for p in default_collection_scenarios()}
    missing = [n for n in names if n not in known]
    if missing:
        raise ConfigError(f"[collection] unknown scenarios {missing}; choose from {sorted(known)}")
    return tuple(known[n] for n in names)


def _synthesis(sec) -> tuple[SynthesisConfig, bool, float]:
    raw_gamma = sec.get("gamma", "auto").strip().lower()
    gamma_auto = raw_gamma == "auto"
    synth_alpha = sec.get("synth_alpha", "").strip()
    try:
        scale = tuple(float(v) for v in sec.get("state_scale").split(","))
        cfg = SynthesisConfig(
            alpha=_float(sec, "alpha"),
            gamma=0.0 if gamma_auto else _float(sec, "gamma"),
            gain_cap=_float(sec, "gain_cap"),
            rel_margin=_float(sec, "rel_margin"),
            synth_alpha=float(synth_alpha) if synth_alpha else None,
            block22=sec.get("block22").strip(),
            budget=int(sec.get("budget")),
            state_scale=scale)
    except ValueError as exc:
        raise ConfigError(f"[synthesis] {exc}") from exc
    return cfg, gamma_auto, _float(sec, "lti_speed_kmh") * KMH


def _simulation(sec) -> tuple[RoadProfile, SimConfig]:
    try:
        road = RoadProfile.interchange(radius=_float(sec, "radius"), straight=_float(sec, "straight"),
                                       sweep=math.radians(_float(sec, "sweep_deg")),
                                       blend=_float(sec, "blend"))
        sim = SimConfig(dt=_float(sec, "dt"), ctrl_dt=_float(sec, "ctrl_dt"),
                        v_init=_float(sec, "v_init_kmh") * KMH,
                        cruise=_float(sec, "cruise_kmh") * KMH,
                        speed_control=_bool(sec, "speed_control"),
                        decel=_float(sec, "decel"), kp=_float(sec, "kp"), kd=_float(sec, "kd"),
                        a_min=_float(sec, "a_min"), a_max=_float(sec, "a_max"),
                        delta_max=_float(sec, "delta_max"), roll_limit=_float(sec, "roll_limit"),
                        noise_std=_float(sec, "noise_std"), seed=int(_float(sec, "seed")))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[simulation] {exc}") from exc
    if not sim.v_init > 0 or not sim.cruise > 0:
        raise ConfigError("[simulation] speeds must be > 0")
    return road, sim


def parse_config(text: str | None = None, source: str = "<defaults>") -> Settings:
    """Defaults overlaid with ``text`` (same format as :data:`DEFAULT_CONFIG`)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str.lower
    cp.read_string(DEFAULT_CONFIG)
    if text:
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from exc
    expected = {"vehicle", "collection", "reduction", "synthesis", "simulation"}
    extra = set(cp.sections()) - expected
    if extra:
        raise ConfigError(f"{source}: unknown sections {sorted(extra)}")
    params = _vehicle(cp["vehicle"])
    col = cp["collection"]
    red = cp["reduction"]
    synth, gamma_auto, lti_speed = _synthesis(cp["synthesis"])
    road, sim = _simulation(cp["simulation"])
    m = int(_float(red, "m"))
    if not 1 <= m <= 5:
        raise ConfigError(f"[reduction] m must lie in 1..5, got {m}")
    T, cdt = _float(col, "T"), _float(col, "dt")
    if not (T > 0 and cdt > 0) or abs(T / cdt - round(T / cdt)) > 1e-9:
        raise ConfigError("[collection] T and dt must be > 0 with T a multiple of dt")
    return Settings(params=params, scenarios=_scenarios(col), T=T, collect_dt=cdt, m=m,
                    cond_cap=_float(red, "cond_cap"), synthesis=synth, gamma_auto=gamma_auto,
                    lti_speed=lti_speed, road=road, sim=sim, source=source)


def load_config(path: str | Path | None = None) -> Settings:
    if path is None:
        return parse_config()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))
