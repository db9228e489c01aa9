"""Closed-loop desk simulation: road geometry, coupled lateral/roll plant, metrics.

The plant integrates the lateral error model with the true, continuously
varying speed and cornering stiffness, the 1-DOF roll model and a point-mass
longitudinal channel with fixed-step RK4. The controller runs at its own
period with zero-order hold.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .vehicle_model import (RoadSignals, RollState, VehicleParams, desired_speed,
                            plant_stiffness)

__all__ = [
    "SimulationDivergence",
    "RoadProfile",
    "SimConfig",
    "SimLog",
    "Metrics",
    "DrivingProfile",
    "road_signals",
    "global_pose_update",
    "speed_plan",
    "longitudinal_pd",
    "run",
    "compute_metrics",
    "sample_scenario",
    "default_collection_scenarios",
    "LOG_COLUMNS",
]

KMH = 1.0 / 3.6


class SimulationDivergence(RuntimeError):
    def __init__(self, message: str, last_good_time: float):
        super().__init__(f"{message} (last good t = {last_good_time:.3f} s)")
        self.last_good_time = last_good_time


# ---------------------------------------------------------------------------
# road

@dataclass(frozen=True)
class RoadProfile:
    """Piecewise-constant curvature segments joined by linear-curvature blends.

    A blend of length ``blend`` is inserted between consecutive segments whose
    curvatures differ.
    """

    segments: tuple[tuple[float, float], ...]
    blend: float = 40.0

    def __post_init__(self) -> None:
        segs = tuple((float(l), float(k)) for l, k in self.segments)
        if not segs:
            raise ValueError("road needs at least one segment")
        if any(not l > 0 for l, _ in segs):
            raise ValueError("segment lengths must be > 0")
        if self.blend < 0:
            raise ValueError("blend length must be >= 0")
        object.__setattr__(self, "segments", segs)
        knots, k_start, k_end = [0.0], [], []
        s = 0.0
        prev_k = segs[0][1]
        for length, kappa in segs:
            if kappa != prev_k and self.blend > 0:
                s += self.blend
                knots.append(s)
                k_start.append(prev_k)
                k_end.append(kappa)
            s += length
            knots.append(s)
            k_start.append(kappa)
            k_end.append(kappa)
            prev_k = kappa
        heading = [0.0]
        for i in range(len(k_start)):
            ds = knots[i + 1] - knots[i]
            heading.append(heading[-1] + 0.5 * (k_start[i] + k_end[i]) * ds)
        object.__setattr__(self, "_knots", knots)
        object.__setattr__(self, "_k0", k_start)
        object.__setattr__(self, "_k1", k_end)
        object.__setattr__(self, "_heading", heading)

    @classmethod
    def interchange(cls, radius: float = 80.0, straight: float = 150.0,
                    sweep: float = math.pi, blend: float = 40.0) -> "RoadProfile":
        return cls(((straight, 0.0), (radius * sweep, 1.0 / radius), (straight, 0.0)), blend)

    @property
    def length(self) -> float:
        return self._knots[-1]

    @property
    def max_abs_curvature(self) -> float:
        return max(abs(k) for _, k in self.segments)

    def max_kappa_rate(self) -> float:
        """Largest ``|d kappa / ds|`` over the blends (``inf`` for unblended jumps)."""
        rate = 0.0
        for i in range(len(self._k0)):
            dk = abs(self._k1[i] - self._k0[i])
            if dk:
                rate = max(rate, dk / (self._knots[i + 1] - self._knots[i]))
        kappas = [k for _, k in self.segments]
        if self.blend == 0 and any(a != b for a, b in zip(kappas, kappas[1:])):
            return math.inf
        return rate

    def _piece(self, s: float) -> int:
        i = bisect.bisect_right(self._knots, s) - 1
        return min(max(i, 0), len(self._k0) - 1)

    def curvature(self, s: float) -> float:
        if s <= 0.0:
            return self._k0[0]
        if s >= self.length:
            return self._k1[-1]
        i = self._piece(s)
        s0, s1 = self._knots[i], self._knots[i + 1]
        return self._k0[i] + (self._k1[i] - self._k0[i]) * (s - s0) / (s1 - s0)

    def heading(self, s: float) -> float:
        """Road heading at arc length ``s`` (exact integral of the curvature)."""
        if s <= 0.0:
            return self._k0[0] * s
        if s >= self.length:
            return self._heading[-1] + self._k1[-1] * (s - self.length)
        i = self._piece(s)
        s0, s1 = self._knots[i], self._knots[i + 1]
        u = s - s0
        k0, k1 = self._k0[i], self._k1[i]
        return self._heading[i] + k0 * u + 0.5 * (k1 - k0) * u * u / (s1 - s0)

    def centerline(self, ds: float = 0.5) -> np.ndarray:
        """``(n, 3)`` samples of ``(X, Y, heading)`` along the lane centre."""
        n = int(math.ceil(self.length / ds)) + 1
        s = np.linspace(0.0, self.length, n)
        psi = np.array([self.heading(v) for v in s])
        mid = np.array([self.heading(v) for v in 0.5 * (s[1:] + s[:-1])])
        h = np.diff(s)
        # Simpson on each interval
        dx = h / 6.0 * (np.cos(psi[:-1]) + 4 * np.cos(mid) + np.cos(psi[1:]))
        dy = h / 6.0 * (np.sin(psi[:-1]) + 4 * np.sin(mid) + np.sin(psi[1:]))
        X = np.concatenate([[0.0], np.cumsum(dx)])
        Y = np.concatenate([[0.0], np.cumsum(dy)])
        return np.column_stack([X, Y, psi])


def road_signals(road: RoadProfile, s: float, Vx: float, L: float) -> RoadSignals:
    """Desired yaw rate and look-ahead heading change at arc position ``s``.

    Positions past the end of the road reuse the final segment's curvature.
    """
    kappa = road.curvature(s)
    return RoadSignals(psi_dot_des=Vx * kappa,
                       heading_lookahead=road.heading(s + L) - road.heading(s),
                       kappa=kappa)


def global_pose_update(pose, Vx: float, psi_dot: float, dt: float, v_y: float = 0.0):
    """One RK4 step of planar kinematics with inputs held constant over ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    X, Y, psi = pose

    def f(p):
        return (Vx * math.cos(p) - v_y * math.sin(p), Vx * math.sin(p) + v_y * math.cos(p))

    k1 = f(psi)
    k2 = f(psi + 0.5 * dt * psi_dot)
    k4 = f(psi + dt * psi_dot)
    # k3 == k2 because the heading stage does not depend on X, Y
    X += dt / 6.0 * (k1[0] + 4.0 * k2[0] + k4[0])
    Y += dt / 6.0 * (k1[1] + 4.0 * k2[1] + k4[1])
    return (X, Y, psi + dt * psi_dot)


# ---------------------------------------------------------------------------
# longitudinal channel

def longitudinal_pd(Vx: float, Vx_des: float, prev_error: float | None, dt: float,
                    kp: float = 1.2, kd: float = 0.05,
                    a_min: float = -4.0, a_max: float = 2.0) -> float:
    """PD speed tracking, saturated to ``[a_min, a_max]``."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    e = Vx_des - Vx
    de = 0.0 if prev_error is None else (e - prev_error) / dt
    return min(a_max, max(a_min, kp * e + kd * de))


def speed_plan(road: RoadProfile, params: VehicleParams, cruise: float,
               decel: float = 1.5, ds: float = 0.5) -> Callable[[float], float]:
    """Speed reference ``s -> v`` honouring the rollover cap with a braking envelope.

    ``v(s) = min over s' >= s of sqrt(cap(s')**2 + 2*decel*(s' - s))`` with
    ``cap`` from :func:`desired_speed` on the local radius.
    """
    n = int(math.ceil(road.length / ds)) + 1
    grid = np.linspace(0.0, road.length, n)
    caps = np.empty(n)
    for i, s in enumerate(grid):
        k = abs(road.curvature(s))
        caps[i] = desired_speed(1.0 / k if k > 0 else math.inf, params, cruise)
    # backward pass: v_i = min(cap_i, sqrt(v_{i+1}^2 + 2 a ds))
    plan = caps.copy()
    for i in range(n - 2, -1, -1):
        plan[i] = min(plan[i], math.sqrt(plan[i + 1] ** 2 + 2.0 * decel * (grid[i + 1] - grid[i])))
    step = grid[1] - grid[0] if n > 1 else 1.0

    def v_ref(s: float) -> float:
        if s <= 0.0:
            return float(plan[0])
        if s >= road.length:
            return float(plan[-1])
        j = int(s / step)
        j = min(j, n - 2)
        w = (s - grid[j]) / step
        return float((1 - w) * plan[j] + w * plan[j + 1])

    return v_ref


# ---------------------------------------------------------------------------
# configuration / log / metrics

@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.001
    ctrl_dt: float = 0.01
    duration: float | None = None
    v_init: float = 80.0 * KMH
    cruise: float = 80.0 * KMH
    controller: str = "lpv"
    speed_control: bool = True
    decel: float = 1.5
    kp: float = 1.2
    kd: float = 0.05
    a_min: float = -4.0
    a_max: float = 2.0
    delta_max: float = 0.5
    roll_limit: float = 0.35
    noise_std: float = 0.0
    seed: int = 0
    x0: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    steady_window: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not self.dt > 0 or not self.ctrl_dt > 0:
            raise ValueError("dt and ctrl_dt must be > 0")
        if self.duration is not None and not self.duration > 0:
            raise ValueError("duration must be > 0")
        ratio = self.ctrl_dt / self.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("ctrl_dt must be an integer multiple of dt")
        if self.controller not in ("lpv", "lti", "custom"):
            raise ValueError("controller must be 'lpv' or 'lti'")


LOG_COLUMNS = ("t", "e_yL", "ey_dot", "e_psi", "psi_dot", "phi", "vx", "delta", "ax",
               "caf", "car", "xi1", "xi2", "xi3", "xi4", "oohull", "X", "Y", "psi")


@dataclass
class SimLog:
    """Time series sampled at the controller period."""

    t: np.ndarray
    x: np.ndarray        # (n, 4) lateral state
    roll: np.ndarray     # (n, 2) phi, phi_dot
    vx: np.ndarray
    delta: np.ndarray
    ax: np.ndarray
    caf: np.ndarray
    car: np.ndarray
    theta: np.ndarray    # (n, 5)
    eta: np.ndarray      # (n, m) (may have zero columns)
    xi: np.ndarray       # (n, n_vertices) (may have zero columns)
    oohull: np.ndarray   # (n,) bool
    pose: np.ndarray     # (n, 3) X, Y, psi
    s: np.ndarray
    aborted: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    def to_csv(self, path: str | Path) -> None:
        n_xi = 4
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for k in range(len(self)):
                xi = list(self.xi[k]) if self.xi.shape[1] else []
                xi = (xi + [0.0] * n_xi)[:n_xi]
                row = [self.t[k], *self.x[k], self.roll[k, 0], self.vx[k], self.delta[k],
                       self.ax[k], self.caf[k], self.car[k], *xi, int(self.oohull[k]),
                       *self.pose[k]]
                w.writerow([f"{v:.17g}" if isinstance(v, float) else str(v) for v in
                            (float(r) if not isinstance(r, int) else r for r in row)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "SimLog":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != LOG_COLUMNS:
                raise ValueError(f"{path}: not a simulation log (bad header)")
            rows = [[float(v) for v in r] for r in reader if r]
        if not rows:
            raise ValueError(f"{path}: empty simulation log")
        d = np.array(rows)
        col = {name: d[:, i] for i, name in enumerate(LOG_COLUMNS)}
        n = d.shape[0]
        return cls(t=col["t"], x=d[:, 1:5], roll=np.column_stack([col["phi"], np.zeros(n)]),
                   vx=col["vx"], delta=col["delta"], ax=col["ax"], caf=col["caf"],
                   car=col["car"], theta=np.zeros((n, 5)), eta=np.zeros((n, 0)),
                   xi=d[:, 11:15], oohull=col["oohull"] > 0.5, pose=d[:, 16:19],
                   s=np.zeros(n))


@dataclass(frozen=True)
class Metrics:
    rms_ey: float
    max_abs_ey: float
    peak_abs_roll: float
    steering_effort: float
    oohull_fraction: float
    speed_rms: float
    steady_abs_roll: float = 0.0
    aborted: bool = False

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_text(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            lines.append(f"{k} = {int(v) if isinstance(v, bool) else format(v, '.17g')}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Metrics":
        kv = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
        vals = {}
        for name, f in cls.__dataclass_fields__.items():
            if name in kv:
                vals[name] = bool(int(kv[name])) if f.type in ("bool", bool) else float(kv[name])
        return cls(**vals)


def compute_metrics(log: SimLog, steady_window: tuple[float, float] | None = None,
                    v_ref: np.ndarray | None = None) -> Metrics:
    """Summary metrics of a log.

    ``steady_window`` is a ``(t0, t1)`` interval used for ``steady_abs_roll``
    (mean |phi| inside it); ``v_ref`` is the speed reference for the speed-rms.
    """
    if len(log) == 0:
        raise ValueError("empty simulation log")
    ey = log.x[:, 0]
    t = log.t
    if t.size > 1:
        dt = np.diff(t)
        effort = float(np.sum(0.5 * (log.delta[1:] ** 2 + log.delta[:-1] ** 2) * dt))
    else:
        effort = 0.0
    phi = np.abs(log.roll[:, 0])
    steady = 0.0
    if steady_window is not None:
        mask = (t >= steady_window[0]) & (t <= steady_window[1])
        if mask.any():
            steady = float(phi[mask].mean())
    speed_rms = 0.0
    if v_ref is not None:
        speed_rms = float(np.sqrt(np.mean((log.vx - v_ref) ** 2)))
    return Metrics(rms_ey=float(np.sqrt(np.mean(ey ** 2))),
                   max_abs_ey=float(np.max(np.abs(ey))),
                   peak_abs_roll=float(np.max(phi)),
                   steering_effort=effort,
                   oohull_fraction=float(np.mean(log.oohull)) if log.oohull.size else 0.0,
                   speed_rms=speed_rms,
                   steady_abs_roll=steady,
                   aborted=bool(log.aborted))


# ---------------------------------------------------------------------------
# plant + loop

class LateralController(Protocol):
    def __call__(self, x: np.ndarray, theta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray, bool]:
        """Return ``(delta, eta, xi, out_of_hull)``."""


def _make_plant(params: VehicleParams, road: RoadProfile):
    m, I_z, l_f, l_r, L = params.m, params.I_z, params.l_f, params.l_r, params.L
    m_s, h_rc, I_x, K_roll, C_roll, g = (params.m_s, params.h_rc, params.I_x,
                                         params.K_roll, params.C_roll, params.g)
    small = params.small_angle
    curvature, heading = road.curvature, road.heading
    sin, cos = math.sin, math.cos

    def deriv(y, delta, a_x, C_af, C_ar):
        e_yL, ey_d, e_psi, r, phi, phi_d, vx, s, X, Y, psi = y
        V = vx if vx > 0.1 else 0.1
        kappa = curvature(s)
        psi_des_dot = V * kappa
        look = heading(s + L) - heading(s)
        cf, cr = 2.0 * C_af, 2.0 * C_ar
        a22 = -(cf + cr) / (m * V)
        a23 = (cf + cr) / m
        a24p = -2.0 * V - (cf * l_f - cr * l_r) / (m * V)
        a42p = -(cf * l_f - cr * l_r) / (I_z * V)
        a43 = (cf * l_f - cr * l_r) / I_z
        a44 = -(cf * l_f * l_f + cr * l_r * l_r) / (I_z * V)
        d_eyL = ey_d - L * r + L * psi_des_dot + V * look
        d_eyd = a22 * ey_d + a23 * e_psi + a24p * r + cf / m * delta + V * psi_des_dot
        d_epsi = -r + psi_des_dot
        d_r = a42p * ey_d + a43 * e_psi + a44 * r + cf * l_f / I_z * delta
        a_y = V * r + d_eyd
        sphi = phi if small else sin(phi)
        d_phid = (m_s * h_rc * (a_y + g * sphi) - K_roll * phi - C_roll * phi_d) / I_x
        v_y = ey_d - V * e_psi
        return (d_eyL, d_eyd, d_epsi, d_r, phi_d, d_phid, a_x, vx,
                vx * cos(psi) - v_y * sin(psi), vx * sin(psi) + v_y * cos(psi), r), a_y

    def rk4(y, h, *u):
        k1, a_y = deriv(y, *u)
        y2 = [a + 0.5 * h * b for a, b in zip(y, k1)]
        k2, _ = deriv(y2, *u)
        y3 = [a + 0.5 * h * b for a, b in zip(y, k2)]
        k3, _ = deriv(y3, *u)
        y4 = [a + h * b for a, b in zip(y, k3)]
        k4, _ = deriv(y4, *u)
        out = [a + h / 6.0 * (b + 2.0 * c + 2.0 * d + e)
               for a, b, c, d, e in zip(y, k1, k2, k3, k4)]
        return out, a_y

    return deriv, rk4


def run(road: RoadProfile, cfg: SimConfig, params: VehicleParams,
        controller: LateralController, v_schedule: Callable[[float], float] | None = None,
        ) -> tuple[SimLog, Metrics]:
    """Integrate the closed loop over the road (or ``cfg.duration`` seconds).

    ``v_schedule`` optionally replaces the cruise speed by a time-dependent
    reference; the rollover cap still applies when speed control is on.
    """
    _, rk4 = _make_plant(params, road)
    n_sub = int(round(cfg.ctrl_dt / cfg.dt))
    plan = speed_plan(road, params, cfg.cruise, cfg.decel) if cfg.speed_control else None
    psi0 = road.heading(0.0)
    y = [cfg.x0[0], cfg.x0[1], cfg.x0[2], cfg.x0[3], 0.0, 0.0, cfg.v_init, 0.0, 0.0, 0.0, psi0]
    duration = cfg.duration
    if duration is None:
        duration = road.length / max(0.5 * min(cfg.v_init, cfg.cruise), 1.0) + 60.0
    rng = np.random.default_rng(cfg.seed)

    rows: dict[str, list] = {k: [] for k in
                             ("t", "x", "roll", "vx", "delta", "ax", "caf", "car", "theta",
                              "eta", "xi", "oo", "pose", "s")}
    a_y = 0.0
    prev_err = None
    t = 0.0
    aborted = False
    n_steps = int(math.floor(duration / cfg.ctrl_dt + 1e-9))
    for step in range(n_steps + 1):
        phi, phi_d, vx = y[4], y[5], y[6]
        C_af, C_ar = plant_stiffness(RollState(phi, phi_d), vx, a_y, params)
        x = np.array(y[:4])
        if cfg.noise_std > 0:
            x = x + cfg.noise_std * rng.standard_normal(4)
        V = vx if vx > 0.1 else 0.1
        theta = np.array([V, 2 * C_af, 2 * C_af / V, 2 * C_ar, 2 * C_ar / V])
        delta, eta, xi, oo = controller(x, theta)
        delta = min(cfg.delta_max, max(-cfg.delta_max, float(delta)))
        if cfg.speed_control:
            v_des = plan(y[7])
            if v_schedule is not None:
                v_des = min(v_des, v_schedule(t))
        else:
            v_des = v_schedule(t) if v_schedule is not None else cfg.v_init
        err = v_des - vx
        a_x = longitudinal_pd(vx, v_des, prev_err, cfg.ctrl_dt, cfg.kp, cfg.kd, cfg.a_min, cfg.a_max)
        prev_err = err

        rows["t"].append(t)
        rows["x"].append(y[:4])
        rows["roll"].append((phi, phi_d))
        rows["vx"].append(vx)
        rows["delta"].append(delta)
        rows["ax"].append(a_x)
        rows["caf"].append(C_af)
        rows["car"].append(C_ar)
        rows["theta"].append(theta)
        rows["eta"].append(eta)
        rows["xi"].append(xi)
        rows["oo"].append(oo)
        rows["pose"].append((y[8], y[9], y[10]))
        rows["s"].append(y[7])

        if abs(phi) > cfg.roll_limit:
            aborted = True
            break
        if step == n_steps or (cfg.duration is None and y[7] >= road.length):
            break
        for _ in range(n_sub):
            C_af, C_ar = plant_stiffness(RollState(y[4], y[5]), y[6], a_y, params)
            y_new, a_y = rk4(y, cfg.dt, delta, a_x, C_af, C_ar)
            if not all(math.isfinite(v) for v in y_new):
                raise SimulationDivergence("non-finite plant state", t)
            y = y_new
        t = (step + 1) * cfg.ctrl_dt

    log = SimLog(t=np.array(rows["t"]), x=np.array(rows["x"]), roll=np.array(rows["roll"]),
                 vx=np.array(rows["vx"]), delta=np.array(rows["delta"]), ax=np.array(rows["ax"]),
                 caf=np.array(rows["caf"]), car=np.array(rows["car"]),
                 theta=np.array(rows["theta"]), eta=_stack(rows["eta"]), xi=_stack(rows["xi"]),
                 oohull=np.array(rows["oo"], dtype=bool), pose=np.array(rows["pose"]),
                 s=np.array(rows["s"]), aborted=aborted)
    v_ref = None
    if plan is not None:
        v_ref = np.array([plan(s) for s in log.s])
    window = cfg.steady_window or _arc_window(road, log)
    log.meta["steady_window"] = window
    return log, compute_metrics(log, window, v_ref)


def _stack(items) -> np.ndarray:
    n = len(items)
    if n == 0 or items[0] is None or np.size(items[0]) == 0:
        return np.zeros((n, 0))
    return np.array(items, dtype=float)


def _arc_window(road: RoadProfile, log: SimLog) -> tuple[float, float] | None:
    """Time interval spent on the middle half of the longest constant-curvature arc."""
    best = None
    s0 = 0.0
    knots = road._knots
    for i in range(len(road._k0)):
        k0, k1 = road._k0[i], road._k1[i]
        length = knots[i + 1] - knots[i]
        if k0 == k1 and k0 != 0.0 and (best is None or length > best[1] - best[0]):
            best = (knots[i], knots[i + 1])
        s0 += length
    if best is None:
        return None
    a = best[0] + 0.25 * (best[1] - best[0])
    b = best[1] - 0.25 * (best[1] - best[0])
    mask = (log.s >= a) & (log.s <= b)
    if not mask.any():
        return None
    return float(log.t[mask][0]), float(log.t[mask][-1])


# ---------------------------------------------------------------------------
# data collection

@dataclass(frozen=True)
class DrivingProfile:
    """One data-collection run: a road plus a speed reference.

    ``speed_points`` is a list of ``(t, v)`` breakpoints interpolated
    linearly in time; with ``speed_control`` the rollover cap is applied on
    top of it.
    """

    road: RoadProfile
    speed_points: tuple[tuple[float, float], ...]
    speed_control: bool = True
    duration: float | None = None
    name: str = ""

    def schedule(self) -> Callable[[float], float]:
        ts = np.array([p[0] for p in self.speed_points], dtype=float)
        vs = np.array([p[1] for p in self.speed_points], dtype=float)
        return lambda t: float(np.interp(t, ts, vs))


class _CollectionController:
    """Fixed LQR gain at the nominal design point, used only to gather data."""

    def __init__(self, params: VehicleParams, Vx: float = 60.0 * KMH):
        from scipy.linalg import solve_continuous_are

        from .vehicle_model import lateral_matrices

        A, B, _ = lateral_matrices(Vx, params.C_af0, params.C_ar0, params)
        Q = np.diag([1.0, 0.1, 1.0, 0.1])
        R = np.array([[10.0]])
        X = solve_continuous_are(A, B, Q, R)
        self.K = -np.linalg.solve(R, B.T @ X).ravel()

    def __call__(self, x, theta):
        return float(self.K @ x), None, None, False


def sample_scenario(profile: DrivingProfile, params: VehicleParams, T: float = 0.01,
                    dt: float = 0.002) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run one collection profile; return ``(t, Vx, C_af, C_ar)`` sampled every ``T``."""
    sched = profile.schedule()
    v0 = sched(0.0)
    if not v0 > 0:
        raise ValueError(f"scenario {profile.name!r} starts with non-positive speed")
    cfg = SimConfig(dt=dt, ctrl_dt=T, duration=profile.duration, v_init=v0,
                    cruise=max(v for _, v in profile.speed_points),
                    controller="custom", speed_control=profile.speed_control)
    log, _ = run(profile.road, cfg, params, _CollectionController(params), v_schedule=sched)
    return log.t, log.vx, log.caf, log.car


def default_collection_scenarios() -> list[DrivingProfile]:
    """Flat highway roads at a spread of speeds and radii."""
    straight = RoadProfile(((1600.0, 0.0),), 0.0)
    curvy = RoadProfile(((100.0, 0.0), (120.0, 1 / 80.0), (80.0, 0.0), (150.0, -1 / 150.0),
                         (80.0, 0.0), (200.0, 1 / 250.0), (80.0, 0.0), (160.0, -1 / 100.0),
                         (150.0, 0.0)), 40.0)
    sweep = RoadProfile(((120.0, 0.0), (90.0, -1 / 120.0), (60.0, 0.0), (140.0, 1 / 200.0),
                         (60.0, 0.0), (130.0, 1 / 90.0), (120.0, 0.0)), 30.0)
    return [
        DrivingProfile(straight, ((0.0, 40 * KMH), (25.0, 90 * KMH), (45.0, 90 * KMH),
                                  (70.0, 45 * KMH), (80.0, 45 * KMH)), True, 80.0, "ramp"),
        DrivingProfile(curvy, ((0.0, 85 * KMH), (200.0, 85 * KMH)), True, None, "curvy-85"),
        DrivingProfile(sweep, ((0.0, 65 * KMH), (200.0, 65 * KMH)), True, None, "sweep-65"),
        DrivingProfile(RoadProfile.interchange(radius=90.0), ((0.0, 75 * KMH), (200.0, 75 * KMH)),
                       True, None, "interchange-90"),
    ]
