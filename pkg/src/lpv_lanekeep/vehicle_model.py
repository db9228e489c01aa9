"""Single-track lateral model, 1-DOF roll model and the rollover speed cap.

Sign conventions follow the lane-error state ``x = [e_yL, de_y, e_psi, psi_dot]``
used throughout the package; ``a_y > 0`` rolls the body to ``phi > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

__all__ = [
    "ParameterError",
    "VehicleParams",
    "RollState",
    "LateralState",
    "RoadSignals",
    "roll_derivative",
    "steady_roll_angle",
    "desired_speed",
    "coefficient_block",
    "plant_stiffness",
    "lateral_matrices",
]


class ParameterError(ValueError):
    """Raised when vehicle parameters violate their physical invariants."""


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the single-track and roll models (SI units).

    Defaults describe a mid-size sedan. ``track``, ``h_ra``,
    ``roll_share_front``, ``droop_gain`` and ``droop_floor`` only feed the
    load-transfer stiffness model of :func:`plant_stiffness`.
    """

    m: float = 1650.0
    m_s: float = 1400.0
    I_z: float = 2900.0
    I_x: float = 600.0
    l_f: float = 1.2
    l_r: float = 1.5
    L: float = 5.0
    h_rc: float = 0.45
    K_roll: float = 95000.0
    C_roll: float = 6000.0
    g: float = 9.81
    C_af0: float = 65000.0
    C_ar0: float = 65000.0
    phi_max: float = 0.017
    track: float = 1.6
    h_ra: float = 0.25
    roll_share_front: float = 0.55
    droop_gain: float = 0.6
    droop_floor: float = 0.5
    small_angle: bool = False

    def __post_init__(self) -> None:
        positive = ("m", "m_s", "I_z", "I_x", "l_f", "l_r", "L", "h_rc",
                    "K_roll", "C_roll", "g", "C_af0", "C_ar0", "track")
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
        if self.phi_max < 0:
            raise ParameterError("phi_max must be >= 0")
        if self.K_roll <= self.m_s * self.g * self.h_rc:
            raise ParameterError(
                "K_roll must exceed m_s*g*h_rc for a positive rollover speed cap")
        if not 0.0 <= self.roll_share_front <= 1.0:
            raise ParameterError("roll_share_front must lie in [0, 1]")
        if not 0.0 < self.droop_floor <= 1.0:
            raise ParameterError("droop_floor must lie in (0, 1]")
        if self.droop_gain < 0:
            raise ParameterError("droop_gain must be >= 0")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    def with_overrides(self, **kwargs) -> "VehicleParams":
        return replace(self, **kwargs)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True)
class RollState:
    phi: float = 0.0
    phi_dot: float = 0.0


@dataclass(frozen=True)
class LateralState:
    e_yL: float = 0.0
    e_y_dot: float = 0.0
    e_psi: float = 0.0
    psi_dot: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.e_yL, self.e_y_dot, self.e_psi, self.psi_dot])

    @classmethod
    def from_array(cls, x) -> "LateralState":
        x = np.asarray(x, dtype=float).ravel()
        if x.shape != (4,):
            raise ValueError(f"lateral state must have 4 entries, got {x.shape}")
        return cls(*map(float, x))


@dataclass(frozen=True)
class RoadSignals:
    psi_dot_des: float
    heading_lookahead: float  # e_psiL - e_psi
    kappa: float

    def as_array(self) -> np.ndarray:
        return np.array([self.psi_dot_des, self.heading_lookahead])


def roll_derivative(state: RollState, a_y: float, params: VehicleParams) -> float:
    """Roll acceleration of the 1-DOF sprung-mass model.

    The stiffness torque is ``K_roll * phi``; with ``params.small_angle`` the
    gravity term uses ``phi`` in place of ``sin(phi)``.
    """
    phi, phi_dot = state.phi, state.phi_dot
    s = phi if params.small_angle else math.sin(phi)
    return (params.m_s * params.h_rc * (a_y + params.g * s)
            - params.K_roll * phi - params.C_roll * phi_dot) / params.I_x


def steady_roll_angle(a_y: float, params: VehicleParams) -> float:
    """Small-angle steady roll angle for a constant lateral acceleration."""
    return params.m_s * params.h_rc * a_y / (params.K_roll - params.m_s * params.g * params.h_rc)


def desired_speed(R: float, params: VehicleParams, cruise: float = math.inf) -> float:
    """Largest speed whose steady-state roll on radius ``R`` stays within ``phi_max``.

    ``R = inf`` (straight road) returns ``cruise``. The result is never above
    ``cruise``.
    """
    if math.isinf(R):
        return cruise
    if not R > 0:
        raise ValueError(f"turn radius must be > 0, got {R!r}")
    radicand = R * (params.K_roll - params.m_s * params.g * params.h_rc) * params.phi_max
    radicand /= params.m_s * params.h_rc
    if radicand < 0:
        raise ParameterError("negative radicand in rollover speed cap")
    return min(math.sqrt(radicand), cruise)


def coefficient_block(Vx: float, C_af: float, C_ar: float,
                      params: VehicleParams) -> dict[str, float]:
    """Coefficients of the lateral error model at speed ``Vx`` (per-axle stiffness)."""
    if not Vx > 0:
        raise ValueError(f"Vx must be > 0, got {Vx!r}")
    m, I_z, l_f, l_r = params.m, params.I_z, params.l_f, params.l_r
    a22 = -(2 * C_af + 2 * C_ar) / (m * Vx)
    a23 = -a22 * Vx
    a24 = -1.0 - (2 * C_af * l_f - 2 * C_ar * l_r) / (m * Vx ** 2)
    a42 = -(2 * C_af * l_f - 2 * C_ar * l_r) / I_z
    a43 = -a42
    a44 = -(2 * C_af * l_f ** 2 + 2 * C_ar * l_r ** 2) / (I_z * Vx)
    return {
        "a22": a22,
        "a23": a23,
        "a24p": (a24 - 1.0) * Vx,
        "a42p": a42 / Vx,
        "a43": a43,
        "a44": a44,
    }


def lateral_matrices(Vx: float, C_af: float, C_ar: float,
                     params: VehicleParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(A, B, B_phi)`` of the lateral error model built from the coefficient block."""
    c = coefficient_block(Vx, C_af, C_ar, params)
    L = params.L
    A = np.array([
        [0.0, 1.0, 0.0, -L],
        [0.0, c["a22"], c["a23"], c["a24p"]],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, c["a42p"], c["a43"], c["a44"]],
    ])
    B = np.array([[0.0], [2 * C_af / params.m], [0.0], [2 * C_af * params.l_f / params.I_z]])
    B_phi = np.array([[L, Vx], [Vx, 0.0], [1.0, 0.0], [0.0, 0.0]])
    return A, B, B_phi


def plant_stiffness(roll: RollState, Vx: float, a_y: float,
                    params: VehicleParams) -> tuple[float, float]:
    """Per-axle cornering stiffness softened by lateral load transfer.

    The sprung-mass roll moment is split between the axles by
    ``roll_share_front``; a geometric term ``m_i * h_ra * a_y`` is added per
    axle. Each axle loses ``droop_gain * (dFz/Fz0)**2`` of its nominal
    stiffness, floored at ``droop_floor``. ``Vx`` is accepted for interface
    symmetry; the static model does not depend on it.
    """
    del Vx
    s = roll.phi if params.small_angle else math.sin(roll.phi)
    roll_moment = params.m_s * params.h_rc * (a_y + params.g * s)
    wb = params.wheelbase
    out = []
    for share, mass_frac, c0 in (
        (params.roll_share_front, params.l_r / wb, params.C_af0),
        (1.0 - params.roll_share_front, params.l_f / wb, params.C_ar0),
    ):
        axle_mass = params.m * mass_frac
        dfz = (share * roll_moment + axle_mass * params.h_ra * a_y) / params.track
        fz0 = 0.5 * axle_mass * params.g
        factor = 1.0 - params.droop_gain * (dfz / fz0) ** 2
        out.append(c0 * min(1.0, max(params.droop_floor, factor)))
    return out[0], out[1]
