"""Scheduling vector, affine LPV matrices and PCA reduction of trajectories."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .vehicle_model import VehicleParams

__all__ = [
    "N_THETA",
    "LpvSystem",
    "Trajectory",
    "NormalizationLaw",
    "PcaReduction",
    "build_theta",
    "theta_to_physical",
    "assemble_system",
    "normalize",
    "pca_reduce",
    "fraction_of_variation",
    "reduce_point",
    "reduce_batch",
    "reconstruct",
    "collect_trajectories",
    "read_trajectory_csv",
    "write_trajectory_csv",
]

N_THETA = 5


@dataclass(frozen=True)
class LpvSystem:
    """Frozen ``(A, B, B_phi)`` triple for one scheduling value."""

    A: np.ndarray
    B: np.ndarray
    B_phi: np.ndarray

    def __add__(self, other: "LpvSystem") -> "LpvSystem":
        return LpvSystem(self.A + other.A, self.B + other.B, self.B_phi + other.B_phi)

    def scale(self, a: float) -> "LpvSystem":
        return LpvSystem(a * self.A, a * self.B, a * self.B_phi)

    def max_abs_diff(self, other: "LpvSystem") -> float:
        return max(float(np.max(np.abs(self.A - other.A))),
                   float(np.max(np.abs(self.B - other.B))),
                   float(np.max(np.abs(self.B_phi - other.B_phi))))


def build_theta(Vx: float, C_af: float, C_ar: float) -> np.ndarray:
    """``[Vx, 2C_af, 2C_af/Vx, 2C_ar, 2C_ar/Vx]``."""
    if not Vx > 0:
        raise ValueError(f"Vx must be > 0, got {Vx!r}")
    return np.array([Vx, 2.0 * C_af, 2.0 * C_af / Vx, 2.0 * C_ar, 2.0 * C_ar / Vx])


def theta_to_physical(theta) -> tuple[float, float, float]:
    """Inverse of :func:`build_theta` using the first, second and fourth entries."""
    theta = np.asarray(theta, dtype=float)
    return float(theta[0]), float(theta[1] / 2.0), float(theta[3] / 2.0)


def assemble_system(theta, params: VehicleParams) -> LpvSystem:
    """Affine-in-theta system matrices.

    Valid for any finite theta, including reconstructed vectors that break the
    ``theta3 * theta1 == theta2`` couplings.
    """
    t1, t2, t3, t4, t5 = (float(v) for v in np.asarray(theta, dtype=float).ravel())
    m, I_z, l_f, l_r, L = params.m, params.I_z, params.l_f, params.l_r, params.L
    A = np.array([
        [0.0, 1.0, 0.0, -L],
        [0.0, -t3 / m - t5 / m, t2 / m + t4 / m, -2.0 * t1 - l_f / m * t3 + l_r / m * t5],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, -l_f / I_z * t3 + l_r / I_z * t5, l_f / I_z * t2 - l_r / I_z * t4,
         -l_f ** 2 / I_z * t3 - l_r ** 2 / I_z * t5],
    ])
    B = np.array([[0.0], [t2 / m], [0.0], [l_f / I_z * t2]])
    B_phi = np.array([[L, t1], [t1, 0.0], [1.0, 0.0], [0.0, 0.0]])
    return LpvSystem(A, B, B_phi)


@dataclass(frozen=True)
class Trajectory:
    """Sampled scheduling trajectory: ``samples`` is ``5 x N``."""

    samples: np.ndarray
    T: float
    t: np.ndarray | None = None
    rejected: int = 0

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[0] != N_THETA:
            raise ValueError(f"trajectory must be 5 x N, got {s.shape}")
        if s.shape[1] < 2:
            raise ValueError("trajectory needs at least two samples")
        object.__setattr__(self, "samples", s)
        if self.t is None:
            object.__setattr__(self, "t", self.T * np.arange(s.shape[1]))

    @property
    def N(self) -> int:
        return self.samples.shape[1]

    def coupling_residual(self) -> float:
        """Largest relative violation of the ``theta3*theta1 = theta2`` style couplings."""
        s = self.samples
        r1 = np.abs(s[2] * s[0] - s[1]) / np.maximum(np.abs(s[1]), 1e-300)
        r2 = np.abs(s[4] * s[0] - s[3]) / np.maximum(np.abs(s[3]), 1e-300)
        return float(max(r1.max(), r2.max()))


@dataclass(frozen=True)
class NormalizationLaw:
    """Row-wise affine map ``(x - center) / half_range`` onto ``[-1, 1]``."""

    center: np.ndarray
    half_range: np.ndarray

    def apply(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        c, r = self._shape(theta)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, (theta - c) / safe, 0.0)

    def invert(self, normalized: np.ndarray) -> np.ndarray:
        normalized = np.asarray(normalized, dtype=float)
        c, r = self._shape(normalized)
        return c + r * normalized

    def _shape(self, x):
        if x.ndim == 2:
            return self.center[:, None], self.half_range[:, None]
        return self.center, self.half_range


@dataclass(frozen=True)
class PcaReduction:
    U_s: np.ndarray
    singular_values: np.ndarray
    m: int
    law: NormalizationLaw
    U_full: np.ndarray = field(repr=False, default=None)

    def to_text(self) -> str:
        lines = [f"m = {self.m}",
                 "center = " + _fmt_row(self.law.center),
                 "half_range = " + _fmt_row(self.law.half_range),
                 "singular_values = " + _fmt_row(self.singular_values),
                 "U_s = " + _fmt_row(self.U_s.ravel(order="C")),
                 "U_full = " + _fmt_row(self.U_full.ravel(order="C"))]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PcaReduction":
        kv = _parse_kv(text)
        m = int(kv["m"])
        law = NormalizationLaw(_parse_row(kv["center"]), _parse_row(kv["half_range"]))
        U_s = _parse_row(kv["U_s"]).reshape(N_THETA, m)
        U_full = _parse_row(kv["U_full"]).reshape(N_THETA, N_THETA)
        return cls(U_s, _parse_row(kv["singular_values"]), m, law, U_full)


def _fmt_row(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in np.ravel(values))


def _parse_row(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split()])


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed artifact line: {raw!r}")
        out[key.strip()] = value.strip()
    return out


def normalize(traj: Trajectory | np.ndarray) -> tuple[np.ndarray, NormalizationLaw]:
    """Min-max scale each row of the trajectory onto ``[-1, 1]``."""
    samples = traj.samples if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    if samples.shape[1] < 2:
        raise ValueError("normalization needs at least two samples")
    lo = samples.min(axis=1)
    hi = samples.max(axis=1)
    law = NormalizationLaw(center=0.5 * (lo + hi), half_range=0.5 * (hi - lo))
    return law.apply(samples), law


def pca_reduce(normalized: np.ndarray, m: int, law: NormalizationLaw | None = None) -> PcaReduction:
    """Truncated SVD basis of the normalized trajectory.

    Each left-singular vector is sign-fixed so that its first nonzero entry
    is nonnegative.
    """
    normalized = np.asarray(normalized, dtype=float)
    n = normalized.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"reduced dimension must be in [1, {n}], got {m}")
    # thin SVD unless there are fewer samples than variables (U must stay square)
    U, s, _ = np.linalg.svd(normalized, full_matrices=normalized.shape[1] < n)
    for j in range(U.shape[1]):
        nz = np.flatnonzero(np.abs(U[:, j]) > 1e-14)
        if nz.size and U[nz[0], j] < 0:
            U[:, j] = -U[:, j]
    sv = np.zeros(n)
    sv[: s.size] = s
    if law is None:
        law = NormalizationLaw(np.zeros(n), np.ones(n))
    return PcaReduction(U_s=U[:, :m].copy(), singular_values=sv, m=m, law=law, U_full=U)


def fraction_of_variation(reduction: PcaReduction, m_query: int) -> float:
    sv2 = reduction.singular_values ** 2
    if not 1 <= m_query <= sv2.size:
        raise ValueError(f"m_query must be in [1, {sv2.size}]")
    total = sv2.sum()
    if total <= 0:
        raise ValueError("all singular values are zero")
    return float(sv2[:m_query].sum() / total)


def reduce_point(theta, reduction: PcaReduction) -> np.ndarray:
    return reduction.U_s.T @ reduction.law.apply(np.asarray(theta, dtype=float))


def reduce_batch(samples: np.ndarray, reduction: PcaReduction) -> np.ndarray:
    """``H = U_s^T N(Theta)`` for a ``5 x N`` sample matrix."""
    return reduction.U_s.T @ reduction.law.apply(np.asarray(samples, dtype=float))


def reconstruct(eta, reduction: PcaReduction) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    return reduction.law.invert(reduction.U_s @ eta)


def write_trajectory_csv(path: str | Path | io.TextIOBase, traj: Trajectory) -> None:
    own = not hasattr(path, "write")
    fh = open(path, "w", newline="", encoding="utf-8") if own else path
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "vx", "caf", "car", "theta1", "theta2", "theta3", "theta4", "theta5"])
        s = traj.samples
        for j in range(traj.N):
            row = [traj.t[j], s[0, j], s[1, j] / 2.0, s[3, j] / 2.0, *s[:, j]]
            w.writerow([f"{v:.17g}" for v in row])
    finally:
        if own:
            fh.close()


def read_trajectory_csv(path: str | Path) -> Trajectory:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["t", "vx", "caf", "car", "theta1", "theta2", "theta3", "theta4", "theta5"]
        if header is None or [h.strip() for h in header] != expected:
            raise ValueError(f"bad trajectory header: {header!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ValueError(f"line {lineno}: expected {len(expected)} fields")
            rows.append([float(v) for v in row])
    if len(rows) < 2:
        raise ValueError("trajectory CSV has fewer than two samples")
    data = np.array(rows)
    t = data[:, 0]
    T = float(np.median(np.diff(t))) if len(t) > 1 else 0.0
    return Trajectory(samples=data[:, 4:].T.copy(), T=T, t=t)


def collect_trajectories(scenarios, params: VehicleParams, T: float = 0.01,
                         dt: float = 0.002) -> Trajectory:
    """Drive the plant through each scenario and sample ``theta`` every ``T`` seconds.

    Runs are concatenated in order. Samples with ``Vx <= 0`` are dropped and
    counted in ``Trajectory.rejected``.
    """
    from .simulator import sample_scenario

    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("at least one scenario is required")
    columns, times, rejected, t0 = [], [], 0, 0.0
    for sc in scenarios:
        t, vx, caf, car = sample_scenario(sc, params, T=T, dt=dt)
        for k in range(t.size):
            if not vx[k] > 0:
                rejected += 1
                continue
            columns.append(build_theta(vx[k], caf[k], car[k]))
            times.append(t0 + t[k])
        t0 += float(t[-1]) + T if t.size else 0.0
    if len(columns) < 2:
        raise ValueError("scenarios produced fewer than two valid samples")
    return Trajectory(samples=np.array(columns).T, T=T, t=np.array(times), rejected=rejected)
