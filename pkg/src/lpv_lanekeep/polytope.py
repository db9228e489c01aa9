"""Simplex selection over the reduced scheduling trajectory and vertex membership."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .scheduling import LpvSystem, PcaReduction, assemble_system, reconstruct
from .vehicle_model import VehicleParams

__all__ = [
    "GeometryError",
    "Polytope",
    "bounds",
    "corner_candidates",
    "candidate_subset_count",
    "select_simplex",
    "convex_coordinates",
    "membership",
    "project_to_simplex",
    "combine_systems",
    "simplex_volume",
]

CONTAIN_TOL = 1e-9
DEGENERATE_DET = 1e-12


class GeometryError(RuntimeError):
    """Degenerate or ill-conditioned vertex configuration."""


@dataclass(frozen=True)
class Polytope:
    """Simplex with vertex matrix ``V`` (``m x (m+1)``) in reduced coordinates."""

    V: np.ndarray
    inflation: float = 1.0
    vertex_thetas: tuple[np.ndarray, ...] = ()
    vertex_systems: tuple[LpvSystem, ...] = ()
    corner_ids: tuple[int, ...] = ()
    n_candidates: int = 0

    def __post_init__(self) -> None:
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        m = V.shape[0]
        if V.shape != (m, m + 1):
            raise GeometryError(f"vertex matrix must be m x (m+1), got {V.shape}")
        object.__setattr__(self, "V", V)
        aug = np.vstack([V, np.ones((1, m + 1))])
        try:
            inv = np.linalg.inv(aug)
        except np.linalg.LinAlgError as exc:
            raise GeometryError("vertex matrix is singular") from exc
        object.__setattr__(self, "_aug_inv", inv)

    @property
    def m(self) -> int:
        return self.V.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.V.shape[1]

    @property
    def centroid(self) -> np.ndarray:
        return self.V.mean(axis=1)

    def augmented_inverse(self) -> np.ndarray:
        return self._aug_inv

    def condition_number(self) -> float:
        return float(np.linalg.cond(np.vstack([self.V, np.ones((1, self.n_vertices))])))

    def to_text(self) -> str:
        fmt = lambda vals: " ".join(f"{float(v):.17g}" for v in np.ravel(vals))
        lines = [f"m = {self.m}",
                 "V = " + fmt(self.V.ravel(order="F")),
                 f"inflation = {self.inflation:.17g}",
                 "corner_ids = " + " ".join(str(i) for i in self.corner_ids),
                 f"n_candidates = {self.n_candidates}"]
        for p, th in enumerate(self.vertex_thetas):
            lines.append(f"theta_v{p + 1} = " + fmt(th))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, params: VehicleParams | None = None) -> "Polytope":
        kv = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
        m = int(kv["m"])
        V = np.array([float(x) for x in kv["V"].split()]).reshape((m, m + 1), order="F")
        thetas = tuple(np.array([float(x) for x in kv[f"theta_v{p + 1}"].split()])
                       for p in range(m + 1) if f"theta_v{p + 1}" in kv)
        systems = tuple(assemble_system(th, params) for th in thetas) if params else ()
        corner_ids = tuple(int(x) for x in kv.get("corner_ids", "").split())
        return cls(V, float(kv["inflation"]), thetas, systems, corner_ids,
                   int(kv.get("n_candidates", 0)))


def bounds(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[1] == 0:
        raise ValueError("empty reduced trajectory")
    return H.min(axis=1), H.max(axis=1)


def corner_candidates(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """All ``2**m`` bounding-box corners as columns; bit ``i`` of the index picks the upper bound."""
    m = lower.size
    cols = []
    for k in range(2 ** m):
        cols.append([upper[i] if (k >> i) & 1 else lower[i] for i in range(m)])
    return np.array(cols, dtype=float).T


def candidate_subset_count(m: int) -> int:
    """Number of ``(m+1)``-corner subsets of the ``2**m`` box corners (906192 for ``m = 5``)."""
    return math.comb(2 ** m, m + 1)


def simplex_volume(V: np.ndarray) -> float:
    m = V.shape[0]
    return abs(float(np.linalg.det(V[:, 1:] - V[:, :1]))) / math.factorial(m)


def _required_inflation(xi: np.ndarray) -> float:
    # Barycentric coords w.r.t. the simplex scaled by f about its centroid are
    # (xi - 1/n)/f + 1/n, so containment needs f >= 1 - n*min(xi).
    n = xi.shape[0]
    f = max(1.0, float(1.0 - n * xi.min()))
    return math.ceil(f * 1e6) / 1e6 if f > 1.0 else 1.0


def select_simplex(H: np.ndarray, reduction: PcaReduction | None = None,
                   params: VehicleParams | None = None, cond_cap: float = 1e8) -> Polytope:
    """Pick ``m+1`` bounding-box corners whose simplex covers every column of ``H``.

    Among corner subsets that already contain the data, the smallest volume
    wins. If none does, each subset is inflated about its centroid by the
    least factor giving containment and the smallest inflated volume wins.
    Ties within 1e-12 relative volume keep lexicographic corner order.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    m, N = H.shape
    if N < m + 1:
        raise GeometryError(f"need at least {m + 1} samples, got {N}")
    lower, upper = bounds(H)
    corners = corner_candidates(lower, upper)
    H_aug = np.vstack([H, np.ones((1, N))])

    containing, inflated = [], []
    for ids in itertools.combinations(range(corners.shape[1]), m + 1):
        V = corners[:, ids]
        det = float(np.linalg.det(V[:, 1:] - V[:, :1]))
        if abs(det) <= DEGENERATE_DET:
            continue
        vol = abs(det) / math.factorial(m)
        xi = np.linalg.solve(np.vstack([V, np.ones((1, m + 1))]), H_aug)
        if xi.min() >= -CONTAIN_TOL:
            containing.append((vol, ids, 1.0))
        else:
            f = _required_inflation(xi)
            inflated.append((vol * f ** m, ids, f))
    if not containing and not inflated:
        raise GeometryError("every corner subset is degenerate; reduce m or add data")

    pool = containing if containing else inflated
    best = pool[0]
    for cand in pool[1:]:
        if cand[0] < best[0] * (1.0 - 1e-12):
            best = cand
    _, ids, f = best
    V = corners[:, ids]
    if f != 1.0:
        c = V.mean(axis=1, keepdims=True)
        V = c + f * (V - c)
    aug = np.vstack([V, np.ones((1, m + 1))])
    cond = float(np.linalg.cond(aug))
    if not cond < cond_cap:
        raise GeometryError(
            f"vertex matrix condition number {cond:.3g} exceeds cap {cond_cap:.3g}; "
            "try a larger m or more data")
    thetas: tuple[np.ndarray, ...] = ()
    systems: tuple[LpvSystem, ...] = ()
    if reduction is not None:
        thetas = tuple(reconstruct(V[:, p], reduction) for p in range(m + 1))
        if params is not None:
            systems = tuple(assemble_system(th, params) for th in thetas)
    return Polytope(V, f, thetas, systems, tuple(int(i) for i in ids), corners.shape[1])


def _affine_projection(Vs: np.ndarray, eta: np.ndarray) -> tuple[np.ndarray, float]:
    # min ||Vs w - eta|| subject to sum(w) = 1, via the KKT system.
    k = Vs.shape[1]
    G = Vs.T @ Vs
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * G
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([2.0 * Vs.T @ eta, [1.0]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    w = sol[:k]
    return w, float(np.linalg.norm(Vs @ w - eta))


def project_to_simplex(poly: Polytope, eta: np.ndarray) -> np.ndarray:
    """Barycentric weights of the Euclidean projection of ``eta`` onto the simplex.

    Exhausts the faces of the simplex (at most 31 for ``m = 4``) and keeps
    the nearest feasible face projection.
    """
    n = poly.n_vertices
    best_w, best_d = None, math.inf
    for size in range(1, n + 1):
        for face in itertools.combinations(range(n), size):
            w, d = _affine_projection(poly.V[:, face], eta)
            if w.min() < -CONTAIN_TOL or d >= best_d - 1e-15:
                continue
            full = np.zeros(n)
            full[list(face)] = np.clip(w, 0.0, None)
            full /= full.sum()
            best_w, best_d = full, d
    return best_w


def membership(poly: Polytope, eta) -> tuple[np.ndarray, bool]:
    """Convex coordinates of ``eta`` and whether it had to be clamped into the simplex."""
    eta = np.asarray(eta, dtype=float).ravel()
    xi = poly.augmented_inverse() @ np.append(eta, 1.0)
    if xi.min() >= -CONTAIN_TOL:
        return xi, False
    return project_to_simplex(poly, eta), True


def convex_coordinates(poly: Polytope, eta) -> np.ndarray:
    return membership(poly, eta)[0]


def combine_systems(poly: Polytope, xi) -> LpvSystem:
    xi = np.asarray(xi, dtype=float).ravel()
    if not poly.vertex_systems:
        raise GeometryError("polytope has no vertex systems attached")
    A = sum(w * s.A for w, s in zip(xi, poly.vertex_systems))
    B = sum(w * s.B for w, s in zip(xi, poly.vertex_systems))
    Bp = sum(w * s.B_phi for w, s in zip(xi, poly.vertex_systems))
    return LpvSystem(A, B, Bp)
