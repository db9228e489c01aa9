"""Vertex gain synthesis, robust-stability certification and the scheduled control law."""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lmi_solver import LmiProblem, check_solution, solve
from .polytope import Polytope, membership
from .scheduling import (LpvSystem, PcaReduction, Trajectory, assemble_system, build_theta,
                         reconstruct, reduce_point)
from .vehicle_model import VehicleParams

__all__ = [
    "SynthesisError",
    "ConfigurationError",
    "SynthesisConfig",
    "scale_system",
    "SynthesisResult",
    "LtiBaseline",
    "pair_indices",
    "synthesize_vertex_gains",
    "verify_theorem1",
    "phi_block",
    "estimate_gamma",
    "scheduled_gain",
    "scheduled_control",
    "ScheduledController",
    "FixedGainController",
    "lti_gain",
    "provenance_hash",
    "longitudinal_pd",
]

from .simulator import longitudinal_pd  # noqa: E402  re-exported


class SynthesisError(RuntimeError):
    def __init__(self, message: str, margins: dict[str, float] | None = None,
                 worst: tuple[str, float] | None = None):
        super().__init__(message)
        self.margins = margins or {}
        self.worst = worst


class ConfigurationError(ValueError):
    """Artifacts that do not belong together."""


@dataclass(frozen=True)
class SynthesisConfig:
    """Design knobs.

    ``alpha`` is the decay rate the certificate must prove; ``synth_alpha``
    is the rate imposed during gain design (defaults to ``alpha + 0.5`` so
    the certificate has room for the perturbation term); ``block22`` selects ``-tau*I`` or ``-gamma*I`` in the lower-right
    block of the certificate matrices. ``state_scale`` holds typical
    magnitudes of ``[e_yL, de_y, e_psi, psi_dot]``; the design, the
    perturbation bound and the certificate all work in the state divided by
    these, which keeps the LMIs well conditioned. Gains are always returned
    in physical units.
    """

    alpha: float = 3.5
    gamma: float = 0.05
    gain_cap: float = 10.0
    rel_margin: float = 1e-7
    synth_alpha: float | None = None
    block22: str = "tau"
    budget: int = 20000
    state_scale: tuple[float, float, float, float] = (0.5, 1.0, 0.05, 0.1)

    def __post_init__(self) -> None:
        if len(self.state_scale) != 4 or not all(v > 0 for v in self.state_scale):
            raise ValueError("state_scale needs four positive entries")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not self.gain_cap > 0:
            raise ValueError("gain_cap must be > 0")
        if self.block22 not in ("tau", "gamma"):
            raise ValueError("block22 must be 'tau' or 'gamma'")

    @property
    def scaling(self) -> np.ndarray:
        """``S`` with scaled state ``S x``; every LMI is posed in these coordinates."""
        return np.diag(1.0 / np.asarray(self.state_scale, dtype=float))

    @property
    def design_alpha(self) -> float:
        return self.synth_alpha if self.synth_alpha is not None else self.alpha + 0.5


@dataclass
class SynthesisResult:
    K: np.ndarray                     # (n_vertices, 4); delta = K[p] @ x
    P: np.ndarray
    tau: float
    alpha: float
    gamma: float
    margins: dict[str, float]         # lambda_max of every certificate LMI
    eps: dict[str, float]
    Y: np.ndarray | None = None
    feasible: bool = True
    provenance: str = ""
    block22: str = "tau"
    notes: dict = field(default_factory=dict)

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.margins, key=lambda k: self.margins[k] + self.eps[k])
        return name, self.margins[name]

    def to_text(self) -> str:
        fmt = lambda a: " ".join(f"{float(v):.17g}" for v in np.ravel(a))
        lines = ["# gain convention: delta = K_p @ [e_yL, de_y, e_psi, psi_dot]",
                 f"provenance = {self.provenance}",
                 f"n_vertices = {self.K.shape[0]}",
                 f"alpha = {self.alpha:.17g}",
                 f"gamma = {self.gamma:.17g}",
                 f"tau = {self.tau:.17g}",
                 f"block22 = {self.block22}",
                 f"feasible = {int(self.feasible)}"]
        for p, k in enumerate(self.K):
            lines.append(f"K{p + 1} = " + fmt(k))
        lines.append("P = " + fmt(self.P))
        for name, lam in self.margins.items():
            lines.append(f"margin {name} = {lam:.17g} {self.eps[name]:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SynthesisResult":
        kv, margins, eps = {}, {}, {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            if key.startswith("margin "):
                lam, e = value.split()
                margins[key[7:].strip()] = float(lam)
                eps[key[7:].strip()] = float(e)
            else:
                kv[key] = value.strip()
        n = int(kv["n_vertices"])
        K = np.array([[float(v) for v in kv[f"K{p + 1}"].split()] for p in range(n)])
        P = np.array([float(v) for v in kv["P"].split()]).reshape(4, 4)
        return cls(K=K, P=P, tau=float(kv["tau"]), alpha=float(kv["alpha"]),
                   gamma=float(kv["gamma"]), margins=margins, eps=eps,
                   feasible=bool(int(kv["feasible"])), provenance=kv.get("provenance", ""),
                   block22=kv.get("block22", "tau"))


def provenance_hash(reduction: PcaReduction, poly: Polytope) -> str:
    h = hashlib.sha256()
    h.update(reduction.to_text().encode())
    h.update(poly.to_text().encode())
    return h.hexdigest()[:16]


def pair_indices(n: int) -> list[tuple[int, int]]:
    """``(p, q)`` with ``p <= q``: the ``n(n+1)/2`` certificate constraints."""
    return [(p, q) for p in range(n) for q in range(p, n)]


def _systems(source) -> list[LpvSystem]:
    if isinstance(source, Polytope):
        if not source.vertex_systems:
            raise SynthesisError("polytope carries no vertex systems")
        return list(source.vertex_systems)
    if isinstance(source, LpvSystem):
        return [source]
    return list(source)


def scale_system(system: LpvSystem, S: np.ndarray) -> LpvSystem:
    """System in the coordinates ``S x``."""
    Si = np.linalg.inv(S)
    return LpvSystem(S @ system.A @ Si, S @ system.B, S @ system.B_phi)


# ---------------------------------------------------------------------------
# synthesis

def _synthesis_problem(systems: Sequence[LpvSystem], alpha: float, rel_margin: float,
                       cap: float | None) -> LmiProblem:
    nx = systems[0].A.shape[0]
    nu = systems[0].B.shape[1]
    prob = LmiProblem(rel_margin=rel_margin)
    prob.symmetric("Y", nx)
    for p in range(len(systems)):
        prob.matrix(f"M{p + 1}", nu, nx)
    eye = np.eye(nx)

    def cl(v, p, q):
        A, B = systems[p].A, systems[p].B
        AY = A @ v["Y"] + B @ v[f"M{q + 1}"]
        return AY + AY.T

    # Y >= I fixes the scale of the homogeneous problem
    prob.add("Y>=I", lambda v: v["Y"] - eye, "pos")
    for p, q in pair_indices(len(systems)):
        if p == q:
            prob.add(f"S{p + 1}{q + 1}", lambda v, p=p: cl(v, p, p) + alpha * v["Y"])
        else:
            prob.add(f"S{p + 1}{q + 1}",
                     lambda v, p=p, q=q: cl(v, p, q) + cl(v, q, p) + 2.0 * alpha * v["Y"])
    if cap is not None:
        for p in range(len(systems)):
            prob.add(f"cap{p + 1}",
                     lambda v, p=p: np.block([[v["Y"], v[f"M{p + 1}"].T],
                                              [v[f"M{p + 1}"], cap ** 2 * np.eye(nu)]]),
                     "pos")
    return prob


def synthesize_vertex_gains(source, cfg: SynthesisConfig) -> tuple[np.ndarray, np.ndarray]:
    """Common-Lyapunov state-feedback design over the vertex systems.

    Finds ``Y >= I`` and ``M_p`` with
    ``A_p Y + Y A_p^T + B_p M_q + M_q^T B_p^T + alpha Y < 0`` (pairs ``p < q``
    summed symmetrically), then ``K_p = M_p Y^-1``. When a gain norm exceeds
    ``cfg.gain_cap`` the problem is re-solved with norm-bound LMIs
    ``[[Y, M_p^T], [M_p, cap^2]] >= 0`` added.

    Returns ``(K, Y)`` with ``K`` of shape ``(n_vertices, n_x)``.
    """
    S = cfg.scaling
    systems = [scale_system(g, S) for g in _systems(source)]
    alpha = cfg.design_alpha
    sol = solve(_synthesis_problem(systems, alpha, cfg.rel_margin, None), budget=cfg.budget)
    if sol.feasible:
        K = _gains(sol.values, len(systems))
        if np.max(np.linalg.norm(K, axis=1)) <= cfg.gain_cap:
            return K @ S, sol.values["Y"]
    sol = solve(_synthesis_problem(systems, alpha, cfg.rel_margin, cfg.gain_cap), budget=cfg.budget)
    if not sol.feasible:
        raise SynthesisError(
            f"no common Lyapunov design found for alpha={alpha:g} within gain cap "
            f"{cfg.gain_cap:g}; worst constraint {sol.worst[0]} slack {sol.worst[1]:.3g}",
            margins=sol.extreme, worst=sol.worst)
    return _gains(sol.values, len(systems)) @ S, sol.values["Y"]


def _gains(values: dict, n: int) -> np.ndarray:
    Y = values["Y"]
    return np.vstack([np.linalg.solve(Y.T, values[f"M{p + 1}"].T).T for p in range(n)])


# ---------------------------------------------------------------------------
# certificate

def phi_block(A_cl: np.ndarray, P: np.ndarray, tau: float, alpha: float, gamma: float,
              block22: str = "tau") -> np.ndarray:
    """``[[A^T P + P A + alpha P + tau gamma^2 I, P], [P, -tau I]]`` (or ``-gamma I``)."""
    n = P.shape[0]
    top = A_cl.T @ P + P @ A_cl + alpha * P + tau * gamma ** 2 * np.eye(n)
    low = -(tau if block22 == "tau" else gamma) * np.eye(n)
    return np.block([[top, P], [P, low]])


def _certificate_problem(systems, K, cfg: SynthesisConfig) -> LmiProblem:
    n = len(systems)
    nx = systems[0].A.shape[0]
    prob = LmiProblem(rel_margin=cfg.rel_margin)
    prob.symmetric("P", nx)
    prob.scalar("tau")
    Acl = [[systems[p].A + systems[p].B @ K[q][None, :] for q in range(n)] for p in range(n)]
    eye = np.eye(nx)
    prob.add("P>=I", lambda v: v["P"] - eye, "pos")
    prob.add("tau>=0", lambda v: np.array([[v["tau"]]]), "pos")

    def phi(v, p, q):
        return phi_block(Acl[p][q], v["P"], v["tau"], cfg.alpha, cfg.gamma, cfg.block22)

    for p, q in pair_indices(n):
        if p == q:
            prob.add(f"Phi{p + 1}{q + 1}", lambda v, p=p: phi(v, p, p))
        else:
            prob.add(f"Phi{p + 1}{q + 1}+Phi{q + 1}{p + 1}",
                     lambda v, p=p, q=q: phi(v, p, q) + phi(v, q, p))
    return prob


def _warm_start(Y: np.ndarray, gamma: float) -> dict:
    # P = Y^-1 is a Lyapunov matrix of the design; scale it to P >= I and pick
    # tau balancing the tau*gamma^2 and P^2/tau terms of the Schur complement.
    P = np.linalg.inv(0.5 * (Y + Y.T))
    P = P / np.linalg.eigvalsh(P)[0]
    norm = float(np.linalg.eigvalsh(P)[-1])
    tau = norm / gamma if gamma > 0 else norm
    return {"P": P, "tau": tau}


def verify_theorem1(source, K: np.ndarray, cfg: SynthesisConfig,
                    raise_on_failure: bool = True, Y: np.ndarray | None = None) -> SynthesisResult:
    """Search ``P >= I``, ``tau >= 0`` certifying the given vertex gains.

    ``Y`` (the design matrix returned by :func:`synthesize_vertex_gains`)
    seeds the search with ``P ~ Y^-1``. Every reported margin is recomputed
    with the in-house eigenvalue routine (independent of the solver's LAPACK
    calls) before the result is accepted.
    """
    S = cfg.scaling
    systems = [scale_system(g, S) for g in _systems(source)]
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[0] != len(systems):
        raise ValueError(f"{len(systems)} vertices but {K.shape[0]} gains")
    prob = _certificate_problem(systems, K @ np.linalg.inv(S), cfg)
    z0 = prob.pack(_warm_start(Y, cfg.gamma)) if Y is not None else None
    sol = solve(prob, budget=cfg.budget, z0=z0)
    slack = check_solution(prob, sol.z)
    names = [c.name for c in prob.constraints if c.name.startswith("Phi")]
    eps = {c.name: c.eps for c in prob.constraints}
    margins = {nm: -(slack[nm] + eps[nm]) for nm in names}
    ok = sol.feasible and all(v >= 0 for v in slack.values())
    result = SynthesisResult(K=K, P=sol.values["P"], tau=float(sol.values["tau"]),
                             alpha=cfg.alpha, gamma=cfg.gamma, margins=margins,
                             eps={nm: eps[nm] for nm in names}, feasible=ok,
                             block22=cfg.block22,
                             notes={"iterations": sol.iterations, "P_margin": slack["P>=I"],
                                    "tau_margin": slack["tau>=0"]})
    if not ok and raise_on_failure:
        worst = result.worst
        raise SynthesisError(
            f"certificate not found; worst pair {worst[0]} lambda_max {worst[1]:.3g}",
            margins=margins, worst=worst)
    return result


def estimate_gamma(samples: np.ndarray, reduction: PcaReduction, poly: Polytope,
                   K: np.ndarray, params: VehicleParams, percentile: float = 99.0,
                   inflate: float = 1.25, n_dirs: int = 8, stride: int = 10,
                   seed: int = 0, state_scale=None) -> float:
    """Empirical bound on ``||dA x + dB K x|| / ||x||`` from reconstruction error.

    ``dA = A(theta) - A(theta_hat)`` over every ``stride``-th training sample,
    with ``n_dirs`` random unit directions each. With ``state_scale`` the
    ratio is measured in the scaled state used by the certificate.
    """
    rng = np.random.default_rng(seed)
    S = np.eye(4) if state_scale is None else np.diag(1.0 / np.asarray(state_scale, dtype=float))
    Si = np.linalg.inv(S)
    ratios = []
    for j in range(0, samples.shape[1], stride):
        theta = samples[:, j]
        eta = reduce_point(theta, reduction)
        th_hat = reconstruct(eta, reduction)
        G, Gh = assemble_system(theta, params), assemble_system(th_hat, params)
        xi, _ = membership(poly, eta)
        Kh = xi @ K
        D = S @ ((G.A - Gh.A) + (G.B - Gh.B) @ Kh[None, :]) @ Si
        X = rng.standard_normal((D.shape[1], n_dirs))
        X /= np.linalg.norm(X, axis=0)
        ratios.extend(np.linalg.norm(D @ X, axis=0))
    return float(inflate * np.percentile(ratios, percentile))


# ---------------------------------------------------------------------------
# online law

def scheduled_gain(xi, K: np.ndarray) -> np.ndarray:
    return np.asarray(xi, dtype=float) @ K


class ScheduledController:
    """``delta = (sum_p xi_p K_p) x`` with ``xi`` from the reduced scheduling point."""

    def __init__(self, reduction: PcaReduction, poly: Polytope, gains: SynthesisResult,
                 delta_max: float = 0.5, check_provenance: bool = True):
        if check_provenance and gains.provenance:
            expected = provenance_hash(reduction, poly)
            if gains.provenance != expected:
                raise ConfigurationError(
                    f"gain artifact provenance {gains.provenance} does not match "
                    f"reduction/polytope {expected}")
        if gains.K.shape[0] != poly.n_vertices:
            raise ConfigurationError("gain count does not match polytope vertex count")
        self.reduction, self.poly, self.K = reduction, poly, gains.K
        self.delta_max = delta_max
        # fold normalization and projection into one affine map
        law = reduction.law
        scale = np.where(law.half_range > 0, 1.0 / np.where(law.half_range > 0, law.half_range, 1.0), 0.0)
        self._W = reduction.U_s.T * scale[None, :]
        self._b = -self._W @ law.center

    def __call__(self, x, theta):
        eta = self._W @ np.asarray(theta, dtype=float) + self._b
        xi, outside = membership(self.poly, eta)
        delta = float(scheduled_gain(xi, self.K) @ np.asarray(x, dtype=float))
        delta = min(self.delta_max, max(-self.delta_max, delta))
        return delta, eta, xi, outside


def scheduled_control(x, theta, reduction: PcaReduction, poly: Polytope,
                      gains: SynthesisResult, delta_max: float = 0.5) -> float:
    return ScheduledController(reduction, poly, gains, delta_max)(x, theta)[0]


class FixedGainController:
    def __init__(self, K, delta_max: float = 0.5):
        self.K = np.asarray(K, dtype=float).ravel()
        self.delta_max = delta_max

    def __call__(self, x, theta):
        delta = float(self.K @ np.asarray(x, dtype=float))
        return min(self.delta_max, max(-self.delta_max, delta)), None, None, False


@dataclass
class LtiBaseline:
    K: np.ndarray
    theta: np.ndarray
    system: LpvSystem
    Vx: float
    C_af: float
    C_ar: float
    certificate: SynthesisResult | None = None

    def to_text(self) -> str:
        fmt = lambda a: " ".join(f"{float(v):.17g}" for v in np.ravel(a))
        return (f"K = {fmt(self.K)}\nVx = {self.Vx:.17g}\nC_af = {self.C_af:.17g}\n"
                f"C_ar = {self.C_ar:.17g}\n")

    @classmethod
    def from_text(cls, text: str, params: VehicleParams) -> "LtiBaseline":
        kv = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
        Vx, caf, car = float(kv["Vx"]), float(kv["C_af"]), float(kv["C_ar"])
        theta = build_theta(Vx, caf, car)
        return cls(np.array([float(v) for v in kv["K"].split()]), theta,
                   assemble_system(theta, params), Vx, caf, car)


def lti_gain(params: VehicleParams, trajectory: Trajectory | None, cfg: SynthesisConfig,
             Vx_design: float = 50.0 / 3.6) -> LtiBaseline:
    """Single-vertex design at ``Vx_design`` with the mean training stiffness."""
    if trajectory is None:
        caf, car = params.C_af0, params.C_ar0
    else:
        caf = float(np.mean(trajectory.samples[1])) / 2.0
        car = float(np.mean(trajectory.samples[3])) / 2.0
    theta = build_theta(Vx_design, caf, car)
    system = assemble_system(theta, params)
    K, _ = synthesize_vertex_gains([system], cfg)
    return LtiBaseline(K[0], theta, system, Vx_design, caf, car)
