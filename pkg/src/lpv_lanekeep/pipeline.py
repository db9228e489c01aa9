"""End-to-end stages shared by the command line and the acceptance tests.

Artifacts are plain text (17 significant digits) kept in one output
directory under fixed names, so each stage can pick up where the previous
one stopped.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Settings
from .controller import (FixedGainController, LtiBaseline, ScheduledController, SynthesisResult,
                         estimate_gamma, lti_gain, provenance_hash, synthesize_vertex_gains,
                         verify_theorem1)
from .polytope import Polytope, select_simplex
from .scheduling import (PcaReduction, Trajectory, collect_trajectories, fraction_of_variation,
                         normalize, pca_reduce, read_trajectory_csv, reconstruct, reduce_batch,
                         write_trajectory_csv)
from .simulator import Metrics, SimLog, run

__all__ = [
    "FILES",
    "Design",
    "collect",
    "reduce",
    "vm_table",
    "reconstruction_error",
    "synthesize",
    "make_controller",
    "simulate",
    "compare_logs",
    "percent_reduction",
    "sha256_file",
    "save_reduction",
    "load_reduction",
    "save_design",
    "load_design",
]

FILES = {
    "trajectory": "trajectory.csv",
    "reduction": "reduction.txt",
    "polytope": "polytope.txt",
    "vm": "vm_table.csv",
    "gains": "gains.txt",
    "lti": "lti.txt",
    "certificate": "certificate.csv",
}


def collect(settings: Settings) -> Trajectory:
    return collect_trajectories(settings.scenarios, settings.params, T=settings.T,
                                dt=settings.collect_dt)


def reduce(traj: Trajectory, settings: Settings) -> tuple[PcaReduction, Polytope]:
    normalized, law = normalize(traj)
    reduction = pca_reduce(normalized, settings.m, law)
    H = reduce_batch(traj.samples, reduction)
    poly = select_simplex(H, reduction, settings.params, cond_cap=settings.cond_cap)
    return reduction, poly


def vm_table(reduction: PcaReduction) -> list[tuple[int, float]]:
    """Fraction of total variation ``v_m`` for ``m = 1..5``."""
    n = reduction.singular_values.size
    return [(k, fraction_of_variation(reduction, k)) for k in range(1, n + 1)]


def reconstruction_error(traj: Trajectory, reduction: PcaReduction) -> np.ndarray:
    """Per-variable RMS reconstruction error relative to the sample RMS of that variable."""
    H = reduce_batch(traj.samples, reduction)
    rec = reconstruct(H, reduction)
    err = np.sqrt(np.mean((rec - traj.samples) ** 2, axis=1))
    ref = np.sqrt(np.mean(traj.samples ** 2, axis=1))
    return err / np.where(ref > 0, ref, 1.0)


@dataclass
class Design:
    """LPV vertex gains with their certificate, plus the LTI baseline."""

    gains: SynthesisResult
    lti: LtiBaseline


def synthesize(traj: Trajectory, reduction: PcaReduction, poly: Polytope,
               settings: Settings, raise_on_failure: bool = True) -> Design:
    """Vertex gains, perturbation bound, certificate and the LTI baseline.

    Raises :class:`~lpv_lanekeep.controller.SynthesisError` when either the
    gain design or the certificate search fails (unless
    ``raise_on_failure`` is false, in which case a failed certificate is
    returned with ``feasible = False``).
    """
    cfg = settings.synthesis
    K, Y = synthesize_vertex_gains(poly, cfg)
    if settings.gamma_auto:
        gamma = estimate_gamma(traj.samples, reduction, poly, K, settings.params,
                               seed=settings.sim.seed, state_scale=cfg.state_scale)
        cfg = dataclasses.replace(cfg, gamma=gamma)
    result = verify_theorem1(poly, K, cfg, raise_on_failure=raise_on_failure, Y=Y)
    result.Y = Y
    result.provenance = provenance_hash(reduction, poly)
    lti = lti_gain(settings.params, traj, settings.synthesis, Vx_design=settings.lti_speed)
    return Design(result, lti)


def make_controller(kind: str, design: Design, reduction: PcaReduction, poly: Polytope,
                    delta_max: float):
    if kind == "lpv":
        return ScheduledController(reduction, poly, design.gains, delta_max)
    if kind == "lti":
        return FixedGainController(design.lti.K, delta_max)
    raise ValueError(f"unknown controller {kind!r}")


def simulate(settings: Settings, kind: str, design: Design, reduction: PcaReduction,
             poly: Polytope, **overrides) -> tuple[SimLog, Metrics]:
    """Closed-loop run on the configured road; ``overrides`` patch the simulation config."""
    sim = dataclasses.replace(settings.sim, controller=kind, **overrides)
    ctrl = make_controller(kind, design, reduction, poly, sim.delta_max)
    return run(settings.road, sim, settings.params, ctrl)


def percent_reduction(baseline: float, candidate: float) -> float:
    """``100 (baseline - candidate) / baseline``; zero when both are zero."""
    if baseline == 0.0:
        return 0.0 if candidate == 0.0 else -float("inf")
    return 100.0 * (baseline - candidate) / baseline


def compare_logs(a: SimLog, b: SimLog, rel_len_tol: float = 0.02) -> list[tuple[str, float, float, float]]:
    """Metric table ``(name, a, b, percent reduction of b relative to a)``.

    The logs must share the sample period and start time and agree in
    length to within ``rel_len_tol``; the comparison uses their common span.
    """
    if len(a) < 2 or len(b) < 2:
        raise ValueError("logs need at least two samples")
    da, db = np.diff(a.t[:2])[0], np.diff(b.t[:2])[0]
    if abs(da - db) > 1e-9 * max(da, db) or abs(a.t[0] - b.t[0]) > 1e-9:
        raise ValueError("logs have different time bases")
    n = min(len(a), len(b))
    if abs(len(a) - len(b)) > rel_len_tol * max(len(a), len(b)):
        raise ValueError(f"logs cover different scenarios ({len(a)} vs {len(b)} samples)")
    rows = []
    for name, fn in _COMPARE_METRICS:
        va, vb = fn(a, n), fn(b, n)
        rows.append((name, va, vb, percent_reduction(va, vb)))
    return rows


_COMPARE_METRICS = (
    ("max_abs_ey", lambda g, n: float(np.max(np.abs(g.x[:n, 0])))),
    ("rms_ey", lambda g, n: float(np.sqrt(np.mean(g.x[:n, 0] ** 2)))),
    ("peak_abs_roll", lambda g, n: float(np.max(np.abs(g.roll[:n, 0])))),
    ("rms_delta", lambda g, n: float(np.sqrt(np.mean(g.delta[:n] ** 2)))),
)


# ---------------------------------------------------------------------------
# artifact I/O

def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_reduction(out: Path, reduction: PcaReduction, poly: Polytope) -> list[Path]:
    paths = [out / FILES["reduction"], out / FILES["polytope"], out / FILES["vm"]]
    paths[0].write_text(reduction.to_text(), encoding="utf-8")
    paths[1].write_text(poly.to_text(), encoding="utf-8")
    rows = ["m,v_m"] + [f"{k},{v:.17g}" for k, v in vm_table(reduction)]
    paths[2].write_text("\n".join(rows) + "\n", encoding="utf-8")
    return paths


def load_reduction(out: Path, settings: Settings) -> tuple[PcaReduction, Polytope]:
    reduction = PcaReduction.from_text((out / FILES["reduction"]).read_text(encoding="utf-8"))
    poly = Polytope.from_text((out / FILES["polytope"]).read_text(encoding="utf-8"), settings.params)
    return reduction, poly


def save_design(out: Path, design: Design) -> list[Path]:
    paths = [out / FILES["gains"], out / FILES["lti"], out / FILES["certificate"]]
    paths[0].write_text(design.gains.to_text(), encoding="utf-8")
    paths[1].write_text(design.lti.to_text(), encoding="utf-8")
    g = design.gains
    rows = ["constraint,lambda_max,eps,status"]
    for name, lam in g.margins.items():
        ok = "ok" if lam <= -g.eps[name] else "violated"
        rows.append(f"{name},{lam:.17g},{g.eps[name]:.17g},{ok}")
    paths[2].write_text("\n".join(rows) + "\n", encoding="utf-8")
    return paths


def load_design(out: Path, settings: Settings) -> Design:
    gains = SynthesisResult.from_text((out / FILES["gains"]).read_text(encoding="utf-8"))
    lti = LtiBaseline.from_text((out / FILES["lti"]).read_text(encoding="utf-8"), settings.params)
    return Design(gains, lti)


def load_trajectory(out: Path) -> Trajectory:
    return read_trajectory_csv(out / FILES["trajectory"])


def save_trajectory(out: Path, traj: Trajectory) -> Path:
    path = out / FILES["trajectory"]
    write_trajectory_csv(path, traj)
    return path
