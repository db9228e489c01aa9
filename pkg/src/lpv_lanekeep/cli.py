"""Command-line front end: ``lpv-lanekeep {collect,reduce,synth,sim,compare,report}``.

Exit codes: 0 success, 2 input or configuration error, 3 synthesis or
certificate failure, 4 simulation divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import logging
import sys
from pathlib import Path

from . import __version__
from . import pipeline as pl
from .config import ConfigError, Settings, load_config
from .controller import ConfigurationError, SynthesisError
from .polytope import GeometryError
from .report import write_report, write_table
from .scheduling import Trajectory
from .simulator import SimLog, SimulationDivergence

log = logging.getLogger("lpv_lanekeep")

EXIT_OK, EXIT_INPUT, EXIT_SYNTH, EXIT_DIVERGED = 0, 2, 3, 4


class InputError(Exception):
    """Missing or unreadable inputs; maps to exit code 2."""


class Diverged(Exception):
    """Simulation left the valid envelope; maps to exit code 4."""


# ---------------------------------------------------------------------------
# manifest

class Manifest:
    def __init__(self, subcommand: str, settings: Settings, out: Path):
        self.subcommand, self.settings, self.out = subcommand, settings, out
        self.started = _now()
        self.files: list[Path] = []
        self.summary: list[str] = []

    def add(self, *paths: Path) -> None:
        self.files.extend(paths)

    def note(self, line: str) -> None:
        self.summary.append(line)

    def write(self, outcome: str) -> Path:
        lines = [f"subcommand = {self.subcommand}",
                 f"config = {self.settings.source}",
                 f"tool_version = {__version__}",
                 f"started = {self.started}",
                 f"finished = {_now()}",
                 f"outcome = {outcome}"]
        lines += [f"summary = {s}" for s in self.summary]
        for p in self.files:
            lines.append(f"file {p.relative_to(self.out).as_posix()} = sha256:{pl.sha256_file(p)}")
        path = self.out / f"manifest_{self.subcommand}.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# artifact loading with input-error mapping

def _need(out: Path, key: str) -> Path:
    path = out / pl.FILES[key]
    if not path.is_file():
        raise InputError(f"missing artifact {path}; run the earlier pipeline stage first")
    return path


def _trajectory(out: Path) -> Trajectory:
    _need(out, "trajectory")
    try:
        return pl.load_trajectory(out)
    except (ValueError, KeyError, IndexError) as exc:
        raise InputError(f"malformed trajectory CSV: {exc}") from exc


def _reduction(out: Path, settings: Settings, m_flag: int | None):
    _need(out, "reduction")
    _need(out, "polytope")
    try:
        reduction, poly = pl.load_reduction(out, settings)
    except (ValueError, KeyError, IndexError, GeometryError) as exc:
        raise InputError(f"malformed reduction artifacts: {exc}") from exc
    if m_flag is not None and m_flag != reduction.m:
        raise InputError(f"--m {m_flag} does not match the stored reduction (m = {reduction.m})")
    return reduction, poly


def _design(out: Path, settings: Settings) -> pl.Design:
    _need(out, "gains")
    _need(out, "lti")
    try:
        return pl.load_design(out, settings)
    except (ValueError, KeyError, IndexError) as exc:
        raise InputError(f"malformed gain artifacts: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands

def cmd_collect(args, settings: Settings, out: Path, man: Manifest) -> None:
    try:
        traj = pl.collect(settings)
    except ValueError as exc:
        raise InputError(f"collection failed: {exc}") from exc
    man.add(pl.save_trajectory(out, traj))
    man.note(f"samples={traj.N} rejected={traj.rejected}")
    print(f"collected {traj.N} samples ({traj.rejected} rejected) -> {out / pl.FILES['trajectory']}")


def cmd_reduce(args, settings: Settings, out: Path, man: Manifest) -> None:
    traj = _trajectory(out)
    try:
        reduction, poly = pl.reduce(traj, settings)
    except GeometryError as exc:
        raise InputError(f"polytope construction failed: {exc}") from exc
    man.add(*pl.save_reduction(out, reduction, poly))
    print("m  v_m")
    for k, v in pl.vm_table(reduction):
        print(f"{k}  {v:.10f}")
    err = pl.reconstruction_error(traj, reduction)
    print(f"reconstruction relative RMS (m={reduction.m}): "
          + " ".join(f"{e:.3e}" for e in err))
    print(f"vertex candidates: {poly.n_candidates}; chosen corners {list(poly.corner_ids)}; "
          f"inflation {poly.inflation:.6f}; condition number {poly.condition_number():.3e}")
    man.note(f"m={reduction.m} candidates={poly.n_candidates} inflation={poly.inflation:.6f}")


def cmd_synth(args, settings: Settings, out: Path, man: Manifest) -> None:
    traj = _trajectory(out)
    reduction, poly = _reduction(out, settings, args.m)
    cfg = settings.synthesis
    if args.alpha is not None:
        cfg = dataclasses.replace(cfg, alpha=args.alpha)
    if args.gamma is not None:
        cfg = dataclasses.replace(cfg, gamma=args.gamma)
        settings = dataclasses.replace(settings, gamma_auto=False)
    settings = dataclasses.replace(settings, synthesis=cfg)
    design = pl.synthesize(traj, reduction, poly, settings)
    man.add(*pl.save_design(out, design))
    g = design.gains
    print(f"certificate: alpha={g.alpha:g} gamma={g.gamma:.6g} tau={g.tau:.6g}; "
          f"{len(g.margins)} constraints")
    for name, lam in g.margins.items():
        print(f"  {name:<16s} lambda_max={lam: .6e}  (eps {g.eps[name]:.1e})")
    for p, k in enumerate(g.K):
        print(f"  K{p + 1} = [" + ", ".join(f"{v: .5f}" for v in k) + "]")
    print("  K_lti = [" + ", ".join(f"{v: .5f}" for v in design.lti.K) + "]")
    man.note(f"constraints={len(g.margins)} worst={g.worst[0]}:{g.worst[1]:.3e}")


def cmd_sim(args, settings: Settings, out: Path, man: Manifest) -> None:
    reduction, poly = _reduction(out, settings, args.m)
    design = _design(out, settings)
    kind = args.controller
    try:
        simlog, metrics = pl.simulate(settings, kind, design, reduction, poly)
    except SimulationDivergence as exc:
        raise Diverged(f"simulation diverged at t={exc.last_good_time:.2f} s: {exc}") from exc
    log_path = out / f"simlog_{kind}.csv"
    simlog.to_csv(log_path)
    met_path = out / f"metrics_{kind}.txt"
    met_path.write_text(metrics.to_text(), encoding="utf-8")
    man.add(log_path, met_path)
    for k, v in metrics.as_dict().items():
        print(f"{k:>16s} = {v}")
    if metrics.aborted:
        raise Diverged("roll angle exceeded the abort limit")


def cmd_compare(args, settings: Settings, out: Path, man: Manifest) -> None:
    paths = [Path(p) for p in args.logs] if args.logs else [out / "simlog_lti.csv",
                                                             out / "simlog_lpv.csv"]
    if len(paths) != 2:
        raise InputError("compare needs exactly two logs: BASELINE CANDIDATE")
    logs = []
    for p in paths:
        if not p.is_file():
            raise InputError(f"missing log {p}")
        try:
            logs.append(SimLog.from_csv(p))
        except (ValueError, IndexError) as exc:
            raise InputError(str(exc)) from exc
    try:
        rows = pl.compare_logs(*logs)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    table = out / "comparison.csv"
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("metric,baseline,candidate,reduction_percent\n")
        for name, a, b, pct in rows:
            fh.write(f"{name},{a:.17g},{b:.17g},{pct:.17g}\n")
    man.add(table)
    print(f"baseline: {paths[0]}\ncandidate: {paths[1]}")
    print(f"{'metric':>14s} {'baseline':>12s} {'candidate':>12s} {'reduction':>10s}")
    for name, a, b, pct in rows:
        print(f"{name:>14s} {a:12.6g} {b:12.6g} {pct:9.2f}%")


def cmd_report(args, settings: Settings, out: Path, man: Manifest) -> None:
    reduction, poly = _reduction(out, settings, args.m)
    design = _design(out, settings)
    runs = {}
    try:
        for kind in ("lpv", "lti"):
            runs[kind] = pl.simulate(settings, kind, design, reduction, poly)[0]
        runs["lpv_no_sc"] = pl.simulate(settings, "lpv", design, reduction, poly,
                                        speed_control=False)[0]
    except SimulationDivergence as exc:
        raise Diverged(f"simulation diverged at t={exc.last_good_time:.2f} s: {exc}") from exc
    rdir = out / "report"
    paths = write_report(rdir, runs["lpv"], runs["lti"], runs["lpv_no_sc"],
                         settings.road.centerline(1.0), pl.vm_table(reduction),
                         settings.params.phi_max)
    rows = pl.compare_logs(runs["lti"], runs["lpv"])
    paths.append(write_table(rdir / "comparison.csv",
                             ["max_abs_ey_lti", "max_abs_ey_lpv", "rms_ey_lti", "rms_ey_lpv"],
                             [[rows[0][1]], [rows[0][2]], [rows[1][1]], [rows[1][2]]]))
    man.add(*paths)
    for name, a, b, pct in rows[:2]:
        print(f"{name}: LTI {a:.4g}  LPV {b:.4g}  reduction {pct:.1f}%")
    print(f"wrote {len(paths)} files to {rdir}")


COMMANDS = {
    "collect": (cmd_collect, "simulate the data-collection scenarios and write the trajectory CSV"),
    "reduce": (cmd_reduce, "PCA reduction, v_m table and simplex polytope"),
    "synth": (cmd_synth, "vertex gain synthesis, certificate and LTI baseline"),
    "sim": (cmd_sim, "closed-loop run on the interchange road"),
    "compare": (cmd_compare, "metric table and percent reduction between two logs"),
    "report": (cmd_report, "plot-ready CSV tables and PNG figures"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (defaults embedded)")
    common.add_argument("--out", default="out", help="artifact directory (default: ./out)")
    common.add_argument("--seed", type=int, help="seed for noise and perturbation sampling")
    common.add_argument("--m", type=int, help="reduced scheduling dimension (1..5)")
    common.add_argument("--controller", choices=("lpv", "lti"), default="lpv")
    common.add_argument("--no-speed-control", action="store_true",
                        help="disable the rollover speed cap")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="lpv-lanekeep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "synth":
            p.add_argument("--alpha", type=float, help="decay rate to certify")
            p.add_argument("--gamma", type=float, help="perturbation bound (default: estimated)")
        if name == "compare":
            p.add_argument("logs", nargs="*", metavar="LOG",
                           help="BASELINE CANDIDATE (default: simlog_lti.csv simlog_lpv.csv in --out)")
    return parser


def _settings(args) -> Settings:
    settings = load_config(args.config)
    if args.seed is not None:
        settings = settings.with_seed(args.seed)
    if args.m is not None:
        settings = settings.with_m(args.m)
    if args.no_speed_control:
        settings = settings.with_speed_control(False)
    return settings


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        settings = _settings(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest(args.command, settings, out)
    try:
        handler(args, settings, out, man)
    except (InputError, ConfigError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        man.write(f"input-error: {exc}")
        return EXIT_INPUT
    except SynthesisError as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        for name, lam in (exc.margins or {}).items():
            print(f"  {name:<16s} {lam: .6e}", file=sys.stderr)
        man.write(f"synthesis-failure: {exc}")
        return EXIT_SYNTH
    except Diverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        man.write(f"diverged: {exc}")
        return EXIT_DIVERGED
    man.write("ok")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
