"""Plot-ready CSV tables and PNG figures for a finished design.

Each figure ``<stem>.png`` is rendered from the table ``<stem>.csv`` written
next to it, so the numbers behind every plot stay inspectable.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simulator import SimLog  # noqa: E402

__all__ = ["STYLE", "write_table", "ey_figure", "delta_figure", "roll_figure", "xy_figure",
           "vm_figure", "write_report"]

STYLE = {
    "figure.figsize": (6.4, 3.6),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.labelsize": 10,
    "font.size": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
}

COLORS = {"lpv": "#08589e", "lti": "#d95f0e", "road": "#777777", "nosc": "#d95f0e"}


def write_table(path: Path, header: list[str], columns: list[np.ndarray]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([f"{float(v):.17g}" for v in row])
    return path


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    # no metadata so the bytes only depend on the data
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _pair(a: SimLog, b: SimLog) -> int:
    return min(len(a), len(b))


def ey_figure(out: Path, lpv: SimLog, lti: SimLog) -> list[Path]:
    n = _pair(lpv, lti)
    t = lpv.t[:n]
    table = write_table(out / "fig_ey.csv", ["t", "ey_lpv", "ey_lti"],
                        [t, lpv.x[:n, 0], lti.x[:n, 0]])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, lti.x[:n, 0], color=COLORS["lti"], label="LTI")
        ax.plot(t, lpv.x[:n, 0], color=COLORS["lpv"], label="LPV")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("lateral offset $e_y$ [m]")
        ax.legend(loc="best")
        return [table, _save(fig, out / "fig_ey.png")]


def delta_figure(out: Path, lpv: SimLog, lti: SimLog) -> list[Path]:
    n = _pair(lpv, lti)
    t = lpv.t[:n]
    table = write_table(out / "fig_delta.csv", ["t", "delta_lpv", "delta_lti"],
                        [t, lpv.delta[:n], lti.delta[:n]])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, np.degrees(lti.delta[:n]), color=COLORS["lti"], label="LTI")
        ax.plot(t, np.degrees(lpv.delta[:n]), color=COLORS["lpv"], label="LPV")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("steering angle $\\delta$ [deg]")
        ax.legend(loc="best")
        return [table, _save(fig, out / "fig_delta.png")]


def roll_figure(out: Path, with_sc: SimLog, without_sc: SimLog, phi_max: float) -> list[Path]:
    n = _pair(with_sc, without_sc)
    t = with_sc.t[:n]
    table = write_table(out / "fig_roll.csv",
                        ["t", "phi_speed_control", "phi_no_speed_control",
                         "vx_speed_control", "vx_no_speed_control"],
                        [t, with_sc.roll[:n, 0], without_sc.roll[:n, 0],
                         with_sc.vx[:n], without_sc.vx[:n]])
    with plt.rc_context(STYLE):
        fig, (ax, ax_v) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.0))
        ax.plot(t, np.degrees(without_sc.roll[:n, 0]), color=COLORS["nosc"],
                label="without speed control")
        ax.plot(t, np.degrees(with_sc.roll[:n, 0]), color=COLORS["lpv"], label="with speed control")
        ax.axhline(np.degrees(phi_max), color=COLORS["road"], ls="--", lw=0.8, label="$\\phi_{max}$")
        ax.set_ylabel("roll angle $\\phi$ [deg]")
        ax.legend(loc="best")
        ax_v.plot(t, 3.6 * without_sc.vx[:n], color=COLORS["nosc"])
        ax_v.plot(t, 3.6 * with_sc.vx[:n], color=COLORS["lpv"])
        ax_v.set_xlabel("time [s]")
        ax_v.set_ylabel("speed [km/h]")
        return [table, _save(fig, out / "fig_roll.png")]


def xy_figure(out: Path, road_xy: np.ndarray, lpv: SimLog, lti: SimLog) -> list[Path]:
    n = _pair(lpv, lti)
    paths = [write_table(out / "fig_xy_road.csv", ["X", "Y"], [road_xy[:, 0], road_xy[:, 1]]),
             write_table(out / "fig_xy.csv", ["t", "X_lpv", "Y_lpv", "X_lti", "Y_lti"],
                         [lpv.t[:n], lpv.pose[:n, 0], lpv.pose[:n, 1],
                          lti.pose[:n, 0], lti.pose[:n, 1]])]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 5.0))
        ax.plot(road_xy[:, 0], road_xy[:, 1], color=COLORS["road"], lw=3.0, alpha=0.5,
                label="lane centre")
        ax.plot(lti.pose[:n, 0], lti.pose[:n, 1], color=COLORS["lti"], label="LTI")
        ax.plot(lpv.pose[:n, 0], lpv.pose[:n, 1], color=COLORS["lpv"], label="LPV")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("X [m]")
        ax.set_ylabel("Y [m]")
        ax.legend(loc="best")
        paths.append(_save(fig, out / "fig_xy.png"))
    return paths


def vm_figure(out: Path, table: list[tuple[int, float]]) -> list[Path]:
    ms = np.array([k for k, _ in table], dtype=float)
    vs = np.array([v for _, v in table])
    path = write_table(out / "fig_vm.csv", ["m", "v_m"], [ms, vs])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.4))
        ax.bar(ms, vs, color=COLORS["lpv"], width=0.6)
        ax.set_ylim(min(0.5, float(vs.min()) - 0.05), 1.02)
        ax.set_xticks(ms)
        ax.set_xlabel("reduction dimension $m$")
        ax.set_ylabel("fraction of total variation $v_m$")
        return [path, _save(fig, out / "fig_vm.png")]


def write_report(out: Path, lpv: SimLog, lti: SimLog, lpv_no_sc: SimLog,
                 road_xy: np.ndarray, vm: list[tuple[int, float]], phi_max: float) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    paths += ey_figure(out, lpv, lti)
    paths += delta_figure(out, lpv, lti)
    paths += roll_figure(out, lpv, lpv_no_sc, phi_max)
    paths += xy_figure(out, road_xy, lpv, lti)
    paths += vm_figure(out, vm)
    return paths
