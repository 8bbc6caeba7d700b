"""Run reporting: delimited log export, summary JSON, and rendered figures.

CSV floats are written with repr(), the shortest decimal form that parses
back to the identical double, so exports are byte-deterministic and
round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .mtpa import mtpa_point
from .plant import MotorParams
from .scenario import ScenarioLog


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    return repr(float(value))


def export_csv(log: ScenarioLog, path: str) -> str:
    """Write one header row plus one row per control tick, newline-terminated."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(log.columns)
            for row in log.rows():
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def write_summary(summary: dict, path: str) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return path


def _setup_matplotlib():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams.update({
        "figure.dpi": 110,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 9,
        "lines.linewidth": 1.0,
    })
    return plt


def emit_plots(log: ScenarioLog, out_dir: str, params: MotorParams) -> list[str]:
    """Render the standard report figures into out_dir.

    timeseries.png: speed, torque, currents, estimate/angle traces.
    trajectory.png: (i_d, i_q) path over the analytic MTPA curve,
    constant-torque contours, and the current-limit circle.
    """
    if len(log) == 0:
        raise ValueError("cannot plot an empty log")
    plt = _setup_matplotlib()
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    t = log.column("t")

    fig, axes = plt.subplots(4, 1, figsize=(8, 9), sharex=True)
    ax = axes[0]
    ax.plot(t, log.column("omega_m") * 60.0 / (2.0 * math.pi), label="speed")
    ax.plot(t, log.column("omega_ref") * 60.0 / (2.0 * math.pi), "--", label="reference")
    ax.set_ylabel("speed (r/min)")
    ax.legend(loc="lower right")

    ax = axes[1]
    ax.plot(t, log.column("T_e"), label="T_e")
    ax.plot(t, log.column("T_L"), "--", label="T_L")
    obs = log.column("obs_T_hat")
    if np.any(log.column("obs_valid") > 0):
        ax.plot(t, obs, ":", label="observer")
    ax.set_ylabel("torque (N m)")
    ax.legend(loc="lower right")

    ax = axes[2]
    ax.plot(t, log.column("i_d"), label="i_d")
    ax.plot(t, log.column("i_q"), label="i_q")
    ax.plot(t, log.column("i_s"), label="i_s")
    ax.set_ylabel("current (A)")
    ax.legend(loc="upper right")

    ax = axes[3]
    modes = log.column("mode")
    if np.any(modes == "dcee"):
        ax.plot(t, log.column("psi_f_hat_mean") * 1e3, label="psi_f_hat (mWb)")
        ax.plot(t, log.column("L_qd_hat_mean") * 1e6, label="L_qd_hat (uH)")
        ax.legend(loc="upper right")
        ax.set_ylabel("estimates")
    else:
        ax.plot(t, log.column("beta"), label="beta (rad)")
        ax.legend(loc="lower right")
        ax.set_ylabel("angle (rad)")
    ax.set_xlabel("time (s)")
    fig.tight_layout()
    p = os.path.join(out_dir, "timeseries.png")
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(6, 6))
    # constant-torque contours: i_q = T / (1.5 p_n (psi_f + (L_d - L_q) i_d))
    i_d_grid = np.linspace(-0.9 * params.I_smax, 0.0, 400)
    for frac in (0.25, 0.5, 0.75, 1.0):
        T_c = frac * params.T_N
        denom = 1.5 * params.p_n * (params.psi_f - params.L_qd * i_d_grid)
        i_q_c = T_c / denom
        mask = np.hypot(i_d_grid, i_q_c) <= 1.05 * params.I_smax
        ax.plot(i_d_grid[mask], i_q_c[mask], color="0.7", lw=0.8)
        if mask.any():
            ax.annotate(f"{T_c:.0f} N m", (i_d_grid[mask][0], i_q_c[mask][0]),
                        fontsize=7, color="0.4")
    # analytic MTPA curve
    curve = [mtpa_point(i, params.psi_f, params.L_qd) for i in
             np.linspace(0.0, params.I_smax, 200)]
    ax.plot([c.i_d_ref for c in curve], [c.i_q_ref for c in curve],
            "k--", lw=1.2, label="MTPA curve")
    theta = np.linspace(0.0, math.pi / 2.0, 100)
    ax.plot(-params.I_smax * np.sin(theta), params.I_smax * np.cos(theta),
            "r:", lw=1.0, label="current limit")
    ax.plot(log.column("i_d"), log.column("i_q"), lw=0.8, label="trajectory")
    ax.set_xlabel("i_d (A)")
    ax.set_ylabel("i_q (A)")
    ax.legend(loc="upper left")
    ax.set_xlim(-params.I_smax * 1.05, params.I_smax * 0.15)
    ax.set_ylim(-5.0, params.I_smax * 1.05)
    fig.tight_layout()
    p = os.path.join(out_dir, "trajectory.png")
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)
    return paths


def read_csv(path: str) -> ScenarioLog:
    """Rebuild a ScenarioLog from an exported CSV."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_est = sum(1 for c in header if c.startswith("psi_f_hat_") and c[10:].isdigit())
        log = ScenarioLog(n_est)
        if header != log.columns:
            raise ValueError(f"{path} does not match the scenario log schema")
        for raw in reader:
            row = {}
            for name, cell in zip(header, raw):
                row[name] = cell if name in ("mode", "torque_source") else float(cell)
            log.append(row)
    return log
