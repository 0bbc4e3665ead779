"""Figures for the set analysis and the closed-loop runs (PNG files).

Only the CLI's ``--plots`` path imports this module; the CSV outputs remain
the primary artefacts.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .params import PendulumParams, build_backup_filter  # noqa: E402
from .sets import GridSpec, SetMembershipGrid, boundary_contours  # noqa: E402

SET_STYLE = {
    "Cp": dict(color="tab:red", lw=1.6),
    "Sb": dict(color="tab:blue", lw=1.6),
    "Ce": dict(color="0.4", lw=1.2, ls=":"),
    "SIphi": dict(color="tab:cyan", lw=1.2),
    "SIphiu": dict(color="0.2", lw=1.2, ls="--"),
    "SIp": dict(color="tab:green", lw=1.8),
}
CONSTRAINT_COLORS = ["lightblue", "lightblue", "0.6", "0.6", "gold", "gold"]


def _draw(ax, grid: SetMembershipGrid, label=None, **style):
    for i, line in enumerate(boundary_contours(grid)):
        ax.plot(line[:, 0], line[:, 1], label=label if i == 0 else None, **style)


def _projected_fields(params: PendulumParams, spec: GridSpec):
    filt = build_backup_filter(params)
    states = spec.states()
    return [SetMembershipGrid(spec, c.name, pc.h(states)) for c, pc in zip(filt.constraints, filt.projections)]


def plot_sets(grids: dict, params: PendulumParams, path) -> Path:
    spec = grids["Cp"].spec
    fig, (ax_a, ax_b) = plt.subplots(1, 2, figsize=(10, 4.2), sharey=True)
    for grid, color in zip(_projected_fields(params, spec), CONSTRAINT_COLORS):
        # shade where the projected constraint is violated
        ax_a.contourf(spec.x1, spec.x2, (~grid.member).T.astype(float), levels=[0.5, 1.5], colors=[color], alpha=0.3)
    _draw(ax_a, grids["Cp"], label=r"$C_p$", **SET_STYLE["Cp"])
    _draw(ax_a, grids["Sb"], label=r"$S_b$", **SET_STYLE["Sb"])
    ax_a.set_title("(a) projected constraints")
    for label, tex in (("Ce", r"$C_e$"), ("SIphi", r"$S_I^\varphi$"), ("SIphiu", r"$S_I^{\varphi u}$"),
                       ("SIp", r"$S_I^p$")):
        _draw(ax_b, grids[label], label=tex, **SET_STYLE[label])
    ax_b.set_title("(b) invariant sets")
    for ax in (ax_a, ax_b):
        ax.set_xlim(spec.x1_range)
        ax.set_ylim(spec.x2_range)
        ax.set_xlabel(r"$x_1$ [rad]")
        ax.legend(loc="upper right", fontsize=8)
    ax_a.set_ylabel(r"$x_2$ [rad/s]")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_trajectories(logs, params: PendulumParams, path, grids: dict | None = None) -> Path:
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    ax_phase, ax_x1, ax_u, ax_p = axes.ravel()
    if grids is not None:
        _draw(ax_phase, grids["SIp"], label=r"$S_I^p$", **SET_STYLE["SIp"])
        _draw(ax_phase, grids["Cp"], label=r"$C_p$", **SET_STYLE["Cp"])
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    ics = list(dict.fromkeys(lg.initial_state for lg in logs))
    for lg in logs:
        ls = "-" if lg.filter_choice == "backup" else ":"
        tag = f"{lg.filter_choice} x0={lg.initial_state}"
        c = colors[ics.index(lg.initial_state) % len(colors)]
        ax_phase.plot(lg.x[:, 0], lg.x[:, 1], ls=ls, color=c, label=tag)
        ax_x1.plot(lg.t, lg.x[:, 0], ls=ls, color=c)
        ax_u.plot(lg.t, lg.u[:, 0], ls=ls, color=c)
        ax_p.plot(lg.t, lg.power, ls=ls, color=c)
    for ax, lims in ((ax_x1, (-params.phi_max, params.phi_max)), (ax_u, (params.u_min, params.u_max)),
                     (ax_p, (params.P_min, params.P_max))):
        for v in lims:
            ax.axhline(v, color="k", ls="--", lw=0.8)
        ax.set_xlabel("t [s]")
    ax_phase.set_xlabel(r"$x_1$ [rad]")
    ax_phase.set_ylabel(r"$x_2$ [rad/s]")
    ax_x1.set_ylabel(r"$x_1$ [rad]")
    ax_u.set_ylabel("u [Nm]")
    ax_p.set_ylabel("P [W]")
    ax_phase.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
