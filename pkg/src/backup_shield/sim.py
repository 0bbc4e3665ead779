"""Closed-loop simulation of the pendulum under a safety filter.

The filter is evaluated every ``dt`` seconds and its input is held constant
(zero-order hold) while the plant is integrated with ``substeps`` RK4 steps.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import Plant, eval_field
from .errors import ConfigError, DivergedFlowError, NonFiniteControlError, QpStallError
from .filters import DecisionStatus, decide, hocbf_decide
from .params import PendulumParams, build_backup_filter, build_hocbf_filter

log = logging.getLogger(__name__)

FILTERS = ("backup", "hocbf")
DEFAULT_INITIAL_STATES = ((-0.2, 0.6), (0.2, -0.6))
MAX_DT = 0.02


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    t_end: float = 20.0
    substeps: int = 10
    initial_states: tuple = DEFAULT_INITIAL_STATES
    filter_choice: str = "backup"
    params: PendulumParams = field(default_factory=PendulumParams)

    def __post_init__(self):
        if not (self.dt > 0 and self.dt <= MAX_DT):
            raise ConfigError(f"dt must lie in (0, {MAX_DT}], got {self.dt}")
        if not self.t_end >= self.dt:
            raise ConfigError(f"t_end must be at least dt, got {self.t_end}")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")
        if self.filter_choice not in FILTERS:
            raise ConfigError(f"filter_choice must be one of {FILTERS}, got {self.filter_choice!r}")
        states = tuple(tuple(float(v) for v in s) for s in self.initial_states)
        if not states or any(len(s) != 2 or not all(map(math.isfinite, s)) for s in states):
            raise ConfigError("initial_states must be a nonempty list of finite 2-vectors")
        object.__setattr__(self, "initial_states", states)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.dt + 1e-9))


@dataclass
class TrajectoryLog:
    filter_choice: str
    initial_state: tuple
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    status: list
    H: np.ndarray
    flow_min: np.ndarray
    terminal: np.ndarray
    failure: str | None = None

    @property
    def power(self) -> np.ndarray:
        return self.x[:, 1] * self.u[:, 0]

    @property
    def infeasible_steps(self) -> int:
        return sum(s is DecisionStatus.INFEASIBLE_FALLBACK for s in self.status)

    @property
    def max_violation(self) -> float:
        return float(max(0.0, -np.min(self.H))) if len(self.H) else 0.0


def rk4_hold(plant: Plant, x, u, dt: float, substeps: int) -> np.ndarray:
    h = dt / substeps
    for _ in range(substeps):
        k1 = eval_field(plant, x, u)
        k2 = eval_field(plant, x + 0.5 * h * k1, u)
        k3 = eval_field(plant, x + 0.5 * h * k2, u)
        k4 = eval_field(plant, x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def run_one(config: SimConfig, x0, filter_choice: str | None = None, k_d=None) -> TrajectoryLog:
    choice = filter_choice or config.filter_choice
    kwargs = {} if k_d is None else {"k_d": k_d}
    backup = build_backup_filter(config.params, **kwargs)
    hocbf = build_hocbf_filter(config.params, **kwargs) if choice == "hocbf" else None
    plant = backup.plant
    steps = config.n_steps + 1
    n_h = len(backup.constraints)
    t = np.arange(steps) * config.dt
    xs = np.full((steps, plant.n), np.nan)
    us = np.full((steps, plant.m), np.nan)
    H = np.full((steps, n_h), np.nan)
    flow_min = np.full(steps, np.nan)
    terminal = np.full(steps, np.nan)
    status = []
    failure = None
    x = np.array(x0, dtype=float)
    k = 0
    try:
        for k in range(steps):
            if hocbf is None:
                d = decide(backup, x)
                fmin, term = d.flow_min_margins, d.terminal_margin
            else:
                d = hocbf_decide(hocbf, plant, x)
                fmin, term = backup.flow_margins(x)
            xs[k], us[k], H[k] = x, d.u, d.margins
            flow_min[k], terminal[k] = np.min(fmin), term
            status.append(d.status)
            if k + 1 < steps:
                x = rk4_hold(plant, x, d.u, config.dt, config.substeps)
                if not np.all(np.isfinite(x)):
                    raise NonFiniteControlError(xs[k], d.u)
        k = steps
    except (QpStallError, DivergedFlowError, NonFiniteControlError) as exc:
        failure = f"{type(exc).__name__}: {exc}"
        log.warning("trajectory from %s truncated at t=%.3f: %s", tuple(x0), k * config.dt, failure)
    n = len(status)
    return TrajectoryLog(choice, tuple(float(v) for v in x0), t[:n], xs[:n], us[:n], status,
                         H[:n], flow_min[:n], terminal[:n], failure)


def run(config: SimConfig, k_d=None) -> list[TrajectoryLog]:
    return [run_one(config, x0, k_d=k_d) for x0 in config.initial_states]


def summarize(logs: list[TrajectoryLog]) -> list[dict]:
    if not logs:
        raise ValueError("no trajectories to summarize")
    rows = []
    for i, lg in enumerate(logs):
        rows.append({
            "trajectory": i,
            "filter": lg.filter_choice,
            "x1_0": lg.initial_state[0],
            "x2_0": lg.initial_state[1],
            "steps": len(lg.t),
            "x1_min": float(np.min(lg.x[:, 0])),
            "x1_max": float(np.max(lg.x[:, 0])),
            "u_min": float(np.min(lg.u)),
            "u_max": float(np.max(lg.u)),
            "power_min": float(np.min(lg.power)),
            "power_max": float(np.max(lg.power)),
            "infeasible_steps": lg.infeasible_steps,
            "max_violation": lg.max_violation,
            "failure": lg.failure or "",
        })
    return rows


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def trajectory_header(n_constraints: int = 6) -> list[str]:
    return (["t", "x1", "x2", "u", "power", "status"]
            + [f"H{j + 1}" for j in range(n_constraints)] + ["flow_min", "terminal"])


def write_trajectory_csv(lg: TrajectoryLog, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trajectory_header(lg.H.shape[1]))
        power = lg.power
        for k in range(len(lg.t)):
            writer.writerow([_fmt(lg.t[k]), _fmt(lg.x[k, 0]), _fmt(lg.x[k, 1]), _fmt(lg.u[k, 0]),
                             _fmt(power[k]), lg.status[k].value, *map(_fmt, lg.H[k]),
                             _fmt(lg.flow_min[k]), _fmt(lg.terminal[k])])
    return path


def write_summary_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(rows[0]))
        for row in rows:
            writer.writerow([_fmt(v) for v in row.values()])
    return path
