"""Grid classification of the projected constraint set, backup set and invariant sets.

A node belongs to a set when its margin (minimum over the set's defining
inequalities) is nonnegative. Invariant-set margins sample the backup flow
on the same uniform theta grid used by the filter.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backup import BackupPair, flow_arrays, theta_grid
from .constraints import ProjectedConstraint
from .dynamics import Plant
from .params import PendulumParams, build_backup_filter, build_hocbf_filter

LABELS = ("Cp", "Sb", "SIphi", "SIphiu", "SIp", "Ce")
SUBSETS = {"SIphi": (0, 1), "SIphiu": (0, 1, 2, 3), "SIp": (0, 1, 2, 3, 4, 5)}
NESTING = (("Sb", "Cp"), ("Sb", "SIp"), ("SIp", "SIphiu"), ("SIphiu", "SIphi"))


@dataclass(frozen=True)
class GridSpec:
    x1_range: tuple = (-2.2, 2.2)
    x2_range: tuple = (-1.5, 1.5)
    n1: int = 301
    n2: int = 301

    def __post_init__(self):
        for lo, hi in (self.x1_range, self.x2_range):
            if not hi > lo:
                raise ValueError(f"degenerate range ({lo}, {hi})")
        if self.n1 < 2 or self.n2 < 2:
            raise ValueError("need at least 2 points per axis")

    @property
    def x1(self):
        return np.linspace(*self.x1_range, self.n1)

    @property
    def x2(self):
        return np.linspace(*self.x2_range, self.n2)

    def states(self) -> np.ndarray:
        X1, X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        return np.stack([X1, X2], axis=-1)


@dataclass
class SetMembershipGrid:
    spec: GridSpec
    label: str
    margin: np.ndarray

    @property
    def member(self) -> np.ndarray:
        return self.margin >= 0

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.member))


def backup_set_margin(x, phi_max: float, X2: float):
    if not (phi_max > 0 and X2 > 0):
        raise ValueError("phi_max and X2 must be positive")
    x = np.asarray(x, dtype=float)
    return 1.0 - (x[..., 0] / phi_max) ** 2 - (x[..., 1] / X2) ** 2


def flow_minima(x, projections, pair: BackupPair, plant: Plant, T: float, N_c: int):
    """Per-constraint minimum of h_j over the sampled flow, plus h_b(phi(T)).

    Diverged flows give ``-inf``. Shapes: ``(..., len(projections))`` and ``(...)``.
    """
    phi, _ = flow_arrays(pair, plant, x, theta_grid(T, N_c), on_diverge="nan")
    mins = np.stack([np.min(pc.h(phi), axis=-1) for pc in projections], axis=-1)
    term = pair.h_b(phi[..., -1, :])
    return np.nan_to_num(mins, nan=-np.inf), np.nan_to_num(term, nan=-np.inf)


def membership_margin(x, constraint_subset: list[ProjectedConstraint], pair: BackupPair,
                      plant: Plant, T: float, N_c: int):
    mins, term = flow_minima(x, constraint_subset, pair, plant, T, N_c)
    return np.minimum(np.min(mins, axis=-1), term)


def worker_count() -> int:
    env = os.environ.get("BACKUP_SHIELD_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def compute_grids(params: PendulumParams = PendulumParams(), spec: GridSpec = GridSpec(),
                  threads: int | None = None) -> dict[str, SetMembershipGrid]:
    """Margins of all six sets on ``spec``; rows of the grid are farmed to threads."""
    filt = build_backup_filter(params)
    hocbf = build_hocbf_filter(params)
    states = spec.states()

    def rows(lo, hi):
        x = states[lo:hi]
        mins, term = flow_minima(x, filt.projections, filt.pair, filt.plant, params.T, params.N_c)
        h_now = np.stack([pc.h(x) for pc in filt.projections], axis=-1)
        return lo, mins, term, h_now

    n_workers = threads or worker_count()
    chunk = max(1, spec.n1 // (4 * n_workers))
    bounds = [(lo, min(lo + chunk, spec.n1)) for lo in range(0, spec.n1, chunk)]
    mins = np.empty((spec.n1, spec.n2, 6))
    term = np.empty((spec.n1, spec.n2))
    h_now = np.empty((spec.n1, spec.n2, 6))
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        for lo, m, t, h in pool.map(lambda b: rows(*b), bounds):
            hi = lo + m.shape[0]
            mins[lo:hi], term[lo:hi], h_now[lo:hi] = m, t, h

    margins = {
        "Cp": h_now.min(axis=-1),
        "Sb": backup_set_margin(states, params.phi_max, params.X2),
        "Ce": hocbf.psi_e(states),
    }
    for label, idx in SUBSETS.items():
        margins[label] = np.minimum(mins[..., list(idx)].min(axis=-1), term)
    return {label: SetMembershipGrid(spec, label, margins[label]) for label in LABELS}


@dataclass
class NestingReport:
    counts: dict
    violations: dict = field(default_factory=dict)  # "A<=B" -> array of (x1, x2) nodes

    @property
    def n_violations(self) -> int:
        return sum(len(v) for v in self.violations.values())

    @property
    def ok(self) -> bool:
        return self.n_violations == 0

    def lines(self) -> list[str]:
        out = [f"member counts: " + ", ".join(f"{k}={v}" for k, v in self.counts.items())]
        for rel, nodes in self.violations.items():
            out.append(f"{rel}: {len(nodes)} violations")
            out.extend(f"  x1={a:.9g} x2={b:.9g}" for a, b in nodes)
        out.append(f"total: {self.n_violations} violations")
        return out


def verify_nesting(grids: dict[str, SetMembershipGrid]) -> NestingReport:
    """Nodewise check of Sb <= Cp, Sb <= SIp <= SIphiu <= SIphi."""
    specs = {g.spec for g in grids.values()}
    if len(specs) != 1:
        raise ValueError("grids must share one GridSpec")
    states = specs.pop().states()
    violations = {}
    for small, big in NESTING:
        bad = grids[small].member & ~grids[big].member
        violations[f"{small}<={big}"] = states[bad]
    return NestingReport(counts={k: g.count for k, g in grids.items()}, violations=violations)


def write_grid_csv(grids: dict[str, SetMembershipGrid], path) -> Path:
    path = Path(path)
    spec = grids["Cp"].spec
    states = spec.states().reshape(-1, 2)
    cols = [grids[label].margin.reshape(-1) for label in LABELS]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x1", "x2"] + [f"margin_{label}" for label in LABELS])
        for i in range(states.shape[0]):
            writer.writerow([f"{v:.9g}" for v in (states[i, 0], states[i, 1], *(c[i] for c in cols))])
    return path


def boundary_contours(grid: SetMembershipGrid) -> list[np.ndarray]:
    """Zero level set of the margin field as polylines in state coordinates."""
    from skimage.measure import find_contours

    spec = grid.spec
    field_ = np.where(np.isfinite(grid.margin), grid.margin, -1e9)
    d1 = (spec.x1_range[1] - spec.x1_range[0]) / (spec.n1 - 1)
    d2 = (spec.x2_range[1] - spec.x2_range[0]) / (spec.n2 - 1)
    lines = []
    for c in find_contours(field_, 0.0):
        lines.append(np.column_stack([spec.x1_range[0] + c[:, 0] * d1, spec.x2_range[0] + c[:, 1] * d2]))
    return lines
