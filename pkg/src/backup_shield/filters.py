"""Safety filters: the projection-based backup CBF program and an HOCBF baseline.

Row layout of the backup program (all rows in ``G u <= w`` form), in order:

1. for each constraint j, for each theta sample:
   ``-dh_j(phi) Q g(x) u <= dh_j(phi) Q f(x) + alpha_j(h_j(phi))``
2. one terminal row for the backup set at theta = T,
3. for each constraint j the direct row ``a_j(x) u <= b_j(x)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .backup import BackupPair, flow_arrays, theta_grid
from .constraints import ClassK, Kind, MixedConstraint, ProjectedConstraint, eval_H, project
from .dynamics import Plant
from .errors import NonFiniteControlError
from .qp import QpProblem, QpSolution, Status, least_violation, solve

Array = np.ndarray


class DecisionStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE_FALLBACK = "infeasible_fallback"


@dataclass
class FilterDecision:
    u: Array
    status: DecisionStatus
    margins: Array
    flow_min_margins: Array | None
    terminal_margin: float
    qp: QpSolution | None = None

    @property
    def fallback_used(self) -> bool:
        return self.status is DecisionStatus.INFEASIBLE_FALLBACK


@dataclass
class BackupCbfFilter:
    plant: Plant
    pair: BackupPair
    constraints: Sequence[MixedConstraint]
    alphas: Sequence[ClassK]
    alpha_b: ClassK
    T: float
    N_c: int
    k_d: Callable[[Array], Array]
    projections: list[ProjectedConstraint] = field(init=False)
    thetas: Array = field(init=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.N_c < 2:
            raise ValueError("N_c must be at least 2")
        if len(self.alphas) != len(self.constraints):
            raise ValueError("need one class-K function per constraint")
        self.constraints = list(self.constraints)
        self.alphas = list(self.alphas)
        self.projections = [project(c, self.pair) for c in self.constraints]
        self.thetas = theta_grid(self.T, self.N_c)

    @property
    def n_rows(self) -> int:
        return len(self.constraints) * self.N_c + 1 + len(self.constraints)

    def flow_margins(self, x) -> tuple[Array, float]:
        """Per-constraint min over theta of h_j(phi), and h_b(phi(T))."""
        phi, _ = flow_arrays(self.pair, self.plant, x, self.thetas)
        mins = np.array([np.min(pc.h(phi)) for pc in self.projections])
        return mins, float(self.pair.h_b(phi[-1]))


def _flow_rows(filt: BackupCbfFilter, x, fx, gx):
    phi, Q = flow_arrays(filt.pair, filt.plant, x, filt.thetas)
    blocks_G, blocks_w, mins = [], [], []
    for pc, alpha in zip(filt.projections, filt.alphas):
        h = pc.h(phi)
        v = np.einsum("ki,kij->kj", pc.grad_h(phi), Q)
        blocks_G.append(-(v @ gx))
        blocks_w.append(v @ fx + alpha(h))
        mins.append(np.min(h))
    return phi, Q, blocks_G, blocks_w, np.array(mins)


def _terminal_row(filt: BackupCbfFilter, phi_T, Q_T, fx, gx):
    hb = float(filt.pair.h_b(phi_T))
    v = filt.pair.grad_h_b(phi_T) @ Q_T
    return -(v @ gx)[None, :], np.array([v @ fx + filt.alpha_b(hb)]), hb


def _desired(k_d, x) -> Array:
    u_d = np.atleast_1d(np.asarray(k_d(x), dtype=float))
    if not np.all(np.isfinite(u_d)):
        raise NonFiniteControlError(x, u_d)
    return u_d


def _direct_rows(constraints, x):
    G = np.array([c.a(x) for c in constraints]).reshape(len(constraints), -1)
    w = np.array([float(c.b(x)) for c in constraints])
    return G, w


def _assemble_with_telemetry(filt: BackupCbfFilter, x):
    x = filt.plant.check_state(x)
    fx, gx = filt.plant.f(x), filt.plant.g(x)
    phi, Q, blocks_G, blocks_w, mins = _flow_rows(filt, x, fx, gx)
    Gt, wt, hb = _terminal_row(filt, phi[-1], Q[-1], fx, gx)
    Gd, wd = _direct_rows(filt.constraints, x)
    G = np.vstack(blocks_G + [Gt, Gd])
    w = np.concatenate(blocks_w + [wt, wd])
    return QpProblem(_desired(filt.k_d, x), G, w), mins, hb


def assemble(filt: BackupCbfFilter, x) -> QpProblem:
    return _assemble_with_telemetry(filt, x)[0]


def assemble_decoupled(filt: BackupCbfFilter, x) -> QpProblem:
    """Program for decoupled state and constant input constraints.

    Input constraints contribute one row on the time derivative of k_b at the
    current state instead of a row per flow sample.
    """
    x = filt.plant.check_state(x)
    for c in filt.constraints:
        if c.kind not in (Kind.STATE, Kind.INPUT):
            raise ValueError(f"constraint {c.name or c} is mixed; decoupled form needs state/input only")
    fx, gx = filt.plant.f(x), filt.plant.g(x)
    phi, Q = flow_arrays(filt.pair, filt.plant, x, filt.thetas)
    kb = filt.pair.k_b(x)
    jkb = filt.pair.jac_k_b(x)
    blocks_G, blocks_w = [], []
    for c, pc, alpha in zip(filt.constraints, filt.projections, filt.alphas):
        if c.kind is Kind.STATE:
            v = np.einsum("ki,kij->kj", pc.grad_h(phi), Q)
            blocks_G.append(-(v @ gx))
            blocks_w.append(v @ fx + alpha(pc.h(phi)))
        else:
            a = c.a(x)
            aj = a @ jkb
            blocks_G.append((aj @ gx)[None, :])
            blocks_w.append(np.array([alpha(float(c.b(x)) - a @ kb) - aj @ fx]))
    Gt, wt, _ = _terminal_row(filt, phi[-1], Q[-1], fx, gx)
    Gd, wd = _direct_rows(filt.constraints, x)
    G = np.vstack(blocks_G + [Gt, Gd])
    w = np.concatenate(blocks_w + [wt, wd])
    return QpProblem(_desired(filt.k_d, x), G, w)


def decide(filt: BackupCbfFilter, x) -> FilterDecision:
    """Solve the backup program at ``x``; fall back to k_b(x) if infeasible."""
    x = filt.plant.check_state(x)
    problem, mins, hb = _assemble_with_telemetry(filt, x)
    sol = solve(problem)
    if sol.status is Status.OPTIMAL:
        u, status = sol.u_star, DecisionStatus.OPTIMAL
    else:
        u, status = np.atleast_1d(filt.pair.k_b(x)), DecisionStatus.INFEASIBLE_FALLBACK
    margins = np.array([float(eval_H(c, x, u)) for c in filt.constraints])
    return FilterDecision(u=u, status=status, margins=margins, flow_min_margins=mins,
                          terminal_margin=hb, qp=sol)


# --- HOCBF baseline ---------------------------------------------------------


@dataclass
class HocbfFilter:
    """Second-order barrier on the angle limit with input/power rows added directly.

    ``psi_e(x) = -2 x1 x2 + gamma (phi_max^2 - x1^2)`` is built from
    ``psi = phi_max^2 - x1^2``. When the program is infeasible the input
    minimising the largest normalised row violation is applied.
    """

    gamma: float
    phi_max: float
    k_d: Callable[[Array], Array]
    constraints: Sequence[MixedConstraint]
    alpha: ClassK = ClassK(15.0)
    direct_rows: bool = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        self.constraints = list(self.constraints)

    def psi_e(self, x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return -2.0 * x1 * x2 + self.gamma * (self.phi_max**2 - x1**2)

    def grad_psi_e(self, x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([-2.0 * x2 - 2.0 * self.gamma * x1, -2.0 * x1], axis=-1)

    def problem(self, plant: Plant, x) -> QpProblem:
        x = plant.check_state(x)
        grad = self.grad_psi_e(x)
        G = [-(grad @ plant.g(x))[None, :]]
        w = [np.array([grad @ plant.f(x) + self.alpha(self.psi_e(x))])]
        if self.direct_rows:
            direct = [c for c in self.constraints if c.kind is not Kind.STATE]
            if direct:
                Gd, wd = _direct_rows(direct, x)
                G.append(Gd)
                w.append(wd)
        return QpProblem(_desired(self.k_d, x), np.vstack(G), np.concatenate(w))


def hocbf_decide(filt: HocbfFilter, plant: Plant, x) -> FilterDecision:
    x = plant.check_state(x)
    problem = filt.problem(plant, x)
    sol = solve(problem)
    if sol.status is Status.OPTIMAL:
        u, status = sol.u_star, DecisionStatus.OPTIMAL
    else:
        u, _ = least_violation(problem)
        status = DecisionStatus.INFEASIBLE_FALLBACK
    margins = np.array([float(eval_H(c, x, u)) for c in filt.constraints])
    return FilterDecision(u=u, status=status, margins=margins, flow_min_margins=None,
                          terminal_margin=float("nan"), qp=sol)
