"""Dense strictly convex QP ``min ||u - u_d||^2  s.t.  G u <= w``.

The solver is a dual active-set method (Goldfarb-Idnani) specialised to the
identity Hessian: it starts at the unconstrained minimiser ``u_d`` and adds
the most violated row at each major iteration, dropping rows whose multiplier
would turn negative. Infeasibility is confirmed by a phase-1 linear program
that minimises the largest normalised row violation.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import QpStallError

Array = np.ndarray

FEAS_TOL = 1e-10
INFEASIBLE_TOL = 1e-9


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QpProblem:
    u_d: Array
    G: Array
    w: Array

    def __post_init__(self):
        u_d = np.atleast_1d(np.asarray(self.u_d, dtype=float))
        G = np.asarray(self.G, dtype=float).reshape(-1, u_d.size)
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if G.shape[0] != w.size:
            raise ValueError(f"G has {G.shape[0]} rows but w has {w.size} entries")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(w)) and np.all(np.isfinite(u_d))):
            raise ValueError("QP data must be finite")
        object.__setattr__(self, "u_d", u_d)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "w", w)

    @property
    def m(self) -> int:
        return self.u_d.size

    @property
    def k(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class QpSolution:
    u_star: Array
    status: Status
    active_set: list = field(default_factory=list)
    kkt_residual: float = 0.0
    max_violation: float = 0.0  # phase-1 optimum, normalised rows; >0 only when infeasible
    iterations: int = 0


def _row_norms(G):
    norms = np.linalg.norm(G, axis=1)
    return np.where(norms > 0, norms, 1.0), norms > 0


def kkt_residual(p: QpProblem, u: Array, active: list, mu: Array) -> float:
    grad = u - p.u_d
    if active:
        grad = grad + p.G[active].T @ mu
    slack = p.G @ u - p.w
    res = np.abs(grad).max(initial=0.0)
    res = max(res, slack.max(initial=0.0), (-mu).max(initial=0.0))
    if active:
        res = max(res, np.abs(mu * slack[active]).max())
    return float(res)


def _dual_active_set(p: QpProblem):
    """Returns ``(u, active, mu, iterations)`` or ``None`` if infeasible."""
    G, w = p.G, p.w
    scale, nonzero = _row_norms(G)
    if np.any(~nonzero & (w < -FEAS_TOL)):
        return None
    u = p.u_d.copy()
    active: list[int] = []
    mu = np.zeros(0)
    guard = 10 * (p.k + p.m)
    iterations = 0
    while True:
        viol = (G @ u - w) / scale
        viol[~nonzero] = -np.inf
        tol = FEAS_TOL * np.maximum(1.0, np.abs(w) / scale)
        if p.k == 0 or np.all(viol <= tol):
            return u, active, mu, iterations
        cand = np.where(viol > tol, viol, -np.inf)
        cand[active] = -np.inf
        j = int(np.argmax(cand))  # first index wins ties
        if not np.isfinite(cand[j]):
            return u, active, mu, iterations
        gp = G[j]
        mu_p = 0.0
        while True:
            iterations += 1
            if iterations > guard:
                raise QpStallError(f"active-set iteration exceeded {guard} steps (degenerate rows?)")
            if active:
                N = G[active].T
                r = np.linalg.solve(N.T @ N, N.T @ gp)
                z = gp - N @ r
            else:
                r = np.zeros(0)
                z = gp.copy()
            zz = float(z @ z)
            slack_p = float(gp @ u - w[j])
            full = slack_p / zz if zz > 1e-24 * float(gp @ gp) else np.inf
            blocking = r > 1e-14
            if np.any(blocking):
                ratios = np.where(blocking, mu / np.where(blocking, r, 1.0), np.inf)
                drop = int(np.argmin(ratios))
                partial = float(ratios[drop])
            else:
                drop, partial = -1, np.inf
            step = min(full, partial)
            if not np.isfinite(step):
                return None
            if np.isfinite(full):
                u = u - step * z
            mu = mu - step * r
            mu_p += step
            if full <= partial:
                active.append(j)
                mu = np.append(mu, mu_p)
                break
            del active[drop]
            mu = np.delete(mu, drop)


def phase_one(p: QpProblem) -> tuple[Array, float]:
    """Minimise the largest normalised violation ``max_i (G_i u - w_i)/|G_i|``.

    Returns the minimiser and the optimal value (clipped below at -1).
    """
    if p.k == 0:
        return p.u_d.copy(), -1.0
    scale, nonzero = _row_norms(p.G)
    Gn = p.G / scale[:, None]
    wn = p.w / scale
    const_viol = np.max(-wn[~nonzero], initial=-1.0)
    Gn, wn = Gn[nonzero], wn[nonzero]
    if Gn.shape[0] == 0:
        return p.u_d.copy(), float(max(const_viol, -1.0))
    c = np.zeros(p.m + 1)
    c[-1] = 1.0
    A = np.hstack([Gn, -np.ones((Gn.shape[0], 1))])
    bounds = [(None, None)] * p.m + [(-1.0, None)]
    res = linprog(c, A_ub=A, b_ub=wn, bounds=bounds, method="highs")
    if res.status != 0:
        raise QpStallError(f"phase-1 LP failed: {res.message}")
    u = res.x[:-1]
    value = float(np.max(Gn @ u - wn))
    return u, max(value, const_viol, -1.0)


def solve(p: QpProblem) -> QpSolution:
    out = _dual_active_set(p)
    if out is None:
        _, v = phase_one(p)
        if v > INFEASIBLE_TOL:
            return QpSolution(u_star=np.full(p.m, np.nan), status=Status.INFEASIBLE, max_violation=v)
        # numerically borderline: relax every row by the phase-1 margin
        scale, _ = _row_norms(p.G)
        relaxed = QpProblem(p.u_d, p.G, p.w + (max(v, 0.0) + INFEASIBLE_TOL) * scale)
        out = _dual_active_set(relaxed)
        if out is None:
            return QpSolution(u_star=np.full(p.m, np.nan), status=Status.INFEASIBLE, max_violation=v)
    u, active, mu, iterations = out
    order = np.argsort(active, kind="stable")
    active = [active[i] for i in order]
    mu = mu[order] if len(active) else mu
    return QpSolution(u_star=u, status=Status.OPTIMAL, active_set=active,
                      kkt_residual=kkt_residual(p, u, active, mu), iterations=iterations)


def least_violation(p: QpProblem) -> tuple[Array, float]:
    """Point closest to ``u_d`` among those attaining the phase-1 optimum.

    Every row is relaxed by the minimal uniform (normalised) violation, so the
    returned input spreads the unavoidable violation across the rows.
    """
    _, v = phase_one(p)
    scale, _ = _row_norms(p.G)
    relaxed = QpProblem(p.u_d, p.G, p.w + (max(v, 0.0) + INFEASIBLE_TOL) * scale)
    out = _dual_active_set(relaxed)
    if out is None:
        raise QpStallError("relaxed problem unexpectedly infeasible")
    return out[0], max(v, 0.0)


def brute_force_oracle(p: QpProblem, box, grid_points: int = 201):
    """Feasible grid point nearest to ``u_d``; ``None`` if no grid point is feasible.

    ``box`` is either one ``(lo, hi)`` pair used for every coordinate or one
    pair per coordinate. Only for m <= 2.
    """
    if p.m > 2:
        raise ValueError("brute-force oracle supports m <= 2")
    if grid_points < 101:
        raise ValueError("grid_points must be at least 101")
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = np.tile(box, (p.m, 1))
    axes = [np.linspace(lo, hi, grid_points) for lo, hi in box]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, p.m)
    feasible = np.all(pts @ p.G.T <= p.w + 1e-12, axis=1) if p.k else np.ones(len(pts), bool)
    if not np.any(feasible):
        return None
    pts = pts[feasible]
    obj = np.sum((pts - p.u_d) ** 2, axis=1)
    return pts[int(np.argmin(obj))]
