"""Embedded oracle checks run by ``backup-shield selftest``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backup import (NumericRK4, flow_arrays, pendulum_backup_pair, pendulum_flow_closed_form,
                     perturbed_expm)
from .constraints import eval_H, pendulum_constraints, project
from .dynamics import pendulum_plant
from .qp import QpProblem, Status, brute_force_oracle, solve

SEED = 20240601
K = 0.7


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict}  {self.name:<34s} {self.value:.3e}  (tol {self.tolerance:.0e})"


def _states(rng, count):
    return np.column_stack([rng.uniform(-2, 2, count), rng.uniform(-1.5, 1.5, count)])


def check_flow(rng) -> CheckResult:
    plant = pendulum_plant()
    pair = pendulum_backup_pair(K, flow_mode=NumericRK4(1e-3))
    xs = _states(rng, 10)
    thetas = np.linspace(0.0, 8.0, 33)
    phi, _ = flow_arrays(pair, plant, xs, thetas)
    err = max(np.max(np.abs(phi[i, k] - pendulum_flow_closed_form(K, x, th).phi))
              for i, x in enumerate(xs) for k, th in enumerate(thetas))
    return CheckResult("flow analytic vs RK4", err < 1e-6, err, 1e-6)


def check_sensitivity(rng) -> CheckResult:
    plant = pendulum_plant()
    pair = pendulum_backup_pair(K)
    worst = 0.0
    for x, th in zip(_states(rng, 10), rng.uniform(0.0, 8.0, 10)):
        _, Q = flow_arrays(pair, plant, x, [th])
        fd = np.empty((2, 2))
        for j in range(2):
            h = 1e-6 * max(1.0, abs(x[j]))
            e = np.zeros(2)
            e[j] = h
            fd[:, j] = (pendulum_flow_closed_form(K, x + e, th).phi
                        - pendulum_flow_closed_form(K, x - e, th).phi) / (2 * h)
        worst = max(worst, np.linalg.norm(Q[0] - fd) / max(1.0, np.linalg.norm(fd)))
    return CheckResult("sensitivity Q vs finite differences", worst < 1e-4, worst, 1e-4)


def check_qp(rng) -> CheckResult:
    worst = 0.0
    for _ in range(30):
        m = int(rng.integers(1, 3))
        k = int(rng.integers(1, 6))
        u0 = rng.uniform(-1, 1, m)
        G = rng.normal(size=(k, m))
        w = G @ u0 + np.linalg.norm(G, axis=1) * rng.uniform(0.5, 1.5, k)
        p = QpProblem(rng.uniform(-3, 3, m), G, w)
        sol = solve(p)
        ref = brute_force_oracle(p, (-6.0, 6.0), 201)
        if sol.status is not Status.OPTIMAL or ref is None:
            return CheckResult("QP vs grid oracle", False, np.inf, 0.0)
        gap = np.sum((ref - p.u_d) ** 2) - np.sum((sol.u_star - p.u_d) ** 2)
        worst = max(worst, -gap)  # the oracle must never beat the solver
    return CheckResult("QP vs grid oracle", worst < 1e-9, worst, 1e-9)


def check_projection(rng) -> CheckResult:
    pair = pendulum_backup_pair(K)
    xs = _states(rng, 50)
    worst = 0.0
    for c in pendulum_constraints():
        pc = project(c, pair)
        direct = eval_H(c, xs, pair.k_b(xs))
        worst = max(worst, float(np.max(np.abs(direct - pc.h(xs)))))
    return CheckResult("projection identity", worst <= 1e-12, worst, 1e-12)


def run_selftest(expm_perturbation: float = 0.0) -> list[CheckResult]:
    rng = np.random.default_rng(SEED)
    with perturbed_expm(expm_perturbation):
        return [check_flow(rng), check_sensitivity(rng), check_qp(rng), check_projection(rng)]
