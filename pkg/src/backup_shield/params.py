"""Pendulum scenario parameters and builders for the two filters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backup import AnalyticLinear, NumericRK4, pendulum_backup_pair, pendulum_linear_A
from .constraints import ClassK, PendulumLimits, pendulum_constraints
from .dynamics import pendulum_plant
from .filters import BackupCbfFilter, HocbfFilter


def zero_controller(x):
    return np.zeros(1)


@dataclass(frozen=True)
class PendulumParams:
    u_min: float = -1.1
    u_max: float = 1.2
    P_min: float = -0.7
    P_max: float = 0.2
    phi_max: float = 1.75
    K: float = 0.7
    X2: float = 0.2
    gamma: float = 0.7
    T: float = 8.0
    N_c: int = 100
    alpha_gain: float = 15.0
    alpha_b_gain: float = 1.0
    hocbf_alpha_gain: float = 15.0
    flow_mode: str = "analytic"
    rk4_step: float = 1e-3

    def limits(self) -> PendulumLimits:
        return PendulumLimits(phi_max=self.phi_max, u_min=self.u_min, u_max=self.u_max,
                              P_min=self.P_min, P_max=self.P_max)


def build_pair(p: PendulumParams):
    if p.flow_mode == "analytic":
        mode = AnalyticLinear(pendulum_linear_A(p.K))
    elif p.flow_mode == "rk4":
        mode = NumericRK4(p.rk4_step)
    else:
        raise ValueError(f"unknown flow_mode {p.flow_mode!r}")
    return pendulum_backup_pair(p.K, p.phi_max, p.X2, mode)


def build_backup_filter(p: PendulumParams = PendulumParams(), k_d=zero_controller,
                        constraint_subset=None) -> BackupCbfFilter:
    """Backup filter for the pendulum; ``constraint_subset`` picks among H1..H6 by index."""
    constraints = pendulum_constraints(p.limits())
    if constraint_subset is not None:
        constraints = [constraints[i] for i in constraint_subset]
    return BackupCbfFilter(
        plant=pendulum_plant(),
        pair=build_pair(p),
        constraints=constraints,
        alphas=[ClassK(p.alpha_gain)] * len(constraints),
        alpha_b=ClassK(p.alpha_b_gain),
        T=p.T,
        N_c=p.N_c,
        k_d=k_d,
    )


def build_hocbf_filter(p: PendulumParams = PendulumParams(), k_d=zero_controller) -> HocbfFilter:
    return HocbfFilter(gamma=p.gamma, phi_max=p.phi_max, k_d=k_d,
                       constraints=pendulum_constraints(p.limits()),
                       alpha=ClassK(p.hocbf_alpha_gain))
