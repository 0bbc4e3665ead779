"""Backup control barrier function safety filters for mixed state-input constraints."""

__version__ = "0.1.0"

from .backup import (AnalyticLinear, BackupPair, FlowSample, NumericRK4, flow, matrix_exponential,
                     pendulum_backup_pair, pendulum_flow_closed_form)
from .constraints import ClassK, MixedConstraint, ProjectedConstraint, eval_H, kb_time_derivative, project
from .dynamics import Plant, eval_closed_loop, eval_drift, pendulum_plant
from .filters import (BackupCbfFilter, FilterDecision, HocbfFilter, assemble, assemble_decoupled, decide,
                      hocbf_decide)
from .params import PendulumParams, build_backup_filter, build_hocbf_filter
from .qp import QpProblem, QpSolution, brute_force_oracle, solve

__all__ = [
    "AnalyticLinear", "BackupPair", "FlowSample", "NumericRK4", "flow", "matrix_exponential",
    "pendulum_backup_pair", "pendulum_flow_closed_form", "ClassK", "MixedConstraint",
    "ProjectedConstraint", "eval_H", "kb_time_derivative", "project", "Plant", "eval_closed_loop",
    "eval_drift", "pendulum_plant", "BackupCbfFilter", "FilterDecision", "HocbfFilter", "assemble",
    "assemble_decoupled", "decide", "hocbf_decide", "PendulumParams", "build_backup_filter",
    "build_hocbf_filter", "QpProblem", "QpSolution", "brute_force_oracle", "solve",
]
