"""Affine mixed state-input constraints H(x, u) = b(x) - a(x) u >= 0.

A constraint is projected onto the state space along the backup controller,
``h(x) = H(x, k_b(x))``. State constraints (a = 0) pass through unchanged,
input constraints become state constraints on where k_b is admissible.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .backup import BackupPair
from .dynamics import Plant

Array = np.ndarray


class Kind(enum.Enum):
    STATE = "state"
    INPUT = "input"
    MIXED = "mixed"


@dataclass(frozen=True)
class MixedConstraint:
    """Affine-in-input constraint.

    Shapes for a state batch ``(..., n)``: ``a`` -> (..., m), ``b`` -> (...),
    ``grad_a_rows`` -> (..., m, n), ``grad_b`` -> (..., n).
    """

    a: Callable[[Array], Array]
    b: Callable[[Array], Array]
    grad_a_rows: Callable[[Array], Array]
    grad_b: Callable[[Array], Array]
    kind: Kind = Kind.MIXED
    name: str = ""


@dataclass(frozen=True)
class ClassK:
    """Linear class-K function alpha(s) = gain * s."""

    gain: float

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError(f"class-K gain must be positive, got {self.gain}")

    def __call__(self, s):
        return self.gain * np.asarray(s, dtype=float)


def eval_H(c: MixedConstraint, x, u) -> Array:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u.reshape(1)
    return c.b(x) - np.sum(c.a(x) * u, axis=-1)


@dataclass(frozen=True)
class ProjectedConstraint:
    source: MixedConstraint
    pair: BackupPair

    def h(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        return eval_H(self.source, x, self.pair.k_b(x))

    def grad_h(self, x) -> Array:
        # d/dx [b - a.k_b] = grad_b - sum_i k_b,i grad a_i - jac_k_b^T a
        x = np.asarray(x, dtype=float)
        c = self.source
        a = c.a(x)
        kb = self.pair.k_b(x)
        return (
            c.grad_b(x)
            - np.einsum("...i,...ij->...j", kb, c.grad_a_rows(x))
            - np.einsum("...ij,...i->...j", self.pair.jac_k_b(x), a)
        )


def project(c: MixedConstraint, pair: BackupPair) -> ProjectedConstraint:
    return ProjectedConstraint(source=c, pair=pair)


def kb_time_derivative(pair: BackupPair, plant: Plant, x, u) -> Array:
    """Time derivative of k_b(x) along xdot = f(x) + g(x) u."""
    x = plant.check_state(x)
    u = plant.check_input(u)
    xdot = plant.f(x) + np.einsum("...ij,...j->...i", plant.g(x), u)
    return np.einsum("...ij,...j->...i", pair.jac_k_b(x), xdot)


# --- pendulum constraint set ----------------------------------------------


def _const(value, shape_fn):
    return lambda x: np.full(shape_fn(np.asarray(x, dtype=float)), float(value))


def _affine_state(coef0, coef1, offset):
    """b(x) = offset + coef0 x1 + coef1 x2, with its gradient."""

    def b(x):
        x = np.asarray(x, dtype=float)
        return offset + coef0 * x[..., 0] + coef1 * x[..., 1]

    def grad_b(x):
        x = np.asarray(x, dtype=float)
        g = np.empty(x.shape)
        g[..., 0] = coef0
        g[..., 1] = coef1
        return g

    return b, grad_b


def _zero_a(x):
    return np.zeros(np.asarray(x).shape[:-1] + (1,))


def _zero_grad_a(x):
    return np.zeros(np.asarray(x).shape[:-1] + (1, 2))


def _state_constraint(coef0, offset, name):
    b, grad_b = _affine_state(coef0, 0.0, offset)
    return MixedConstraint(a=_zero_a, b=b, grad_a_rows=_zero_grad_a, grad_b=grad_b,
                           kind=Kind.STATE, name=name)


def _input_constraint(sign, bound, name):
    # H = bound_term - sign*u
    return MixedConstraint(
        a=_const(sign, lambda x: x.shape[:-1] + (1,)),
        b=_const(bound, lambda x: x.shape[:-1]),
        grad_a_rows=_zero_grad_a,
        grad_b=lambda x: np.zeros(np.asarray(x).shape),
        kind=Kind.INPUT,
        name=name,
    )


def _power_constraint(sign, bound, name):
    # H = bound - sign * x2 * u
    def a(x):
        return (sign * np.asarray(x, dtype=float)[..., 1])[..., None]

    def grad_a_rows(x):
        g = np.zeros(np.asarray(x).shape[:-1] + (1, 2))
        g[..., 0, 1] = sign
        return g

    return MixedConstraint(a=a, b=_const(bound, lambda x: x.shape[:-1]), grad_a_rows=grad_a_rows,
                           grad_b=lambda x: np.zeros(np.asarray(x).shape), kind=Kind.MIXED, name=name)


@dataclass(frozen=True)
class PendulumLimits:
    phi_max: float = 1.75
    u_min: float = -1.1
    u_max: float = 1.2
    P_min: float = -0.7
    P_max: float = 0.2


def pendulum_constraints(limits: PendulumLimits = PendulumLimits()) -> list[MixedConstraint]:
    """Angle, torque and power limits as six affine constraints H1..H6."""
    lim = limits
    return [
        _state_constraint(-1.0, lim.phi_max, "H1"),
        _state_constraint(1.0, lim.phi_max, "H2"),
        _input_constraint(1.0, lim.u_max, "H3"),
        _input_constraint(-1.0, -lim.u_min, "H4"),
        _power_constraint(1.0, lim.P_max, "H5"),
        _power_constraint(-1.0, -lim.P_min, "H6"),
    ]
