"""Control-affine plants ``xdot = f(x) + g(x) u`` and the inverted pendulum.

All plant callables broadcast over leading batch dimensions: a state array of
shape ``(..., n)`` yields drift ``(..., n)``, input matrix ``(..., n, m)`` and
so on. Single states are plain 1-D arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, NonFiniteControlError

Array = np.ndarray


@dataclass(frozen=True)
class Plant:
    """Control-affine plant with analytic Jacobians.

    ``jac_g_cols(x)`` returns the Jacobians of the columns of ``g`` stacked as
    ``(..., m, n, n)``.
    """

    n: int
    m: int
    f: Callable[[Array], Array]
    g: Callable[[Array], Array]
    jac_f: Callable[[Array], Array]
    jac_g_cols: Callable[[Array], Array]

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise DimensionError(f"plant dimensions must be positive, got n={self.n}, m={self.m}")

    def check_state(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.n,):
            raise DimensionError(f"expected state of length {self.n}, got shape {x.shape}")
        return x

    def check_input(self, u) -> Array:
        u = np.asarray(u, dtype=float)
        if u.ndim == 0 and self.m == 1:
            u = u.reshape(1)
        if u.shape[-1:] != (self.m,):
            raise DimensionError(f"expected input of length {self.m}, got shape {u.shape}")
        return u


def eval_drift(plant: Plant, x) -> Array:
    return plant.f(plant.check_state(x))


def eval_field(plant: Plant, x, u) -> Array:
    """Open-loop vector field f(x) + g(x) u for a given input."""
    x = plant.check_state(x)
    u = plant.check_input(u)
    return plant.f(x) + np.einsum("...ij,...j->...i", plant.g(x), u)


def eval_closed_loop(plant: Plant, x, controller: Callable[[Array], Array]) -> Array:
    x = plant.check_state(x)
    u = np.asarray(controller(x), dtype=float)
    if not np.all(np.isfinite(u)):
        raise NonFiniteControlError(x, u)
    return eval_field(plant, x, u)


def fd_jacobian(fun: Callable[[Array], Array], x, rel_step: float = 1e-6) -> Array:
    """Central-difference Jacobian of ``fun`` at a single point.

    Step per coordinate is ``rel_step * max(1, |x_i|)``. Used as a test oracle
    and as a fallback for plants without analytic derivatives.
    """
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x), dtype=float)
    jac = np.empty(f0.shape + (x.size,))
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        jac[..., i] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * h)
    return jac


def _pendulum_f(x):
    x = np.asarray(x, dtype=float)
    return np.stack([x[..., 1], np.sin(x[..., 0])], axis=-1)


def _pendulum_g(x):
    x = np.asarray(x, dtype=float)
    g = np.zeros(x.shape[:-1] + (2, 1))
    g[..., 1, 0] = 1.0
    return g


def _pendulum_jac_f(x):
    x = np.asarray(x, dtype=float)
    jac = np.zeros(x.shape[:-1] + (2, 2))
    jac[..., 0, 1] = 1.0
    jac[..., 1, 0] = np.cos(x[..., 0])
    return jac


def _pendulum_jac_g_cols(x):
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape[:-1] + (1, 2, 2))


def pendulum_plant() -> Plant:
    """Unit-coefficient inverted pendulum: x = (angle, angular rate), u = torque."""
    return Plant(
        n=2,
        m=1,
        f=_pendulum_f,
        g=_pendulum_g,
        jac_f=_pendulum_jac_f,
        jac_g_cols=_pendulum_jac_g_cols,
    )
