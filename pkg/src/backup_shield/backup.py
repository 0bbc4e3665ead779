"""Backup flow phi_b(theta, x) and its state sensitivity Q = d phi_b / d x.

Two evaluation strategies are available. ``NumericRK4`` integrates the closed
loop under the backup controller together with the variational equation
``Qdot = J(phi) Q``. ``AnalyticLinear`` applies when the backup closed loop is
exactly linear, ``xdot = A x``, in which case ``phi = expm(A theta) x`` and
``Q = expm(A theta)``.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
import scipy.linalg

from .dynamics import Plant
from .errors import DivergedFlowError

Array = np.ndarray

DIVERGENCE_BOUND = 1e9


@dataclass(frozen=True)
class NumericRK4:
    step: float = 1e-3

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("RK4 step must be positive")


@dataclass(frozen=True)
class AnalyticLinear:
    A: Array

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)


FlowMode = Union[NumericRK4, AnalyticLinear]


@dataclass(frozen=True)
class BackupPair:
    """Backup controller k_b with its backup set {h_b >= 0}.

    Callables broadcast over leading batch dimensions like the plant ones:
    ``k_b`` -> (..., m), ``jac_k_b`` -> (..., m, n), ``h_b`` -> (...),
    ``grad_h_b`` -> (..., n).
    """

    k_b: Callable[[Array], Array]
    jac_k_b: Callable[[Array], Array]
    h_b: Callable[[Array], Array]
    grad_h_b: Callable[[Array], Array]
    flow_mode: FlowMode


@dataclass(frozen=True)
class FlowSample:
    theta: float
    phi: Array
    Q: Array


# Fault-injection hook for the self-test; added entrywise to every expm result.
_expm_perturbation = 0.0


@contextlib.contextmanager
def perturbed_expm(eps: float):
    global _expm_perturbation
    old = _expm_perturbation
    _expm_perturbation = float(eps)
    try:
        yield
    finally:
        _expm_perturbation = old


def matrix_exponential(A, t: float) -> Array:
    """expm(A t) by scaling and squaring with Pade approximants."""
    A = np.asarray(A, dtype=float)
    E = scipy.linalg.expm(A * float(t))
    if _expm_perturbation:
        E = E + _expm_perturbation
    return E


@lru_cache(maxsize=64)
def _expm_table(a_bytes: bytes, n: int, thetas: tuple, perturbation: float) -> Array:
    A = np.frombuffer(a_bytes, dtype=float).reshape(n, n)
    table = np.stack([matrix_exponential(A, th) for th in thetas])
    table.setflags(write=False)
    return table


def expm_table(A: Array, thetas) -> Array:
    """Stack of expm(A theta) for each theta, memoized on (A, thetas)."""
    A = np.ascontiguousarray(A, dtype=float)
    key = tuple(float(t) for t in np.asarray(thetas, dtype=float).ravel())
    return _expm_table(A.tobytes(), A.shape[0], key, _expm_perturbation)


def closed_loop_field(pair: BackupPair, plant: Plant, x: Array) -> Array:
    u = pair.k_b(x)
    return plant.f(x) + np.einsum("...ij,...j->...i", plant.g(x), u)


def closed_loop_jacobian(pair: BackupPair, plant: Plant, x: Array) -> Array:
    """Jacobian of f(x) + g(x) k_b(x) with respect to x."""
    u = pair.k_b(x)
    jac = plant.jac_f(x) + np.einsum("...i,...ijk->...jk", u, plant.jac_g_cols(x))
    return jac + np.einsum("...ij,...jk->...ik", plant.g(x), pair.jac_k_b(x))


def _check_thetas(thetas) -> Array:
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if thetas.ndim != 1 or thetas.size == 0:
        raise ValueError("thetas must be a nonempty 1-D sequence")
    if thetas[0] < 0 or np.any(np.diff(thetas) < 0):
        raise ValueError("thetas must be ascending and nonnegative")
    return thetas


def flow_arrays(pair: BackupPair, plant: Plant, x, thetas, on_diverge: str = "raise"):
    """Batched backup flow.

    Returns ``(phi, Q)`` with shapes ``(..., k, n)`` and ``(..., k, n, n)`` for
    ``k = len(thetas)``. With ``on_diverge="nan"`` diverged trajectories are
    filled with NaN instead of raising.
    """
    x = plant.check_state(x)
    thetas = _check_thetas(thetas)
    mode = pair.flow_mode
    if isinstance(mode, AnalyticLinear):
        E = expm_table(mode.A, thetas)
        phi = np.einsum("kij,...j->...ki", E, x)
        Q = np.broadcast_to(E, x.shape[:-1] + E.shape).copy()
        bad = ~np.all(np.isfinite(phi) & (np.abs(phi) <= DIVERGENCE_BOUND), axis=-1)
        if np.any(bad):
            if on_diverge == "raise":
                first = int(np.argmax(np.any(bad.reshape(-1, thetas.size), axis=0)))
                raise DivergedFlowError(thetas[first])
            bad = np.maximum.accumulate(bad, axis=-1)
            phi[bad] = np.nan
            Q[bad] = np.nan
        return phi, Q
    return _rk4_flow(pair, plant, x, thetas, mode.step, on_diverge)


def _rk4_flow(pair, plant, x, thetas, h_max, on_diverge):
    n = plant.n
    batch = x.shape[:-1]
    xs = x.reshape(-1, n).copy()
    Qs = np.broadcast_to(np.eye(n), (xs.shape[0], n, n)).copy()
    alive = np.ones(xs.shape[0], dtype=bool)

    def rhs(z, P):
        return closed_loop_field(pair, plant, z), closed_loop_jacobian(pair, plant, z) @ P

    phi_out = np.empty((xs.shape[0], thetas.size, n))
    Q_out = np.empty((xs.shape[0], thetas.size, n, n))
    t = 0.0
    for k, target in enumerate(thetas):
        span = target - t
        if span > 0:
            steps = int(np.ceil(span / h_max - 1e-9))
            h = span / steps
            for i in range(steps):
                k1x, k1q = rhs(xs, Qs)
                k2x, k2q = rhs(xs + 0.5 * h * k1x, Qs + 0.5 * h * k1q)
                k3x, k3q = rhs(xs + 0.5 * h * k2x, Qs + 0.5 * h * k2q)
                k4x, k4q = rhs(xs + h * k3x, Qs + h * k3q)
                xs = xs + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
                Qs = Qs + (h / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
                ok = np.all(np.isfinite(xs) & (np.abs(xs) <= DIVERGENCE_BOUND), axis=-1)
                if not np.all(ok[alive]):
                    if on_diverge == "raise":
                        raise DivergedFlowError(t + (i + 1) * h)
                    alive &= ok
                    xs[~alive] = 0.0
                    Qs[~alive] = 0.0
            t = target
        phi_out[:, k] = np.where(alive[:, None], xs, np.nan)
        Q_out[:, k] = np.where(alive[:, None, None], Qs, np.nan)
    return phi_out.reshape(batch + (thetas.size, n)), Q_out.reshape(batch + (thetas.size, n, n))


def flow(pair: BackupPair, plant: Plant, x, thetas) -> list[FlowSample]:
    """Sample the backup flow from a single state at the given times."""
    x = plant.check_state(x)
    if x.ndim != 1:
        raise ValueError("flow() takes a single state; use flow_arrays() for batches")
    thetas = _check_thetas(thetas)
    phi, Q = flow_arrays(pair, plant, x, thetas)
    return [FlowSample(float(th), phi[k], Q[k]) for k, th in enumerate(thetas)]


def theta_grid(T: float, n_c: int) -> Array:
    """n_c uniformly spaced samples on [0, T], endpoints included."""
    if not T > 0 or n_c < 2:
        raise ValueError("need T > 0 and n_c >= 2")
    return np.linspace(0.0, T, n_c)


def linear_mode_error(pair: BackupPair, plant: Plant, states) -> float:
    """Largest relative mismatch between f + g k_b and A x over sample states."""
    mode = pair.flow_mode
    if not isinstance(mode, AnalyticLinear):
        raise TypeError("pair is not in AnalyticLinear mode")
    states = plant.check_state(states)
    field = closed_loop_field(pair, plant, states)
    lin = states @ mode.A.T
    scale = np.maximum(1.0, np.abs(field))
    return float(np.max(np.abs(field - lin) / scale))


# --- pendulum backup pair -------------------------------------------------


def pendulum_backup_controller(K: float):
    def k_b(x):
        x = np.asarray(x, dtype=float)
        return (-np.sin(x[..., 0]) - K * x[..., 1])[..., None]

    def jac_k_b(x):
        x = np.asarray(x, dtype=float)
        jac = np.empty(x.shape[:-1] + (1, 2))
        jac[..., 0, 0] = -np.cos(x[..., 0])
        jac[..., 0, 1] = -K
        return jac

    return k_b, jac_k_b


def pendulum_backup_set(phi_max: float, x2_size: float):
    """Ellipse 1 - (x1/phi_max)^2 - (x2/X2)^2 >= 0."""

    def h_b(x):
        x = np.asarray(x, dtype=float)
        return 1.0 - (x[..., 0] / phi_max) ** 2 - (x[..., 1] / x2_size) ** 2

    def grad_h_b(x):
        x = np.asarray(x, dtype=float)
        return np.stack([-2.0 * x[..., 0] / phi_max**2, -2.0 * x[..., 1] / x2_size**2], axis=-1)

    return h_b, grad_h_b


def pendulum_linear_A(K: float) -> Array:
    return np.array([[0.0, 1.0], [0.0, -K]])


def pendulum_backup_pair(K: float = 0.7, phi_max: float = 1.75, x2_size: float = 0.2,
                         flow_mode: FlowMode | None = None) -> BackupPair:
    """Feedback-linearizing backup controller with velocity damping K.

    The default flow mode is analytic since the backup closed loop is
    ``x1dot = x2, x2dot = -K x2``.
    """
    if not K > 0:
        raise ValueError("K must be positive")
    k_b, jac_k_b = pendulum_backup_controller(K)
    h_b, grad_h_b = pendulum_backup_set(phi_max, x2_size)
    if flow_mode is None:
        flow_mode = AnalyticLinear(pendulum_linear_A(K))
    return BackupPair(k_b=k_b, jac_k_b=jac_k_b, h_b=h_b, grad_h_b=grad_h_b, flow_mode=flow_mode)


def pendulum_flow_closed_form(K: float, x, theta: float) -> FlowSample:
    if not K > 0:
        raise ValueError("K must be positive")
    x = np.asarray(x, dtype=float)
    decay = np.exp(-K * theta)
    reach = (1.0 - decay) / K
    phi = np.array([x[0] + reach * x[1], decay * x[1]])
    Q = np.array([[1.0, reach], [0.0, decay]])
    return FlowSample(float(theta), phi, Q)
