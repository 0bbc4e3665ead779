"""Exception types shared across the package."""
import numpy as np


class DimensionError(ValueError):
    """State or input vector does not match the plant dimensions."""


class NonFiniteControlError(FloatingPointError):
    def __init__(self, state, control):
        self.state = np.array(state, dtype=float)
        self.control = np.array(control, dtype=float)
        super().__init__(f"controller returned non-finite input {self.control} at state {self.state}")


class DivergedFlowError(FloatingPointError):
    """Backup flow left the |component| <= 1e9 envelope."""

    def __init__(self, theta_reached: float):
        self.theta_reached = float(theta_reached)
        super().__init__(f"backup flow diverged at theta={self.theta_reached:g}")


class QpStallError(RuntimeError):
    """Active-set iteration exceeded its cycling guard."""


class ConfigError(ValueError):
    pass
