"""Built-in reference systems with known entropy values."""

import numpy as np

from switched_entropy.flow import SwitchedSystem
from switched_entropy.lie import ModeSet
from switched_entropy.signals import Repeat, SwitchingSignal

# Both reference systems switch between modes of LTI entropy 2
EXPECTED_INDIVIDUAL = {"system_1": (2.0, 2.0), "system_2": (2.0, 2.0)}
EXPECTED_BOUNDS = {"system_1": (2.0, 2.0), "system_2": (1.0, 1.5)}


def alternating_signal(k: int = 2, duration: float = 1.0) -> SwitchingSignal:
    """Periodic signal visiting modes 1..k in turn, each for duration seconds."""
    return SwitchingSignal(
        tuple((mode, duration) for mode in range(1, k + 1)), k=k, repeat=Repeat.PERIODIC
    )


def example_system_1(perturb: float = 0.0) -> SwitchedSystem:
    """diag(2, 0) and diag(2, -1) under 50/50 switching: entropy exactly 2."""
    modes = ModeSet((np.diag([2.0 + perturb, 0.0]), np.diag([2.0, -1.0])))
    return SwitchedSystem(modes, alternating_signal())


def example_system_2() -> SwitchedSystem:
    """diag(2, 0) and diag(-1, 2) under 50/50 switching: entropy in [1, 1.5]."""
    modes = ModeSet((np.diag([2.0, 0.0]), np.diag([-1.0, 2.0])))
    return SwitchedSystem(modes, alternating_signal())


def scalar_system(rates: tuple[float, ...], duration: float = 1.0) -> SwitchedSystem:
    """One-dimensional system with the given mode rates, alternating."""
    modes = ModeSet(tuple(np.array([[float(a)]]) for a in rates))
    return SwitchedSystem(modes, alternating_signal(len(rates), duration))


def lti_system(matrix: np.ndarray) -> SwitchedSystem:
    """Single-mode system x' = Ax."""
    return SwitchedSystem(ModeSet((np.asarray(matrix, dtype=float),)), alternating_signal(1))
