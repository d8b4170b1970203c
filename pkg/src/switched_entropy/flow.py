"""Exact piecewise-exponential evolution of switched linear systems."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from switched_entropy.errors import DimensionMismatchError, SignalDomainError
from switched_entropy.lie import ModeSet
from switched_entropy.signals import SwitchingSignal

logger = logging.getLogger(__name__)

# Largest ||A|| * dt handed to a single expm call
MAX_EXPONENT_NORM = 50.0
DEFAULT_SAMPLE_DENSITY = 20


def _expm(matrix: np.ndarray, dt: float) -> np.ndarray:
    """exp(matrix * dt), split into equal steps when ||matrix|| * dt is large."""
    size = float(np.linalg.norm(matrix, 1)) * abs(dt)
    if size <= MAX_EXPONENT_NORM:
        return scipy.linalg.expm(matrix * dt)
    steps = math.ceil(size / MAX_EXPONENT_NORM)
    return np.linalg.matrix_power(scipy.linalg.expm(matrix * (dt / steps)), steps)


@dataclass(frozen=True)
class SwitchedSystem:
    """
    Linear modes driven by a fixed switching signal, x' = A_sigma(t) x.

    Attributes:
        modes: Mode matrices
        signal: Switching signal over the same k modes
    """

    modes: ModeSet
    signal: SwitchingSignal

    def __post_init__(self) -> None:
        if self.modes.k != self.signal.k:
            raise DimensionMismatchError(
                f"System has {self.modes.k} modes but the signal switches among {self.signal.k}"
            )

    @property
    def n(self) -> int:
        return self.modes.n

    @property
    def k(self) -> int:
        return self.modes.k

    @cached_property
    def segment_exponentials(self) -> tuple[np.ndarray, ...]:
        """exp(A_m d) for every full segment of the signal, computed once."""
        return tuple(
            _expm(self.modes.matrices[mode], float(duration))
            for mode, duration in zip(self.signal.modes, self.signal.durations, strict=True)
        )

    @cached_property
    def period_matrix(self) -> np.ndarray:
        """Transition matrix over one full pass of the segment list."""
        result = np.eye(self.n)
        for exponential in self.segment_exponentials:
            result = exponential @ result
        return result

    @cached_property
    def traces(self) -> np.ndarray:
        return np.array([np.trace(a) for a in self.modes.matrices])

    def _partial(self, t: float) -> np.ndarray:
        """Transition matrix over the first t seconds of one pass."""
        result = np.eye(self.n)
        starts = self.signal.boundaries[:-1]
        for index, start in enumerate(starts):
            if start >= t:
                break
            duration = self.signal.durations[index]
            if t - start >= duration:
                step = self.segment_exponentials[index]
            else:
                mode = self.signal.modes[index]
                step = _expm(self.modes.matrices[mode], float(t - start))
            result = step @ result
        return result


@dataclass(frozen=True)
class Trajectory:
    """
    Solution samples phi(t, x0).

    Attributes:
        times: Increasing sample times, starting at 0
        states: One n-vector per sample time, shape (len(times), n)
        x0: Initial condition
    """

    times: tuple[float, ...]
    states: np.ndarray
    x0: np.ndarray


def transition_matrix(system: SwitchedSystem, t: float) -> np.ndarray:
    """
    State transition matrix Phi(t) with x(t) = Phi(t) x(0).

    The ordered product of per-segment matrix exponentials covering [0, t];
    the last segment enters with its partial duration. Whole periods of a
    periodic signal are raised as a matrix power.

    Raises:
        SignalDomainError: If t is outside the signal domain

    Example:
        >>> transition_matrix(system, 0.0)  # identity
    """
    signal = system.signal
    signal.check_time(t)
    if not signal.is_periodic:
        return system._partial(t)
    cycles, remainder = divmod(t, signal.period)
    whole = np.linalg.matrix_power(system.period_matrix, int(cycles))
    return system._partial(remainder) @ whole


def _check_times(system: SwitchedSystem, times: Sequence[float]) -> np.ndarray:
    array = np.asarray(times, dtype=float)
    if array.ndim != 1 or array.size == 0:
        raise SignalDomainError("At least one sample time is required")
    if np.any(np.diff(array) < 0):
        raise SignalDomainError(f"Sample times must be increasing, got {array.tolist()}")
    system.signal.check_time(float(array[0]))
    system.signal.check_time(float(array[-1]))
    return array


def solve(
    system: SwitchedSystem, x0: Sequence[float] | np.ndarray, times: Sequence[float]
) -> Trajectory:
    """
    Propagate x0 along the signal and sample the state at the given times.

    The state is carried from segment to segment, so each sample costs one
    partial-segment exponential on top of the running state.

    Args:
        system: Switched system
        x0: Initial state, n-vector
        times: Increasing sample times within the signal domain

    Returns:
        Trajectory with states[j] = Phi(times[j]) x0
    """
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (system.n,):
        raise DimensionMismatchError(f"Initial state has shape {x.shape}, expected ({system.n},)")
    targets = _check_times(system, times)

    states: list[np.ndarray] = []
    index = 0
    while index < targets.size and targets[index] <= 0:
        states.append(x.copy())
        index += 1

    final = float(targets[-1])
    for mode, start, length in system.signal.pieces(final):
        matrix = system.modes.matrices[mode]
        end = start + length
        while index < targets.size and targets[index] <= end:
            states.append(_expm(matrix, float(targets[index] - start)) @ x)
            index += 1
        x = _expm(matrix, length) @ x

    while index < targets.size:
        states.append(x.copy())
        index += 1

    return Trajectory(
        times=tuple(float(t) for t in targets),
        states=np.array(states),
        x0=np.asarray(x0, dtype=float),
    )


def sample_transitions(
    system: SwitchedSystem,
    T: float,
    density: int = DEFAULT_SAMPLE_DENSITY,
    extra_times: Sequence[float] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """
    Transition matrices on a sampling grid of [0, T].

    The grid holds 0, every segment boundary up to T, T itself, density
    uniform points inside each segment and any extra times. Exponentials are
    shared between segments of equal mode and offset.

    Args:
        system: Switched system
        T: Horizon in seconds
        density: Uniform samples per segment, at least 1
        extra_times: Further instants in [0, T]

    Returns:
        (times, matrices) with matrices[j] = Phi(times[j]), shape (m, n, n)
    """
    system.signal.check_time(T)
    if density < 1:
        raise ValueError(f"Sample density must be at least 1, got {density}")
    extras = np.asarray(sorted(float(t) for t in extra_times), dtype=float)
    if extras.size and (extras[0] < 0 or extras[-1] > T):
        raise SignalDomainError(f"Extra sample times must lie in [0, {T}]")

    cache: dict[tuple[int, float], np.ndarray] = {}
    times = [0.0]
    matrices = [np.eye(system.n)]
    current = np.eye(system.n)

    for mode, start, length in system.signal.pieces(T):
        offsets = np.linspace(0.0, length, density + 1)[1:]
        inside = extras[(extras > start) & (extras < start + length)] - start
        offsets = np.unique(np.concatenate((offsets, inside)))
        for offset in offsets:
            key = (mode, float(offset))
            if key not in cache:
                cache[key] = _expm(system.modes.matrices[mode], float(offset))
            times.append(start + float(offset))
            matrices.append(cache[key] @ current)
        current = matrices[-1]

    logger.debug(f"Sampled {len(times)} transition matrices on [0, {T}], {len(cache)} exponentials")
    return np.array(times), np.array(matrices)


def separation(
    system: SwitchedSystem,
    x: Sequence[float] | np.ndarray,
    y: Sequence[float] | np.ndarray,
    T: float,
    sample_times: Sequence[float] | None = None,
) -> float:
    """
    Sup-norm distance between the solutions from x and y over [0, T].

    By linearity only the difference x - y is propagated. The supremum is
    taken over sample_times, or over the default grid of sample_transitions
    when none are given.

    Returns:
        max over samples of ||Phi(t) (x - y)||_inf
    """
    difference = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if sample_times is None:
        _, matrices = sample_transitions(system, T)
        states = matrices @ difference
    else:
        grid = np.unique(np.asarray(sample_times, dtype=float))
        if grid.size and (grid[0] < 0 or grid[-1] > T):
            raise SignalDomainError(f"Sample times must lie in [0, {T}]")
        states = solve(system, difference, grid).states
    return float(np.max(np.abs(states)))


def volume_growth(system: SwitchedSystem, T: float) -> tuple[float, float]:
    """
    Both sides of the volume identity det Phi(T) = exp(sum_i tr(A_i) tau_i(T)).

    The determinant side is det transition_matrix(T), evaluated through
    slogdet.

    Returns:
        (formula_value, determinant_value)
    """
    tau = system.signal.activation_vector(T)
    formula = math.exp(float(system.traces @ tau))

    sign, log_det = np.linalg.slogdet(transition_matrix(system, T))
    return formula, float(sign) * math.exp(float(log_det))


def jordan_crossover(
    matrix: np.ndarray, delta: float, t_max: float = 100.0, samples: int = 1001
) -> float | None:
    """
    Empirical T_delta for the norm growth bound ||e^{At}|| <= e^{(Re lambda + delta) t}.

    Args:
        matrix: Square matrix, typically a Jordan block
        delta: Growth margin, > 0
        t_max: Largest sampled time
        samples: Number of uniform samples on [0, t_max]

    Returns:
        Last sampled time where the bound fails (0.0 when it never fails),
        or None when it fails at t_max
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    array = np.asarray(matrix, dtype=float)
    abscissa = float(np.max(np.real(scipy.linalg.eigvals(array))))
    times = np.linspace(0.0, t_max, samples)
    norms = np.array([np.linalg.norm(_expm(array, float(t)), 2) for t in times])
    holds = norms <= np.exp((abscissa + delta) * times) * (1 + 1e-12)

    if not holds[-1]:
        return None
    failures = np.flatnonzero(~holds)
    crossover = float(times[failures[-1]]) if failures.size else 0.0
    logger.debug(f"Norm bound with delta={delta} holds beyond t={crossover:.3g}")
    return crossover
