"""Switching signals and the time statistics the entropy formulas consume."""

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from enum import StrEnum
from functools import cached_property

import numpy as np

from switched_entropy.errors import (
    InvalidModeError,
    RateLengthError,
    SignalDomainError,
    TooFewWindowsError,
)

logger = logging.getLogger(__name__)


class Repeat(StrEnum):
    """How a segment list extends past its last segment."""

    PERIODIC = "periodic"
    TRUNCATED = "truncated"


class Verdict(StrEnum):
    """Outcome of the heuristic subexponential switching check."""

    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


class FoldVerdict(StrEnum):
    """Outcome of the folding diagnostic."""

    LIMIT_LIKELY = "limit-likely"
    LIMIT_UNLIKELY = "limit-unlikely"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class SwitchingSignal:
    """
    Piecewise-constant map from time to a mode index in 1..k.

    Attributes:
        segments: Ordered (mode, duration) pairs; modes are 1-based
        k: Number of modes
        repeat: PERIODIC cycles the segment list forever, TRUNCATED ends it
    """

    segments: tuple[tuple[int, float], ...]
    k: int
    repeat: Repeat = Repeat.PERIODIC

    def __post_init__(self) -> None:
        segments = tuple((int(mode), float(duration)) for mode, duration in self.segments)
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "repeat", Repeat(self.repeat))

        if self.k < 1:
            raise InvalidModeError(f"Mode count must be at least 1, got {self.k}")
        if not segments:
            raise SignalDomainError("Switching signal needs at least one segment")
        for index, (mode, duration) in enumerate(segments):
            if not 1 <= mode <= self.k:
                raise InvalidModeError(f"Segment {index} has mode {mode}, expected 1..{self.k}")
            if not (duration > 0 and math.isfinite(duration)):
                raise SignalDomainError(
                    f"Segment {index} has duration {duration}, expected a finite positive value"
                )

    @property
    def is_periodic(self) -> bool:
        return self.repeat is Repeat.PERIODIC

    @cached_property
    def modes(self) -> np.ndarray:
        """0-based mode index of each segment."""
        return np.array([mode - 1 for mode, _ in self.segments], dtype=int)

    @cached_property
    def durations(self) -> np.ndarray:
        return np.array([duration for _, duration in self.segments], dtype=float)

    @cached_property
    def boundaries(self) -> np.ndarray:
        """Segment start times followed by the end of the segment list."""
        return np.concatenate(([0.0], np.cumsum(self.durations)))

    @property
    def period(self) -> float:
        """Total duration of the segment list (the period when periodic)."""
        return float(self.boundaries[-1])

    @property
    def domain_end(self) -> float:
        return math.inf if self.is_periodic else self.period

    @cached_property
    def period_activation(self) -> np.ndarray:
        """Per-mode activation time over one pass of the segment list."""
        return np.bincount(self.modes, weights=self.durations, minlength=self.k)

    @cached_property
    def switch_offsets(self) -> np.ndarray:
        """Genuine switch positions within one pass, in (0, period]."""
        changes = [
            float(self.boundaries[i])
            for i in range(1, len(self.segments))
            if self.modes[i] != self.modes[i - 1]
        ]
        if self.is_periodic and self.modes[-1] != self.modes[0]:
            changes.append(self.period)
        return np.array(changes, dtype=float)

    def check_time(self, t: float) -> None:
        """
        Validate that a time lies in the signal domain.

        Raises:
            SignalDomainError: If t is negative, not finite, or past a truncated end
        """
        if not (t >= 0 and math.isfinite(t)):
            raise SignalDomainError(f"Time {t} is outside [0, inf)")
        if t > self.domain_end:
            raise SignalDomainError(
                f"Time {t} is past the end of the truncated signal at {self.domain_end}"
            )

    def check_mode(self, mode: int) -> None:
        if not 1 <= mode <= self.k:
            raise InvalidModeError(f"Mode {mode} is outside 1..{self.k}")

    def mode_at(self, t: float) -> int:
        """Active mode (1-based) at time t, right-continuous at switches."""
        self.check_time(t)
        offset = math.fmod(t, self.period) if self.is_periodic else t
        index = int(np.searchsorted(self.boundaries, offset, side="right")) - 1
        index = min(index, len(self.segments) - 1)
        return int(self.modes[index]) + 1

    def pieces(self, t: float) -> Iterator[tuple[int, float, float]]:
        """
        Iterate the constant pieces covering [0, t].

        Yields:
            (mode, start, duration) with 0-based mode; the last piece is
            clipped to end at t
        """
        self.check_time(t)
        start = 0.0
        while start < t:
            for mode, duration in zip(self.modes, self.durations, strict=True):
                if start >= t:
                    return
                length = min(duration, t - start)
                yield int(mode), start, length
                start += duration
            if not self.is_periodic:
                return

    def activation_vector(self, t: float) -> np.ndarray:
        """Per-mode activation time on [0, t], by segment arithmetic."""
        self.check_time(t)
        if self.is_periodic:
            cycles, remainder = divmod(t, self.period)
        else:
            cycles, remainder = 0.0, t
        overlap = np.clip(remainder - self.boundaries[:-1], 0.0, self.durations)
        partial = np.bincount(self.modes, weights=overlap, minlength=self.k)
        return cycles * self.period_activation + partial

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "repeat": str(self.repeat),
            "segments": [[mode, duration] for mode, duration in self.segments],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SwitchingSignal":
        return cls(
            segments=tuple((int(m), float(d)) for m, d in data["segments"]),
            k=int(data["k"]),
            repeat=Repeat(data.get("repeat", "periodic")),
        )


@dataclass(frozen=True)
class ActivationFraction:
    """Activation fraction and whether it is exact (periodic) or a tail estimate."""

    value: float
    exact: bool


@dataclass(frozen=True)
class ActivationStats:
    """
    Time statistics of a signal at one horizon.

    Attributes:
        horizon: Time horizon in seconds
        tau: Per-mode activation time on [0, horizon]
        tau_bar: Per-mode activation fraction estimates
        kappa: Weighted exponent at the horizon (vector for a rate matrix)
        kappa_bar: Average asymptotic exponent
        switch_count: N(horizon)
        exact: True when every fraction is exact
    """

    horizon: float
    tau: np.ndarray
    tau_bar: np.ndarray
    kappa: float | np.ndarray
    kappa_bar: float | np.ndarray
    switch_count: int
    exact: bool


@dataclass(frozen=True)
class SubexponentialCheck:
    """Heuristic check of log N(T)/T -> 0; samples are (T, log N(T)/T) pairs."""

    verdict: Verdict
    samples: tuple[tuple[float, float], ...]
    heuristic: bool = True


@dataclass(frozen=True)
class FoldDiagnostic:
    """
    Folding diagnostic result.

    Attributes:
        verdict: Whether the window exponents suggest the limit exists
        window_values: kappa((n+1)T_w) - kappa(n T_w) for every complete window
        spread: Max minus min of the window values past the first 10%
        running_spread: Spread of kappa(t)/t over the last half of those windows
    """

    verdict: FoldVerdict
    window_values: tuple[float, ...]
    spread: float
    running_spread: float


def _rate_array(signal: SwitchingSignal, rates: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate a per-mode rate vector, or an (n, k) rate matrix."""
    array = np.asarray(rates, dtype=float)
    if array.ndim not in (1, 2) or array.shape[-1] != signal.k:
        raise RateLengthError(
            f"Rate table has shape {array.shape}, expected one entry per mode (k={signal.k})"
        )
    return array


def activation_time(signal: SwitchingSignal, mode: int, t: float) -> float:
    """
    Total time mode is active on [0, t].

    Args:
        signal: Switching signal
        mode: 1-based mode index
        t: Time in seconds

    Returns:
        tau_mode(t), computed exactly from segment durations

    Example:
        >>> s = SwitchingSignal(((1, 1.0), (2, 1.0)), k=2)
        >>> activation_time(s, 1, 3.5)
        2.0
    """
    signal.check_mode(mode)
    return float(signal.activation_vector(t)[mode - 1])


def activation_fraction(
    signal: SwitchingSignal,
    mode: int,
    horizon: float,
    tail_start_fraction: float = 0.5,
) -> ActivationFraction:
    """
    Activation fraction tau_bar_mode.

    Periodic signals return the exact per-period ratio. Otherwise the
    finite-horizon limsup surrogate max tau(t)/t over the tail
    [tail_start_fraction * horizon, horizon] is returned; tau(t)/t is
    monotone between switches, so evaluating at segment boundaries and the
    tail endpoints attains the maximum.

    Args:
        signal: Switching signal
        mode: 1-based mode index
        horizon: Horizon in seconds, > 0
        tail_start_fraction: Start of the tail window as a fraction of horizon

    Returns:
        ActivationFraction with value and exactness flag
    """
    signal.check_mode(mode)
    if not horizon > 0:
        raise SignalDomainError(f"Horizon must be positive, got {horizon}")
    if not 0 < tail_start_fraction < 1:
        raise ValueError(f"tail_start_fraction must be in (0, 1), got {tail_start_fraction}")

    if signal.is_periodic:
        value = float(signal.period_activation[mode - 1] / signal.period)
        return ActivationFraction(value=value, exact=True)

    signal.check_time(horizon)
    tail_start = tail_start_fraction * horizon
    inner = signal.boundaries[(signal.boundaries > tail_start) & (signal.boundaries < horizon)]
    grid = np.concatenate(([tail_start], inner, [horizon]))
    ratios = [signal.activation_vector(float(t))[mode - 1] / t for t in grid]
    value = float(max(ratios))
    logger.debug(f"Mode {mode} fraction {value:.6g} estimated over {len(grid)} tail instants")
    return ActivationFraction(value=value, exact=False)


def activation_fractions(
    signal: SwitchingSignal,
    horizon: float,
    tail_start_fraction: float = 0.5,
) -> tuple[np.ndarray, bool]:
    """All per-mode activation fractions and whether every one is exact."""
    results = [
        activation_fraction(signal, mode, horizon, tail_start_fraction)
        for mode in range(1, signal.k + 1)
    ]
    return np.array([r.value for r in results]), all(r.exact for r in results)


def kappa(
    signal: SwitchingSignal, rates: Sequence[float] | np.ndarray, t: float
) -> float | np.ndarray:
    """
    Weighted exponent kappa(t) = sum_j a_j tau_j(t).

    A 2-D rate table of shape (n, k) returns the per-coordinate vector
    kappa_i(t) = sum_j a_i^j tau_j(t).
    """
    array = _rate_array(signal, rates)
    value = array @ signal.activation_vector(t)
    return float(value) if array.ndim == 1 else value


def kappa_bar(
    signal: SwitchingSignal,
    rates: Sequence[float] | np.ndarray,
    horizon: float | None = None,
    tail_start_fraction: float = 0.5,
) -> tuple[float | np.ndarray, bool]:
    """
    Average asymptotic exponent sum_j a_j tau_bar_j.

    Args:
        signal: Switching signal
        rates: Per-mode rates, or an (n, k) table for per-coordinate values
        horizon: Horizon for estimated fractions (defaults to the end of a
            truncated signal; ignored for periodic signals)
        tail_start_fraction: Tail window start for estimated fractions

    Returns:
        (value, exact) where exact is True iff all fractions are exact
    """
    array = _rate_array(signal, rates)
    if horizon is None:
        horizon = signal.period if not signal.is_periodic else 1.0
    fractions, exact = activation_fractions(signal, horizon, tail_start_fraction)
    value = array @ fractions
    return (float(value) if array.ndim == 1 else value), exact


def switch_instants(signal: SwitchingSignal, T: float) -> list[float]:
    """Genuine discontinuities of the signal in (0, T], in increasing order."""
    signal.check_time(T)
    offsets = signal.switch_offsets
    if offsets.size == 0:
        return []
    if not signal.is_periodic:
        return [float(o) for o in offsets if o <= T]

    instants: list[float] = []
    for cycle in range(int(T // signal.period) + 1):
        base = cycle * signal.period
        for offset in offsets:
            instant = base + float(offset)
            if instant > T:
                return instants
            instants.append(instant)
    return instants


def switch_count(signal: SwitchingSignal, T: float) -> int:
    """
    Number of switching instances N(T) on [0, T].

    The instant t = 0 is always counted; every genuine switch in (0, T] is
    counted once, including one falling exactly at T.
    """
    signal.check_time(T)
    offsets = signal.switch_offsets
    if not signal.is_periodic:
        return 1 + int(np.count_nonzero(offsets <= T))
    cycles, remainder = divmod(T, signal.period)
    partial = int(np.count_nonzero(offsets <= remainder))
    return 1 + int(cycles) * offsets.size + partial


def subexponential_check(
    signal: SwitchingSignal, horizons: Sequence[float]
) -> SubexponentialCheck:
    """
    Heuristic check that the switching rate is subexponential.

    Passes when log N(T)/T is non-increasing across the horizons and ends
    below 0.1; fails when it strictly increases; inconclusive otherwise.

    Raises:
        SignalDomainError: If a horizon lies outside the signal domain
    """
    values = [float(h) for h in horizons]
    if len(values) < 2 or any(b <= a for a, b in zip(values, values[1:], strict=False)):
        raise ValueError(f"Horizons must be increasing with at least 2 entries, got {values}")
    if values[0] <= 0:
        raise SignalDomainError(f"Horizons must be positive, got {values}")

    samples = tuple((T, math.log(switch_count(signal, T)) / T) for T in values)
    ratios = [ratio for _, ratio in samples]
    steps = list(zip(ratios, ratios[1:], strict=False))

    if all(b <= a + 1e-15 for a, b in steps) and ratios[-1] < 0.1:
        verdict = Verdict.PASS
    elif all(b > a for a, b in steps):
        verdict = Verdict.FAIL
    else:
        verdict = Verdict.INCONCLUSIVE

    logger.debug(f"Subexponential check (heuristic): {verdict} from samples {samples}")
    return SubexponentialCheck(verdict=verdict, samples=samples)


def fold_diagnostic(
    signal: SwitchingSignal,
    rates: Sequence[float] | np.ndarray,
    window: float,
    horizon: float,
    eps: float,
) -> FoldDiagnostic:
    """
    Diagnose existence of the limit kappa(t)/t through a folding of length window.

    Window exponents kappa((n+1)T_w) - kappa(n T_w) are computed for every
    complete window. Ignoring the first 10% of windows, a spread below eps
    reports limit-likely. Otherwise, if the running average kappa(t)/t has
    not settled within eps over the last half of the windows, the verdict is
    limit-unlikely; else inconclusive.

    Raises:
        TooFewWindowsError: If horizon holds fewer than 10 complete windows
    """
    array = _rate_array(signal, rates)
    if array.ndim != 1:
        raise RateLengthError("Folding diagnostic needs one rate per mode")
    if not window > 0:
        raise TooFewWindowsError(f"Window length must be positive, got {window}")
    signal.check_time(horizon)

    count = int(math.floor(horizon / window + 1e-9))
    if count < 10:
        raise TooFewWindowsError(
            f"Horizon {horizon} holds {count} windows of length {window}, need at least 10"
        )

    edges = [min(n * window, horizon) for n in range(count + 1)]
    kappas = np.array([array @ signal.activation_vector(t) for t in edges])
    values = np.diff(kappas)

    tail = values[math.ceil(0.1 * count) :]
    spread = float(tail.max() - tail.min())
    running = kappas[1:] / np.array(edges[1:])
    late = running[count // 2 :]
    running_spread = float(late.max() - late.min())

    if spread < eps:
        verdict = FoldVerdict.LIMIT_LIKELY
    elif running_spread >= eps:
        verdict = FoldVerdict.LIMIT_UNLIKELY
    else:
        verdict = FoldVerdict.INCONCLUSIVE

    logger.debug(f"Fold diagnostic over {count} windows: {verdict} (spread={spread:.3g})")
    return FoldDiagnostic(
        verdict=verdict,
        window_values=tuple(float(v) for v in values),
        spread=spread,
        running_spread=running_spread,
    )


def activation_stats(
    signal: SwitchingSignal,
    rates: Sequence[float] | np.ndarray,
    horizon: float,
    tail_start_fraction: float = 0.5,
) -> ActivationStats:
    """Collect tau, tau_bar, kappa, kappa_bar and N at one horizon."""
    array = _rate_array(signal, rates)
    fractions, exact = activation_fractions(signal, horizon, tail_start_fraction)
    tau = signal.activation_vector(horizon)
    k_value = array @ tau
    k_bar = array @ fractions
    return ActivationStats(
        horizon=horizon,
        tau=tau,
        tau_bar=fractions,
        kappa=float(k_value) if array.ndim == 1 else k_value,
        kappa_bar=float(k_bar) if array.ndim == 1 else k_bar,
        switch_count=switch_count(signal, horizon),
        exact=exact,
    )


def kappa_integral(signal: SwitchingSignal, rates: Sequence[float] | np.ndarray, t: float) -> float:
    """Exact integral of exp(kappa(s)) over [0, t], one closed form per piece."""
    array = _rate_array(signal, rates)
    if array.ndim != 1:
        raise RateLengthError("kappa_integral needs one rate per mode")

    total = 0.0
    level = 0.0
    for mode, _, length in signal.pieces(t):
        rate = array[mode]
        if rate == 0:
            total += math.exp(level) * length
        else:
            total += math.exp(level) * math.expm1(rate * length) / rate
        level += rate * length
    return total


def integral_bound_constant(rates: Sequence[float]) -> float:
    """
    Constant c with int_0^t exp(kappa) <= c N(t) exp((kappa_bar+ + delta) t).

    Returns:
        max over ordered mode pairs (alpha, beta), alpha = beta included, of
        |1/a_alpha| + |1/a_beta|, which is 2 max |1/a|; inf if a rate is zero
    """
    values = [float(r) for r in rates]
    if any(r == 0 for r in values):
        return math.inf
    return 2.0 * max(abs(1.0 / r) for r in values)


def dyadic_signal(depth: int) -> SwitchingSignal:
    """
    Non-periodic two-mode signal whose unit windows activate each mode equally.

    Window 0 is entirely mode 1. Window n >= 1 is split into 2**n equal
    pieces alternating between modes 1 and 2.

    Args:
        depth: Number of unit windows generated

    Returns:
        Truncated SwitchingSignal of total length depth
    """
    if depth < 1:
        raise ValueError(f"Depth must be at least 1, got {depth}")
    segments: list[tuple[int, float]] = [(1, 1.0)]
    for n in range(1, depth):
        piece = 1.0 / 2**n
        segments.extend((1 if j % 2 == 0 else 2, piece) for j in range(2**n))
    return SwitchingSignal(tuple(segments), k=2, repeat=Repeat.TRUNCATED)
