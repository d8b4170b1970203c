"""
Empirical entropy estimation from (T, eps)-spanning and separated sets.

Initial conditions live on a lattice over the unit cube. Separation of two
solutions depends only on the difference of their initial conditions, so a
single table sep(d) over lattice offsets d serves every pair; covering and
packing then reduce to integer arithmetic on that table. Axes whose lattice
is too fine to search are handled modulo a period, and each searched point
stands for every lattice point congruent to it.
"""

import itertools
import logging
import math
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
import scipy.optimize
import scipy.signal

from switched_entropy.errors import (
    DegenerateFitError,
    EstimationConfigError,
    LatticeTooCoarseError,
    WrongStructureError,
)
from switched_entropy.flow import SwitchedSystem, sample_transitions
from switched_entropy.lie import Classification, StructureReport, classify

logger = logging.getLogger(__name__)

MAX_DIMENSION = 3
MIN_RESOLUTION = 3
MAX_RESOLUTION = 64
# Upper bound, in lattice steps, on the eps-ball half-width along each refined axis
BALL_STEPS = 16
# Relative slack that turns linear-programming optima into safe upper bounds
EXTENT_SLACK = 1e-6
OFFSET_CHUNK = 4096


class Method(StrEnum):
    SPANNING_GREEDY = "spanning_greedy"
    SEPARATED_GREEDY = "separated_greedy"
    GRID_FORMULA = "grid_formula"


@dataclass(frozen=True)
class EstimationConfig:
    """
    Estimation parameters.

    Attributes:
        horizons: Increasing horizons in seconds
        epsilons: Decreasing resolutions in (0, 1)
        grid_resolution: Searched lattice points per axis
        sample_density: Time samples per signal segment
        method: Counting procedure
        auto_zoom: Refine the lattice per axis until an eps-ball spans several steps
        tail_fraction: Share of horizons (from the end) used for slope fits
        threads: Worker threads for separation tables, 0 for one per CPU
    """

    horizons: tuple[float, ...] = (4.0, 8.0, 12.0)
    epsilons: tuple[float, ...] = (0.5, 0.25)
    grid_resolution: int = 64
    sample_density: int = 20
    method: Method = Method.SPANNING_GREEDY
    auto_zoom: bool = True
    tail_fraction: float = 0.5
    threads: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "horizons", tuple(float(h) for h in self.horizons))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        try:
            object.__setattr__(self, "method", Method(self.method))
        except ValueError as e:
            raise EstimationConfigError(f"Unknown estimation method: {self.method}") from e

        if not self.horizons or any(h <= 0 for h in self.horizons):
            raise EstimationConfigError(f"Horizons must be positive, got {list(self.horizons)}")
        if any(b <= a for a, b in itertools.pairwise(self.horizons)):
            raise EstimationConfigError(f"Horizons must increase, got {list(self.horizons)}")
        if not self.epsilons or any(not 0 < e < 1 for e in self.epsilons):
            raise EstimationConfigError(f"Epsilons must lie in (0, 1), got {list(self.epsilons)}")
        if any(b >= a for a, b in itertools.pairwise(self.epsilons)):
            raise EstimationConfigError(f"Epsilons must decrease, got {list(self.epsilons)}")
        if not MIN_RESOLUTION <= self.grid_resolution <= MAX_RESOLUTION:
            raise EstimationConfigError(
                f"Grid resolution must be in [{MIN_RESOLUTION}, {MAX_RESOLUTION}], "
                f"got {self.grid_resolution}"
            )
        if self.sample_density < 1:
            raise EstimationConfigError(
                f"Sample density must be at least 1, got {self.sample_density}"
            )
        if not 0 < self.tail_fraction <= 1:
            raise EstimationConfigError(
                f"Tail fraction must be in (0, 1], got {self.tail_fraction}"
            )
        if self.threads < 0:
            raise EstimationConfigError(f"Thread count must be non-negative, got {self.threads}")

    @property
    def workers(self) -> int:
        return self.threads or os.cpu_count() or 1

    def to_dict(self) -> dict:
        return {
            "horizons": list(self.horizons),
            "epsilons": list(self.epsilons),
            "grid_resolution": self.grid_resolution,
            "sample_density": self.sample_density,
            "method": str(self.method),
            "auto_zoom": self.auto_zoom,
            "tail_fraction": self.tail_fraction,
        }


@dataclass(frozen=True)
class EstimationResult:
    """
    Count table and fitted growth rates.

    Attributes:
        counts: (T, eps) -> count after the monotone envelope
        rates: eps -> slope of log count against T over the tail horizons
        rate: Slope at the smallest eps
        method: Counting procedure used
        diagnostics: Raw counts, lattice intervals, fit residuals and slope variance
    """

    counts: dict[tuple[float, float], int]
    rates: dict[float, float]
    rate: float
    method: Method
    diagnostics: dict = field(default_factory=dict)

    def rows(self) -> list[tuple[float, float, int, float]]:
        """(T, eps, count, log(count)/T) rows ordered by T then decreasing eps."""
        return [
            (T, eps, count, math.log(count) / T)
            for (T, eps), count in sorted(self.counts.items(), key=lambda kv: (kv[0][0], -kv[0][1]))
        ]

    def to_dict(self) -> dict:
        return {
            "method": str(self.method),
            "rate": self.rate,
            "rates": {repr(eps): slope for eps, slope in self.rates.items()},
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class _Lattice:
    """
    Dyadic lattice over the unit cube for one horizon and eps.

    Axis i has spacing 1 / intervals[i]. Axes whose full lattice exceeds the
    grid resolution are periodic: only `shape[i]` residues are searched and
    every residue stands for all lattice positions congruent to it.

    Attributes:
        intervals: Lattice steps across the unit interval per axis
        shape: Searched points per axis (the period on periodic axes)
        periodic: Whether each axis is searched modulo its period
        kernel: eps-ball over offsets, folded on periodic axes and padded to
            half-width shape - 1 on the others
        reach: Largest offset the eps-ball holds along each axis
    """

    intervals: tuple[int, ...]
    shape: tuple[int, ...]
    periodic: tuple[bool, ...]
    kernel: np.ndarray
    reach: tuple[int, ...]


def _check_system(system: SwitchedSystem) -> None:
    if system.n > MAX_DIMENSION:
        raise EstimationConfigError(
            f"Estimation supports dimension up to {MAX_DIMENSION}, got n={system.n}"
        )


def _sample_rows(system: SwitchedSystem, T: float, config: EstimationConfig) -> np.ndarray:
    _check_system(system)
    _, matrices = sample_transitions(system, T, config.sample_density)
    return np.unique(matrices.reshape(-1, system.n), axis=0)


def _unit_extents(rows: np.ndarray) -> np.ndarray:
    """Half-width of {d : max over rows of |row . d| <= 1} along each axis."""
    n = rows.shape[1]
    constraints = np.vstack((rows, -rows))
    bound = np.ones(len(constraints))
    extents = np.ones(n)
    for axis in range(n):
        objective = np.zeros(n)
        objective[axis] = -1.0
        result = scipy.optimize.linprog(
            objective, A_ub=constraints, b_ub=bound, bounds=[(-1.0, 1.0)] * n, method="highs"
        )
        if result.status == 0:
            extents[axis] = min(1.0, -float(result.fun) * (1.0 + EXTENT_SLACK))
        else:
            logger.warning(f"Extent program failed on axis {axis}: {result.message}")
    return extents


def _level(eps: float, extent: float, steps: int) -> int:
    """Smallest j >= 0 with eps * extent * 2**j >= steps / 2; j(2 eps) = j(eps) - 1."""
    mantissa, exponent = math.frexp(steps / (2.0 * eps * extent))
    return max(0, exponent - 1 if mantissa == 0.5 else exponent)


def _offset_table(
    rows: np.ndarray, spacing: np.ndarray, half: Sequence[int], workers: int
) -> np.ndarray:
    """max over sample rows of |row . (d * spacing)| for every offset d with |d_i| <= half_i."""
    grids = np.meshgrid(*(np.arange(-h, h + 1) for h in half), indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=1) * spacing
    chunks = [offsets[i : i + OFFSET_CHUNK] for i in range(0, len(offsets), OFFSET_CHUNK)]

    def evaluate(chunk: np.ndarray) -> np.ndarray:
        return np.max(np.abs(chunk @ rows.T), axis=1)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(evaluate, chunks))
    return np.concatenate(parts).reshape(tuple(2 * h + 1 for h in half))


def _fold(
    ball: np.ndarray, half: Sequence[int], shape: Sequence[int], periodic: Sequence[bool]
) -> np.ndarray:
    kernel = ball
    for axis, (h, size, wraps) in enumerate(zip(half, shape, periodic, strict=True)):
        moved = np.moveaxis(kernel, axis, 0)
        if wraps:
            folded = np.zeros((size, *moved.shape[1:]), dtype=bool)
            for offset in range(-h, h + 1):
                folded[offset % size] |= moved[offset + h]
        else:
            pad = [(size - 1 - h, size - 1 - h)] + [(0, 0)] * (moved.ndim - 1)
            folded = np.pad(moved, pad)
        kernel = np.moveaxis(folded, 0, axis)
    return kernel


def _build_lattice(
    rows: np.ndarray, extents: np.ndarray, eps: float, config: EstimationConfig, method: Method
) -> _Lattice:
    r = config.grid_resolution
    if config.auto_zoom:
        steps = min(BALL_STEPS, r // 2)
        intervals = tuple(2 ** _level(eps, float(w), steps) for w in extents)
    else:
        intervals = (r - 1,) * rows.shape[1]
    spacing = 1.0 / np.array(intervals, dtype=float)
    half = tuple(
        min(int(eps * float(w) * L) + 1, L) for w, L in zip(extents, intervals, strict=True)
    )

    ball = _offset_table(rows, spacing, half, config.workers) < eps
    if int(ball.sum()) <= 1:
        raise LatticeTooCoarseError(
            f"No lattice neighbour lies within eps={eps}; "
            "increase grid_resolution or enable auto_zoom"
        )
    reach = tuple(int(e) for e in np.abs(np.argwhere(ball) - np.array(half)).max(axis=0))

    periodic = tuple(L + 1 > r for L in intervals)
    # periods are whole multiples of the window
    windows = [2 * e + 1 if method is Method.SPANNING_GREEDY else e + 1 for e in reach]
    shape = tuple(
        (r - 1) // u * u if wraps else L + 1
        for u, L, wraps in zip(windows, intervals, periodic, strict=True)
    )
    logger.debug(f"Lattice at eps={eps}: intervals {intervals}, searched {shape}")
    return _Lattice(
        intervals=intervals,
        shape=shape,
        periodic=periodic,
        kernel=_fold(ball, half, shape, periodic),
        reach=reach,
    )


def _neighbourhood(lattice: _Lattice, index: tuple[int, ...]) -> np.ndarray:
    """Searched points whose offset from index lies in the eps-ball."""
    window = lattice.kernel
    for axis, i in enumerate(index):
        if lattice.periodic[axis]:
            window = np.roll(window, i, axis=axis)
        else:
            start = lattice.shape[axis] - 1 - i
            window = np.take(window, range(start, start + lattice.shape[axis]), axis=axis)
    return window


def _coverage(lattice: _Lattice, mask: np.ndarray) -> np.ndarray:
    """For every candidate centre, how many points of mask its ball contains."""
    extended = mask.astype(float)
    for axis, size in enumerate(lattice.shape):
        if lattice.periodic[axis]:
            extended = np.concatenate((extended, extended), axis=axis)
        else:
            pad = [(0, 0)] * extended.ndim
            pad[axis] = (size - 1, size - 1)
            extended = np.pad(extended, pad)
    gain = scipy.signal.fftconvolve(extended, np.flip(lattice.kernel.astype(float)), mode="valid")
    return np.rint(gain[tuple(slice(0, size) for size in lattice.shape)])


def _greedy_cover(lattice: _Lattice) -> list[tuple[int, ...]]:
    uncovered = np.ones(lattice.shape, dtype=bool)
    gain = _coverage(lattice, uncovered)
    centres = []
    while uncovered.any():
        flat = int(np.argmax(gain))
        index = tuple(int(i) for i in np.unravel_index(flat, lattice.shape))
        newly = _neighbourhood(lattice, index) & uncovered
        uncovered &= ~newly
        gain -= _coverage(lattice, newly)
        centres.append(index)
    return centres


def _greedy_packing(lattice: _Lattice) -> list[tuple[int, ...]]:
    blocked = np.zeros(lattice.shape, dtype=bool)
    chosen = []
    for index in np.ndindex(*lattice.shape):
        if blocked[index]:
            continue
        blocked |= _neighbourhood(lattice, index)
        chosen.append(index)
    return chosen


def _replicas(lattice: _Lattice, index: tuple[int, ...], reach: Sequence[int]) -> int:
    """Positions in [-reach, intervals + reach] congruent to index on periodic axes."""
    total = 1
    for axis, i in enumerate(index):
        if lattice.periodic[axis]:
            period, length, e = lattice.shape[axis], lattice.intervals[axis], reach[axis]
            total *= (length + e - i) // period + (e + i) // period + 1
    return total


def _lattice_count(lattice: _Lattice, method: Method) -> int:
    if method is Method.SEPARATED_GREEDY:
        points = _greedy_packing(lattice)
        reach: Sequence[int] = (0,) * len(lattice.shape)
    else:
        points = _greedy_cover(lattice)
        reach = lattice.reach
    return sum(_replicas(lattice, p, reach) for p in points)


def spanning_count(system: SwitchedSystem, T: float, eps: float, config: EstimationConfig) -> int:
    """
    Greedy (T, eps)-spanning set size over the unit cube.

    Candidates and covered points both come from the lattice; the candidate
    covering the most uncovered points is added until every point is
    covered, lowest lattice index first on ties. With auto_zoom the lattice
    spacing halves with eps, so the lattice at eps contains the one at 2 eps.

    Raises:
        LatticeTooCoarseError: If an eps-ball holds no lattice neighbour
        EstimationConfigError: If the system dimension exceeds 3
    """
    if not eps > 0:
        raise EstimationConfigError(f"eps must be positive, got {eps}")
    rows = _sample_rows(system, T, config)
    lattice = _build_lattice(rows, _unit_extents(rows), eps, config, Method.SPANNING_GREEDY)
    return _lattice_count(lattice, Method.SPANNING_GREEDY)


def separated_count(system: SwitchedSystem, T: float, eps: float, config: EstimationConfig) -> int:
    """
    Greedy (T, eps)-separated set size over the unit cube.

    Lattice points are scanned in index order and kept when their separation
    from every kept point is at least eps. The result is a separated set of
    the cube, so it never exceeds the largest one.

    Raises:
        LatticeTooCoarseError: If an eps-ball holds no lattice neighbour
        EstimationConfigError: If the system dimension exceeds 3
    """
    if not eps > 0:
        raise EstimationConfigError(f"eps must be positive, got {eps}")
    rows = _sample_rows(system, T, config)
    lattice = _build_lattice(rows, _unit_extents(rows), eps, config, Method.SEPARATED_GREEDY)
    return _lattice_count(lattice, Method.SEPARATED_GREEDY)


def _running_peaks(system: SwitchedSystem, rates: np.ndarray, T: float) -> np.ndarray:
    """Per-coordinate max of kappa_i(t) over [0, T]; kappa is piecewise linear."""
    peak = np.zeros(rates.shape[0])
    level = np.zeros(rates.shape[0])
    for mode, _, length in system.signal.pieces(T):
        level = level + rates[:, mode] * length
        peak = np.maximum(peak, level)
    return peak


def grid_formula_count(
    system: SwitchedSystem, structure: StructureReport, T: float, eps: float
) -> int:
    """
    Closed-form lattice spanning count for diagonal systems.

    prod_i ceil(exp(max_{t<=T} kappa_i(t)) / (2 eps)), with kappa_i built
    from the real diagonal rates of the transformed modes.

    Raises:
        WrongStructureError: If the modes are not commuting diagonalizable
    """
    if structure.classification is not Classification.COMMUTING_DIAGONALIZABLE:
        raise WrongStructureError(
            f"Grid formula needs commuting diagonalizable modes, got {structure.classification}"
        )
    if not eps > 0:
        raise EstimationConfigError(f"eps must be positive, got {eps}")
    system.signal.check_time(T)
    peaks = _running_peaks(system, structure.diagonal_rates(), T)
    return math.prod(math.ceil(math.exp(float(p)) / (2 * eps)) for p in peaks)


def fit_log_slope(
    horizons: Sequence[float], counts: Sequence[int], tail_fraction: float = 0.5
) -> tuple[float, float]:
    """
    Least-squares slope of log count against T over the last horizons.

    Returns:
        (slope, sum of squared residuals)

    Raises:
        DegenerateFitError: If fewer than 2 horizons fall in the tail
    """
    size = math.ceil(len(horizons) * tail_fraction)
    if size < 2:
        raise DegenerateFitError(
            f"Slope fit needs at least 2 tail horizons, got {size} of {len(horizons)}"
        )
    x = np.asarray(horizons[-size:], dtype=float)
    y = np.log(np.asarray(counts[-size:], dtype=float))
    coefficients, residuals, *_ = np.polyfit(x, y, 1, full=True)
    return float(coefficients[0]), float(residuals[0]) if residuals.size else 0.0


def _envelope(table: np.ndarray, method: Method) -> np.ndarray:
    """Enforce monotonicity: rows are horizons (increasing), columns epsilons (decreasing)."""
    if method is Method.SEPARATED_GREEDY:
        result = np.maximum.accumulate(table, axis=0)
        return np.maximum.accumulate(result, axis=1)
    result = np.minimum.accumulate(table[::-1], axis=0)[::-1]
    return np.minimum.accumulate(result[:, ::-1], axis=1)[:, ::-1]


def entropy_rate(
    system: SwitchedSystem,
    config: EstimationConfig,
    structure: StructureReport | None = None,
) -> EstimationResult:
    """
    Estimate the entropy as the growth rate of counts in T.

    Fills the (T, eps) count table with the configured method, makes it
    monotone, and fits log count against T over the tail horizons for each
    eps. The slope at the smallest eps is reported as the rate; the spread
    of slopes between consecutive horizons is kept as a limit diagnostic.

    Args:
        system: Switched system, n <= 3
        config: Estimation parameters (at least 3 horizons and 2 epsilons)
        structure: Precomputed classification, for the grid_formula method

    Returns:
        EstimationResult

    Raises:
        EstimationConfigError: If the configuration is too small or the system too large
        DegenerateFitError: If the tail holds fewer than 2 horizons
    """
    _check_system(system)
    if len(config.horizons) < 3 or len(config.epsilons) < 2:
        raise EstimationConfigError(
            f"Rate estimation needs at least 3 horizons and 2 epsilons, got "
            f"{len(config.horizons)} and {len(config.epsilons)}"
        )

    raw = np.zeros((len(config.horizons), len(config.epsilons)), dtype=np.int64)
    intervals: list[list[list[int]]] = []
    if config.method is Method.GRID_FORMULA:
        structure = structure or classify(system.modes)
        for i, T in enumerate(config.horizons):
            for j, eps in enumerate(config.epsilons):
                raw[i, j] = grid_formula_count(system, structure, T, eps)
    else:
        for i, T in enumerate(config.horizons):
            rows = _sample_rows(system, T, config)
            extents = _unit_extents(rows)
            levels = []
            for j, eps in enumerate(config.epsilons):
                lattice = _build_lattice(rows, extents, eps, config, config.method)
                levels.append(list(lattice.intervals))
                raw[i, j] = _lattice_count(lattice, config.method)
            intervals.append(levels)
            logger.debug(f"Counts at T={T}: {list(raw[i])}")

    table = _envelope(raw, config.method)
    counts = {
        (T, eps): int(table[i, j])
        for i, T in enumerate(config.horizons)
        for j, eps in enumerate(config.epsilons)
    }

    rates: dict[float, float] = {}
    residuals: dict[str, float] = {}
    for j, eps in enumerate(config.epsilons):
        column = [int(c) for c in table[:, j]]
        slope, residual = fit_log_slope(config.horizons, column, config.tail_fraction)
        rates[eps] = slope
        residuals[repr(eps)] = residual

    smallest = config.epsilons[-1]
    logs = np.log(np.asarray(table[:, -1], dtype=float))
    pair_slopes = np.diff(logs) / np.diff(np.asarray(config.horizons))

    diagnostics = {
        "raw_counts": [[int(c) for c in row] for row in raw],
        "lattice_intervals": intervals,
        "residuals": residuals,
        "pair_slopes": [float(s) for s in pair_slopes],
        "slope_variance": float(np.var(pair_slopes)),
        "config": config.to_dict(),
    }
    logger.info(f"Estimated rate {rates[smallest]:.4f} at eps={smallest} ({config.method})")
    return EstimationResult(
        counts=counts,
        rates=rates,
        rate=rates[smallest],
        method=config.method,
        diagnostics=diagnostics,
    )
