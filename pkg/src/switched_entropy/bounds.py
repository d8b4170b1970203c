"""Entropy formulas and bounds, assembled into a best-available BoundReport."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
import scipy.linalg

from switched_entropy.errors import (
    IllConditionedError,
    RateLengthError,
    SwitchedEntropyError,
    WrongStructureError,
)
from switched_entropy.flow import SwitchedSystem
from switched_entropy.lie import (
    DEFAULT_CLASSIFY_TOL,
    DEFAULT_RANK_TOL,
    RESIDUAL_TOL,
    Classification,
    ModeSet,
    StructureReport,
    classify,
)
from switched_entropy.signals import Verdict, activation_fractions, subexponential_check

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 1000.0
EXACT_TOL = 1e-12


class StabilityVerdict(StrEnum):
    GES = "GES"
    NOT_CONCLUDED = "not_concluded"


@dataclass(frozen=True)
class StabilityReport:
    """Stability verdict together with the average exponent it was decided on."""

    verdict: StabilityVerdict
    kappa_bar: float


@dataclass(frozen=True)
class BoundReport:
    """
    Lower and upper entropy bounds with their provenance.

    Attributes:
        lower: Lower bound in 1/s from the structural formula, or the clamped
            trace bound when no other formula applies
        upper: Upper bound in 1/s, or None when no formula applies
        exact: True when lower and upper agree within 1e-12
        rules: Names of the formulas that produced the bounds
        kappa_bars: Per-coordinate average exponents used
        ordering: 1-based coordinate order behind the triangular bound
        warnings: Unverified hypotheses and numerical notes
        classification: Lie structure of the modes, when classified
        trace_bound: Raw trace lower bound (may be negative)
        estimated: True when activation fractions are tail estimates
        ordering_values: Triangular bound value under each evaluated ordering
        diagnostics: Numerical failures met while classifying or solving
        effective_lower: Largest of lower and the clamped trace bound
    """

    lower: float | None
    upper: float | None
    exact: bool
    rules: tuple[str, ...] = ()
    kappa_bars: tuple[float, ...] = ()
    ordering: tuple[int, ...] = ()
    warnings: tuple[str, ...] = ()
    classification: str | None = None
    trace_bound: float | None = None
    estimated: bool = False
    ordering_values: dict[str, float] = field(default_factory=dict)
    diagnostics: tuple[str, ...] = ()
    effective_lower: float | None = None

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "exact": self.exact,
            "rules": list(self.rules),
            "kappa_bars": list(self.kappa_bars),
            "ordering": list(self.ordering),
            "warnings": list(self.warnings),
            "classification": self.classification,
            "trace_bound": self.trace_bound,
            "estimated": self.estimated,
            "ordering_values": dict(self.ordering_values),
            "diagnostics": list(self.diagnostics),
            "effective_lower": self.effective_lower,
        }


def _is_exact(lower: float | None, upper: float | None) -> bool:
    if lower is None or upper is None:
        return False
    return abs(upper - lower) <= EXACT_TOL * max(1.0, abs(upper))


def _check_fractions(
    rates: Sequence[float], fractions: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(rates, dtype=float)
    f = np.asarray(fractions, dtype=float)
    if a.ndim != 1 or a.shape != f.shape:
        raise RateLengthError(f"Got {a.size} rates for {f.size} activation fractions")
    if np.any(f < 0) or np.any(f > 1):
        raise ValueError(f"Activation fractions must lie in [0, 1], got {f.tolist()}")
    return a, f


def scalar_stability(rates: Sequence[float], fractions: Sequence[float]) -> StabilityReport:
    """
    Sufficient GES test for a scalar switched system.

    GES when kappa_bar = sum_i a_i tau_bar_i < 0; the converse is not
    claimed, so a non-negative kappa_bar is not_concluded.
    """
    a, f = _check_fractions(rates, fractions)
    value = float(a @ f)
    verdict = StabilityVerdict.GES if value < 0 else StabilityVerdict.NOT_CONCLUDED
    return StabilityReport(verdict=verdict, kappa_bar=value)


def scalar_switched_entropy(rates: Sequence[float], fractions: Sequence[float]) -> float:
    """Entropy of a scalar switched system, max(0, sum_i a_i tau_bar_i)."""
    a, f = _check_fractions(rates, fractions)
    return max(0.0, float(a @ f))


def lti_entropy(matrix: np.ndarray) -> float:
    """
    Entropy of x' = Ax: the sum of max(0, Re lambda) over eigenvalues with multiplicity.

    Raises:
        IllConditionedError: If the eigenvalue solver fails
    """
    try:
        eigenvalues = scipy.linalg.eigvals(np.asarray(matrix, dtype=float))
    except (np.linalg.LinAlgError, ValueError) as e:
        raise IllConditionedError(f"Eigenvalue computation failed: {e}") from e
    return float(np.sum(np.maximum(0.0, np.real(eigenvalues))))


def individual_entropies(modes: ModeSet) -> list[float]:
    """LTI entropy of every mode on its own."""
    return [lti_entropy(a) for a in modes.matrices]


def trace_lower_bound(system: SwitchedSystem, fractions: Sequence[float]) -> float:
    """
    Volume-growth lower bound sum_i tr(A_i) tau_bar_i.

    The value may be negative; since entropy is non-negative the effective
    lower bound is max(0, value).
    """
    f = np.asarray(fractions, dtype=float)
    if f.shape != (system.k,):
        raise RateLengthError(f"Got {f.size} activation fractions for {system.k} modes")
    return float(system.traces @ f)


def _kappa_bars(structure: StructureReport, fractions: Sequence[float]) -> np.ndarray:
    return structure.diagonal_rates() @ np.asarray(fractions, dtype=float)


def diagonal_bounds(
    system: SwitchedSystem,
    structure: StructureReport,
    fractions: Sequence[float],
    estimated: bool = False,
) -> BoundReport:
    """
    Two-sided bounds for commuting diagonalizable modes.

    max_i kappa_bar_i+ <= h <= sum_i kappa_bar_i+

    Raises:
        WrongStructureError: If the modes were not classified commuting_diagonalizable
    """
    if structure.classification is not Classification.COMMUTING_DIAGONALIZABLE:
        raise WrongStructureError(
            f"Diagonal bounds need commuting diagonalizable modes, got {structure.classification}"
        )
    bars = _kappa_bars(structure, fractions)
    positive = np.maximum(0.0, bars)
    lower = float(positive.max())
    upper = float(positive.sum())
    return BoundReport(
        lower=lower,
        upper=upper,
        exact=_is_exact(lower, upper),
        rules=("diag-lower", "diag-upper"),
        kappa_bars=tuple(float(b) for b in bars),
        ordering=tuple(range(1, system.n + 1)),
        classification=str(structure.classification),
        estimated=estimated,
        effective_lower=lower,
    )


def _triangular_value(positive: np.ndarray) -> float:
    """n k1+ + (n-1) k2+ + ... + kn+, as the sum of partial sums."""
    return float(np.sum(np.cumsum(positive)))


def triangular_upper_bound(
    system: SwitchedSystem,
    structure: StructureReport,
    fractions: Sequence[float],
    switch_diag: Verdict,
    estimated: bool = False,
) -> BoundReport:
    """
    Upper bound sum_i (kappa_bar_1+ + ... + kappa_bar_i+) for simultaneously triangular modes.

    The bound holds in the deflation order of the triangularization. When the
    transformed modes are diagonal, the reversed order is also triangular and
    both values are evaluated; the smaller one is reported.

    Args:
        system: Switched system
        structure: Classification with triangular (or diagonal) transformed modes
        fractions: Activation fractions
        switch_diag: Verdict of the subexponential switching check; anything
            but pass adds a warning since the bound assumes it
        estimated: Whether fractions are tail estimates

    Raises:
        WrongStructureError: If the modes are unstructured
    """
    if structure.classification is Classification.UNSTRUCTURED:
        raise WrongStructureError(
            "Triangular bound needs solvable or commuting diagonalizable modes"
        )

    bars = _kappa_bars(structure, fractions)
    positive = np.maximum(0.0, bars)
    natural = tuple(range(1, system.n + 1))
    values = {"natural": _triangular_value(positive)}
    upper, ordering = values["natural"], natural

    offdiagonal = max(
        float(np.max(np.abs(m - np.diag(np.diag(m))), initial=0.0))
        for m in structure.transformed_modes
    )
    if system.n > 1 and offdiagonal <= RESIDUAL_TOL * max(system.modes.scale, 1e-300):
        values["reversed"] = _triangular_value(positive[::-1])
        if values["reversed"] < upper:
            upper, ordering = values["reversed"], natural[::-1]

    warnings = []
    if switch_diag is not Verdict.PASS:
        warnings.append(
            f"subexponential switching check returned {switch_diag}; "
            "triangular bound hypothesis unverified"
        )
        logger.warning(warnings[-1])

    return BoundReport(
        lower=None,
        upper=upper,
        exact=False,
        rules=("tri-upper",),
        kappa_bars=tuple(float(b) for b in bars),
        ordering=ordering,
        warnings=tuple(warnings),
        classification=str(structure.classification),
        estimated=estimated,
        ordering_values=values,
    )


def analyze(
    system: SwitchedSystem,
    horizon: float = DEFAULT_HORIZON,
    tol: float = DEFAULT_CLASSIFY_TOL,
    rank_tol: float = DEFAULT_RANK_TOL,
    tail_start_fraction: float = 0.5,
) -> BoundReport:
    """
    Tightest available entropy bounds for a switched system.

    The trace lower bound is always applied. A single mode gives the exact
    LTI entropy and a scalar system the exact scalar entropy; otherwise the
    Lie classification selects the diagonal two-sided bounds, the triangular
    upper bound, or no upper bound at all.

    Args:
        system: Switched system
        horizon: Horizon for estimated fractions and the switching check
        tol: Classification tolerance
        rank_tol: Rank tolerance for Lie computations
        tail_start_fraction: Tail window start for estimated fractions

    Returns:
        BoundReport with every applied rule listed
    """
    signal = system.signal
    horizon = min(horizon, signal.domain_end)
    fractions, exact_fractions = activation_fractions(signal, horizon, tail_start_fraction)
    estimated = not exact_fractions

    trace = trace_lower_bound(system, fractions)
    lower: float | None = max(0.0, trace)
    upper: float | None = None
    rules = ["trace-lower"]
    warnings: list[str] = []
    diagnostics: list[str] = []
    ordering: tuple[int, ...] = ()
    ordering_values: dict[str, float] = {}

    structure = classify(system.modes, tol, rank_tol)
    diagnostics.extend(structure.diagnostics)
    structured = structure.classification is not Classification.UNSTRUCTURED
    bars = tuple(float(b) for b in _kappa_bars(structure, fractions)) if structured else ()

    if system.k == 1:
        try:
            value = lti_entropy(system.modes.matrices[0])
            lower, upper = value, value
            rules.append("lti")
        except SwitchedEntropyError as e:
            diagnostics.append(str(e))
    elif system.n == 1:
        rates = [float(a[0, 0]) for a in system.modes.matrices]
        value = scalar_switched_entropy(rates, fractions)
        lower, upper = value, value
        rules.append("scalar")
    elif structure.classification is Classification.COMMUTING_DIAGONALIZABLE:
        diagonal = diagonal_bounds(system, structure, fractions, estimated)
        lower = diagonal.lower
        upper = diagonal.upper
        rules.extend(diagonal.rules)
        ordering = diagonal.ordering
    elif structure.classification is Classification.SOLVABLE:
        check = subexponential_check(signal, (horizon / 100, horizon / 10, horizon))
        triangular = triangular_upper_bound(system, structure, fractions, check.verdict, estimated)
        upper = triangular.upper
        rules.extend(triangular.rules)
        warnings.extend(triangular.warnings)
        ordering = triangular.ordering
        ordering_values = triangular.ordering_values

    effective_lower = max(lower if lower is not None else 0.0, max(0.0, trace))
    if lower is not None and effective_lower > lower + EXACT_TOL:
        warnings.append(f"trace bound {trace:.6g} is tighter than lower bound {lower:.6g}")
    if upper is not None and effective_lower > upper + EXACT_TOL:
        warnings.append(f"lower bound {effective_lower:.6g} exceeds upper bound {upper:.6g}")
    if estimated:
        warnings.append(f"activation fractions estimated over the tail of horizon {horizon:g}")

    report = BoundReport(
        lower=lower,
        upper=upper,
        exact=_is_exact(lower, upper),
        rules=tuple(rules),
        kappa_bars=bars,
        ordering=ordering,
        warnings=tuple(warnings),
        classification=str(structure.classification),
        trace_bound=trace,
        estimated=estimated,
        ordering_values=ordering_values,
        diagnostics=tuple(diagnostics),
        effective_lower=effective_lower,
    )
    logger.info(
        f"Bounds for {structure.classification} system: lower={report.lower}, "
        f"upper={report.upper}, rules={list(report.rules)}"
    )
    return report
