"""Lie-algebraic structure of mode matrices: closure, solvability, triangularization."""

import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
import scipy.linalg

from switched_entropy.errors import (
    DimensionMismatchError,
    IllConditionedError,
    NoCommonEigenvectorError,
)

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-9
DEFAULT_CLASSIFY_TOL = 1e-8
RESIDUAL_TOL = 1e-8
MAX_EIGENVECTOR_CONDITION = 1e8
# Eigenvalues closer than this (relative to the mode scale) are treated as one
CLUSTER_TOL = 1e-4


class Classification(StrEnum):
    """Lie structure of a mode set, strongest first."""

    COMMUTING_DIAGONALIZABLE = "commuting_diagonalizable"
    SOLVABLE = "solvable"
    UNSTRUCTURED = "unstructured"


@dataclass(frozen=True)
class ModeSet:
    """
    The k real n x n mode matrices of a switched linear system.

    Attributes:
        matrices: Mode matrices, stored as read-only float arrays
    """

    matrices: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.matrices) == 0:
            raise DimensionMismatchError("A mode set needs at least one matrix")
        arrays = []
        for index, matrix in enumerate(self.matrices):
            array = np.array(matrix, dtype=float)
            if array.ndim != 2 or array.shape[0] != array.shape[1]:
                raise DimensionMismatchError(f"Mode {index + 1} is not square: shape {array.shape}")
            if not np.all(np.isfinite(array)):
                raise DimensionMismatchError(f"Mode {index + 1} has non-finite entries")
            array.setflags(write=False)
            arrays.append(array)
        if len({a.shape for a in arrays}) != 1:
            shapes = [a.shape for a in arrays]
            raise DimensionMismatchError(f"Modes have different shapes: {shapes}")
        object.__setattr__(self, "matrices", tuple(arrays))

    @property
    def n(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def k(self) -> int:
        return len(self.matrices)

    @property
    def scale(self) -> float:
        """Largest Frobenius norm among the modes."""
        return max(float(np.linalg.norm(a)) for a in self.matrices)

    @classmethod
    def from_lists(cls, matrices: Sequence[Sequence[Sequence[float]]]) -> "ModeSet":
        return cls(tuple(np.array(m, dtype=float) for m in matrices))


@dataclass(frozen=True)
class StructureReport:
    """
    Result of classifying a mode set.

    Attributes:
        classification: Strongest structure detected
        closure_dim: Dimension of the generated Lie algebra
        derived_depth: Steps until the derived series vanishes, None if not solvable
        transform: P with P A_i P^-1 = transformed_modes[i]
        transformed_modes: Diagonal or upper-triangular forms of each mode
        residual: Largest entry outside the diagonal/triangular pattern
        diagnostics: Notes on numerical fallbacks or failures
    """

    classification: Classification
    closure_dim: int
    derived_depth: int | None
    transform: np.ndarray
    transformed_modes: tuple[np.ndarray, ...]
    residual: float
    diagnostics: tuple[str, ...] = field(default_factory=tuple)

    def diagonal_rates(self) -> np.ndarray:
        """Real parts of the transformed diagonals as an (n, k) table a_i^j."""
        return np.array([np.real(np.diag(m)) for m in self.transformed_modes]).T

    def to_dict(self) -> dict:
        return {
            "classification": str(self.classification),
            "closure_dim": self.closure_dim,
            "derived_depth": self.derived_depth,
            "residual": self.residual,
            "transform": _complex_to_pairs(self.transform),
            "transformed_modes": [_complex_to_pairs(m) for m in self.transformed_modes],
            "diagnostics": list(self.diagnostics),
        }


def _complex_to_pairs(matrix: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix, complex)]


def bracket(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """
    Lie bracket [A, B] = AB - BA.

    Raises:
        DimensionMismatchError: If A and B are not square of equal size
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"Cannot bracket shapes {A.shape} and {B.shape}")
    return A @ B - B @ A


def _span(vectors: Sequence[np.ndarray], tol: float) -> np.ndarray:
    """
    Orthonormal basis (rows) of the span of flattened vectors.

    Singular values at or below tol * max(1, largest) count as zero.
    """
    if len(vectors) == 0:
        return np.zeros((0, 0))
    stacked = np.array([np.ravel(v) for v in vectors])
    _, singular, vh = scipy.linalg.svd(stacked, full_matrices=False)
    if singular.size == 0:
        return np.zeros((0, stacked.shape[1]))
    rank = int(np.count_nonzero(singular > tol * max(1.0, singular[0])))
    return vh[:rank]


def _normalized(matrices: Sequence[np.ndarray]) -> list[np.ndarray]:
    result = []
    for m in matrices:
        norm = np.linalg.norm(m)
        if norm > 0:
            result.append(np.asarray(m) / norm)
    return result


def lie_closure(modes: ModeSet, tol: float = DEFAULT_RANK_TOL) -> list[np.ndarray]:
    """
    Basis of the smallest bracket-closed subspace containing the modes.

    Generators are normalized, then brackets of basis pairs are appended and
    the span re-orthonormalized until its dimension stops growing. The
    dimension is bounded by n**2, so the loop terminates.

    Returns:
        Orthonormal (Frobenius) basis matrices of the generated Lie algebra
    """
    if not tol > 0:
        raise ValueError(f"Tolerance must be positive, got {tol}")
    n = modes.n
    basis = _span(_normalized(modes.matrices), tol)

    while 0 < len(basis) < n * n:
        elements = [row.reshape(n, n) for row in basis]
        brackets = [bracket(x, y) for x, y in itertools.combinations(elements, 2)]
        grown = _span([*elements, *brackets], tol)
        if len(grown) == len(basis):
            break
        logger.debug(f"Lie closure grew from {len(basis)} to {len(grown)}")
        basis = grown

    return [row.reshape(n, n) for row in basis]


def derived_series_depth(
    basis: Sequence[np.ndarray], tol: float = DEFAULT_RANK_TOL
) -> int | None:
    """
    Number of derived-algebra steps until the zero subspace.

    Returns:
        Smallest m with g^(m) = 0, or None when the series stalls at a
        nonzero subalgebra (not solvable)
    """
    if len(basis) == 0:
        return 0
    shape = np.asarray(basis[0]).shape
    current = _span(_normalized(basis), tol)
    depth = 0

    while len(current) > 0:
        elements = [row.reshape(shape) for row in current]
        brackets = [bracket(x, y) for x, y in itertools.combinations(elements, 2)]
        derived = _span(brackets, tol) if brackets else np.zeros((0, current.shape[1]))
        depth += 1
        if len(derived) == 0:
            return depth
        if len(derived) >= len(current):
            logger.debug(f"Derived series stalls at dimension {len(current)}")
            return None
        current = derived

    return depth


def _null_basis(matrix: np.ndarray, threshold: float) -> np.ndarray:
    """Orthonormal columns spanning the numerical null space of a square matrix."""
    _, singular, vh = scipy.linalg.svd(matrix)
    rank = int(np.count_nonzero(singular > threshold))
    return vh[rank:].conj().T


def _eigenvalue_clusters(values: np.ndarray, scale: float) -> list[list[complex]]:
    """Eigenvalues grouped within CLUSTER_TOL * max(1, scale), by descending real part."""
    radius = CLUSTER_TOL * max(1.0, scale)
    clusters: list[list[complex]] = []
    for value in sorted((complex(v) for v in values), key=lambda z: (-z.real, -z.imag)):
        for cluster in clusters:
            if any(abs(value - member) <= radius for member in cluster):
                cluster.append(value)
                break
        else:
            clusters.append([value])
    means = [complex(np.mean(cluster)) for cluster in clusters]
    order = sorted(range(len(clusters)), key=lambda i: (-means[i].real, -means[i].imag))
    return [clusters[i] for i in order]


def _shifts(cluster: Sequence[complex]) -> list[complex]:
    """
    Candidate eigenvalues for one cluster.

    A defective eigenvalue splits into a cluster whose mean is accurate
    to machine precision. The mean comes first, then the members.
    """
    mean = complex(np.mean(cluster))
    return [mean, *cluster] if len(cluster) > 1 else [mean]


def _intersect(
    basis: np.ndarray,
    remaining: Sequence[np.ndarray],
    threshold: float,
    scale: float,
) -> list[tuple[np.ndarray, float]]:
    """
    Common eigenvectors of the remaining modes within span(basis).

    Returns:
        (vector, score) candidates; score is the smallest non-null singular
        value met along the way (larger means a cleaner rank decision)
    """
    if not remaining:
        return [(basis[:, 0], np.inf)]

    mode = remaining[0]
    n = mode.shape[0]
    compressed = basis.conj().T @ mode @ basis
    candidates: list[tuple[np.ndarray, float]] = []

    for cluster in _eigenvalue_clusters(scipy.linalg.eigvals(compressed), scale):
        for mu in _shifts(cluster):
            restricted = (mode - mu * np.eye(n)) @ basis
            _, singular, vh = scipy.linalg.svd(restricted)
            null_count = int(np.count_nonzero(singular <= threshold))
            if null_count > 0:
                break
        else:
            continue
        kept = singular[: len(singular) - null_count]
        gap = float(kept.min()) if kept.size else np.inf
        sub_basis = basis @ vh[len(singular) - null_count :].conj().T
        for vector, score in _intersect(sub_basis, remaining[1:], threshold, scale):
            candidates.append((vector, min(score, gap)))

    return candidates


def _common_eigenvector(matrices: Sequence[np.ndarray], tol: float, scale: float) -> np.ndarray:
    first = matrices[0]
    n = first.shape[0]
    threshold = tol * scale

    for cluster in _eigenvalue_clusters(scipy.linalg.eigvals(first), scale):
        for lam in _shifts(cluster):
            eigenspace = _null_basis(first - lam * np.eye(n), threshold)
            if eigenspace.shape[1] > 0:
                break
        else:
            continue
        candidates = _intersect(eigenspace, matrices[1:], threshold, scale)
        if candidates:
            vector, score = max(candidates, key=lambda c: c[1])
            logger.debug(f"Common eigenvector from eigenvalue {lam:.6g} (score {score:.3g})")
            return vector / np.linalg.norm(vector)

    raise NoCommonEigenvectorError(
        f"No common eigenvector among {len(matrices)} modes at tol {tol}"
    )


def _triangularize(matrices: Sequence[np.ndarray], tol: float, scale: float) -> np.ndarray:
    """Unitary W whose columns make every W^H A W upper triangular."""
    n = matrices[0].shape[0]
    if n == 1:
        return np.eye(1, dtype=complex)

    vector = _common_eigenvector(matrices, tol, scale)
    complement = scipy.linalg.null_space(vector.conj()[np.newaxis, :])
    basis = np.column_stack([vector, complement])
    blocks = [complement.conj().T @ a @ complement for a in matrices]
    inner = _triangularize(blocks, tol, scale)
    return basis @ scipy.linalg.block_diag(np.eye(1), inner)


def _lower_residual(matrices: Sequence[np.ndarray]) -> float:
    return max(float(np.max(np.abs(np.tril(m, -1)), initial=0.0)) for m in matrices)


def _offdiagonal_residual(matrices: Sequence[np.ndarray]) -> float:
    return max(float(np.max(np.abs(m - np.diag(np.diag(m))), initial=0.0)) for m in matrices)


def simultaneous_triangularizer(modes: ModeSet, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """
    Unitary P with P A_i P^-1 upper triangular for every mode.

    A common eigenvector is found by searching the eigenspaces of the first
    mode (eigenvalue clusters by descending real part) and intersecting them with eigenspaces of
    the other modes through rank tests; the basis is completed and the
    problem deflated to (n-1) x (n-1) blocks. A failed search is retried
    once with the tolerance relaxed tenfold.

    Raises:
        NoCommonEigenvectorError: If no common eigenvector exists at either tolerance
        IllConditionedError: If the transformed modes miss the triangular residual target
    """
    matrices = [np.asarray(a, dtype=complex) for a in modes.matrices]
    scale = modes.scale
    if scale == 0:
        return np.eye(modes.n, dtype=complex)

    try:
        unitary = _triangularize(matrices, tol, scale)
    except NoCommonEigenvectorError:
        logger.warning(f"Common eigenvector search failed at tol {tol}, retrying at {tol * 10}")
        unitary = _triangularize(matrices, tol * 10, scale)

    transform = unitary.conj().T
    transformed = [transform @ a @ unitary for a in matrices]
    residual = _lower_residual(transformed)
    if residual > RESIDUAL_TOL * scale:
        raise IllConditionedError(
            f"Triangularized modes keep lower entries of size {residual:.3g} "
            f"(limit {RESIDUAL_TOL * scale:.3g})"
        )
    return transform


def _is_diagonalizable(matrix: np.ndarray, tol: float) -> bool:
    values, vectors = scipy.linalg.eig(matrix)
    residual = np.linalg.norm(matrix @ vectors - vectors * values)
    if residual > tol * max(float(np.linalg.norm(matrix)), np.finfo(float).tiny):
        return False
    return bool(np.linalg.cond(vectors) <= MAX_EIGENVECTOR_CONDITION)


def _simultaneous_diagonalizer(
    modes: ModeSet, attempts: int = 3
) -> tuple[np.ndarray, list[np.ndarray], float]:
    """
    Diagonalize a commuting diagonalizable family through a generic combination.

    Columns are ordered by descending real part of the first mode's
    diagonal, ties broken by the following modes.
    """
    rng = np.random.default_rng(20160)
    best: tuple[np.ndarray, list[np.ndarray], float] | None = None

    for _ in range(attempts):
        weights = rng.uniform(1.0, 2.0, size=modes.k)
        combined = sum(w * a for w, a in zip(weights, modes.matrices, strict=True))
        _, vectors = scipy.linalg.eig(combined)
        inverse = scipy.linalg.inv(vectors)
        transformed = [inverse @ a @ vectors for a in modes.matrices]

        keys = [-np.real(np.diag(m)) for m in reversed(transformed)]
        order = np.lexsort(keys)
        vectors = vectors[:, order]
        inverse = inverse[order, :]
        transformed = [m[np.ix_(order, order)] for m in transformed]
        residual = _offdiagonal_residual(transformed)

        if best is None or residual < best[2]:
            best = (inverse, transformed, residual)
        if residual <= RESIDUAL_TOL * modes.scale:
            break

    assert best is not None
    return best


def _unstructured(
    modes: ModeSet,
    closure_dim: int,
    depth: int | None,
    diagnostics: list[str],
) -> StructureReport:
    transformed = tuple(np.asarray(a, dtype=complex) for a in modes.matrices)
    return StructureReport(
        classification=Classification.UNSTRUCTURED,
        closure_dim=closure_dim,
        derived_depth=depth,
        transform=np.eye(modes.n, dtype=complex),
        transformed_modes=transformed,
        residual=_lower_residual(transformed),
        diagnostics=tuple(diagnostics),
    )


def classify(
    modes: ModeSet,
    tol: float = DEFAULT_CLASSIFY_TOL,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> StructureReport:
    """
    Classify the Lie structure of a mode set and build the matching transform.

    commuting_diagonalizable when every pairwise bracket vanishes and every
    mode is diagonalizable; solvable when the derived series of the Lie
    closure reaches zero; unstructured otherwise. Numerical failures are
    reported as unstructured with a diagnostic instead of raising.

    Args:
        modes: Mode matrices
        tol: Classification tolerance (brackets, diagonalizability)
        rank_tol: Rank threshold for closure, derived series and eigenspaces

    Returns:
        StructureReport
    """
    diagnostics: list[str] = []
    scale = modes.scale
    closure_dim = 0
    depth: int | None = None

    try:
        closure = lie_closure(modes, rank_tol)
        closure_dim = len(closure)
        depth = derived_series_depth(closure, rank_tol)

        bracket_limit = tol * scale * scale
        commuting = all(
            np.linalg.norm(bracket(a, b)) <= bracket_limit
            for a, b in itertools.combinations(modes.matrices, 2)
        )
        if commuting and all(_is_diagonalizable(a, tol) for a in modes.matrices):
            transform, transformed, residual = _simultaneous_diagonalizer(modes)
            if residual <= RESIDUAL_TOL * scale:
                logger.info(f"Modes commute and diagonalize (closure dim {closure_dim})")
                return StructureReport(
                    classification=Classification.COMMUTING_DIAGONALIZABLE,
                    closure_dim=closure_dim,
                    derived_depth=depth,
                    transform=transform,
                    transformed_modes=tuple(transformed),
                    residual=residual,
                )
            diagnostics.append(f"simultaneous diagonalization residual {residual:.3g} too large")

        if depth is None:
            logger.info(f"Lie algebra of dimension {closure_dim} is not solvable")
            return _unstructured(modes, closure_dim, depth, diagnostics)

        transform = simultaneous_triangularizer(modes, rank_tol)
        inverse = transform.conj().T
        transformed = [transform @ a @ inverse for a in modes.matrices]
        logger.info(f"Lie algebra solvable with derived depth {depth} (closure dim {closure_dim})")
        return StructureReport(
            classification=Classification.SOLVABLE,
            closure_dim=closure_dim,
            derived_depth=depth,
            transform=transform,
            transformed_modes=tuple(transformed),
            residual=_lower_residual(transformed),
            diagnostics=tuple(diagnostics),
        )
    except (NoCommonEigenvectorError, IllConditionedError) as e:
        logger.warning(f"Triangularization failed despite solvable algebra: {e}")
        diagnostics.append(f"triangularization failed: {e}")
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.warning(f"Eigen-decomposition failed: {e}")
        diagnostics.append(f"eigen-decomposition failed: {e}")

    return _unstructured(modes, closure_dim, depth, diagnostics)
