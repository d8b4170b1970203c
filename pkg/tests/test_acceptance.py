"""End-to-end checks of the analytic bounds against exact flows and the estimator."""

import math
import time

import numpy as np
import pytest
from click.testing import CliRunner
from conftest import system_config, write_config

from switched_entropy.bounds import analyze, trace_lower_bound, triangular_upper_bound
from switched_entropy.cli import cli
from switched_entropy.estimator import (
    EstimationConfig,
    entropy_rate,
    separated_count,
    spanning_count,
)
from switched_entropy.flow import SwitchedSystem, _expm, jordan_crossover, volume_growth
from switched_entropy.lie import Classification, ModeSet, classify
from switched_entropy.signals import SwitchingSignal, Verdict, subexponential_check
from switched_entropy.systems import example_system_1, example_system_2, lti_system, scalar_system

E12 = np.array([[0.0, 1.0], [0.0, 0.0]])
E21 = np.array([[0.0, 0.0], [1.0, 0.0]])


def random_signal(rng: np.random.Generator, k: int = 2) -> SwitchingSignal:
    durations = rng.uniform(0.5, 1.5, size=k)
    return SwitchingSignal(tuple((j + 1, float(d)) for j, d in enumerate(durations)), k=k)


def triangular_system(rng: np.random.Generator) -> SwitchedSystem:
    modes = tuple(np.triu(rng.uniform(-1.0, 1.0, size=(2, 2))) for _ in range(2))
    return SwitchedSystem(ModeSet(modes), random_signal(rng))


@pytest.fixture(scope="module")
def triangular_runs():
    """Ten random upper-triangular pairs with their bounds and estimated rates."""
    rng = np.random.default_rng(2024)
    config = EstimationConfig(horizons=(4.0, 8.0, 12.0, 16.0), tail_fraction=0.75)
    runs = []
    for _ in range(10):
        system = triangular_system(rng)
        fractions = system.signal.period_activation / system.signal.period
        structure = classify(system.modes)
        check = subexponential_check(system.signal, (10.0, 100.0, 1000.0))
        runs.append(
            {
                "structure": structure,
                "check": check,
                "upper": triangular_upper_bound(system, structure, fractions, check.verdict).upper,
                "trace": trace_lower_bound(system, fractions),
                "rate": entropy_rate(system, config).rate,
            }
        )
    return runs


@pytest.mark.slow
def test_reference_systems_reproduce():
    """Diagonal reference systems give their closed-form bounds."""
    start_time = time.time()
    first = analyze(example_system_1())
    second = analyze(example_system_2())
    elapsed = time.time() - start_time

    assert abs(first.lower - 2.0) <= 1e-12
    assert abs(first.upper - 2.0) <= 1e-12
    assert first.exact is True
    assert abs(second.lower - 1.0) <= 1e-12
    assert abs(second.upper - 1.5) <= 1e-12
    assert elapsed < 1.0, f"Analysis took {elapsed:.2f}s, expected < 1s"


@pytest.mark.slow
def test_scalar_entropy_law():
    """Estimated rate of the scalar (2, -1) system matches max(0, kappa_bar)."""
    config = EstimationConfig(horizons=(4.0, 8.0, 12.0, 16.0), epsilons=(0.5, 0.25))
    start_time = time.time()
    result = entropy_rate(scalar_system((2.0, -1.0)), config)
    elapsed = time.time() - start_time

    assert abs(result.rate - 0.5) <= 0.1
    assert elapsed < 10.0, f"Estimation took {elapsed:.2f}s, expected < 10s"


@pytest.mark.slow
def test_lti_entropy_from_estimator():
    """Estimated rates of LTI systems match the eigenvalue formula."""
    config = EstimationConfig()
    start_time = time.time()
    saddle = entropy_rate(lti_system(np.diag([1.0, -1.0])), config)
    jordan = entropy_rate(lti_system(np.array([[1.0, 1.0], [0.0, 1.0]])), config)
    elapsed = time.time() - start_time

    assert abs(saddle.rate - 1.0) <= 0.1
    assert abs(jordan.rate - 2.0) <= 0.2
    assert elapsed < 30.0, f"Estimation took {elapsed:.2f}s, expected < 30s"


@pytest.mark.slow
def test_volume_identity():
    """det Phi(T) = exp(sum tr(A_i) tau_i(T)) for random non-commuting systems."""
    rng = np.random.default_rng(7)
    start_time = time.time()
    for _ in range(20):
        modes = ModeSet(tuple(rng.uniform(-1.0, 1.0, size=(2, 2)) for _ in range(2)))
        system = SwitchedSystem(modes, random_signal(rng))
        for T in (1.0, 5.0, 10.0):
            formula, determinant = volume_growth(system, T)
            assert abs(determinant - formula) <= 1e-9 * formula
    elapsed = time.time() - start_time

    assert elapsed < 5.0, f"Volume checks took {elapsed:.2f}s, expected < 5s"


@pytest.mark.slow
def test_classifier_trials():
    """Structured and unstructured mode sets are never misclassified."""
    rng = np.random.default_rng(99)
    start_time = time.time()
    assert classify(ModeSet((E12, E21))).classification is Classification.UNSTRUCTURED

    for trial in range(50):
        diagonal = ModeSet(tuple(np.diag(rng.uniform(-2.0, 2.0, size=2)) for _ in range(2)))
        assert classify(diagonal).classification is Classification.COMMUTING_DIAGONALIZABLE

        n = 2 if trial % 2 == 0 else 3
        triangular = ModeSet(tuple(np.triu(rng.uniform(-1.0, 1.0, size=(n, n))) for _ in range(2)))
        report = classify(triangular)
        assert report.classification is Classification.SOLVABLE
        assert report.residual <= 1e-8 * triangular.scale

        q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        rotated = ModeSet(tuple(q @ a @ q.T for a in triangular.matrices))
        report = classify(rotated)
        assert report.classification is Classification.SOLVABLE
        assert report.residual <= 1e-8 * rotated.scale

    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    defective = ModeSet(
        (
            q @ np.array([[1.0, 2.0, 0.5], [0.0, 1.0, -1.0], [0.0, 0.0, 1.0]]) @ q.T,
            q @ np.array([[0.5, 0.3, 0.2], [0.0, 0.5, 0.7], [0.0, 0.0, -1.0]]) @ q.T,
        )
    )
    assert classify(defective).classification is Classification.SOLVABLE
    elapsed = time.time() - start_time

    assert elapsed < 5.0, f"Classification took {elapsed:.2f}s, expected < 5s"


@pytest.mark.slow
def test_triangular_upper_bound_holds(triangular_runs):
    """Estimated rates never exceed the triangular bound by more than 0.15."""
    for run in triangular_runs:
        assert run["structure"].classification is Classification.SOLVABLE
        assert run["check"].verdict is Verdict.PASS
        assert run["rate"] <= run["upper"] + 0.15


@pytest.mark.slow
def test_trace_lower_bound_holds(triangular_runs):
    """Estimated rates never fall below the clamped trace bound by more than 0.15."""
    for run in triangular_runs:
        assert run["rate"] >= max(0.0, run["trace"]) - 0.15


@pytest.mark.slow
def test_rotated_triangular_bounds():
    """Rotating a triangular system leaves its trace and triangular bounds unchanged."""
    rng = np.random.default_rng(2025)
    for _ in range(10):
        system = triangular_system(rng)
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        modes = ModeSet(tuple(q @ a @ q.T for a in system.modes.matrices))
        rotated = SwitchedSystem(modes, system.signal)
        fractions = system.signal.period_activation / system.signal.period
        bounds = []
        for candidate in (system, rotated):
            structure = classify(candidate.modes)
            assert structure.classification is Classification.SOLVABLE
            upper = triangular_upper_bound(candidate, structure, fractions, Verdict.PASS).upper
            bounds.append((upper, trace_lower_bound(candidate, fractions)))
        assert bounds[1] == pytest.approx(bounds[0], abs=1e-8)


@pytest.mark.slow
@pytest.mark.parametrize("size", [2, 3])
@pytest.mark.parametrize("eigenvalue", [-1.0, 0.0, 1.0])
@pytest.mark.parametrize("delta", [0.1, 0.5])
def test_jordan_norm_bound(size, eigenvalue, delta):
    """||e^{At}|| <= e^{(Re lambda + delta) t} at every sample past the crossover."""
    block = eigenvalue * np.eye(size) + np.eye(size, k=1)
    crossover = jordan_crossover(block, delta, t_max=100.0)
    assert crossover is not None

    for t in np.linspace(0.0, 100.0, 1001):
        if t > crossover:
            norm = np.linalg.norm(_expm(block, float(t)), 2)
            assert norm <= math.exp((eigenvalue + delta) * t) * (1 + 1e-12)


@pytest.mark.slow
def test_spanning_separated_sandwich():
    """separated(2 eps) <= spanning(eps) <= 4 separated(eps) on diagonal systems."""
    rng = np.random.default_rng(5)
    config = EstimationConfig()
    eps = 0.25
    for _ in range(10):
        modes = ModeSet(tuple(np.diag(rng.uniform(-1.0, 1.0, size=2)) for _ in range(2)))
        system = SwitchedSystem(modes, random_signal(rng))
        T = 4.0
        spanning = spanning_count(system, T, eps, config)
        assert separated_count(system, T, 2 * eps, config) <= spanning
        assert spanning <= 4 * separated_count(system, T, eps, config)


@pytest.mark.slow
def test_estimate_is_deterministic(system_1, tmp_path):
    """Two estimate runs on the same configuration write identical files."""
    estimation = {"horizons": [4.0, 8.0, 12.0], "epsilons": [0.5, 0.25]}
    config = write_config(tmp_path / "system.json", system_config(system_1, estimation=estimation))
    runner = CliRunner()
    for name in ("first", "second"):
        result = runner.invoke(
            cli, ["estimate", "--config", str(config), "--out", str(tmp_path / name)]
        )
        assert result.exit_code == 0

    for report in ("counts.csv", "estimate.json"):
        first = (tmp_path / "first" / report).read_bytes()
        assert first == (tmp_path / "second" / report).read_bytes()
