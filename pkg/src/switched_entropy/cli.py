"""Command-line interface for switched-entropy."""

import dataclasses
import json
import logging
import math
import os
import sys
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from switched_entropy import __version__
from switched_entropy.bounds import (
    DEFAULT_HORIZON,
    BoundReport,
    analyze,
    individual_entropies,
)
from switched_entropy.errors import (
    ConfigError,
    DimensionMismatchError,
    EstimationConfigError,
    OutputError,
    SwitchedEntropyError,
)
from switched_entropy.estimator import EstimationConfig, EstimationResult, entropy_rate
from switched_entropy.flow import SwitchedSystem, solve, volume_growth
from switched_entropy.io_utils import ensure_dir, write_csv, write_json
from switched_entropy.lie import DEFAULT_CLASSIFY_TOL, DEFAULT_RANK_TOL, ModeSet
from switched_entropy.signals import SwitchingSignal
from switched_entropy.systems import (
    EXPECTED_BOUNDS,
    EXPECTED_INDIVIDUAL,
    example_system_1,
    example_system_2,
)

logger = logging.getLogger(__name__)

EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_BOUND_VIOLATION = 4
EXIT_REPRODUCTION = 5

BOUND_SLACK = 0.15
VOLUME_TOL = 1e-9
DEFAULT_FLOW_SAMPLES = 101


class BoundViolation(Exception):
    """Estimated rate outside the analytic bounds."""


class ReproductionFailure(Exception):
    """Built-in reference check did not reproduce."""


def setup_logging(verbose: bool = False) -> None:
    """
    Configure logging.

    Args:
        verbose: If True, set DEBUG level; otherwise use LOG_LEVEL env var
    """
    log_level = os.getenv("LOG_LEVEL", "INFO").upper()
    if verbose:
        log_level = "DEBUG"

    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


@dataclass(frozen=True)
class RunConfig:
    """
    Parsed contents of a system configuration file.

    Attributes:
        path: File the configuration was read from
        system: Modes and switching signal
        horizon: Analysis horizon from the "analysis" block, if given
        tail_fraction: Tail window start from the "analysis" block, if given
        estimation: Estimation parameters from the "estimation" block, if given
        x0: Initial state from the "flow" block, if given
        times: Sample times from the "flow" block, if given
    """

    path: Path
    system: SwitchedSystem
    horizon: float | None = None
    tail_fraction: float | None = None
    estimation: EstimationConfig | None = None
    x0: tuple[float, ...] | None = None
    times: tuple[float, ...] | None = None


def _number(value: object, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    return float(value)


def _numbers(value: object, path: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty list of numbers")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _parse_modes(data: object) -> ModeSet:
    if not isinstance(data, list) or not data:
        raise ConfigError("modes", "expected a non-empty list of square matrices")
    matrices = []
    for i, mode in enumerate(data):
        path = f"modes[{i}]"
        if not isinstance(mode, list) or not mode:
            raise ConfigError(path, "expected a list of rows")
        rows = [_numbers(row, f"{path}[{r}]") for r, row in enumerate(mode)]
        if any(len(row) != len(rows) for row in rows):
            raise ConfigError(path, f"matrix is not square ({len(rows)} rows)")
        if matrices and len(rows) != matrices[0].shape[0]:
            raise ConfigError(
                path, f"dimension {len(rows)} differs from modes[0] ({matrices[0].shape[0]})"
            )
        matrices.append(np.array(rows))
    return ModeSet(tuple(matrices))


def _parse_signal(data: object, k: int) -> SwitchingSignal:
    if not isinstance(data, dict):
        raise ConfigError("signal", "expected an object")
    if "k" in data and data["k"] != k:
        raise ConfigError("signal.k", f"signal has k={data['k']} but {k} modes are given")
    segments = data.get("segments")
    if not isinstance(segments, list) or not segments:
        raise ConfigError("signal.segments", "expected a non-empty list of [mode, duration]")
    parsed = []
    for i, segment in enumerate(segments):
        path = f"signal.segments[{i}]"
        if not isinstance(segment, list) or len(segment) != 2:
            raise ConfigError(path, "expected [mode, duration]")
        mode = segment[0]
        if isinstance(mode, bool) or not isinstance(mode, int):
            raise ConfigError(f"{path}[0]", f"expected an integer mode, got {mode!r}")
        parsed.append((mode, _number(segment[1], f"{path}[1]")))
    try:
        return SwitchingSignal(tuple(parsed), k=k, repeat=data.get("repeat", "periodic"))
    except ValueError as e:
        raise ConfigError("signal.repeat", str(e)) from e
    except SwitchedEntropyError as e:
        raise ConfigError("signal.segments", str(e)) from e


def _parse_estimation(data: object) -> EstimationConfig:
    if not isinstance(data, dict):
        raise ConfigError("estimation", "expected an object")
    known = {f.name for f in dataclasses.fields(EstimationConfig)} - {"threads"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"estimation.{unknown[0]}", "unknown field")
    fields = dict(data)
    for name in ("horizons", "epsilons"):
        if name in fields:
            fields[name] = tuple(_numbers(fields[name], f"estimation.{name}"))
    try:
        return EstimationConfig(**fields)
    except (EstimationConfigError, TypeError) as e:
        raise ConfigError("estimation", str(e)) from e


def parse_config(path: Path) -> RunConfig:
    """
    Read and validate a JSON system configuration.

    Args:
        path: Configuration file

    Returns:
        RunConfig with the switched system and optional blocks

    Raises:
        OutputError: If the file cannot be read
        ConfigError: If the file violates the schema, citing the JSON path

    Example:
        {"modes": [[[2, 0], [0, 0]], [[2, 0], [0, -1]]],
         "signal": {"k": 2, "repeat": "periodic", "segments": [[1, 1.0], [2, 1.0]]}}
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OutputError(f"Cannot read configuration {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("$", f"invalid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("$", "expected an object")

    modes = _parse_modes(data.get("modes"))
    signal = _parse_signal(data.get("signal"), modes.k)
    try:
        system = SwitchedSystem(modes, signal)
    except DimensionMismatchError as e:
        raise ConfigError("signal.k", str(e)) from e

    horizon = tail_fraction = None
    analysis = data.get("analysis", {})
    if not isinstance(analysis, dict):
        raise ConfigError("analysis", "expected an object")
    if "horizon" in analysis:
        horizon = _number(analysis["horizon"], "analysis.horizon")
        if horizon <= 0:
            raise ConfigError("analysis.horizon", "must be positive")
    if "tail_fraction" in analysis:
        tail_fraction = _number(analysis["tail_fraction"], "analysis.tail_fraction")
        if not 0 < tail_fraction < 1:
            raise ConfigError("analysis.tail_fraction", "must be in (0, 1)")

    estimation = _parse_estimation(data["estimation"]) if "estimation" in data else None

    x0 = times = None
    if "flow" in data:
        flow = data["flow"]
        if not isinstance(flow, dict):
            raise ConfigError("flow", "expected an object")
        x0 = tuple(_numbers(flow.get("x0"), "flow.x0"))
        if len(x0) != modes.n:
            raise ConfigError("flow.x0", f"expected {modes.n} entries, got {len(x0)}")
        if "times" in flow:
            times = tuple(_numbers(flow["times"], "flow.times"))
            if any(b < a for a, b in zip(times, times[1:], strict=False)) or times[0] < 0:
                raise ConfigError("flow.times", "expected non-negative increasing times")
        else:
            end = _number(flow.get("horizon", 10.0), "flow.horizon")
            times = tuple(float(t) for t in np.linspace(0.0, end, DEFAULT_FLOW_SAMPLES))

    logger.debug(f"Parsed {path}: n={modes.n}, k={modes.k}, {len(signal.segments)} segments")
    return RunConfig(
        path=path,
        system=system,
        horizon=horizon,
        tail_fraction=tail_fraction,
        estimation=estimation,
        x0=x0,
        times=times,
    )


def _env_number(name: str, default: float) -> float:
    value = os.getenv(name)
    if value is None or value == "":
        return default
    try:
        return float(value)
    except ValueError as e:
        raise ConfigError(f"env.{name}", f"expected a number, got {value!r}") from e


def load_run_config(
    tol_rank: float | None,
    tol_classify: float | None,
    tail_fraction: float | None,
    horizon: float | None,
    run: RunConfig | None = None,
) -> dict:
    """
    Resolve tolerances and horizons: CLI flag, then config file, then environment.

    Args:
        tol_rank: CLI rank tolerance override (or None)
        tol_classify: CLI classification tolerance override (or None)
        tail_fraction: CLI tail fraction override (or None)
        horizon: CLI analysis horizon override (or None)
        run: Parsed configuration file, for its "analysis" block

    Returns:
        Dictionary with all configuration values

    Raises:
        ConfigError: If a resolved value is out of range or an environment
            value is not a number
    """
    if tail_fraction is None and run is not None:
        tail_fraction = run.tail_fraction
    if horizon is None and run is not None:
        horizon = run.horizon

    threads = int(_env_number("SWENT_THREADS", 0))
    if threads < 0:
        raise ConfigError("env.SWENT_THREADS", "must be non-negative")

    if tol_rank is None:
        tol_rank = _env_number("SWENT_TOL_RANK", DEFAULT_RANK_TOL)
    if tol_classify is None:
        tol_classify = _env_number("SWENT_TOL_CLASSIFY", DEFAULT_CLASSIFY_TOL)
    if tail_fraction is None:
        tail_fraction = _env_number("SWENT_TAIL_FRACTION", 0.5)
    if horizon is None:
        horizon = DEFAULT_HORIZON

    positive = {"tol_rank": tol_rank, "tol_classify": tol_classify, "horizon": horizon}
    for name, value in positive.items():
        if not value > 0:
            raise ConfigError(name, f"must be positive, got {value}")
    if not 0 < tail_fraction < 1:
        raise ConfigError("tail_fraction", f"must be in (0, 1), got {tail_fraction}")

    return {
        "tol_rank": tol_rank,
        "tol_classify": tol_classify,
        "tail_fraction": tail_fraction,
        "horizon": horizon,
        "threads": threads,
    }


def log_run_config(command: str, config_path: Path | None, out_dir: Path, config: dict) -> None:
    """
    Log the run configuration for user visibility.

    Args:
        command: Subcommand name
        config_path: System configuration file, if any
        out_dir: Output directory
        config: Configuration dictionary from load_run_config
    """
    logger.info("=== Switched Entropy Configuration ===")
    logger.info(f"Command: {command}")
    logger.info(f"System config: {config_path or 'built-in'}")
    logger.info(f"Output directory: {out_dir}")
    logger.info(f"Rank tolerance: {config['tol_rank']}")
    logger.info(f"Classification tolerance: {config['tol_classify']}")
    logger.info(f"Tail fraction: {config['tail_fraction']}")
    logger.info(f"Analysis horizon: {config['horizon']}s")
    logger.info(f"Estimator threads: {config['threads'] or 'auto'}")
    logger.info("=" * 38)


@contextmanager
def exit_codes() -> Iterator[None]:
    """Translate library exceptions into the documented exit codes."""
    try:
        yield
    except (ConfigError, EstimationConfigError) as e:
        click.echo(f"Configuration error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except OutputError as e:
        click.echo(f"I/O error: {e}", err=True)
        sys.exit(EXIT_IO)
    except BoundViolation as e:
        click.echo(f"Bound violation: {e}", err=True)
        sys.exit(EXIT_BOUND_VIOLATION)
    except ReproductionFailure as e:
        click.echo(f"Reproduction failed: {e}", err=True)
        sys.exit(EXIT_REPRODUCTION)
    except SwitchedEntropyError as e:
        click.echo(f"Numerical error: {e}", err=True)
        sys.exit(EXIT_NUMERICAL)
    except OSError as e:
        click.echo(f"I/O error: {e}", err=True)
        sys.exit(EXIT_IO)


def _fmt(value: float | None) -> str:
    return "none" if value is None else f"{value:.6g}"


def summarize_bounds(report: BoundReport) -> list[str]:
    """Human-readable summary lines for a BoundReport."""
    lines = [f"classification: {report.classification}"]
    if report.kappa_bars:
        table = ", ".join(f"k{i + 1}={b:.6g}" for i, b in enumerate(report.kappa_bars))
        lines.append(f"kappa_bar: {table}")
    lines.append(f"trace bound: {_fmt(report.trace_bound)}")

    if "lti" in report.rules:
        lines.append(f"LTI: h = Σ max(0,Re λ) = {_fmt(report.upper)}")
    elif report.exact:
        lines.append(f"exact h = {_fmt(report.upper)}")
    elif report.upper is None:
        lines.append(
            f"{report.classification}; lower ≥ {_fmt(report.lower)} (trace); no upper bound"
        )
    else:
        lines.append(f"{_fmt(report.lower)} ≤ h ≤ {_fmt(report.upper)}")

    lines.append(f"rules: {', '.join(report.rules)}")
    lines.extend(f"warning: {w}" for w in report.warnings)
    lines.extend(f"diagnostic: {d}" for d in report.diagnostics)
    return lines


def _analyze(system: SwitchedSystem, config: dict) -> BoundReport:
    return analyze(
        system,
        horizon=config["horizon"],
        tol=config["tol_classify"],
        rank_tol=config["tol_rank"],
        tail_start_fraction=config["tail_fraction"],
    )


def _estimate(
    system: SwitchedSystem, estimation: EstimationConfig, config: dict
) -> EstimationResult:
    estimation = dataclasses.replace(estimation, threads=config["threads"])
    return entropy_rate(system, estimation)


def check_rate(rate: float, report: BoundReport, slack: float = BOUND_SLACK) -> bool:
    """True unless both bounds exist and rate lies outside [lower - slack, upper + slack]."""
    if report.effective_lower is None or report.upper is None:
        return True
    return report.effective_lower - slack <= rate <= report.upper + slack


def write_estimate(out_dir: Path, result: EstimationResult, report: BoundReport) -> None:
    """Write counts.csv and estimate.json."""
    write_csv(out_dir / "counts.csv", ["T", "eps", "count", "log_count_over_T"], result.rows())
    summary = result.to_dict()
    summary["bounds"] = report.to_dict()
    summary["within_bounds"] = check_rate(result.rate, report)
    write_json(out_dir / "estimate.json", summary)


def common_options(func: Callable) -> Callable:
    """Options shared by the commands that read a system configuration."""
    func = click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")(func)
    func = click.option("--horizon", type=float, help="Analysis horizon in seconds")(func)
    func = click.option("--tail-fraction", type=float, help="Tail window start (default 0.5)")(func)
    func = click.option("--tol-classify", type=float, help="Classification tolerance (1e-8)")(func)
    func = click.option("--tol-rank", type=float, help="Rank tolerance (1e-9)")(func)
    func = click.option(
        "--out",
        "out_dir",
        type=click.Path(path_type=Path),
        default=Path("results"),
        show_default=True,
        help="Output directory",
    )(func)
    return func


@click.group()
@click.version_option(version=__version__)
def cli():
    """Switched Entropy - Topological entropy bounds and estimates for switched linear systems."""
    pass


@cli.command("analyze")
@click.option("--config", "config_path", required=True, type=click.Path(path_type=Path))
@common_options
def cmd_analyze(
    config_path: Path,
    out_dir: Path,
    tol_rank: float | None,
    tol_classify: float | None,
    tail_fraction: float | None,
    horizon: float | None,
    verbose: bool,
):
    """
    Classify the modes and report entropy bounds.

    Writes bounds.json to the output directory.
    """
    setup_logging(verbose)
    with exit_codes():
        run = parse_config(config_path)
        config = load_run_config(tol_rank, tol_classify, tail_fraction, horizon, run)
        log_run_config("analyze", config_path, out_dir, config)

        report = _analyze(run.system, config)
        ensure_dir(out_dir)
        write_json(out_dir / "bounds.json", report.to_dict())
        for line in summarize_bounds(report):
            click.echo(line)

        if report.diagnostics:
            click.echo("Numerical diagnostics present; report is partial", err=True)
            sys.exit(EXIT_NUMERICAL)


@cli.command("estimate")
@click.option("--config", "config_path", required=True, type=click.Path(path_type=Path))
@common_options
def cmd_estimate(
    config_path: Path,
    out_dir: Path,
    tol_rank: float | None,
    tol_classify: float | None,
    tail_fraction: float | None,
    horizon: float | None,
    verbose: bool,
):
    """
    Estimate the entropy from spanning or separated set counts.

    Writes counts.csv and estimate.json; exits 4 when the rate falls outside
    the analytic bounds by more than 0.15.
    """
    setup_logging(verbose)
    with exit_codes():
        run = parse_config(config_path)
        if run.estimation is None:
            raise ConfigError("estimation", "block is required for estimate")
        config = load_run_config(tol_rank, tol_classify, tail_fraction, horizon, run)
        log_run_config("estimate", config_path, out_dir, config)

        report = _analyze(run.system, config)
        result = _estimate(run.system, run.estimation, config)
        ensure_dir(out_dir)
        write_estimate(out_dir, result, report)

        click.echo(f"{'eps':>10} {'rate':>10}")
        for eps, slope in result.rates.items():
            click.echo(f"{eps:>10.4g} {slope:>10.4f}")
        bounds = f"[{_fmt(report.effective_lower)}, {_fmt(report.upper)}]"
        click.echo(f"rate = {result.rate:.4f}; bounds {bounds}")

        if not check_rate(result.rate, report):
            raise BoundViolation(
                f"rate {result.rate:.4f} outside [{_fmt(report.effective_lower)} - {BOUND_SLACK}, "
                f"{_fmt(report.upper)} + {BOUND_SLACK}]"
            )


@cli.command("flow")
@click.option("--config", "config_path", required=True, type=click.Path(path_type=Path))
@click.option(
    "--out",
    "out_dir",
    type=click.Path(path_type=Path),
    default=Path("results"),
    show_default=True,
    help="Output directory",
)
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
def cmd_flow(config_path: Path, out_dir: Path, verbose: bool):
    """
    Integrate the system from the configured initial state.

    Writes trajectory.csv and checks the volume identity at the final time.
    """
    setup_logging(verbose)
    with exit_codes():
        run = parse_config(config_path)
        if run.x0 is None or run.times is None:
            raise ConfigError("flow", "block with x0 is required for flow")

        trajectory = solve(run.system, run.x0, run.times)
        header = ["t", *(f"x{i + 1}" for i in range(run.system.n))]
        rows = [(t, *state) for t, state in zip(trajectory.times, trajectory.states, strict=True)]
        ensure_dir(out_dir)
        write_csv(out_dir / "trajectory.csv", header, rows)

        final = trajectory.times[-1]
        formula, determinant = volume_growth(run.system, final)
        error = abs(determinant - formula) / max(abs(formula), np.finfo(float).tiny)
        click.echo(f"volume at t={final:g}: formula {formula:.12g}, det {determinant:.12g}")
        click.echo(f"relative error {error:.3g}")
        if error > VOLUME_TOL:
            click.echo("Volume identity violated", err=True)
            sys.exit(EXIT_NUMERICAL)


def _reference_checks(perturb: float) -> tuple[dict, list[str]]:
    systems = {"system_1": example_system_1(perturb), "system_2": example_system_2()}
    estimation = EstimationConfig(
        horizons=(2.0, 4.0, 6.0), epsilons=(0.5, 0.25), grid_resolution=32
    )
    results: dict = {}
    failures: list[str] = []

    for name, system in systems.items():
        report = analyze(system)
        individual = individual_entropies(system.modes)
        result = entropy_rate(system, estimation)
        results[name] = {
            "bounds": report.to_dict(),
            "individual_entropies": individual,
            "estimated_rate": result.rate,
        }

        lower, upper = EXPECTED_BOUNDS[name]
        if report.lower is None or abs(report.lower - lower) > 1e-12:
            failures.append(f"{name}: lower bound {_fmt(report.lower)}, expected {lower}")
        if report.upper is None or abs(report.upper - upper) > 1e-12:
            failures.append(f"{name}: upper bound {_fmt(report.upper)}, expected {upper}")
        if not np.allclose(individual, EXPECTED_INDIVIDUAL[name], rtol=0, atol=1e-12):
            failures.append(
                f"{name}: individual entropies {individual}, expected {EXPECTED_INDIVIDUAL[name]}"
            )

    return results, failures


@cli.command("reproduce-example")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(path_type=Path),
    default=Path("results"),
    show_default=True,
    help="Output directory",
)
@click.option("--perturb", type=float, default=0.0, hidden=True)
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
def cmd_reproduce_example(out_dir: Path, perturb: float, verbose: bool):
    """
    Reproduce the two diagonal reference systems.

    Both systems switch between modes of LTI entropy 2, yet the first has
    entropy exactly 2 and the second lies in [1, 1.5].
    """
    setup_logging(verbose)
    with exit_codes():
        ensure_dir(out_dir)
        results, failures = _reference_checks(perturb)
        write_json(out_dir / "reproduction.json", {"systems": results, "failures": failures})

        click.echo(f"{'system':<10} {'h(A_i)':<12} {'lower':>8} {'upper':>8} {'rate':>8}")
        for name, entry in results.items():
            individual = ",".join(f"{h:g}" for h in entry["individual_entropies"])
            bounds = entry["bounds"]
            click.echo(
                f"{name:<10} {individual:<12} {_fmt(bounds['lower']):>8} "
                f"{_fmt(bounds['upper']):>8} {entry['estimated_rate']:>8.3f}"
            )

        if failures:
            raise ReproductionFailure("; ".join(failures))
        click.echo("equal individual entropies, different switched entropies: reproduced")


if __name__ == "__main__":
    cli()
