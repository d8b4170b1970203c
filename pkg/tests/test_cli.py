"""Tests for CLI functionality."""

import csv
import json
import math
from unittest.mock import patch

import numpy as np
from click.testing import CliRunner
from conftest import system_config, write_config

from switched_entropy.cli import cli
from switched_entropy.estimator import EstimationResult, Method
from switched_entropy.systems import lti_system, scalar_system

ESTIMATION = {"horizons": [2.0, 4.0, 6.0], "epsilons": [0.5, 0.25], "grid_resolution": 32}


def test_version():
    """Test --version prints the package version."""
    result = CliRunner().invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "0.1.0" in result.output


class TestAnalyzeCommand:
    """Tests for the analyze command."""

    def test_reference_system(self, config_file, tmp_path):
        """Test analyze on the exact reference system."""
        out = tmp_path / "out"
        result = CliRunner().invoke(
            cli, ["analyze", "--config", str(config_file), "--out", str(out)]
        )

        assert result.exit_code == 0
        assert "exact h = 2" in result.output
        report = json.loads((out / "bounds.json").read_text())
        assert report["exact"] is True
        assert report["rules"] == ["trace-lower", "diag-lower", "diag-upper"]

    def test_zero_tolerance_flag(self, config_file, tmp_path):
        """Test that an explicit --tol-rank 0 is a configuration error."""
        result = CliRunner().invoke(
            cli,
            ["analyze", "--config", str(config_file), "--out", str(tmp_path), "--tol-rank", "0"],
        )

        assert result.exit_code == 2
        assert "tol_rank" in result.output

    def test_unstructured_system(self, sl2_system, tmp_path):
        """Test analyze reports no upper bound for sl(2) generators."""
        config = write_config(tmp_path / "sl2.json", system_config(sl2_system))
        result = CliRunner().invoke(
            cli, ["analyze", "--config", str(config), "--out", str(tmp_path / "out")]
        )

        assert result.exit_code == 0
        assert "unstructured; lower ≥ 0 (trace); no upper bound" in result.output

    def test_single_mode(self, tmp_path):
        """Test analyze on a single Jordan block."""
        system = lti_system(np.array([[1.0, 1.0], [0.0, 1.0]]))
        config = write_config(tmp_path / "lti.json", system_config(system))
        result = CliRunner().invoke(
            cli, ["analyze", "--config", str(config), "--out", str(tmp_path / "out")]
        )

        assert result.exit_code == 0
        assert "LTI: h = Σ max(0,Re λ) = 2" in result.output

    def test_second_reference_system(self, system_2, tmp_path):
        """Test analyze prints the two-sided bound."""
        config = write_config(tmp_path / "s2.json", system_config(system_2))
        result = CliRunner().invoke(
            cli, ["analyze", "--config", str(config), "--out", str(tmp_path / "out")]
        )

        assert result.exit_code == 0
        assert "1 ≤ h ≤ 1.5" in result.output

    def test_dimension_mismatch(self, tmp_path):
        """Test that modes of unequal size exit 2 citing the JSON path."""
        data = {
            "modes": [[[1.0, 0.0], [0.0, 1.0]], [[1.0]]],
            "signal": {"k": 2, "repeat": "periodic", "segments": [[1, 1.0], [2, 1.0]]},
        }
        config = write_config(tmp_path / "bad.json", data)
        result = CliRunner().invoke(cli, ["analyze", "--config", str(config)])

        assert result.exit_code == 2
        assert "modes[1]" in result.output

    def test_empty_segments(self, system_1, tmp_path):
        """Test that an empty segment list exits 2."""
        data = system_config(system_1)
        data["signal"]["segments"] = []
        config = write_config(tmp_path / "bad.json", data)
        result = CliRunner().invoke(cli, ["analyze", "--config", str(config)])

        assert result.exit_code == 2
        assert "signal.segments" in result.output

    def test_missing_config(self, tmp_path):
        """Test that an unreadable config exits 1."""
        result = CliRunner().invoke(cli, ["analyze", "--config", str(tmp_path / "missing.json")])
        assert result.exit_code == 1

    def test_invalid_json(self, tmp_path):
        """Test that malformed JSON exits 2."""
        config = tmp_path / "broken.json"
        config.write_text("{not json")
        result = CliRunner().invoke(cli, ["analyze", "--config", str(config)])
        assert result.exit_code == 2


class TestEstimateCommand:
    """Tests for the estimate command."""

    def test_scalar_estimate(self, tmp_path):
        """Test estimate writes counts and a rate within the bounds."""
        system = scalar_system((1.0,))
        config = write_config(tmp_path / "s.json", system_config(system, estimation=ESTIMATION))
        out = tmp_path / "out"
        result = CliRunner().invoke(cli, ["estimate", "--config", str(config), "--out", str(out)])

        assert result.exit_code == 0
        with (out / "counts.csv").open(newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["T", "eps", "count", "log_count_over_T"]
        assert len(rows) == 7
        summary = json.loads((out / "estimate.json").read_text())
        assert summary["within_bounds"] is True
        assert abs(summary["rate"] - 1.0) <= 0.15

    def test_deterministic_outputs(self, system_2, tmp_path):
        """Test that identical runs write byte-identical reports."""
        config = write_config(tmp_path / "s.json", system_config(system_2, estimation=ESTIMATION))
        runner = CliRunner()
        for name in ("a", "b"):
            result = runner.invoke(
                cli, ["estimate", "--config", str(config), "--out", str(tmp_path / name)]
            )
            assert result.exit_code == 0

        for report in ("counts.csv", "estimate.json"):
            assert (tmp_path / "a" / report).read_bytes() == (tmp_path / "b" / report).read_bytes()

    def test_requires_estimation_block(self, config_file):
        """Test that estimate without an estimation block exits 2."""
        result = CliRunner().invoke(cli, ["estimate", "--config", str(config_file)])
        assert result.exit_code == 2

    def test_dimension_cap(self, tmp_path):
        """Test that n > 3 exits 2."""
        config = write_config(
            tmp_path / "big.json", system_config(lti_system(np.eye(4)), estimation=ESTIMATION)
        )
        result = CliRunner().invoke(
            cli, ["estimate", "--config", str(config), "--out", str(tmp_path / "out")]
        )
        assert result.exit_code == 2

    def test_unknown_estimation_field(self, system_1, tmp_path):
        """Test that unknown estimation fields are rejected with their path."""
        data = system_config(system_1, estimation={**ESTIMATION, "grid": 10})
        config = write_config(tmp_path / "bad.json", data)
        result = CliRunner().invoke(cli, ["estimate", "--config", str(config)])
        assert result.exit_code == 2
        assert "estimation.grid" in result.output

    def test_bound_violation(self, config_file, tmp_path):
        """Test that a rate far outside the bounds exits 4."""
        fake = EstimationResult(
            counts={(2.0, 0.5): 3, (2.0, 0.25): 5},
            rates={0.5: 10.0, 0.25: 10.0},
            rate=10.0,
            method=Method.SPANNING_GREEDY,
        )
        data = json.loads(config_file.read_text())
        data["estimation"] = ESTIMATION
        write_config(config_file, data)

        with patch("switched_entropy.cli.entropy_rate", return_value=fake):
            result = CliRunner().invoke(
                cli, ["estimate", "--config", str(config_file), "--out", str(tmp_path / "out")]
            )

        assert result.exit_code == 4
        summary = json.loads((tmp_path / "out" / "estimate.json").read_text())
        assert summary["within_bounds"] is False


class TestFlowCommand:
    """Tests for the flow command."""

    def test_trajectory(self, system_1, tmp_path):
        """Test flow writes the trajectory and checks the volume identity."""
        data = system_config(system_1, flow={"x0": [1.0, 1.0], "times": [0.0, 1.0, 2.0]})
        config = write_config(tmp_path / "flow.json", data)
        out = tmp_path / "out"
        result = CliRunner().invoke(cli, ["flow", "--config", str(config), "--out", str(out)])

        assert result.exit_code == 0
        with (out / "trajectory.csv").open(newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["t", "x1", "x2"]
        assert len(rows) == 4
        assert math.isclose(float(rows[3][1]), math.e**4, rel_tol=1e-12)
        assert math.isclose(float(rows[3][2]), math.e**-1, rel_tol=1e-12)

    def test_default_times(self, system_1, tmp_path):
        """Test that a flow block without times samples up to its horizon."""
        data = system_config(system_1, flow={"x0": [1.0, 0.0], "horizon": 3.0})
        config = write_config(tmp_path / "flow.json", data)
        out = tmp_path / "out"
        result = CliRunner().invoke(cli, ["flow", "--config", str(config), "--out", str(out)])

        assert result.exit_code == 0
        assert len((out / "trajectory.csv").read_text().splitlines()) == 102

    def test_requires_flow_block(self, config_file):
        """Test that flow without x0 exits 2."""
        result = CliRunner().invoke(cli, ["flow", "--config", str(config_file)])
        assert result.exit_code == 2


class TestReproduceExample:
    """Tests for the reproduce-example command."""

    def test_reproduces(self, tmp_path):
        """Test the built-in reference systems reproduce."""
        out = tmp_path / "out"
        result = CliRunner().invoke(cli, ["reproduce-example", "--out", str(out)])

        assert result.exit_code == 0
        assert "reproduced" in result.output
        report = json.loads((out / "reproduction.json").read_text())
        assert report["failures"] == []
        assert report["systems"]["system_1"]["individual_entropies"] == [2.0, 2.0]

    def test_perturbed_system_fails(self, tmp_path):
        """Test that a perturbed reference system exits 5."""
        result = CliRunner().invoke(
            cli, ["reproduce-example", "--out", str(tmp_path / "out"), "--perturb", "0.5"]
        )
        assert result.exit_code == 5

    def test_unwritable_output(self, tmp_path):
        """Test that an output path blocked by a file exits 1."""
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        result = CliRunner().invoke(cli, ["reproduce-example", "--out", str(blocker)])
        assert result.exit_code == 1
