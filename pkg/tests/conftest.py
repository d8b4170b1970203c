"""Test fixtures and utilities."""

import json
from pathlib import Path

import numpy as np
import pytest

from switched_entropy.flow import SwitchedSystem
from switched_entropy.lie import ModeSet
from switched_entropy.signals import Repeat, SwitchingSignal
from switched_entropy.systems import (
    alternating_signal,
    example_system_1,
    example_system_2,
    scalar_system,
)

E12 = np.array([[0.0, 1.0], [0.0, 0.0]])
E21 = np.array([[0.0, 0.0], [1.0, 0.0]])


def write_config(path: Path, data: dict) -> Path:
    """
    Write a run configuration as JSON.

    Args:
        path: Destination file
        data: Configuration dictionary

    Returns:
        The written path
    """
    path.write_text(json.dumps(data))
    return path


def system_config(system: SwitchedSystem, **blocks) -> dict:
    """Configuration dictionary for a switched system plus optional blocks."""
    data = {
        "modes": [m.tolist() for m in system.modes.matrices],
        "signal": system.signal.to_dict(),
    }
    data.update(blocks)
    return data


@pytest.fixture
def alternating():
    """Two modes, one second each, repeating."""
    return alternating_signal()


@pytest.fixture
def truncated_signal():
    """Mode 1 for 3 s then mode 2 for 1 s, ending at t=4."""
    return SwitchingSignal(((1, 3.0), (2, 1.0)), k=2, repeat=Repeat.TRUNCATED)


@pytest.fixture
def system_1():
    """diag(2, 0) and diag(2, -1), alternating."""
    return example_system_1()


@pytest.fixture
def system_2():
    """diag(2, 0) and diag(-1, 2), alternating."""
    return example_system_2()


@pytest.fixture
def scalar_2_minus_1():
    """Scalar rates 2 and -1, alternating."""
    return scalar_system((2.0, -1.0))


@pytest.fixture
def sl2_system():
    """E12 and E21, generating sl(2)."""
    return SwitchedSystem(ModeSet((E12, E21)), alternating_signal())


@pytest.fixture
def triangular_pair():
    """Upper-triangular, non-commuting pair with kappa_bar (1, -2)."""
    modes = ModeSet((np.array([[1.0, 1.0], [0.0, -2.0]]), np.array([[1.0, 0.0], [0.0, -2.0]])))
    return SwitchedSystem(modes, alternating_signal())


@pytest.fixture
def config_file(tmp_path, system_1):
    """Configuration file for the first reference system."""
    return write_config(tmp_path / "system.json", system_config(system_1))
