"""I/O utilities for output directories and atomic report writes."""

import csv
import io
import json
import logging
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path

from switched_entropy.errors import OutputError

logger = logging.getLogger(__name__)


def ensure_dir(path: Path) -> None:
    """
    Ensure directory exists, creating it if necessary.

    Args:
        path: Directory path to create

    Raises:
        OutputError: If the directory cannot be created
    """
    if path.is_dir():
        return
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"Cannot create output directory {path}: {e}") from e
    logger.debug(f"Created directory: {path}")


def format_number(value: float | int) -> str:
    """
    Render a number for CSV output with 17 significant digits.

    Example:
        >>> format_number(0.1)
        '0.10000000000000001'
    """
    if isinstance(value, int):
        return str(value)
    return f"{value:.17g}"


def write_atomic(path: Path, text: str) -> Path:
    """
    Write text through a temporary file in the target directory, then replace.

    Args:
        path: Final file path; its directory is created if missing
        text: File contents

    Returns:
        The written path

    Raises:
        OutputError: If the file cannot be written
    """
    ensure_dir(path.parent)
    tmp_path = None
    try:
        with tempfile.NamedTemporaryFile(
            mode="w", suffix=".tmp", delete=False, dir=path.parent, encoding="utf-8", newline=""
        ) as tmp_file:
            tmp_path = Path(tmp_file.name)
            tmp_file.write(text)
        tmp_path.replace(path)
    except OSError as e:
        if tmp_path and tmp_path.exists():
            tmp_path.unlink()
        raise OutputError(f"Failed to write {path}: {e}") from e

    logger.info(f"Wrote {path}")
    return path


def write_json(path: Path, data: dict) -> Path:
    """Write a JSON report with stable key order and a trailing newline."""
    return write_atomic(path, json.dumps(data, indent=2) + "\n")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[float | int]]) -> Path:
    """Write a CSV table, numbers rendered by format_number."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(v) for v in row])
    return write_atomic(path, buffer.getvalue())
