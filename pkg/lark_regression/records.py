"""
Reading and writing run artifacts: JSON-lines draws, CSV tables and JSON
reports. Every writer is deterministic for identical inputs.
"""
import json
import logging
import os
import re
from typing import Iterable, List

import numpy as np
import pandas as pd

from .mcmc import Dataset
from .prior import LarkState


class DataFormatError(ValueError):
    """
    Raised for malformed input tables.

    Attributes:
        line (int, optional): 1-based line number of the offending row (the header is line 1).
    """

    def __init__(self, message: str, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def ensure_directory(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_draws(path: str, draws: Iterable[LarkState]) -> int:
    """One LarkState per line as a JSON object with sorted keys; returns the count."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for state in draws:
            handle.write(json.dumps(state.to_record(), sort_keys=True) + "\n")
            count += 1
    logging.info(f"\twrote {count} draws to {path}")
    return count


def read_draws(path: str) -> List[LarkState]:
    states = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                states.append(LarkState.from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataFormatError(f"not a draw record ({exc})", number) from None
    return states


def _plain(value):
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return [_plain(item) for item in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(_plain(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_table(path: str, frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


_LINE_IN_MESSAGE = re.compile(r"line (\d+)")


def read_table(path: str, columns: Iterable[str]) -> pd.DataFrame:
    """
    Read a comma-separated, header-first UTF-8 table and check numeric columns.

    Raises:
        DataFormatError: For unreadable rows, missing columns, non-numeric
            values or an empty table, with the line number where known.
    """
    columns = list(columns)
    try:
        frame = pd.read_csv(path, sep=",", encoding="utf-8", skip_blank_lines=True, dtype=str)
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"{path} is empty", 1) from None
    except pd.errors.ParserError as exc:
        found = _LINE_IN_MESSAGE.search(str(exc))
        raise DataFormatError(f"{path}: {exc}", int(found.group(1)) if found else None) from None
    except (OSError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from None
    frame.columns = [str(name).strip() for name in frame.columns]
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise DataFormatError(f"{path} has no column(s) {', '.join(missing)}", 1)
    if frame.empty:
        raise DataFormatError(f"{path} has a header but no data rows", 2)
    numeric = pd.DataFrame(index=frame.index)
    for name in columns:
        values = pd.to_numeric(frame[name].str.strip(), errors="coerce")
        bad = values.isna() | ~np.isfinite(values.fillna(0.0))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataFormatError(f"column '{name}' holds {frame[name].iloc[row]!r}, not a number", row + 2)
        numeric[name] = values.astype(float)
    return numeric


def read_dataset(path: str, x_column: str = "x", y_column: str = "y") -> Dataset:
    """Observations from a CSV with numeric x and y columns."""
    frame = read_table(path, [x_column, y_column])
    try:
        return Dataset(frame[x_column].to_numpy(), frame[y_column].to_numpy())
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def realizations_frame(realizations: Iterable[tuple]) -> pd.DataFrame:
    """Long table (realization, x, f) from (index, grid, values) triples."""
    pieces = [pd.DataFrame({"realization": index, "x": grid, "f": values})
              for index, grid, values in realizations]
    if not pieces:
        return pd.DataFrame(columns=["realization", "x", "f"])
    return pd.concat(pieces, ignore_index=True)
