"""
Data file ingestion and re-emission.

Two-sample files carry the columns ``group,w,z`` with group Y or X; RDD
files carry ``w,z`` only. Row positions are kept as observation indices
because they drive tie-breaking in the induced order selection.
"""

import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
import structlog

from src.errors import DataFileError
from src.models import Sample

logger = structlog.get_logger(__name__)

GROUPS = ("Y", "X")

# Header is line 1
_FIRST_DATA_LINE = 2


@dataclass(frozen=True)
class DataFile:
    """Parsed contents of a data file."""

    path: Path
    ysample: Optional[Sample] = None
    xsample: Optional[Sample] = None
    sample: Optional[Sample] = None

    @property
    def is_rdd(self) -> bool:
        return self.sample is not None


def _to_float(raw: str) -> float:
    value = float(raw)
    if not np.isfinite(value):
        raise ValueError("not finite")
    return value


def _numeric_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    values = np.empty(len(frame))
    for row, raw in enumerate(frame[name].tolist()):
        text = raw.strip() if isinstance(raw, str) else ""
        if not text:
            raise DataFileError(f"missing {name} value", line=row + _FIRST_DATA_LINE)
        try:
            values[row] = _to_float(text)
        except ValueError:
            raise DataFileError(f"{name} value {text!r} is not a finite number", line=row + _FIRST_DATA_LINE)
    return values


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True, skip_blank_lines=False)
    except FileNotFoundError:
        raise DataFileError(f"data file not found: {path}")
    except UnicodeDecodeError as e:
        raise DataFileError(f"data file is not UTF-8 text: {path} ({e.reason})")
    except OSError as e:
        raise DataFileError(f"cannot read data file {path}: {e.strerror or e}")
    except pd.errors.EmptyDataError:
        raise DataFileError(f"data file is empty: {path}")
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise DataFileError(f"malformed row: {e}", line=int(match.group(1)) if match else None)
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    return frame


def parse_csv(path: Union[str, Path], rdd: bool = False) -> DataFile:
    """
    Parse and validate a data file.

    Args:
        path: CSV file with a header row
        rdd: Expect a single running-variable sample (no group column)

    Returns:
        DataFile with Y/X samples, or the pooled sample in RDD mode

    Raises:
        DataFileError: On missing columns, malformed rows (with line number) or an empty group
    """
    path = Path(path)
    frame = _read_frame(path)

    required = ["w", "z"] if rdd else ["group", "w", "z"]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise DataFileError(f"missing column(s) {', '.join(missing)} in header", line=1)
    if frame.empty:
        raise DataFileError("data file has no rows")

    w = _numeric_column(frame, "w")
    z = _numeric_column(frame, "z")
    index = np.arange(len(frame), dtype=np.int64)

    if rdd:
        if "group" in frame.columns:
            logger.warning("Group column ignored in RDD mode", path=str(path))
        logger.info("Data file parsed", path=str(path), rows=len(frame), mode="rdd")
        return DataFile(path=path, sample=Sample(w, z, index))

    groups = frame["group"].str.strip().str.upper().to_numpy()
    for row, group in enumerate(groups):
        if group not in GROUPS:
            raise DataFileError(f"group must be Y or X, got {group!r}", line=row + _FIRST_DATA_LINE)

    samples = {}
    for group in GROUPS:
        mask = groups == group
        if not mask.any():
            raise DataFileError(f"group {group} has no rows")
        samples[group] = Sample(w[mask], z[mask], index[mask])

    logger.info(
        "Data file parsed",
        path=str(path),
        rows=len(frame),
        n_y=len(samples["Y"]),
        n_x=len(samples["X"]),
    )
    return DataFile(path=path, ysample=samples["Y"], xsample=samples["X"])


def to_frame(data: DataFile) -> pd.DataFrame:
    """Rows in original file order."""
    if data.is_rdd:
        s = data.sample
        return pd.DataFrame({"w": s.w, "z": s.z}, index=s.index).sort_index()
    parts: List[pd.DataFrame] = []
    for group, s in (("Y", data.ysample), ("X", data.xsample)):
        parts.append(pd.DataFrame({"group": group, "w": s.w, "z": s.z}, index=s.index))
    return pd.concat(parts).sort_index()


def write_csv(data: DataFile, path: Union[str, Path]) -> Path:
    """
    Re-emit a parsed file with 17 significant digits, which parses back to the same floats.

    Args:
        data: Parsed data
        path: Output path

    Returns:
        Path written
    """
    path = Path(path)
    try:
        to_frame(data).to_csv(path, index=False, float_format="%.17g")
        logger.info("Data file written", path=str(path))
        return path
    except OSError as e:
        logger.error("Failed to write data file", path=str(path), error=str(e))
        raise
