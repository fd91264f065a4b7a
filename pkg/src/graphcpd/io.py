"""CSV ingestion and emission for functional samples.

One row per observation in time order. Lines starting with ``#`` are
comments. An optional header line whose first field is ``grid`` carries
the grid points; without it the grid is uniform on [0, 1].
"""

from __future__ import annotations

import csv
import hashlib
import io
from pathlib import Path

import numpy as np

from .errors import DataFormatError, GraphCPDError
from .fdata import FunctionalSample, PriceSample, uniform_grid

GRID_TAG = "grid"


def _parse_rows(text: str):
    grid = None
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = next(csv.reader([stripped]))
        fields = [f.strip() for f in fields]
        if fields and fields[0].lower() == GRID_TAG:
            if grid is not None or rows:
                raise DataFormatError("grid header must precede all data rows", lineno)
            fields = fields[1:]
            target = "grid"
        else:
            target = "row"
        try:
            values = [float(f) for f in fields]
        except ValueError:
            bad = next(f for f in fields if not _is_float(f))
            raise DataFormatError(f"non-numeric value {bad!r}", lineno) from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DataFormatError(f"expected {width} values, found {len(values)}", lineno)
        if not np.all(np.isfinite(values)):
            raise DataFormatError("non-finite value", lineno)
        if target == "grid":
            grid = (np.array(values), lineno)
        else:
            rows.append(values)
    if len(rows) < 2:
        raise DataFormatError("need at least 2 data rows")
    return rows, grid


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _build(cls, rows, grid):
    data = np.array(rows, dtype=float)
    if grid is None:
        g = uniform_grid(data.shape[1])
    else:
        g, lineno = grid
        if g.size != data.shape[1]:
            raise DataFormatError(f"grid has {g.size} points but rows have {data.shape[1]}", lineno)
    try:
        return cls(data, g)
    except GraphCPDError as err:
        raise DataFormatError(str(err)) from err


def read_sample(path) -> FunctionalSample:
    rows, grid = _parse_rows(Path(path).read_text())
    return _build(FunctionalSample, rows, grid)


def read_prices(path) -> PriceSample:
    rows, grid = _parse_rows(Path(path).read_text())
    return _build(PriceSample, rows, grid)


def format_sample(sample, comment: str | None = None, values=None) -> str:
    """CSV text with a grid header; ``repr`` keeps every float bit-exact."""
    values = sample.curves if values is None else values
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    buf.write(",".join([GRID_TAG] + [repr(float(t)) for t in sample.grid]) + "\n")
    for row in values:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def write_sample(sample, path, comment: str | None = None) -> None:
    Path(path).write_text(format_sample(sample, comment))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
