"""Per-cell scalar fields and their plain-text dump format."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values over a grid, stored as a ``(rows, cols)`` array.

    Row 0 is the southern-most row (smallest y), matching the grid's
    cell indexing.
    """

    values: np.ndarray
    resolution: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"field must be 2-D, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __getitem__(self, cell: tuple[int, int]) -> float:
        col, row = cell
        return float(self.values[row, col])

    def same_shape(self, other: "ScalarField") -> bool:
        return self.values.shape == other.values.shape


def dump_field(field: ScalarField) -> str:
    """Serialize ``field`` as a row-major text matrix with a 2-line header."""
    out = io.StringIO()
    out.write(f"# dims {field.cols} {field.rows}\n")
    out.write(f"# resolution {field.resolution!r}\n")
    for row in field.values:
        out.write(" ".join(repr(float(v)) for v in row))
        out.write("\n")
    return out.getvalue()


def load_field(text: str) -> ScalarField:
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith("# dims") or not lines[1].startswith("# resolution"):
        raise ValueError("field dump must start with '# dims' and '# resolution' header lines")
    cols, rows = (int(tok) for tok in lines[0].split()[2:4])
    resolution = float(lines[1].split()[2])
    body = [ln for ln in lines[2:] if ln.strip()]
    if len(body) != rows:
        raise ValueError(f"expected {rows} rows, found {len(body)}")
    values = np.array([[float(tok) for tok in ln.split()] for ln in body], dtype=float)
    if values.shape != (rows, cols):
        raise ValueError(f"expected {rows}x{cols} values, found {values.shape}")
    return ScalarField(values, resolution)
