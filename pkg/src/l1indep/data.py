"""Block structure, samples, and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Malformed input data (bad arity, non-numeric or non-finite field)."""


@dataclass(frozen=True)
class BlockSpec:
    """Dimensions ``d_1, ..., d_p`` of the vectors whose independence is tested.

    Coordinates are laid out contiguously: block ``l`` (1-based) occupies
    columns ``offsets[l-1]:offsets[l]`` of the concatenated vector.
    """

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(x) for x in self.dims)
        if len(dims) < 2:
            raise ValueError(f"need at least 2 blocks, got dims={list(dims)}")
        if any(x < 1 for x in dims):
            raise ValueError(f"block dimensions must be >= 1, got dims={list(dims)}")
        object.__setattr__(self, "dims", dims)

    @property
    def p(self) -> int:
        return len(self.dims)

    @property
    def d(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> tuple[int, ...]:
        out = [0]
        for x in self.dims:
            out.append(out[-1] + x)
        return tuple(out)

    def columns(self, l: int) -> slice:
        """Column slice of block ``l`` (1-based)."""
        if not 1 <= l <= self.p:
            raise IndexError(f"block index {l} out of range 1..{self.p}")
        off = self.offsets
        return slice(off[l - 1], off[l])

    def block_of_coordinate(self) -> np.ndarray:
        """0-based block id of every flat coordinate."""
        return np.repeat(np.arange(self.p), self.dims).astype(np.int64)

    @classmethod
    def parse(cls, text: str) -> "BlockSpec":
        """Parse ``"1,1"`` or ``"2,1,3"``."""
        try:
            dims = [int(x) for x in str(text).replace(" ", "").split(",") if x]
        except ValueError:
            raise ValueError(f"dims must be comma-separated integers, got {text!r}") from None
        return cls(tuple(dims))


@dataclass(frozen=True)
class Sample:
    """``n`` observations of the concatenated vector, laid out by ``spec``."""

    values: np.ndarray
    spec: BlockSpec

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if v.ndim == 1 and self.spec.d == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[1] != self.spec.d:
            raise DataError(
                f"values must be n x {self.spec.d} for dims={list(self.spec.dims)}, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            i, k = np.argwhere(~np.isfinite(v))[0]
            raise DataError(f"non-finite value at row {i + 1}, column {k + 1}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.spec.d

    def block(self, l: int) -> np.ndarray:
        return block_view(self, l)

    def take(self, rows) -> "Sample":
        return Sample(self.values[np.asarray(rows)], self.spec)

    def drop(self, j: int) -> "Sample":
        """Sample without row ``j`` (0-based)."""
        if not 0 <= j < self.n:
            raise IndexError(f"observation index {j} out of range 0..{self.n - 1}")
        return Sample(np.delete(self.values, j, axis=0), self.spec)


def block_view(sample: Sample, l: int) -> np.ndarray:
    """Columns of block ``l`` (1-based) as a read-only view."""
    return sample.values[:, sample.spec.columns(l)]


def load_csv(path, spec: BlockSpec, header: bool = False) -> Sample:
    """Read a comma-separated file of ``spec.d`` numeric columns.

    Rows and columns in error messages are 1-based data-row positions
    (the header line, when present, is not counted).
    """
    path = Path(path)
    rows: list[list[float]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if header:
            next(reader, None)
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not x.strip() for x in rec):
                continue
            if len(rec) != spec.d:
                raise DataError(f"row {r}: expected {spec.d} fields, got {len(rec)}")
            vals = []
            for c, x in enumerate(rec, start=1):
                try:
                    v = float(x)
                except ValueError:
                    raise DataError(f"row {r}, column {c}: not a number: {x.strip()!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"row {r}, column {c}: non-finite value {x.strip()!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Sample(np.array(rows), spec)


def write_csv(path, sample: Sample | np.ndarray, header: Sequence[str] | None = None) -> None:
    """Write values in the format read by :func:`load_csv` (``repr`` floats round-trip)."""
    values = sample.values if isinstance(sample, Sample) else np.asarray(sample, dtype=float)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in values:
            w.writerow([repr(float(x)) for x in row])
