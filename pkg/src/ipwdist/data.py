"""Observational data model: rows of (covariates, treatment, outcome)."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Sample sizes below this are flagged as outside the large-sample regime.
SMALL_SAMPLE = 50
# Covariates with at most this many distinct rows are treated as discrete cells.
MAX_DISCRETE_CELLS = 10


class DataError(ValueError):
    """Raised for malformed input data."""


class Arm(enum.IntEnum):
    CONTROL = 0
    TREATED = 1

    @classmethod
    def parse(cls, value: str | int | Arm) -> Arm:
        if isinstance(value, Arm):
            return value
        if isinstance(value, str):
            key = value.strip().lower()
            aliases = {"treated": cls.TREATED, "1": cls.TREATED, "control": cls.CONTROL, "0": cls.CONTROL}
            if key not in aliases:
                raise ValueError(f"unknown arm {value!r}")
            return aliases[key]
        return cls(int(value))


@dataclass(frozen=True)
class Observation:
    x: tuple[float, ...]
    t: int
    y: float


@dataclass(frozen=True, eq=False)
class Sample:
    """Immutable n-row sample; ``x`` is (n, l), ``t`` and ``y`` are (n,)."""

    x: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        t = np.asarray(self.t)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or t.ndim != 1 or y.ndim != 1:
            raise DataError("x must be 2-D, t and y 1-D")
        if not (len(x) == len(t) == len(y)):
            raise DataError(f"row count mismatch: x={len(x)}, t={len(t)}, y={len(y)}")
        if len(y) == 0:
            raise DataError("empty sample")
        if x.shape[1] < 1:
            raise DataError("at least one covariate column is required")
        if not np.isin(t, (0, 1)).all():
            bad = int(np.flatnonzero(~np.isin(t, (0, 1)))[0])
            raise DataError(f"treatment outside {{0,1}} at row {bad + 1}")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise DataError("non-finite covariate or outcome value")
        self._freeze(x, t.astype(np.int8), y)

    def _freeze(self, x: np.ndarray, t: np.ndarray, y: np.ndarray) -> None:
        for name, arr in (("x", x), ("t", t), ("y", y)):
            arr = np.array(arr, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def _trusted(cls, x: np.ndarray, t: np.ndarray, y: np.ndarray) -> Sample:
        # Skips validation; for slices of an already-validated sample.
        obj = object.__new__(cls)
        for name, arr in (("x", x), ("t", t), ("y", y)):
            arr.flags.writeable = False
            object.__setattr__(obj, name, arr)
        return obj

    @classmethod
    def from_rows(cls, rows: Iterable[Observation]) -> Sample:
        rows = list(rows)
        if not rows:
            raise DataError("empty sample")
        widths = {len(r.x) for r in rows}
        if len(widths) != 1:
            raise DataError("covariate vectors have differing lengths")
        return cls(
            x=np.array([r.x for r in rows], dtype=float),
            t=np.array([r.t for r in rows]),
            y=np.array([r.y for r in rows], dtype=float),
        )

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def l(self) -> int:  # noqa: E743
        return self.x.shape[1]

    @property
    def rows(self) -> list[Observation]:
        return [
            Observation(tuple(float(v) for v in xi), int(ti), float(yi))
            for xi, ti, yi in zip(self.x, self.t, self.y)
        ]

    def arm_mask(self, arm: Arm) -> np.ndarray:
        return self.t == int(arm)

    def arm_count(self, arm: Arm) -> int:
        return int(np.count_nonzero(self.t == int(arm)))

    def take(self, idx: np.ndarray) -> Sample:
        return Sample._trusted(self.x[idx], self.t[idx], self.y[idx])

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True)
class Schema:
    y: str = "y"
    t: str = "t"
    x: tuple[str, ...] = ("x",)


def ingest_csv(path: str | Path, schema: Schema = Schema()) -> Sample:
    """Read a headed CSV file into a :class:`Sample`.

    Rows are 1-based data rows (the header is not counted) in error messages.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file") from None
        header = [h.strip() for h in header]
        cols = {name: i for i, name in enumerate(header)}
        wanted = [schema.y, schema.t, *schema.x]
        missing = [c for c in wanted if c not in cols]
        if missing:
            raise DataError(f"missing column(s): {', '.join(missing)}")
        xs, ts, ys = [], [], []
        for rownum, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) < len(header):
                raise DataError(f"row {rownum}: expected {len(header)} fields, got {len(rec)}")
            y = _number(rec[cols[schema.y]], rownum, schema.y)
            t = _number(rec[cols[schema.t]], rownum, schema.t)
            if t not in (0.0, 1.0):
                raise DataError(f"row {rownum}: treatment value {rec[cols[schema.t]]!r} not in {{0,1}}")
            xs.append([_number(rec[cols[c]], rownum, c) for c in schema.x])
            ts.append(int(t))
            ys.append(y)
    if not ys:
        raise DataError("empty file")
    return Sample(x=np.array(xs, dtype=float), t=np.array(ts), y=np.array(ys, dtype=float))


def _number(token: str, rownum: int, col: str) -> float:
    token = token.strip()
    if not token:
        raise DataError(f"row {rownum}: missing value in column {col!r}")
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"row {rownum}: non-numeric value {token!r} in column {col!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {rownum}: non-finite value {token!r} in column {col!r}")
    return value


def emit_csv(sample: Sample, path: str | Path, schema: Schema | None = None) -> None:
    """Write ``sample`` so that :func:`ingest_csv` reproduces it bit for bit."""
    if schema is None:
        names = ("x",) if sample.l == 1 else tuple(f"x{k + 1}" for k in range(sample.l))
        schema = Schema(x=names)
    if len(schema.x) != sample.l:
        raise DataError("schema covariate count does not match sample")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([schema.y, schema.t, *schema.x])
        for xi, ti, yi in zip(sample.x, sample.t, sample.y):
            # repr() of a float is the shortest string that round-trips exactly.
            writer.writerow([repr(float(yi)), int(ti), *(repr(float(v)) for v in xi)])


@dataclass(frozen=True)
class ValidationReport:
    n: int
    l: int  # noqa: E741
    n_treated: int
    n_control: int
    y_range: dict[str, tuple[float, float] | None]
    flags: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "l": self.l,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "y_range": {k: (list(v) if v else None) for k, v in self.y_range.items()},
            "flags": list(self.flags),
            "warnings": list(self.warnings),
        }


def discrete_cells(x: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Return (cells, inverse) if the covariate rows take few distinct values."""
    cells, inverse = np.unique(x, axis=0, return_inverse=True)
    if len(cells) > MAX_DISCRETE_CELLS:
        return None
    return cells, inverse.reshape(-1)


def validate(sample: Sample) -> ValidationReport:
    """Check the data-level preconditions; never raises."""
    flags: list[str] = []
    warnings: list[str] = []
    counts = {arm: sample.arm_count(arm) for arm in Arm}
    y_range: dict[str, tuple[float, float] | None] = {}
    for arm in Arm:
        name = arm.name.lower()
        if counts[arm] == 0:
            flags.append(f"arm {name} is empty")
            y_range[name] = None
        else:
            ya = sample.y[sample.arm_mask(arm)]
            y_range[name] = (float(ya.min()), float(ya.max()))
    if sample.n < 2:
        flags.append("fewer than two observations")
    if sample.n < SMALL_SAMPLE:
        warnings.append(f"n below asymptotic regime (n={sample.n} < {SMALL_SAMPLE})")
    cells = discrete_cells(sample.x)
    if cells is not None and all(counts.values()):
        values, inverse = cells
        for k, cell in enumerate(values):
            in_cell = inverse == k
            for arm in Arm:
                if not np.any(sample.t[in_cell] == int(arm)):
                    flags.append(
                        f"overlap: arm {arm.name.lower()} empty in covariate cell {tuple(float(v) for v in cell)}"
                    )
    return ValidationReport(
        n=sample.n,
        l=sample.l,
        n_treated=counts[Arm.TREATED],
        n_control=counts[Arm.CONTROL],
        y_range=y_range,
        flags=flags,
        warnings=warnings,
    )


def require_both_arms(sample: Sample | Sequence[int]) -> None:
    t = sample.t if isinstance(sample, Sample) else np.asarray(sample)
    k = int(np.count_nonzero(t))
    if k == 0 or k == len(t):
        raise DataError("both treatment arms must be nonempty")
