"""Tabular datasets with nominal/numeric attributes and a binary target."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

NOMINAL = "nominal"
NUMERIC = "numeric"


class DataError(ValueError):
    """Raised for malformed input data (bad CSV, non-binary target, ...)."""


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str
    # nominal: sorted tuple of observed values; numeric: (min, max)
    domain: tuple

    def __post_init__(self):
        if self.kind not in (NOMINAL, NUMERIC):
            raise DataError(f"unknown attribute kind {self.kind!r}")
        if self.kind == NOMINAL and not self.domain:
            raise DataError(f"nominal attribute {self.name!r} has an empty domain")
        if self.kind == NUMERIC and not self.domain[0] <= self.domain[1]:
            raise DataError(f"numeric attribute {self.name!r} has min > max")


@dataclass(frozen=True)
class TargetStats:
    population_share: float
    positives: int
    total: int


def _sort_key(value: Any):
    # mixed-type nominal domains still need a deterministic order
    return (type(value).__name__, value)


class Dataset:
    """Immutable table of individuals x attributes plus a 0/1 target.

    Columns are stored as read-only numpy arrays: float64 for numeric
    attributes, the raw values for nominal ones.
    """

    def __init__(self, columns: Mapping[str, Sequence], target: Sequence,
                 kinds: Mapping[str, str] | None = None):
        kinds = dict(kinds or {})
        target_arr = np.asarray(target)
        if target_arr.ndim != 1:
            raise DataError("target must be one-dimensional")
        if target_arr.size == 0:
            raise DataError("empty dataset")
        if not np.all((target_arr == 0) | (target_arr == 1)):
            raise DataError("non-binary target: values must be 0 or 1")
        n = target_arr.size
        self._target = target_arr.astype(np.int8)
        self._target.flags.writeable = False

        attrs = []
        cols = {}
        for name, values in columns.items():
            if name in cols:
                raise DataError(f"duplicate attribute name {name!r}")
            kind = kinds.pop(name, None)
            arr = np.asarray(values)
            if arr.shape != (n,):
                raise DataError(f"column {name!r} has {arr.shape[0] if arr.ndim else 0} entries, expected {n}")
            if kind is None:
                kind = NUMERIC if arr.dtype.kind == "f" else NOMINAL
            if kind == NUMERIC:
                arr = arr.astype(np.float64)
                if not np.all(np.isfinite(arr)):
                    raise DataError(f"numeric column {name!r} has non-finite values")
                domain = (float(arr.min()), float(arr.max()))
            else:
                if arr.dtype.kind == "U":
                    arr = arr.astype(object)
                domain = tuple(sorted({v.item() if hasattr(v, "item") else v for v in arr}, key=_sort_key))
            arr = arr.copy()
            arr.flags.writeable = False
            attrs.append(Attribute(name, kind, domain))
            cols[name] = arr
        if kinds:
            raise DataError(f"kind override for unknown columns: {sorted(kinds)}")
        self._attributes = tuple(attrs)
        self._columns = cols

    @property
    def n(self) -> int:
        return int(self._target.size)

    @property
    def attributes(self) -> tuple[Attribute, ...]:
        return self._attributes

    @property
    def target(self) -> np.ndarray:
        return self._target

    def attribute(self, name: str) -> Attribute:
        for a in self._attributes:
            if a.name == name:
                return a
        raise KeyError(f"unknown attribute {name!r}")

    def column(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise KeyError(f"unknown attribute {name!r}") from None

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self._attributes == other._attributes
                and np.array_equal(self._target, other._target)
                and all(np.array_equal(self._columns[a.name], other._columns[a.name])
                        for a in self._attributes))

    def __repr__(self):
        return f"Dataset(n={self.n}, attributes={[a.name for a in self._attributes]})"

    @classmethod
    def from_matrix(cls, values: np.ndarray, target: Sequence, names: Sequence[str] | None = None,
                    kind: str = NOMINAL) -> "Dataset":
        """Build a dataset from an n x m matrix where every column has the same kind."""
        values = np.asarray(values)
        if names is None:
            names = [str(j) for j in range(values.shape[1])]
        return cls({name: values[:, j] for j, name in enumerate(names)}, target,
                   kinds={name: kind for name in names})


def target_stats(d: Dataset) -> TargetStats:
    positives = int(d.target.sum())
    return TargetStats(positives / d.n, positives, d.n)


def _parse_number(cell: str) -> float | None:
    try:
        x = float(cell)
    except ValueError:
        return None
    return x if math.isfinite(x) else None


def load_csv(path, target_column: str, attribute_kinds: Mapping[str, str] | None = None,
             positive_value: str | None = None) -> Dataset:
    """Read a comma-separated file with a header row.

    A column is numeric iff every cell parses as a finite number, unless
    overridden in `attribute_kinds`. The target must have exactly two distinct
    raw values; the lexicographically larger one maps to 1 unless
    `positive_value` names it explicitly.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: missing header row")
    header, body = rows[0], rows[1:]
    if target_column not in header:
        raise DataError(f"{path}: missing target column {target_column!r}")
    if not body:
        raise DataError(f"{path}: empty dataset")
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: ragged row ({len(row)} fields, expected {len(header)})")
        if any(cell.strip() == "" for cell in row):
            raise DataError(f"{path}:{lineno}: missing value")

    raw = {name: [row[j].strip() for row in body] for j, name in enumerate(header)}
    raw_target = raw.pop(target_column)
    distinct = sorted(set(raw_target))
    if len(distinct) > 2:
        raise DataError(f"{path}: non-binary target ({len(distinct)} distinct values)")
    if positive_value is None:
        positive_value = distinct[-1]
        only = _parse_number(distinct[0]) if len(distinct) == 1 else None
        if only is not None and only <= 0:
            # a constant 0 (or -1) column is all-negative, not all-positive
            positive_value = None
    else:
        positive_value = str(positive_value)
        if positive_value not in distinct:
            raise DataError(f"{path}: positive value {positive_value!r} not in target column")
    target = np.array([v == positive_value for v in raw_target], dtype=np.int8)

    overrides = dict(attribute_kinds or {})
    unknown = set(overrides) - set(raw)
    if unknown:
        raise DataError(f"{path}: kind override for unknown columns {sorted(unknown)}")
    columns, kinds = {}, {}
    for name, cells in raw.items():
        numbers = [_parse_number(c) for c in cells]
        kind = overrides.get(name) or (NUMERIC if all(x is not None for x in numbers) else NOMINAL)
        if kind == NUMERIC:
            if any(x is None for x in numbers):
                raise DataError(f"{path}: column {name!r} forced numeric but has non-numeric cells")
            columns[name] = np.array(numbers, dtype=np.float64)
        else:
            columns[name] = np.array(cells, dtype=object)
        kinds[name] = kind
    return Dataset(columns, target, kinds)


def write_csv(d: Dataset, path, target_column: str = "target") -> None:
    """Write `d` so that `load_csv(path, target_column)` reproduces it."""
    names = [a.name for a in d.attributes]
    if target_column in names:
        raise DataError(f"target column name {target_column!r} clashes with an attribute")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [target_column])
        cols = [d.column(name) for name in names]
        for i in range(d.n):
            w.writerow([repr(float(c[i])) if a.kind == NUMERIC else str(c[i])
                        for a, c in zip(d.attributes, cols)] + [int(d.target[i])])
