"""Selectors, conjunctive subgroup descriptions and their covers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .data import NOMINAL, DataError, Dataset

EQ = "=="
INTERVAL = "in"


class Cover:
    """Set of covered individuals as a packed bit-set.

    Bit i of `bits` marks individual i. Python ints give word-level AND and a
    native popcount, and stay cheap for the small batch-sized tables scored
    thousands of times per training epoch.
    """

    __slots__ = ("bits", "n")

    def __init__(self, bits: int, n: int):
        self.bits = bits
        self.n = n

    @classmethod
    def from_bools(cls, mask) -> "Cover":
        mask = np.asarray(mask, dtype=bool).ravel()
        packed = np.packbits(mask, bitorder="little")
        return cls(int.from_bytes(packed.tobytes(), "little"), mask.size)

    @classmethod
    def full(cls, n: int) -> "Cover":
        return cls((1 << n) - 1, n)

    @property
    def size(self) -> int:
        return self.bits.bit_count()

    def __and__(self, other: "Cover") -> "Cover":
        return Cover(self.bits & other.bits, self.n)

    def __or__(self, other: "Cover") -> "Cover":
        return Cover(self.bits | other.bits, self.n)

    def intersection_size(self, other: "Cover") -> int:
        return (self.bits & other.bits).bit_count()

    def to_bools(self) -> np.ndarray:
        raw = np.frombuffer(self.bits.to_bytes((self.n + 7) // 8, "little"), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little", count=self.n).astype(bool)

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.to_bools())

    def issubset(self, other: "Cover") -> bool:
        return self.bits & ~other.bits == 0

    def __eq__(self, other):
        if not isinstance(other, Cover):
            return NotImplemented
        return self.n == other.n and self.bits == other.bits

    def __hash__(self):
        return hash((self.bits, self.n))

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"Cover(size={self.size}, n={self.n})"


def _fmt(x: Any) -> str:
    if isinstance(x, float):
        return format(x, "g")
    return str(x)


@dataclass(frozen=True)
class Selector:
    """Boolean predicate on one attribute.

    `op == "=="` tests equality with `value`; `op == "in"` tests
    `lb <= x < ub` (or `lb <= x <= ub` when `closed_upper`).
    """

    attribute: str
    op: str = EQ
    value: Any = None
    lb: float = -math.inf
    ub: float = math.inf
    closed_upper: bool = False
    _key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.op == EQ:
            key = (self.attribute, 0, type(self.value).__name__, self.value, 0.0, 0.0)
        elif self.op == INTERVAL:
            if not self.lb < self.ub and not (self.closed_upper and self.lb == self.ub):
                raise ValueError(f"empty interval [{self.lb}, {self.ub}) for {self.attribute!r}")
            key = (self.attribute, 1, "", "", self.lb, self.ub)
        else:
            raise ValueError(f"unknown selector op {self.op!r}")
        object.__setattr__(self, "_key", key)

    @classmethod
    def equals(cls, attribute: str, value) -> "Selector":
        return cls(attribute, EQ, value)

    @classmethod
    def interval(cls, attribute: str, lb: float, ub: float, closed_upper: bool = False) -> "Selector":
        return cls(attribute, INTERVAL, None, float(lb), float(ub), closed_upper)

    def render(self) -> str:
        if self.op == EQ:
            return f"{self.attribute}=={_fmt(self.value)}"
        parts = []
        if self.lb != -math.inf:
            parts.append(f"{_fmt(self.lb)}<=")
        parts.append(self.attribute)
        if self.ub != math.inf:
            parts.append(f"{'<=' if self.closed_upper else '<'}{_fmt(self.ub)}")
        return "".join(parts)

    def mask(self, d: Dataset) -> np.ndarray:
        col = d.column(self.attribute)
        if self.op == EQ:
            return np.asarray(col == self.value, dtype=bool)
        upper = col <= self.ub if self.closed_upper else col < self.ub
        return (col >= self.lb) & upper

    def __lt__(self, other: "Selector"):
        return self._key < other._key

    def __str__(self):
        return self.render()


@dataclass(frozen=True)
class SubgroupDescription:
    """Conjunction of selectors, kept sorted with one selector per attribute."""

    selectors: tuple[Selector, ...] = ()

    def __post_init__(self):
        sels = tuple(sorted(self.selectors))
        attrs = [s.attribute for s in sels]
        if len(set(attrs)) != len(attrs):
            raise ValueError("a description may hold at most one selector per attribute")
        object.__setattr__(self, "selectors", sels)

    def __len__(self):
        return len(self.selectors)

    def __iter__(self):
        return iter(self.selectors)

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(s.attribute for s in self.selectors)

    def extend(self, sel: Selector) -> "SubgroupDescription | None":
        """Add `sel`; returns None when the attribute is already constrained."""
        if sel.attribute in self.attributes:
            return None
        return SubgroupDescription(self.selectors + (sel,))

    def render(self) -> str:
        return " AND ".join(s.render() for s in self.selectors) if self.selectors else "Empty"

    def __str__(self):
        return self.render()


EMPTY = SubgroupDescription()


def extend(p: SubgroupDescription, sel: Selector) -> SubgroupDescription | None:
    return p.extend(sel)


def evaluate(sel: Selector, d: Dataset) -> Cover:
    return Cover.from_bools(sel.mask(d))


def cover(p: SubgroupDescription, d: Dataset) -> Cover:
    result = Cover.full(d.n)
    for sel in p.selectors:
        result = result & evaluate(sel, d)
    return result


def equal_frequency_edges(values: np.ndarray, bins: int) -> np.ndarray:
    """Cut points splitting `values` into `bins` groups of (roughly) equal size.

    Returns the sorted, de-duplicated edges including min and max; ties can
    leave fewer than `bins` intervals.
    """
    values = np.asarray(values, dtype=np.float64)
    qs = np.quantile(values, np.arange(1, bins) / bins)
    lo, hi = values.min(), values.max()
    inner = [q for q in np.unique(qs) if lo < q < hi]
    return np.array([lo, *inner, hi])


def create_selectors(d: Dataset, bins_per_numeric: int = 4,
                     attributes: Iterable[str] | None = None) -> list[Selector]:
    if bins_per_numeric < 2:
        raise ValueError("bins_per_numeric must be at least 2")
    if not d.attributes:
        raise DataError("dataset has no attributes")
    wanted = None if attributes is None else set(attributes)
    out = []
    for a in d.attributes:
        if wanted is not None and a.name not in wanted:
            continue
        if a.kind == NOMINAL:
            out.extend(Selector.equals(a.name, v) for v in a.domain)
            continue
        lo, hi = a.domain
        if lo == hi:
            # constant column: nothing to discriminate on
            continue
        edges = equal_frequency_edges(d.column(a.name), bins_per_numeric)
        for k in range(len(edges) - 1):
            last = k == len(edges) - 2
            out.append(Selector.interval(a.name, edges[k], edges[k + 1], closed_upper=last))
    return out
