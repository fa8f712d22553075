"""Beam search over conjunctive descriptions, plus an exhaustive reference search."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .data import Dataset
from .quality import QualityConfig, SubgroupStats, quality_from_counts
from .selectors import EMPTY, Cover, Selector, SubgroupDescription, evaluate


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    beam_width: int = 10
    max_depth: int = 2
    result_size: int = 10
    quality: QualityConfig = field(default_factory=QualityConfig)
    # rank by -Q, i.e. look for subgroups with a lower target share than the population
    negative: bool = False
    # exhaustive search refuses to enumerate more descriptions than this
    max_candidates: int = 10**6

    def __post_init__(self):
        if self.beam_width < 1 or self.max_depth < 1 or self.result_size < 1:
            raise ValueError("beam_width, max_depth and result_size must be positive")
        if self.result_size > self.beam_width:
            raise ValueError("result_size may not exceed beam_width")


@dataclass(frozen=True)
class RankedSubgroups:
    """(description, stats) pairs, best first."""

    entries: tuple[tuple[SubgroupDescription, SubgroupStats], ...] = ()

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[SubgroupDescription, SubgroupStats]]:
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def descriptions(self) -> list[SubgroupDescription]:
        return [p for p, _ in self.entries]

    @property
    def qualities(self) -> list[float]:
        return [s.quality for _, s in self.entries]


class _Scorer:
    # Shared by both searches so that Q values agree bit for bit.

    def __init__(self, d: Dataset, selectors: Sequence[Selector], cfg: SearchConfig):
        if not selectors:
            raise SearchError("no selectors to search over")
        self.n = d.n
        self.alpha = cfg.quality.alpha
        self.sign = -1.0 if cfg.negative else 1.0
        self.target = Cover.from_bools(d.target).bits
        self.population_positives = int(d.target.sum())
        self.selectors = list(selectors)
        self.covers = [evaluate(s, d).bits for s in self.selectors]

    def stats(self, bits: int) -> SubgroupStats:
        return quality_from_counts(bits.bit_count(), (bits & self.target).bit_count(),
                                   self.n, self.population_positives, self.alpha)

    def key(self, p: SubgroupDescription, stats: SubgroupStats):
        # higher Q, then fewer selectors, then rendering
        return (-self.sign * stats.quality, len(p), p.render())


def _ranked(scorer: _Scorer, scored: dict, k: int) -> list:
    keyed = heapq.nsmallest(k, ((scorer.key(p, st), p) for p, (st, _) in scored.items()))
    return [p for _, p in keyed]


def beam_search(d: Dataset, selectors: Sequence[Selector], cfg: SearchConfig = SearchConfig()) -> RankedSubgroups:
    """Keep the best `beam_width` descriptions, refining each by one selector per round.

    Runs `max_depth` rounds starting from the empty description, so returned
    descriptions hold at most `max_depth` selectors. Beam members survive into
    the next round and each is expanded only once.
    """
    scorer = _Scorer(d, selectors, cfg)
    full = (1 << d.n) - 1
    beam = {EMPTY: (scorer.stats(full), full)}
    expanded: set[SubgroupDescription] = set()
    for _ in range(cfg.max_depth):
        candidates = {p: v for p, v in beam.items() if len(p)}
        grew = False
        for p, (_, bits) in beam.items():
            if p in expanded:
                continue
            expanded.add(p)
            for sel, sel_bits in zip(scorer.selectors, scorer.covers):
                q = p.extend(sel)
                if q is None or q in candidates:
                    continue
                child = bits & sel_bits
                candidates[q] = (scorer.stats(child), child)
                grew = True
        if not candidates:
            break
        beam = {p: candidates[p] for p in _ranked(scorer, candidates, cfg.beam_width)}
        if not grew:
            break
    top = _ranked(scorer, beam, cfg.result_size)
    return RankedSubgroups(tuple((p, beam[p][0]) for p in top))


def _group_by_attribute(selectors: Sequence[Selector]) -> list[list[int]]:
    groups: dict[str, list[int]] = {}
    for i, s in enumerate(selectors):
        groups.setdefault(s.attribute, []).append(i)
    return [groups[a] for a in sorted(groups)]


def count_candidates(selectors: Sequence[Selector], max_depth: int) -> int:
    """Number of non-empty descriptions with at most `max_depth` selectors."""
    # elementary symmetric polynomials of the per-attribute selector counts
    e = [1] + [0] * max_depth
    for g in _group_by_attribute(selectors):
        for k in range(max_depth, 0, -1):
            e[k] += e[k - 1] * len(g)
    return sum(e[1:])


def exhaustive_search(d: Dataset, selectors: Sequence[Selector], cfg: SearchConfig = SearchConfig()) -> RankedSubgroups:
    total = count_candidates(selectors, cfg.max_depth)
    if total > cfg.max_candidates:
        raise SearchError(f"cap exceeded: {total} candidate descriptions > {cfg.max_candidates}")
    scorer = _Scorer(d, selectors, cfg)
    groups = _group_by_attribute(selectors)
    scored = {}
    for depth in range(1, cfg.max_depth + 1):
        for attr_groups in itertools.combinations(groups, depth):
            for combo in itertools.product(*attr_groups):
                bits = (1 << d.n) - 1
                for i in combo:
                    bits &= scorer.covers[i]
                p = SubgroupDescription(tuple(scorer.selectors[i] for i in combo))
                scored[p] = (scorer.stats(bits), bits)
    top = _ranked(scorer, scored, cfg.result_size)
    return RankedSubgroups(tuple((p, scored[p][0]) for p in top))
