"""Subgroup interestingness: coverage-weighted deviation of the target share."""

from __future__ import annotations

from dataclasses import dataclass

from .data import Dataset, target_stats
from .selectors import Cover


@dataclass(frozen=True)
class QualityConfig:
    # exponent on coverage; 0 ranks by raw deviation, larger values favour big subgroups
    alpha: float = 0.5

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")


@dataclass(frozen=True)
class SubgroupStats:
    size: int
    coverage: float
    positives: int
    target_share: float
    quality: float


def quality_from_counts(size: int, positives: int, n: int, population_positives: int,
                        alpha: float = 0.5) -> SubgroupStats:
    """Q = (size/n)**alpha * (share - population_share); Q = share = 0 for empty covers."""
    if n <= 0:
        raise ValueError("population must be non-empty")
    if not 0 <= positives <= size <= n:
        raise ValueError(f"inconsistent counts: positives={positives}, size={size}, n={n}")
    coverage = size / n
    if size == 0:
        return SubgroupStats(0, 0.0, 0, 0.0, 0.0)
    share = positives / size
    q = coverage ** alpha * (share - population_positives / n)
    return SubgroupStats(size, coverage, positives, share, q)


def quality(c: Cover, d: Dataset, cfg: QualityConfig = QualityConfig(),
            target: Cover | None = None) -> SubgroupStats:
    """Score a cover against the dataset's target.

    `target` may pass a precomputed cover of the positive individuals; search
    loops use it to avoid re-packing the target on every call.
    """
    if target is None:
        target = Cover.from_bools(d.target)
    stats = target_stats(d)
    return quality_from_counts(c.size, c.intersection_size(target), d.n, stats.positives, cfg.alpha)
