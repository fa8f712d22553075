"""Subgroup discovery on tables and on the latent space of a subgroup-aware VAE."""

from .data import Attribute, DataError, Dataset, TargetStats, load_csv, target_stats, write_csv
from .quality import QualityConfig, SubgroupStats, quality
from .search import RankedSubgroups, SearchConfig, SearchError, beam_search, exhaustive_search
from .selectors import Cover, Selector, SubgroupDescription, cover, create_selectors, evaluate, extend

__version__ = "0.1.0"

__all__ = [
    "Attribute", "Cover", "DataError", "Dataset", "QualityConfig", "RankedSubgroups", "SearchConfig",
    "SearchError", "Selector", "SubgroupDescription", "SubgroupStats", "TargetStats", "beam_search",
    "cover", "create_selectors", "evaluate", "exhaustive_search", "extend", "load_csv", "quality",
    "target_stats", "write_csv",
]
