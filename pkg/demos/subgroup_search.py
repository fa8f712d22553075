"""
Subgroup search on a small table
================================

Planting a conjunction in random binary attributes and recovering it with
beam search, then confirming the beam matches exhaustive enumeration when it
is wide enough to keep every candidate.
"""

import numpy as np

from latentsd.data import Dataset
from latentsd.quality import QualityConfig, quality_from_counts
from latentsd.search import SearchConfig, beam_search, count_candidates, exhaustive_search
from latentsd.selectors import create_selectors

# %%
# Six binary attributes; the target fires mostly when a0 and a3 are both set.
rng = np.random.default_rng(0)
values = rng.integers(0, 2, size=(400, 6))
target = ((values[:, 0] == 1) & (values[:, 3] == 1)) | (rng.random(400) < 0.05)
d = Dataset.from_matrix(values, target.astype(int))
print(f"{d.n} rows, population share {d.target.mean():.3f}")

# %%
# Default search: beam width 10, depth 2, coverage weight 0.5.
sels = create_selectors(d)
ranked = beam_search(d, sels, SearchConfig())
for p, s in list(ranked)[:5]:
    print(f"{p.render():<20} cov {s.coverage:.3f} share {s.target_share:.3f} Q {s.quality:.4f}")

# %%
# The coverage exponent trades size against purity. alpha=0 ranks on share
# alone, a large alpha pushes towards big subgroups.
for alpha in (0.0, 0.5, 3.0):
    p, s = beam_search(d, sels, SearchConfig(quality=QualityConfig(alpha)))[0]
    print(f"alpha={alpha}: {p.render()} (cov {s.coverage:.3f}, share {s.target_share:.3f})")

# %%
# With a beam as wide as the candidate count the result equals the exhaustive answer.
width = count_candidates(sels, 2)
cfg = SearchConfig(beam_width=width, max_depth=2, result_size=10)
print("beam == exhaustive:", beam_search(d, sels, cfg).qualities == exhaustive_search(d, sels, cfg).qualities)

# %%
# Quality straight from counts, e.g. a subgroup of 5428 of 202599 rows with 4663 positives.
s = quality_from_counts(5428, 4663, 202599, 103833)
print(f"coverage {s.coverage:.3f}, share {s.target_share:.3f}, Q {s.quality:.4f}")
