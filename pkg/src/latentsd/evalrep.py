"""Evaluation and reporting for trained models.

Covers subgroup tables on the latent codes, a cross-validated logistic probe on
the latent means, latent traversals and per-subgroup average decodes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .data import Dataset, target_stats
from .search import RankedSubgroups, SearchConfig, beam_search
from .sdtrain import BinningRule, discretize, latent_table
from .selectors import cover, create_selectors
from .seeding import stream
from .tensor import Tensor
from .vae import VaeModel, decode_array, encode_mean

PROBE_LABEL = "linear probe (paper: random forest)"


@dataclass(frozen=True)
class ReportRow:
    label: str
    description: str
    coverage: float
    target_share: float
    samples: float
    positives: float
    quality: float | None = None


@dataclass
class SubgroupReport:
    """Population row, one row per subgroup, then the column means of the subgroup rows."""

    population: ReportRow
    rows: list[ReportRow]
    mean: ReportRow | None
    n: int

    @classmethod
    def from_ranked(cls, ranked: RankedSubgroups, n: int, positives: int) -> "SubgroupReport":
        pop = ReportRow("", "Empty", 1.0, positives / n, n, positives, 0.0)
        rows = [ReportRow(str(i), p.render(), s.coverage, s.target_share, s.size, s.positives, s.quality)
                for i, (p, s) in enumerate(ranked, start=1)]
        mean = None
        if rows:
            mean = ReportRow("Mean", "",
                             *(float(np.mean([getattr(r, f) for r in rows]))
                               for f in ("coverage", "target_share", "samples", "positives", "quality")))
        return cls(pop, rows, mean, n)

    def all_rows(self) -> list[ReportRow]:
        return [self.population, *self.rows] + ([self.mean] if self.mean else [])

    def to_dict(self) -> dict:
        return {"n": self.n, "population": asdict(self.population),
                "subgroups": [asdict(r) for r in self.rows],
                "mean": asdict(self.mean) if self.mean else None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        head = ("", "Subgroup", "Coverage", "Target share", "#Samples", "#Positive samples", "Quality")
        lines = []
        for r in self.all_rows():
            count_fmt = "{:.1f}" if r is self.mean else "{:.0f}"
            lines.append((r.label, r.description, f"{r.coverage:.3f}", f"{r.target_share:.3f}",
                          count_fmt.format(r.samples), count_fmt.format(r.positives),
                          "" if r.quality is None else f"{r.quality:.4f}"))
        widths = [max(len(row[i]) for row in [head, *lines]) for i in range(len(head))]
        fmt = lambda row: "  ".join(c.ljust(w) if i < 2 else c.rjust(w)
                                    for i, (c, w) in enumerate(zip(row, widths))).rstrip()
        rule = "-" * len(fmt(head))
        return "\n".join([fmt(head), rule, *map(fmt, lines)]) + "\n"


def discover(d: Dataset, cfg: SearchConfig = SearchConfig(), bins_per_numeric: int = 4
             ) -> tuple[RankedSubgroups, SubgroupReport]:
    """Beam search on a structured table and its report."""
    ranked = beam_search(d, create_selectors(d, bins_per_numeric), cfg)
    stats = target_stats(d)
    return ranked, SubgroupReport.from_ranked(ranked, d.n, stats.positives)


@dataclass
class LatentDiscovery:
    ranked: RankedSubgroups
    report: SubgroupReport
    latents: np.ndarray
    rule: BinningRule
    table: Dataset


def final_discovery(model: VaeModel, images: np.ndarray, targets, cfg: SearchConfig = SearchConfig()
                    ) -> LatentDiscovery:
    """Encode everything, bin with whole-dataset statistics, search the codes."""
    mu = encode_mean(model, images)
    rule = BinningRule.fit(mu)
    table = latent_table(discretize(mu, rule), np.asarray(targets))
    ranked = beam_search(table, create_selectors(table), cfg)
    report = SubgroupReport.from_ranked(ranked, table.n, int(table.target.sum()))
    return LatentDiscovery(ranked, report, mu, rule, table)


def reconstruction_error(model: VaeModel, images: np.ndarray) -> float:
    """Mean per-image squared error of decode(encoder mean)."""
    images = np.asarray(images, dtype=np.float64)
    x_hat = decode_array(model, encode_mean(model, images))
    return float(((x_hat - images) ** 2).sum(axis=1).mean())


@dataclass
class PredictionMetrics:
    precision: float
    recall: float
    accuracy: float
    f1: float
    folds: int = 1
    per_fold: list = field(default_factory=list)
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int) -> PredictionMetrics:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PredictionMetrics(precision, recall, accuracy, f1, tp=tp, fp=fp, fn=fn, tn=tn)


def _confusion(y: np.ndarray, pred: np.ndarray) -> tuple[int, int, int, int]:
    y, pred = y.astype(bool), pred.astype(bool)
    return (int(np.sum(y & pred)), int(np.sum(~y & pred)), int(np.sum(y & ~pred)), int(np.sum(~y & ~pred)))


def fit_logistic(x: np.ndarray, y: np.ndarray, steps: int = 400, lr: float = 0.05,
                 l2: float = 1e-4) -> tuple[np.ndarray, float]:
    """Full-batch logistic regression from zero weights, trained with Adam."""
    w = Tensor(np.zeros(x.shape[1]), requires_grad=True)
    b = Tensor(0.0, requires_grad=True)
    opt = T.Adam([w, b], lr=lr)
    X, yv = Tensor(x), np.asarray(y, dtype=np.float64)
    for _ in range(steps):
        s = X @ w.reshape(-1, 1)
        s = s.reshape(-1) + b
        loss = (T.softplus(s) - s * yv).mean() + (w * w).sum() * l2
        opt.zero_grad()
        loss.backward()
        opt.step()
    return w.data.copy(), float(b.data)


def linear_probe(latents: np.ndarray, targets, folds: int = 5, seed: int = 0,
                 fold_ids: np.ndarray | None = None) -> PredictionMetrics:
    """K-fold logistic probe at threshold 0.5.

    Headline metrics come from the pooled out-of-fold confusion counts;
    `per_fold` keeps each fold's own metrics.
    """
    x = np.asarray(latents, dtype=np.float64)
    y = np.asarray(targets).astype(np.int8).reshape(-1)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < folds:
        raise ValueError(f"linear_probe: {n} samples is fewer than {folds} folds")
    if fold_ids is None:
        fold_ids = np.empty(n, dtype=np.int64)
        fold_ids[stream(seed, "probe").permutation(n)] = np.arange(n) % folds
    pred = np.zeros(n, dtype=np.int8)
    per_fold = []
    for f in range(folds):
        test = fold_ids == f
        train = ~test
        mu, sd = x[train].mean(axis=0), x[train].std(axis=0)
        sd[sd == 0] = 1.0
        w, b = fit_logistic((x[train] - mu) / sd, y[train])
        p = ((x[test] - mu) / sd) @ w + b > 0.0
        pred[test] = p
        fold = metrics_from_counts(*_confusion(y[test], p)).to_dict()
        del fold["per_fold"], fold["folds"]
        per_fold.append(fold)
    out = metrics_from_counts(*_confusion(y, pred))
    out.folds = folds
    out.per_fold = per_fold
    return out


@dataclass
class TraversalGrid:
    latent_id: int
    values: np.ndarray
    images: np.ndarray


DEFAULT_STEPS = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)


def traverse_latent(model: VaeModel, base: np.ndarray, latent_id: int, steps: Sequence[float] = DEFAULT_STEPS,
                    scale: float = 1.0) -> TraversalGrid:
    """Decode `base` with coordinate `latent_id` set to base[j] + step * scale for each step."""
    base = np.asarray(base, dtype=np.float64).reshape(-1)
    if base.size != model.latent_dim:
        raise ValueError(f"base has {base.size} latents, model has {model.latent_dim}")
    if not 0 <= latent_id < model.latent_dim:
        raise ValueError(f"latent id {latent_id} out of range [0, {model.latent_dim})")
    values = base[latent_id] + np.asarray(steps, dtype=np.float64) * scale
    z = np.tile(base, (values.size, 1))
    z[:, latent_id] = values
    return TraversalGrid(int(latent_id), values, decode_array(model, z))


def average_subgroup_decode(model: VaeModel, ranked: RankedSubgroups, latents: np.ndarray,
                            table: Dataset | None = None) -> np.ndarray:
    """Row 0 decodes the population mean latent; row i the mean latent of subgroup i.

    `table` holds the discretized codes the subgroups were found on; by default
    the latents are binned with their own statistics.
    """
    latents = np.asarray(latents, dtype=np.float64)
    if not len(ranked):
        raise ValueError("no subgroups to decode")
    if table is None:
        codes = discretize(latents, BinningRule.fit(latents))
        table = latent_table(codes, np.zeros(latents.shape[0], dtype=np.int8))
    means = [latents.mean(axis=0)]
    for p, _ in ranked:
        members = cover(p, table).to_bools()
        if not members.any():
            raise ValueError(f"subgroup {p} covers no individuals")
        means.append(latents[members].mean(axis=0))
    return decode_array(model, np.stack(means))


def tile(images: np.ndarray, height: int, width: int, columns: int | None = None, pad: int = 1) -> np.ndarray:
    """Arrange flattened images into one 2-d grid, row-major, separated by `pad` pixels."""
    images = np.asarray(images, dtype=np.float64).reshape(-1, height, width)
    count = images.shape[0]
    columns = columns or count
    rows = -(-count // columns)
    grid = np.zeros((rows * (height + pad) - pad, columns * (width + pad) - pad))
    for i, img in enumerate(images):
        r, c = divmod(i, columns)
        grid[r * (height + pad):r * (height + pad) + height, c * (width + pad):c * (width + pad) + width] = img
    return grid


def write_pgm(path, image: np.ndarray) -> None:
    """Binary greyscale PGM (P5, maxval 255); values are clipped to [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("write_pgm expects a 2-d image")
    pixels = np.rint(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)
    with Path(path).open("wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = (int(t) for t in tokens[1:])
    # exactly one whitespace byte separates the header from the pixels
    data = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos + 1)
    return data.reshape(height, width) / maxval


@dataclass
class ModeResult:
    mode: str
    top_share: float
    top_description: str
    reconstruction_error: float
    probe: PredictionMetrics
    log: object = field(repr=False, default=None)


def compare_modes(images: np.ndarray, targets, seed: int = 0, epochs: int = 30, pretrain_epochs: int = 20,
                  latent_dim: int = 16, hidden: Sequence[int] = (256, 128), sd=None,
                  search: SearchConfig = SearchConfig(), folds: int = 5) -> dict[str, ModeResult]:
    """Train the three configurations from the same seed and score each.

    sd_finetune trains `pretrain_epochs` without the SD term, then the
    remaining epochs with it (fresh optimizer state), so every mode sees
    `epochs` passes over the data.
    """
    from .sdtrain import SdLossConfig, TrainConfig, train

    sd = sd if sd is not None else SdLossConfig(search=search)
    if not 0 < pretrain_epochs < epochs:
        raise ValueError("pretrain_epochs must lie strictly between 0 and epochs")
    images = np.asarray(images, dtype=np.float64)
    targets = np.asarray(targets).astype(np.int8)

    def fresh():
        return VaeModel(images.shape[1], latent_dim, hidden, rng=stream(seed, "init"))

    def score(mode, model, run):
        found = final_discovery(model, images, targets, search)
        top_p, top_s = found.ranked[0]
        return ModeResult(mode, top_s.target_share, top_p.render(), reconstruction_error(model, images),
                          linear_probe(found.latents, targets, folds=folds, seed=seed), run)

    out = {}
    for mode in ("vae_only", "sd_from_scratch"):
        model = fresh()
        run = train(model, images, targets, TrainConfig(mode=mode, epochs=epochs, seed=seed, sd=sd))
        out[mode] = score(mode, model, run)
    model = fresh()
    train(model, images, targets, TrainConfig(mode="vae_only", epochs=pretrain_epochs, seed=seed, sd=sd))
    run = train(model, images, targets, TrainConfig(mode="sd_finetune", epochs=epochs - pretrain_epochs,
                                                     seed=seed, sd=sd))
    out["sd_finetune"] = score("sd_finetune", model, run)
    return out
