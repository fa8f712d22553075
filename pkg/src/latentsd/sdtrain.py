"""Subgroup-aware VAE training.

Each minibatch is encoded, its latent means are cut into low/mid/high codes,
a beam search finds the best subgroups on those codes, and the latents used by
the top-k subgroups are pushed to correlate with the target through the loss
1 - corr(z_j, t)**2.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .data import NOMINAL, Dataset
from .search import RankedSubgroups, SearchConfig, beam_search
from .seeding import stream
from .selectors import create_selectors
from .tensor import AdamState, Tensor
from .vae import LatentBatch, VaeModel, vae_loss

log = logging.getLogger(__name__)

MODES = ("vae_only", "sd_from_scratch", "sd_finetune")


@dataclass(frozen=True)
class BinningRule:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "BinningRule":
        values = np.asarray(values, dtype=np.float64)
        return cls(values.mean(axis=0), values.std(axis=0))

    def __post_init__(self):
        if np.any(np.asarray(self.std) < 0):
            raise ValueError("binning std must be non-negative")


def discretize(z: np.ndarray, rule: BinningRule) -> np.ndarray:
    """Map latent values to -1 / 0 / 1 around mean -/+ one std.

    Bins are half-open: [mean-std, mean+std) is the middle bin. A latent with
    zero spread maps entirely to 0.
    """
    z = np.asarray(z, dtype=np.float64)
    mean, std = np.asarray(rule.mean), np.asarray(rule.std)
    if z.shape[-1] != mean.shape[-1]:
        raise ValueError(f"discretize: {z.shape[-1]} latents but rule has {mean.shape[-1]}")
    lo, hi = mean - std, mean + std
    codes = np.where(z < lo, -1, np.where(z >= hi, 1, 0)).astype(np.int8)
    codes[..., std == 0] = 0
    return codes


def latent_table(codes: np.ndarray, target: np.ndarray) -> Dataset:
    """Ternary latent codes as a nominal dataset; attribute j is named "j"."""
    codes = np.asarray(codes).astype(np.int64)
    return Dataset.from_matrix(codes, target, kind=NOMINAL)


def latent_subgroups(mu: np.ndarray, target: np.ndarray, search: SearchConfig,
                     rule: BinningRule | None = None) -> RankedSubgroups:
    rule = rule if rule is not None else BinningRule.fit(mu)
    table = latent_table(discretize(mu, rule), target)
    return beam_search(table, create_selectors(table), search)


def pearson_correlation(z, t) -> Tensor:
    """Sample correlation of a latent column with the target, differentiable in z.

    Returns a constant 0 (no gradient) when either side has no variance.
    """
    z = T.as_tensor(z)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if z.ndim != 1 or z.shape[0] != t.shape[0]:
        raise ValueError(f"pearson_correlation: shapes {z.shape} and {t.shape} do not match")
    if t.shape[0] < 2:
        raise ValueError("pearson_correlation needs a batch of at least 2")
    tc = t - t.mean()
    ss_t = float(tc @ tc)
    if ss_t == 0.0 or z.data.var() < 1e-12:
        return Tensor(0.0)
    zc = z - z.mean()
    return (zc * tc).sum() / ((zc * zc).sum() * ss_t).sqrt()


def sd_loss(Z, latent_ids: Iterable[int], t) -> Tensor:
    """Mean over the chosen latents of 1 - corr(z_j, t)**2."""
    if isinstance(Z, LatentBatch):
        Z = Z.mu
    Z = T.as_tensor(Z)
    ids = sorted(set(int(j) for j in latent_ids))
    if not ids:
        raise ValueError("sd_loss: no latents selected")
    total = None
    for j in ids:
        r = pearson_correlation(Z[:, j], t)
        term = 1.0 - r * r
        total = term if total is None else total + term
    return total * (1.0 / len(ids))


def select_latents(ranked: RankedSubgroups, k: int) -> set[int]:
    """Latent ids constrained by any of the top-k subgroups."""
    return {int(sel.attribute) for p, _ in ranked.entries[:k] for sel in p.selectors}


@dataclass(frozen=True)
class SdLossConfig:
    k: int = 1
    lam: float = 10.0
    search: SearchConfig = field(default_factory=SearchConfig)
    # "batch": cut points from each minibatch; "running": exponential moving average
    binning: str = "batch"
    running_momentum: float = 0.1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")
        if self.binning not in ("batch", "running"):
            raise ValueError(f"unknown binning source {self.binning!r}")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "sd_from_scratch"
    epochs: int = 30
    batch_size: int = 100
    learning_rate: float = 1e-3
    seed: int = 0
    kl_weight: float = 1.0
    sd: SdLossConfig = field(default_factory=SdLossConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (correlation is undefined otherwise)")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    @property
    def effective_lambda(self) -> float:
        return 0.0 if self.mode == "vae_only" else self.sd.lam

    def snapshot(self) -> dict:
        return asdict(self)


@dataclass
class TrainRunLog:
    header: dict
    records: list[dict] = field(default_factory=list)
    # optimizer state after the last step; not serialized with the log
    optimizer: AdamState | None = field(default=None, repr=False, compare=False)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"header": self.header}, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def body(self) -> str:
        """The per-epoch records only."""
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "TrainRunLog":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(json.loads(lines[0])["header"], [json.loads(x) for x in lines[1:]])


def train(model: VaeModel, images: np.ndarray, targets: Sequence[int], cfg: TrainConfig = TrainConfig(),
          optimizer: AdamState | None = None) -> TrainRunLog:
    """Train `model` in place and return one log record per epoch.

    The loss per batch is recon + kl + lambda * sd_loss, lambda being zero in
    vae_only mode. The subgroup search and SD loss are evaluated in every
    mode so the logs stay comparable across modes; they only enter the
    gradient when lambda > 0. The SD term depends on the encoder's means
    alone, so the decoder never receives gradient from it.
    """
    x_all = np.asarray(images, dtype=np.float64)
    t_all = np.asarray(targets).astype(np.int8).reshape(-1)
    if x_all.ndim != 2 or x_all.shape[0] == 0:
        raise ValueError("train: images must be a non-empty (n, pixels) array")
    if x_all.shape[0] != t_all.shape[0]:
        raise ValueError("train: images and targets differ in length")
    if x_all.shape[1] != model.input_dim:
        raise ValueError(f"train: images have {x_all.shape[1]} pixels, model expects {model.input_dim}")
    n = x_all.shape[0]
    if min(cfg.batch_size, n) < 2:
        raise ValueError("train: need batches of at least 2 samples")

    lam = cfg.effective_lambda
    params = model.parameters()
    state = optimizer if optimizer is not None else AdamState(learning_rate=cfg.learning_rate)
    shuffle_rng = stream(cfg.seed, "data")
    noise_rng = stream(cfg.seed, "sampling")
    running: BinningRule | None = None
    run = TrainRunLog({"seed": cfg.seed, "config": cfg.snapshot(), "model": model.config(), "n": n})

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        sums = dict(recon=0.0, kl=0.0, sd=0.0, total=0.0, top_quality=0.0, top_share=0.0)
        batches = 0
        selected: list[int] = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if idx.size < 2:
                continue
            x, t = x_all[idx], t_all[idx]
            out = vae_loss(model, x, rng=noise_rng, kl_weight=cfg.kl_weight)

            mu = out.latent.mu.data
            if cfg.sd.binning == "running":
                batch_rule = BinningRule.fit(mu)
                if running is None:
                    running = batch_rule
                else:
                    m = cfg.sd.running_momentum
                    running = BinningRule((1 - m) * running.mean + m * batch_rule.mean,
                                          (1 - m) * running.std + m * batch_rule.std)
                rule = running
            else:
                rule = None
            ranked = latent_subgroups(mu, t, cfg.sd.search, rule)
            ids = select_latents(ranked, cfg.sd.k) if len(ranked) else set()
            sd = sd_loss(out.latent.mu, ids, t) if ids else Tensor(1.0)

            total = out.total
            if lam != 0.0:
                total = total + sd * lam
            model.zero_grad()
            total.backward()
            T.adam_step(params, state)

            batches += 1
            sums["recon"] += out.recon.item()
            sums["kl"] += out.kl.item()
            sums["sd"] += sd.item()
            sums["total"] += total.item()
            if len(ranked):
                sums["top_quality"] += ranked[0][1].quality
                sums["top_share"] += ranked[0][1].target_share
            selected = sorted(ids)
        record = {"epoch": epoch, "batches": batches, "latents_selected": selected}
        record.update({k: v / max(batches, 1) for k, v in sums.items()})
        run.records.append(record)
        log.info("epoch %d recon %.3f kl %.3f sd %.4f top share %.3f", epoch,
                 record["recon"], record["kl"], record["sd"], record["top_share"])
    run.optimizer = state
    return run
