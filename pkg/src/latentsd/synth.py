"""Synthetic shape images with known generative factors.

Each image shows one square or circle on a black background. Factors are
drawn independently and uniformly; the binary target is a conjunction of
factor values, so the ground-truth subgroup is known exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import NOMINAL, Dataset
from .seeding import stream

DEFAULT_FACTORS = (
    ("shape", ("square", "circle")),
    ("xpos", ("left", "center", "right")),
    ("ypos", ("top", "middle", "bottom")),
    ("scale", ("small", "large")),
    ("brightness", ("low", "high")),
)

# centres sit on pixel centres so small squares and circles rasterize differently
_POSITION = {"left": 4.5, "center": 8.5, "right": 11.5, "top": 4.5, "middle": 8.5, "bottom": 11.5}
# square half-side; circles use the radius giving (nearly) the same area
_HALF_SIDE = {"small": 2.0, "large": 3.5}
_INTENSITY = {"low": 0.5, "high": 1.0}


@dataclass(frozen=True)
class FactorSpec:
    factors: tuple = DEFAULT_FACTORS
    height: int = 16
    width: int = 16

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.factors)

    def values(self, name: str) -> tuple:
        return dict(self.factors)[name]

    @property
    def pixels(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class TargetRule:
    conditions: tuple = (("shape", "square"), ("brightness", "high"))
    depth_max: int = 2

    def __post_init__(self):
        if not self.conditions:
            raise ValueError("target rule needs at least one condition")
        if len(self.conditions) > self.depth_max:
            raise ValueError(f"target rule uses {len(self.conditions)} factors, more than {self.depth_max}")

    def evaluate(self, factors: dict[str, np.ndarray]) -> np.ndarray:
        out = np.ones(len(next(iter(factors.values()))), dtype=bool)
        for name, value in self.conditions:
            out &= factors[name] == value
        return out.astype(np.int8)

    def render(self) -> str:
        return " AND ".join(f"{name}=={value}" for name, value in sorted(self.conditions))


def prevalence(spec: FactorSpec, rule: TargetRule) -> float:
    """Expected target rate under independent uniform factors."""
    p = 1.0
    for name, value in rule.conditions:
        values = spec.values(name)
        if value not in values:
            return 0.0
        p /= len(values)
    return p


def render(spec: FactorSpec, row: dict) -> np.ndarray:
    """One flattened, row-major image in [0, 1] for a dict of factor values."""
    ys = np.arange(spec.height)[:, None] + 0.5
    xs = np.arange(spec.width)[None, :] + 0.5
    cy = _POSITION[row.get("ypos", "middle")] * spec.height / 16
    cx = _POSITION[row.get("xpos", "center")] * spec.width / 16
    h = _HALF_SIDE[row.get("scale", "large")] * spec.height / 16
    if row.get("shape", "square") == "square":
        inside = (np.abs(ys - cy) <= h) & (np.abs(xs - cx) <= h)
    else:
        r = 2.0 * h / np.sqrt(np.pi)
        inside = (ys - cy) ** 2 + (xs - cx) ** 2 <= r * r
    return (inside * _INTENSITY[row.get("brightness", "high")]).astype(np.float64).reshape(-1)


@dataclass
class SynthData:
    images: np.ndarray
    factors: dict[str, np.ndarray]
    targets: np.ndarray
    spec: FactorSpec = field(default_factory=FactorSpec)

    def factor_table(self) -> Dataset:
        """Ground-truth factors as a nominal dataset (never shown to the model)."""
        return Dataset(self.factors, self.targets, kinds={k: NOMINAL for k in self.factors})


def generate(spec: FactorSpec = FactorSpec(), rule: TargetRule = TargetRule(), n: int = 5000,
             seed: int = 0) -> SynthData:
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = stream(seed, "synth")
    factors = {}
    for name, values in spec.factors:
        picks = rng.integers(0, len(values), size=n)
        factors[name] = np.array(values, dtype=object)[picks]
    # identical factor tuples render identically, so render each distinct tuple once
    cache: dict[tuple, np.ndarray] = {}
    images = np.empty((n, spec.pixels))
    for i in range(n):
        key = tuple(factors[name][i] for name in spec.names)
        if key not in cache:
            cache[key] = render(spec, dict(zip(spec.names, key)))
        images[i] = cache[key]
    return SynthData(images, factors, rule.evaluate(factors), spec)


# Image container, version 1:
#   one ASCII header line "LSDIMG 1 <count> <height> <width>\n"
#   followed by count*height*width float64 values, little-endian, row-major
IMAGE_MAGIC = "LSDIMG"


def write_images(path, images: np.ndarray, height: int, width: int) -> None:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2 or images.shape[1] != height * width:
        raise ValueError(f"images of shape {images.shape} do not match {height}x{width}")
    with Path(path).open("wb") as fh:
        fh.write(f"{IMAGE_MAGIC} 1 {images.shape[0]} {height} {width}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(images, dtype="<f8").tobytes())


def read_images(path) -> tuple[np.ndarray, int, int]:
    """Returns (images as (count, height*width), height, width)."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    parts = raw[:nl].decode("ascii", errors="replace").split() if nl > 0 else []
    if len(parts) != 5 or parts[0] != IMAGE_MAGIC or parts[1] != "1":
        raise ValueError(f"{path}: not an image container")
    count, height, width = (int(p) for p in parts[2:])
    body = raw[nl + 1:]
    if len(body) != 8 * count * height * width:
        raise ValueError(f"{path}: expected {count * height * width} values, found {len(body) // 8}")
    images = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(count, height * width)
    return images, height, width
