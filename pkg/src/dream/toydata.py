"""Procedural toy super-resolution pairs and the degradation pipeline.

Pairs are pure functions of (config, index): the HR image is drawn from
one of three texture families, the conditioning image is its box-filter
downsample brought back to full extent by bilinear (or nearest)
interpolation. No dataset files exist; determinism stands in for
persistence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rngs
from .diffusion import SRPair
from .tensor import Tensor

FAMILIES = ("gaussian_blobs", "gradients", "checker_mix")
UPSAMPLE_MODES = ("bilinear", "nearest")


@dataclass(frozen=True)
class ToyDataConfig:
    image_extent: int
    scale: int
    n_train: int
    n_eval: int
    family: str = "gaussian_blobs"
    seed: int = 0
    upsample_mode: str = "bilinear"

    def __post_init__(self) -> None:
        if self.image_extent < 1 or self.scale < 1:
            raise ValueError(f"bad extent/scale: {self.image_extent}/{self.scale}")
        if self.image_extent % self.scale:
            raise ValueError(f"image_extent {self.image_extent} not divisible by scale {self.scale}")
        if self.n_train < 1 or self.n_eval < 1:
            raise ValueError("n_train and n_eval must be >= 1")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.upsample_mode not in UPSAMPLE_MODES:
            raise ValueError(f"upsample_mode must be one of {UPSAMPLE_MODES}, got {self.upsample_mode!r}")


def _grid(n: int):
    return np.meshgrid(np.arange(n, dtype=float), np.arange(n, dtype=float), indexing="ij")


def _gaussian_blobs(rng: np.random.Generator, n: int) -> np.ndarray:
    # First blob is bright and well inside the frame so at least one pixel
    # always lands above 0.
    yy, xx = _grid(n)
    canvas = np.full((n, n), -1.0)
    count = int(rng.integers(1, 4))
    for i in range(count):
        amp = rng.uniform(0.8, 1.0) if i == 0 else rng.uniform(0.3, 1.0)
        cy = rng.uniform(1.0, n - 2.0)
        cx = rng.uniform(1.0, n - 2.0)
        width = rng.uniform(max(1.0, 0.1 * n), 0.3 * n)
        canvas += 2.0 * amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * width**2))
    return canvas


def _gradients(rng: np.random.Generator, n: int) -> np.ndarray:
    yy, xx = _grid(n)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    proj = np.cos(theta) * xx + np.sin(theta) * yy
    span = proj.max() - proj.min()
    unit = 2.0 * (proj - proj.min()) / span - 1.0 if span > 0 else np.zeros_like(proj)
    return rng.uniform(0.5, 1.0) * unit + rng.uniform(-0.3, 0.3)


def _checker_mix(rng: np.random.Generator, n: int) -> np.ndarray:
    yy, xx = _grid(n)
    cell = int(rng.choice([2, 4])) if n >= 8 else 2
    oy, ox = int(rng.integers(0, cell)), int(rng.integers(0, cell))
    lo, hi = np.sort(rng.uniform(-1.0, 1.0, size=2))
    checker = np.where((((yy + oy) // cell + (xx + ox) // cell) % 2) == 0, lo, hi)
    ramp = 0.2 * (2.0 * xx / max(n - 1, 1) - 1.0)
    return checker + ramp


_GENERATORS = {
    "gaussian_blobs": _gaussian_blobs,
    "gradients": _gradients,
    "checker_mix": _checker_mix,
}


def generate_pair(config: ToyDataConfig, index: int) -> SRPair:
    """Deterministic pair for (config, index); indices address disjoint
    RNG streams, so train (< n_train) and eval (>= n_train) never overlap."""
    if index < 0:
        raise ValueError(f"index must be >= 0, got {index}")
    rng = rngs.derive(rngs.DATA, config.seed, index)
    y0 = np.clip(_GENERATORS[config.family](rng, config.image_extent), -1.0, 1.0)
    x0 = upsample(downsample(Tensor(y0), config.scale), config.scale, config.upsample_mode)
    return SRPair(x0=x0, y0=Tensor(y0))


def downsample(y: Tensor, scale: int) -> Tensor:
    """Box average over scale x scale blocks."""
    arr = y.data
    if arr.ndim != 2:
        raise ValueError(f"downsample: expected a 2-d image, got shape {list(y.shape)}")
    h, w = arr.shape
    if h % scale or w % scale:
        raise ValueError(f"downsample: extent {h}x{w} not divisible by scale {scale}")
    return Tensor(arr.reshape(h // scale, scale, w // scale, scale).mean(axis=(1, 3)))


def _bilinear_axis(arr: np.ndarray, scale: int, axis: int) -> np.ndarray:
    # Half-pixel sample positions with edge clamping; every source pixel
    # contributes total weight `scale`, so the image mean is preserved.
    n = arr.shape[axis]
    u = (np.arange(n * scale) + 0.5) / scale - 0.5
    u = np.clip(u, 0.0, n - 1.0)
    i0 = np.floor(u).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    frac = u - i0
    lo = np.take(arr, i0, axis=axis)
    hi = np.take(arr, i1, axis=axis)
    shape = [1, 1]
    shape[axis] = frac.size
    f = frac.reshape(shape)
    return (1.0 - f) * lo + f * hi


def upsample(x: Tensor, scale: int, mode: str = "bilinear") -> Tensor:
    """Enlarge by an integer factor: bilinear with edge clamping, or
    nearest-neighbor block replication."""
    arr = x.data
    if arr.ndim != 2:
        raise ValueError(f"upsample: expected a 2-d image, got shape {list(x.shape)}")
    if mode == "nearest":
        return Tensor(np.repeat(np.repeat(arr, scale, axis=0), scale, axis=1))
    if mode != "bilinear":
        raise ValueError(f"upsample: unknown mode {mode!r}")
    return Tensor(_bilinear_axis(_bilinear_axis(arr, scale, 0), scale, 1))
