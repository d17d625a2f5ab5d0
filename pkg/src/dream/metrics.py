"""Distortion metrics and the training/sampling discrepancy probe.

The probe reconstructs the clean signal from noisy states built two ways:
"training" states corrupt the ground truth directly, "sampling" states
come from running the reverse chain down to the same step. Comparing the
reconstruction MSE of the two exposes how far the model drifts once it
runs on its own outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rngs
from .diffusion import SRPair, ddpm_sample, estimate_y0, forward_diffuse
from .schedule import NoiseSchedule
from .tensor import Tensor
from .toydata import downsample


def mse(a: Tensor, b: Tensor) -> float:
    if a.shape != b.shape:
        raise ValueError(f"mse: shape mismatch {list(a.shape)} vs {list(b.shape)}")
    return float(np.mean((a.data - b.data) ** 2))


def psnr(sr: Tensor, hr: Tensor, peak: float = 2.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images.

    peak is the full value range (2 for [-1, 1] pixels)."""
    if peak <= 0:
        raise ValueError(f"psnr: peak must be positive, got {peak}")
    err = mse(sr, hr)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def ssim(sr: Tensor, hr: Tensor, peak: float = 2.0) -> float:
    """Single-window SSIM over whole-image means, variances and covariance,
    with the standard stabilizers C1=(0.01*peak)^2, C2=(0.03*peak)^2."""
    if sr.shape != hr.shape:
        raise ValueError(f"ssim: shape mismatch {list(sr.shape)} vs {list(hr.shape)}")
    a = sr.data.reshape(-1)
    b = hr.data.reshape(-1)
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = ((a - mu_a) * (b - mu_b)).mean()
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    return float(
        ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
        / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    )


def consistency(sr: Tensor, lr: Tensor, scale: int) -> float:
    """MSE (x 1e5) between the LR image and the box-downsampled SR output."""
    if sr.data.ndim != 2 or lr.data.ndim != 2 or sr.shape[0] != scale * lr.shape[0]:
        raise ValueError(
            f"consistency: SR extent {list(sr.shape)} is not {scale}x LR extent {list(lr.shape)}"
        )
    return mse(downsample(sr, scale), lr) * 1e5


@dataclass
class DiscrepancyCurve:
    """Per-step reconstruction MSE statistics for the two scenarios."""

    t_grid: list[int]
    train_mse_mean: np.ndarray
    train_mse_std: np.ndarray
    sample_mse_mean: np.ndarray
    sample_mse_std: np.ndarray
    n_samples: int

    CSV_HEADER = "t,train_mse_mean,train_mse_std,sample_mse_mean,sample_mse_std"

    def rows(self) -> list[tuple]:
        return [
            (t, self.train_mse_mean[i], self.train_mse_std[i],
             self.sample_mse_mean[i], self.sample_mse_std[i])
            for i, t in enumerate(self.t_grid)
        ]


def discrepancy_probe(
    net,
    schedule: NoiseSchedule,
    dataset: list[SRPair],
    t_grid: list[int],
    n_samples: int,
    seed: int,
) -> DiscrepancyCurve:
    """Probe reconstruction error at each grid step under both scenarios.

    Sample j uses dataset[j % len(dataset)] with noise streams derived
    from (seed, j) only, so probes of two different checkpoints under the
    same seed are paired draw-for-draw. Standard deviations are population
    (ddof=0) over the n_samples values.
    """
    if not dataset:
        raise ValueError("discrepancy_probe: empty dataset")
    if not t_grid:
        raise ValueError("discrepancy_probe: empty t grid")
    if list(t_grid) != sorted(set(int(t) for t in t_grid)):
        raise ValueError("discrepancy_probe: t grid must be strictly increasing")
    for t in t_grid:
        schedule.check_step(t)
    if n_samples < 1:
        raise ValueError(f"discrepancy_probe: n_samples must be >= 1, got {n_samples}")

    train_vals = np.zeros((len(t_grid), n_samples))
    sample_vals = np.zeros((len(t_grid), n_samples))
    for j in range(n_samples):
        pair = dataset[j % len(dataset)]
        chain_rng = rngs.derive(rngs.PROBE, seed, j, 0)
        noise_rng = rngs.derive(rngs.PROBE, seed, j, 1)
        _, trajectory = ddpm_sample(
            net, schedule, pair.x0, chain_rng, stride=1, capture_trajectory=True
        )
        for i, t in enumerate(t_grid):
            eps = Tensor(noise_rng.standard_normal(pair.y0.shape))
            y_train = forward_diffuse(schedule, pair.y0, t, eps)
            train_vals[i, j] = mse(estimate_y0(schedule, net, pair.x0, y_train, t), pair.y0)
            sample_vals[i, j] = mse(estimate_y0(schedule, net, pair.x0, trajectory[t], t), pair.y0)

    return DiscrepancyCurve(
        t_grid=[int(t) for t in t_grid],
        train_mse_mean=train_vals.mean(axis=1),
        train_mse_std=train_vals.std(axis=1),
        sample_mse_mean=sample_vals.mean(axis=1),
        sample_mse_std=sample_vals.std(axis=1),
        n_samples=n_samples,
    )
