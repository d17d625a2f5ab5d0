"""Diffusion noise schedules and the rectification weight.

A schedule holds, for steps t = 1..T, the per-step variance beta_t, the
retention alpha_t = 1 - beta_t, the cumulative retention
alpha_bar_t = prod_{i<=t} alpha_i, and the sampler noise scale sigma_t.
Two sigma conventions are supported: sigma_t^2 = beta_t (default) and the
posterior variance sigma_t^2 = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIGMA_MODES = ("beta", "beta_tilde")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step diffusion coefficients, indexed t = 1..T."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray
    sigma_mode: str = "beta"

    def check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"step index {t} outside schedule range 1..{self.T}")

    def beta_at(self, t: int) -> float:
        self.check_step(t)
        return float(self.beta[t - 1])

    def alpha_at(self, t: int) -> float:
        self.check_step(t)
        return float(self.alpha[t - 1])

    def alpha_bar_at(self, t: int) -> float:
        self.check_step(t)
        return float(self.alpha_bar[t - 1])

    def alpha_bar_before(self, t: int) -> float:
        """alpha_bar at t-1, with the empty product 1.0 at t=1."""
        self.check_step(t)
        return 1.0 if t == 1 else float(self.alpha_bar[t - 2])


def linear_beta_schedule(
    beta_start: float, beta_end: float, T: int, sigma_mode: str = "beta"
) -> NoiseSchedule:
    """Linearly interpolated beta_t from beta_start (t=1) to beta_end (t=T)."""
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"beta bounds violated: need 0 < beta_start <= beta_end < 1, "
            f"got ({beta_start}, {beta_end})"
        )
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if sigma_mode not in SIGMA_MODES:
        raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}, got {sigma_mode!r}")

    beta = np.linspace(beta_start, beta_end, T)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    if alpha_bar[-1] <= 0.0:
        raise ValueError("schedule underflow: alpha_bar reaches zero; reduce T or beta_end")
    if sigma_mode == "beta":
        sigma = np.sqrt(beta)
    else:
        alpha_bar_prev = np.concatenate(([1.0], alpha_bar[:-1]))
        sigma = np.sqrt((1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta)
    return NoiseSchedule(
        T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar, sigma=sigma, sigma_mode=sigma_mode
    )


@dataclass(frozen=True)
class LambdaPolicy:
    """Rectification-weight exponent p: weight is (sqrt(1 - alpha_bar_t))^p.

    p=0 pins the weight at exactly 1.0 (full rectification); p=inf pins it
    at exactly 0.0 (plain denoising objective).
    """

    p: float

    def __post_init__(self) -> None:
        if not (self.p >= 0.0 or math.isinf(self.p)):
            raise ValueError(f"LambdaPolicy: p must be >= 0 or inf, got {self.p}")


def lambda_t(schedule: NoiseSchedule, t: int, policy: LambdaPolicy) -> float:
    """Rectification weight at step t; always in [0, 1]."""
    schedule.check_step(t)
    if math.isinf(policy.p):
        return 0.0
    if policy.p == 0.0:
        return 1.0
    return math.sqrt(1.0 - schedule.alpha_bar_at(t)) ** policy.p


def sigma_t(schedule: NoiseSchedule, t: int) -> float:
    """Sampler noise scale at step t (unused by the final sampling hop)."""
    schedule.check_step(t)
    return float(schedule.sigma[t - 1])
