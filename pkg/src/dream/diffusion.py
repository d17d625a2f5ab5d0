"""Diffusion mathematics: forward corruption, signal recovery, the three
training objectives, and ancestral sampling with optional step striding.

Conventions, for a schedule with cumulative retention ab_t = alpha_bar_t:

  corruption        y_t    = sqrt(ab_t) * y0 + sqrt(1 - ab_t) * eps
  signal recovery   y0_est = (y_t - sqrt(1 - ab_t) * eps_hat) / sqrt(ab_t)
  plain objective   mean |eps - net(x0, y_t, t)|
  rectified         the frozen network's error delta = eps - net(x0, y_t, t)
                    is scaled by the step weight lam and folded back into
                    both the network input and the supervision target:
                    input  y_in   = y_t + sqrt(1 - ab_t) * lam * delta
                    target        = eps + lam * delta
                    (with independent second noise: both built from eps')

Training steps derive four fixed-order substreams (noise, second noise,
dropout for the supervised pass, dropout for the frozen pass) from the
incoming generator, so every objective consumes the parent generator
identically; that is what makes lam == 0 collapse bitwise onto the plain
objective under a shared seed.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass

import numpy as np

from . import rngs
from . import tensor as tc
from .errors import NumericalError
from .schedule import LambdaPolicy, NoiseSchedule, lambda_t
from .tensor import AdamState, Tensor

OBJECTIVE_KINDS = ("standard", "drm", "dream")


@dataclass(frozen=True)
class SRPair:
    """One conditioning/target pair: x0 is the LR image upsampled to the
    HR extent, y0 the HR ground truth; both in [-1, 1]."""

    x0: Tensor
    y0: Tensor

    def __post_init__(self) -> None:
        if self.x0.shape != self.y0.shape:
            raise ValueError(f"SRPair: shape mismatch {list(self.x0.shape)} vs {list(self.y0.shape)}")
        for name, t in (("x0", self.x0), ("y0", self.y0)):
            if not np.all(np.isfinite(t.data)):
                raise ValueError(f"SRPair: {name} contains non-finite pixels")
            if t.data.min() < -1.0 or t.data.max() > 1.0:
                raise ValueError(f"SRPair: {name} pixels outside [-1, 1]")


@dataclass(frozen=True)
class ObjectiveMode:
    """Which training objective to run. drm is the rectified objective with
    the weight pinned at 1; standard pins it at 0."""

    kind: str
    policy: LambdaPolicy
    shared_noise: bool = True

    def __post_init__(self) -> None:
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"objective kind must be one of {OBJECTIVE_KINDS}, got {self.kind!r}")

    @classmethod
    def standard(cls) -> "ObjectiveMode":
        return cls("standard", LambdaPolicy(math.inf))

    @classmethod
    def drm(cls, shared_noise: bool = True) -> "ObjectiveMode":
        return cls("drm", LambdaPolicy(0.0), shared_noise)

    @classmethod
    def dream(cls, p: float, shared_noise: bool = True) -> "ObjectiveMode":
        return cls("dream", LambdaPolicy(p), shared_noise)


@dataclass
class LossBreakdown:
    loss: float
    mean_rectification_magnitude: float
    t: int


def _eval_scope(net):
    return net.frozen_scope() if hasattr(net, "frozen_scope") else contextlib.nullcontext()


def forward_diffuse(schedule: NoiseSchedule, y0: Tensor, t: int, eps: Tensor) -> Tensor:
    """Corrupt y0 to step t with the given noise draw."""
    if y0.shape != eps.shape:
        raise ValueError(f"forward_diffuse: shape mismatch {list(y0.shape)} vs {list(eps.shape)}")
    ab = schedule.alpha_bar_at(t)
    return tc.add(tc.scalar_mul(y0, math.sqrt(ab)), tc.scalar_mul(eps, math.sqrt(1.0 - ab)))


def estimate_y0(schedule: NoiseSchedule, net, x0: Tensor, y_t: Tensor, t: int) -> Tensor:
    """Recover the clean-signal estimate implied by the network's noise
    prediction at step t (eval-mode forward)."""
    ab = schedule.alpha_bar_at(t)
    if ab <= 1e-300:
        raise NumericalError(f"estimate_y0: alpha_bar at t={t} too small to divide by")
    with _eval_scope(net):
        eps_hat = net.predict(x0, y_t, t, train_mode=False, rng=None)
    num = tc.sub(y_t, tc.scalar_mul(eps_hat, math.sqrt(1.0 - ab)))
    return tc.scalar_mul(num, 1.0 / math.sqrt(ab))


def blend_estimate(y0: Tensor, y0_est: Tensor, lam: float) -> Tensor:
    """Convex blend lam * y0_est + (1 - lam) * y0."""
    if y0.shape != y0_est.shape:
        raise ValueError(f"blend_estimate: shape mismatch {list(y0.shape)} vs {list(y0_est.shape)}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"blend_estimate: lambda must be in [0,1], got {lam}")
    return tc.add(tc.scalar_mul(y0_est, lam), tc.scalar_mul(y0, 1.0 - lam))


# ---------------------------------------------------------------------------
# training objectives


def _step_streams(rng: np.random.Generator):
    # Fixed draw order keeps the parent generator in lockstep across
    # objectives: (noise, second noise, dropout main, dropout frozen).
    seeds = [rngs.child_seed(rng) for _ in range(4)]
    return tuple(rngs.derive(s) for s in seeds)


def _draw_t_and_eps(noise_rng, schedule, shape):
    t = int(noise_rng.integers(1, schedule.T + 1))
    eps = Tensor(noise_rng.standard_normal(shape))
    return t, eps


def standard_objective(net, schedule: NoiseSchedule, pair: SRPair, rng) -> tuple[Tensor, float, int]:
    """Loss graph for the plain denoising objective on one pair."""
    noise_rng, _, drop_main, _ = _step_streams(rng)
    t, eps = _draw_t_and_eps(noise_rng, schedule, pair.y0.shape)
    y_t = forward_diffuse(schedule, pair.y0, t, eps)
    pred = net.predict(pair.x0, y_t, t, train_mode=True, rng=drop_main)
    loss = tc.abs_sum_mean(tc.sub(eps, pred))
    return loss, 0.0, t


def dream_objective(
    net,
    schedule: NoiseSchedule,
    pair: SRPair,
    policy: LambdaPolicy,
    rng,
    shared_noise: bool = True,
) -> tuple[Tensor, float, int]:
    """Loss graph for the rectified objective on one pair.

    The first network pass runs frozen (its output enters the loss as a
    constant); only the second pass is supervised. When the step weight
    is exactly 0 the computation reduces to the plain objective, bit for
    bit, because it reuses the same substreams.
    """
    noise_rng, eps2_rng, drop_main, drop_frozen = _step_streams(rng)
    t, eps = _draw_t_and_eps(noise_rng, schedule, pair.y0.shape)
    y_t = forward_diffuse(schedule, pair.y0, t, eps)
    lam = lambda_t(schedule, t, policy)

    if lam == 0.0:
        net_in, target, rect = y_t, eps, 0.0
    else:
        ab = schedule.alpha_bar_at(t)
        root1m = math.sqrt(1.0 - ab)
        with _eval_scope(net):
            eps_frozen = net.predict(pair.x0, y_t, t, train_mode=True, rng=drop_frozen)
        delta = tc.sub(eps, eps_frozen)
        if shared_noise:
            net_in = tc.add(y_t, tc.scalar_mul(delta, root1m * lam))
            target = tc.add(eps, tc.scalar_mul(delta, lam))
        else:
            eps2 = Tensor(eps2_rng.standard_normal(pair.y0.shape))
            mixed = tc.add(eps2, tc.scalar_mul(delta, lam))
            net_in = tc.add(tc.scalar_mul(pair.y0, math.sqrt(ab)), tc.scalar_mul(mixed, root1m))
            target = mixed
        rect = float(np.abs(lam * delta.data).mean())

    pred = net.predict(pair.x0, net_in, t, train_mode=True, rng=drop_main)
    loss = tc.abs_sum_mean(tc.sub(target, pred))
    return loss, rect, t


def _finish_step(net, loss: Tensor, rect: float, t: int, adam: AdamState) -> LossBreakdown:
    value = loss.item()
    if not math.isfinite(value):
        raise NumericalError(f"non-finite training loss at t={t}")
    tc.backward(loss)
    tc.adam_step(net.tensors(), adam)
    return LossBreakdown(value, rect, t)


def standard_train_step(
    net, schedule: NoiseSchedule, pair: SRPair, rng, adam: AdamState
) -> LossBreakdown:
    """Draw (t, eps), minimize the plain objective, apply one Adam update."""
    loss, rect, t = standard_objective(net, schedule, pair, rng)
    return _finish_step(net, loss, rect, t, adam)


def dream_train_step(
    net,
    schedule: NoiseSchedule,
    pair: SRPair,
    policy: LambdaPolicy,
    rng,
    adam: AdamState,
    shared_noise: bool = True,
) -> LossBreakdown:
    """Draw (t, eps), minimize the rectified objective, apply one Adam update."""
    loss, rect, t = dream_objective(net, schedule, pair, policy, rng, shared_noise)
    return _finish_step(net, loss, rect, t, adam)


def train_batch_step(
    net, schedule: NoiseSchedule, pairs: list[SRPair], mode: ObjectiveMode, rng, adam: AdamState
) -> LossBreakdown:
    """One optimizer update on the mean loss over a batch of pairs
    (independent (t, eps) draw per pair). The reported t is the first
    pair's draw."""
    if not pairs:
        raise ValueError("train_batch_step: empty batch")
    losses, rects, ts = [], [], []
    for pair in pairs:
        child = rngs.derive(rngs.child_seed(rng))
        if mode.kind == "standard":
            loss, rect, t = standard_objective(net, schedule, pair, child)
        else:
            loss, rect, t = dream_objective(
                net, schedule, pair, mode.policy, child, mode.shared_noise
            )
        losses.append(loss)
        rects.append(rect)
        ts.append(t)
    total = losses[0]
    for loss in losses[1:]:
        total = tc.add(total, loss)
    mean_loss = tc.scalar_mul(total, 1.0 / len(losses))
    return _finish_step(net, mean_loss, float(np.mean(rects)), ts[0], adam)


# ---------------------------------------------------------------------------
# ancestral sampling


def retained_steps(T: int, stride: int) -> list[int]:
    """Ascending step indices kept by a strided sampler: ceil(T/stride)
    evenly spaced values including both endpoints (just [T] if one)."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    n = math.ceil(T / stride)
    if n < 1:
        raise ValueError(f"stride {stride} retains no steps on T={T}")
    if n >= T:
        return list(range(1, T + 1))
    if n == 1:
        return [T]
    grid = np.unique(np.rint(np.linspace(1, T, n)).astype(int))
    return [int(t) for t in grid]


def _hop_update(schedule, net, x0, y, t, a_hop, ab_t):
    eps_hat = net.predict(x0, y, t, train_mode=False, rng=None)
    scaled = tc.scalar_mul(eps_hat, (1.0 - a_hop) / math.sqrt(1.0 - ab_t))
    return tc.scalar_mul(tc.sub(y, scaled), 1.0 / math.sqrt(a_hop))


def ddpm_sample(
    net,
    schedule: NoiseSchedule,
    x0: Tensor,
    rng,
    stride: int = 1,
    capture_trajectory: bool = False,
) -> tuple[Tensor, dict[int, Tensor] | None]:
    """Ancestral sampling from pure noise down to a clean estimate.

    At stride 1 this is the textbook reverse chain with the schedule's own
    alpha_t and sigma_t. For stride > 1 the retained subsequence inherits
    alpha_bar and recomputes per-hop retention a_hop = ab_t / ab_prev (so
    one network evaluation per retained step); the noise scale follows the
    schedule's sigma convention on the hop quantities. No noise is added
    on the final hop. Output pixels are clamped to [-1, 1] only at the
    end, never mid-trajectory.

    With capture_trajectory, also returns {t: state entering step t} for
    every retained t.
    """
    steps = retained_steps(schedule.T, stride)
    full_chain = len(steps) == schedule.T
    y = Tensor(rng.standard_normal(x0.shape))
    trajectory: dict[int, Tensor] | None = {} if capture_trajectory else None

    with _eval_scope(net):
        for i in range(len(steps) - 1, -1, -1):
            t = steps[i]
            if trajectory is not None:
                trajectory[t] = y
            ab_t = schedule.alpha_bar_at(t)
            if full_chain:
                a_hop = schedule.alpha_at(t)
            else:
                a_hop = ab_t / (schedule.alpha_bar_at(steps[i - 1]) if i > 0 else 1.0)
            y = _hop_update(schedule, net, x0, y, t, a_hop, ab_t)
            if i > 0:
                if full_chain:
                    sig = schedule.sigma[t - 1]
                elif schedule.sigma_mode == "beta":
                    sig = math.sqrt(1.0 - a_hop)
                else:
                    ab_prev = schedule.alpha_bar_at(steps[i - 1])
                    sig = math.sqrt((1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - a_hop))
                z = rng.standard_normal(x0.shape)
                y = tc.add(y, Tensor(sig * z))

    return Tensor(np.clip(y.data, -1.0, 1.0)), trajectory


def sample_noisy_at(net, schedule: NoiseSchedule, x0: Tensor, rng, t_stop: int) -> Tensor:
    """Run the full reverse chain from T and return the intermediate state
    entering step t_stop (unclamped). t_stop=T is the initial pure draw."""
    schedule.check_step(t_stop)
    y = Tensor(rng.standard_normal(x0.shape))
    with _eval_scope(net):
        for t in range(schedule.T, t_stop, -1):
            y = _hop_update(schedule, net, x0, y, t, schedule.alpha_at(t), schedule.alpha_bar_at(t))
            z = rng.standard_normal(x0.shape)
            y = tc.add(y, Tensor(schedule.sigma[t - 1] * z))
    return y
