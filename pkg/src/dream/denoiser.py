"""The conditional noise predictor: an MLP over (conditioning image,
noisy target, sinusoidal step embedding).

The network sees concat(flatten(x0), flatten(y_t), embed(t)) and returns
a predicted noise image shaped like y_t. Freezing a parameter set routes
its forward passes through detached views, so nothing lands on the tape
and no gradients can flow.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from .tensor import Tensor


@dataclass(frozen=True)
class DenoiserConfig:
    image_extent: int
    hidden_widths: tuple[int, ...]
    time_embed_dim: int = 32
    dropout_rate: float = 0.2
    channels: int = 1

    def __post_init__(self) -> None:
        if self.image_extent < 1:
            raise ValueError(f"image_extent must be >= 1, got {self.image_extent}")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"hidden_widths must be positive, got {self.hidden_widths}")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ValueError(f"time_embed_dim must be positive and even, got {self.time_embed_dim}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0,1), got {self.dropout_rate}")
        if self.channels != 1:
            raise ValueError("only single-channel images are supported")

    @property
    def input_width(self) -> int:
        return 2 * self.image_extent**2 + self.time_embed_dim

    @property
    def output_width(self) -> int:
        return self.image_extent**2


def time_embedding(t: int, dim: int, total_steps: int | None = None) -> Tensor:
    """Sinusoidal embedding of the step index, shape [1, dim].

    dim/2 frequencies geometrically spaced from 1 down to 1/10000; the
    first half holds sines, the second half cosines. total_steps is
    accepted for signature symmetry with callers that know T.
    """
    if dim < 2 or dim % 2:
        raise ValueError(f"time_embedding: dim must be positive and even, got {dim}")
    half = dim // 2
    if half == 1:
        freqs = np.array([1.0])
    else:
        freqs = (1e-4) ** (np.arange(half) / (half - 1))
    ang = float(t) * freqs
    return Tensor(np.concatenate([np.sin(ang), np.cos(ang)])[None, :])


class DenoiserParams:
    """Layer weights of the noise predictor; `frozen` detaches all of them."""

    def __init__(self, config: DenoiserConfig, layers: list[tuple[Tensor, Tensor]]) -> None:
        self.config = config
        self.layers = layers
        self.frozen = False
        widths = [config.input_width, *config.hidden_widths, config.output_width]
        for (w, b), (fan_in, fan_out) in zip(layers, zip(widths, widths[1:])):
            if w.shape != (fan_in, fan_out) or b.shape != (1, fan_out):
                raise ValueError(
                    f"layer shapes do not chain: got {list(w.shape)}/{list(b.shape)}, "
                    f"expected ({fan_in},{fan_out})/(1,{fan_out})"
                )

    def tensors(self) -> list[Tensor]:
        """All parameters in declared layer order (W0, b0, W1, b1, ...)."""
        return [t for layer in self.layers for t in layer]

    def arrays(self) -> list[np.ndarray]:
        return [t.data for t in self.tensors()]

    @contextlib.contextmanager
    def frozen_scope(self):
        """Temporarily freeze: forwards run off-tape, no grads accumulate."""
        previous = self.frozen
        self.frozen = True
        try:
            yield self
        finally:
            self.frozen = previous

    def predict(self, x0, y_t, t, train_mode: bool = False, rng=None) -> Tensor:
        return predict_noise(self, x0, y_t, t, train_mode=train_mode, rng=rng)

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(self.config, [(w.copy(), b.copy()) for w, b in self.layers])

    @classmethod
    def from_arrays(
        cls, config: DenoiserConfig, arrays: list[np.ndarray], requires_grad: bool = True
    ) -> "DenoiserParams":
        if len(arrays) % 2:
            raise ValueError(f"expected (weight, bias) pairs, got {len(arrays)} arrays")
        layers = [
            (Tensor(arrays[i], requires_grad), Tensor(arrays[i + 1], requires_grad))
            for i in range(0, len(arrays), 2)
        ]
        return cls(config, layers)


def init_params(config: DenoiserConfig, rng: np.random.Generator) -> DenoiserParams:
    """Uniform Glorot weights, zero biases; deterministic per generator state."""
    widths = [config.input_width, *config.hidden_widths, config.output_width]
    layers = []
    for fan_in, fan_out in zip(widths, widths[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((Tensor(w, requires_grad=True), Tensor(np.zeros((1, fan_out)), requires_grad=True)))
    return DenoiserParams(config, layers)


def predict_noise(
    params: DenoiserParams, x0: Tensor, y_t: Tensor, t: int, train_mode: bool = False, rng=None
) -> Tensor:
    """MLP forward pass; returns the predicted noise shaped like y_t.

    Dropout (inverted scaling) is applied to hidden activations only in
    train_mode. A frozen parameter set yields the bitwise-identical output
    for the same dropout draws, but records nothing on the tape.
    """
    cfg = params.config
    n = cfg.output_width
    if x0.size != n or y_t.size != n:
        raise ValueError(
            f"predict_noise: inputs {list(x0.shape)}/{list(y_t.shape)} do not flatten "
            f"to {n} pixels"
        )
    if params.frozen:
        layers = [(Tensor(w.data), Tensor(b.data)) for w, b in params.layers]
    else:
        layers = params.layers

    h = tc.concat_last_axis(
        tc.reshape(x0, (1, n)),
        tc.reshape(y_t, (1, n)),
        time_embedding(t, cfg.time_embed_dim),
    )
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        h = tc.add(tc.matmul(h, w), b)
        if i == last:
            break
        h = tc.silu(h)
        if train_mode and cfg.dropout_rate > 0.0:
            if rng is None:
                raise ValueError("predict_noise: train_mode dropout needs an rng")
            keep = 1.0 - cfg.dropout_rate
            mask = (rng.random(h.shape) < keep) / keep
            h = tc.elementwise_mul(h, Tensor(mask))
    return tc.reshape(h, (cfg.image_extent, cfg.image_extent))
