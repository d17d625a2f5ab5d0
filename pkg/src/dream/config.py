"""Flat-text experiment configs: one `section.key = value` per line.

Blank lines and `#` comments are ignored. Unknown and duplicate keys are
errors so typos cannot silently fall back to defaults. `dream.p` accepts
`inf`; lists are comma-separated, with optional surrounding brackets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from .denoiser import DenoiserConfig
from .diffusion import ObjectiveMode
from .errors import ValidationError
from .schedule import SIGMA_MODES, NoiseSchedule, linear_beta_schedule
from .toydata import FAMILIES, UPSAMPLE_MODES, ToyDataConfig

# Keys whose values define the training objective; `compare` requires two
# configs to agree on everything else.
OBJECTIVE_KEYS = ("train.mode", "dream.p", "dream.shared_noise")


def _parse_int(raw: str) -> int:
    try:
        return int(raw, 0)
    except ValueError:
        raise ValidationError(f"expected an integer, got {raw!r}") from None


def _parse_float(raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ValidationError(f"expected a number, got {raw!r}") from None
    if math.isnan(value):
        raise ValidationError("nan is not a valid config value")
    return value


def _parse_bool(raw: str) -> bool:
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    raise ValidationError(f"expected true or false, got {raw!r}")


def _parse_int_list(raw: str) -> tuple[int, ...]:
    inner = raw.strip()
    if inner.startswith("[") and inner.endswith("]"):
        inner = inner[1:-1]
    parts = [p.strip() for p in inner.split(",") if p.strip()]
    if not parts:
        raise ValidationError(f"expected a non-empty integer list, got {raw!r}")
    return tuple(_parse_int(p) for p in parts)


def _parse_str(raw: str) -> str:
    return raw


_SCHEMA = {
    "schedule.beta_start": (_parse_float, 1e-6),
    "schedule.beta_end": (_parse_float, 1e-2),
    "schedule.T": (_parse_int, 2000),
    "schedule.sigma_mode": (_parse_str, "beta"),
    "dream.p": (_parse_float, 1.0),
    "dream.shared_noise": (_parse_bool, True),
    "net.image_extent": (_parse_int, None),  # defaults to data.image_extent
    "net.hidden_widths": (_parse_int_list, (256, 256)),
    "net.time_embed_dim": (_parse_int, 32),
    "net.dropout": (_parse_float, 0.2),
    "data.image_extent": (_parse_int, 8),
    "data.scale": (_parse_int, 4),
    "data.family": (_parse_str, "gaussian_blobs"),
    "data.n_train": (_parse_int, 256),
    "data.n_eval": (_parse_int, 16),
    "data.seed": (_parse_int, 0),
    "data.upsample": (_parse_str, "bilinear"),
    "train.mode": (_parse_str, "standard"),
    "train.iterations": (_parse_int, 1000),
    "train.batch_size": (_parse_int, 4),
    "train.lr": (_parse_float, 1e-4),
    "train.eval_every": (_parse_int, 200),
    "train.seed": (_parse_int, 0),
    "sample.stride": (_parse_int, 1),
    "output.dir": (_parse_str, "out"),
}


@dataclass(frozen=True)
class TrainConfig:
    """A fully validated experiment description plus its raw source text."""

    beta_start: float
    beta_end: float
    steps: int
    sigma_mode: str
    p: float
    shared_noise: bool
    image_extent: int
    hidden_widths: tuple[int, ...]
    time_embed_dim: int
    dropout: float
    scale: int
    family: str
    n_train: int
    n_eval: int
    data_seed: int
    upsample_mode: str
    mode: str
    iterations: int
    batch_size: int
    lr: float
    eval_every: int
    seed: int
    stride: int
    output_dir: str
    raw_text: str

    def schedule(self) -> NoiseSchedule:
        return linear_beta_schedule(self.beta_start, self.beta_end, self.steps, self.sigma_mode)

    def data_config(self) -> ToyDataConfig:
        return ToyDataConfig(
            image_extent=self.image_extent,
            scale=self.scale,
            n_train=self.n_train,
            n_eval=self.n_eval,
            family=self.family,
            seed=self.data_seed,
            upsample_mode=self.upsample_mode,
        )

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            image_extent=self.image_extent,
            hidden_widths=self.hidden_widths,
            time_embed_dim=self.time_embed_dim,
            dropout_rate=self.dropout,
        )

    def objective(self) -> ObjectiveMode:
        if self.mode == "standard":
            return ObjectiveMode.standard()
        if self.mode == "drm":
            return ObjectiveMode.drm(self.shared_noise)
        return ObjectiveMode.dream(self.p, self.shared_noise)

    def equal_except_objective(self, other: "TrainConfig") -> bool:
        skip = {"mode", "p", "shared_noise", "raw_text"}
        for f in fields(TrainConfig):
            if f.name in skip:
                continue
            if getattr(self, f.name) != getattr(other, f.name):
                return False
        return True


def parse_config(text: str) -> TrainConfig:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValidationError(f"config line {lineno}: expected 'section.key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _SCHEMA:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"config line {lineno}: duplicate key {key!r}")
        parser, _ = _SCHEMA[key]
        try:
            values[key] = parser(raw)
        except ValidationError as err:
            raise ValidationError(f"config line {lineno}: {key}: {err}") from None

    def get(key: str):
        if key in values:
            return values[key]
        return _SCHEMA[key][1]

    net_extent = get("net.image_extent")
    data_extent = get("data.image_extent")
    if net_extent is None:
        net_extent = data_extent

    cfg = TrainConfig(
        beta_start=get("schedule.beta_start"),
        beta_end=get("schedule.beta_end"),
        steps=get("schedule.T"),
        sigma_mode=get("schedule.sigma_mode"),
        p=get("dream.p"),
        shared_noise=get("dream.shared_noise"),
        image_extent=data_extent,
        hidden_widths=get("net.hidden_widths"),
        time_embed_dim=get("net.time_embed_dim"),
        dropout=get("net.dropout"),
        scale=get("data.scale"),
        family=get("data.family"),
        n_train=get("data.n_train"),
        n_eval=get("data.n_eval"),
        data_seed=get("data.seed"),
        upsample_mode=get("data.upsample"),
        mode=get("train.mode"),
        iterations=get("train.iterations"),
        batch_size=get("train.batch_size"),
        lr=get("train.lr"),
        eval_every=get("train.eval_every"),
        seed=get("train.seed"),
        stride=get("sample.stride"),
        output_dir=get("output.dir"),
        raw_text=text,
    )
    _validate(cfg, net_extent)
    return cfg


def _validate(cfg: TrainConfig, net_extent: int) -> None:
    def bail(message: str):
        raise ValidationError(message)

    if not 0.0 < cfg.beta_start <= cfg.beta_end < 1.0:
        bail(f"schedule: need 0 < beta_start <= beta_end < 1, got ({cfg.beta_start}, {cfg.beta_end})")
    if cfg.steps < 1:
        bail(f"schedule.T must be >= 1, got {cfg.steps}")
    if cfg.sigma_mode not in SIGMA_MODES:
        bail(f"schedule.sigma_mode must be one of {SIGMA_MODES}, got {cfg.sigma_mode!r}")
    if not (cfg.p >= 0.0 or math.isinf(cfg.p)):
        bail(f"dream.p must be >= 0 or inf, got {cfg.p}")
    if net_extent != cfg.image_extent:
        bail(f"net.image_extent {net_extent} must equal data.image_extent {cfg.image_extent}")
    if not cfg.hidden_widths or any(w < 1 for w in cfg.hidden_widths):
        bail(f"net.hidden_widths must be positive, got {list(cfg.hidden_widths)}")
    if cfg.time_embed_dim < 2 or cfg.time_embed_dim % 2:
        bail(f"net.time_embed_dim must be positive and even, got {cfg.time_embed_dim}")
    if not 0.0 <= cfg.dropout < 1.0:
        bail(f"net.dropout must be in [0,1), got {cfg.dropout}")
    if cfg.image_extent < 1 or cfg.scale < 1 or cfg.image_extent % cfg.scale:
        bail(f"data.image_extent {cfg.image_extent} must be a positive multiple of data.scale {cfg.scale}")
    if cfg.family not in FAMILIES:
        bail(f"data.family must be one of {FAMILIES}, got {cfg.family!r}")
    if cfg.n_train < 1 or cfg.n_eval < 1:
        bail("data.n_train and data.n_eval must be >= 1")
    if cfg.upsample_mode not in UPSAMPLE_MODES:
        bail(f"data.upsample must be one of {UPSAMPLE_MODES}, got {cfg.upsample_mode!r}")
    if cfg.mode not in ("standard", "drm", "dream"):
        bail(f"train.mode must be standard, drm, or dream, got {cfg.mode!r}")
    if cfg.iterations < 0:
        bail(f"train.iterations must be >= 0, got {cfg.iterations}")
    if cfg.batch_size < 1:
        bail(f"train.batch_size must be >= 1, got {cfg.batch_size}")
    if cfg.lr <= 0:
        bail(f"train.lr must be positive, got {cfg.lr}")
    if cfg.eval_every < 1:
        bail(f"train.eval_every must be >= 1, got {cfg.eval_every}")
    if cfg.stride < 1:
        bail(f"sample.stride must be >= 1, got {cfg.stride}")
    if not cfg.output_dir:
        bail("output.dir must not be empty")


def load_config(path: Path) -> TrainConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))
