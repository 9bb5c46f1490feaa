"""Slider training orchestration.

Per step: draw a data batch, forward-noise it, build the frozen-base
guidance target, update the discriminator on real vs one-step previews
(when enabled), then update the adapter factors on the dynamically
weighted total objective. Everything is seeded per step, so two runs from
the same config produce bit-identical adapters and histories.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import torch

from .checkpoint import SliderCheckpoint
from .diffusion import (
    DTYPE,
    Denoiser,
    ModelConfig,
    add_noise,
    predict_clean,
    predict_noise,
    pretrain_denoiser,
    sample_image,
)
from .guidance import ConceptTriplet, guided_target, triplet_loss
from .lora import DEFAULT_TARGET_SELECTOR, ScaleBox, attach_adapters, init_adapter
from .seeding import derive_seed, make_generator
from .supervision import (
    Discriminator,
    discriminator_loss,
    generator_adversarial_loss,
    make_feature_extractor,
    make_real_source,
    perceptual_loss,
    sample_real_batch,
)


class TrainingDivergedError(RuntimeError):
    """A loss went non-finite; carries the offending step index."""

    def __init__(self, step: int, message: str):
        super().__init__(f"training diverged at step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class LossWeightSchedule:
    """Sigmoid crossover between perceptual and triplet emphasis.

    ``switch_step`` is the midpoint; ``steepness`` controls the speed of
    the transition. ``adversarial_weight`` is a fixed extra coefficient
    (0 recovers the two-term objective exactly).
    """

    switch_step: int
    steepness: float
    adversarial_weight: float = 0.1

    def __post_init__(self):
        if self.switch_step < 1:
            raise ValueError(f"switch_step must be >= 1, got {self.switch_step}")
        if not (self.steepness > 0):
            raise ValueError(f"steepness must be > 0, got {self.steepness}")
        if self.adversarial_weight < 0:
            raise ValueError("adversarial_weight must be >= 0")


def loss_weights(t: int, schedule: LossWeightSchedule) -> tuple[float, float]:
    """(perceptual weight, triplet weight) at training step t; sums to 1."""
    if t < 0:
        raise ValueError(f"step must be >= 0, got {t}")
    z = schedule.steepness * (t - schedule.switch_step)
    if z >= 0:
        e = math.exp(-z)
        lam_perp = e / (1.0 + e)
    else:
        lam_perp = 1.0 / (1.0 + math.exp(z))
    return lam_perp, 1.0 - lam_perp


def total_loss(l_triplet, l_perp, l_adv, t: int, schedule: LossWeightSchedule):
    """Weighted objective: scheduled triplet/perceptual plus fixed-weight
    adversarial term."""
    for name, value in (("triplet", l_triplet), ("perceptual", l_perp), ("adversarial", l_adv)):
        v = float(value.detach()) if hasattr(value, "detach") else float(value)
        if not math.isfinite(v):
            raise ValueError(f"non-finite {name} loss: {v}")
    lam_perp, lam_triplet = loss_weights(t, schedule)
    return lam_triplet * l_triplet + lam_perp * l_perp + schedule.adversarial_weight * l_adv


@dataclass(frozen=True)
class TrainConfig:
    """Complete recipe for one slider training run."""

    slider_name: str = "brightness"
    triplet: ConceptTriplet = field(
        default_factory=lambda: ConceptTriplet("bright", "dark", "neutral")
    )
    model: ModelConfig = field(default_factory=ModelConfig)
    weight_schedule: LossWeightSchedule = field(
        default_factory=lambda: LossWeightSchedule(switch_step=100, steepness=0.05)
    )
    steps: int = 800
    batch_size: int = 8
    lr_adapter: float = 2e-3
    lr_discriminator: float = 1e-4
    seed: int = 0
    eta: float = 0.5
    train_scales: tuple[float, ...] = (-2.0, -1.0, 1.0, 2.0)
    rank: int = 4
    alpha_default: float = 1.0
    target_layers: tuple[str, ...] = DEFAULT_TARGET_SELECTOR
    use_adversarial: bool = True
    use_perceptual: bool = True
    grad_clip: float = 1.0
    eval_every: int = 0
    extractor_spec: dict = field(
        default_factory=lambda: {"extractor_id": "random-conv", "width": 8, "levels": 2, "seed": 7}
    )
    source_spec: dict = field(
        default_factory=lambda: {
            "kind": "brightness-world",
            "levels": {"bright": 0.6, "dark": -0.6, "neutral": 0.0},
            "texture": 0.25,
        }
    )
    disc_width: int = 16
    disc_seed: int = 1
    disc_spectral_norm: bool = False
    config_snapshot: dict = field(default_factory=dict)
    config_hash: str = ""
    model_hash: str = ""

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for name in ("lr_adapter", "lr_discriminator"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be > 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if not self.train_scales:
            raise ValueError("train_scales must not be empty")
        for sc in self.train_scales:
            if sc == 0 or not math.isfinite(sc):
                raise ValueError("train_scales entries must be finite and nonzero")
        if not (self.grad_clip > 0):
            raise ValueError("grad_clip must be > 0")


@dataclass
class StepRecord:
    step: int
    triplet: float
    perceptual: float | None
    adversarial: float | None
    discriminator: float | None
    total: float
    lambda_perp: float
    lambda_triplet: float
    lambda_adv: float
    preview_brightness: float
    train_scale: float = 1.0
    sample_brightness: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(**d)


class TrainHistory:
    """Per-step records with a monotone step index."""

    FIELDS = [
        "step", "triplet", "perceptual", "adversarial", "discriminator",
        "total", "lambda_perp", "lambda_triplet", "lambda_adv",
        "preview_brightness", "train_scale", "sample_brightness",
    ]

    def __init__(self, records: list[StepRecord] | None = None):
        self.records: list[StepRecord] = []
        for rec in records or []:
            self.append(rec)

    def append(self, record: StepRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ValueError("history step index must be strictly increasing")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def to_dicts(self) -> list[dict]:
        return [r.to_dict() for r in self.records]

    def to_delimited(self, sep: str = "\t") -> str:
        """Render as a delimited text table; absent entries are blank."""
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter=sep, lineterminator="\n")
        writer.writerow(self.FIELDS)
        for rec in self.records:
            row = rec.to_dict()
            writer.writerow(["" if row[f] is None else repr(row[f]) if isinstance(row[f], float) else row[f] for f in self.FIELDS])
        return buf.getvalue()

    def write(self, path, sep: str = "\t") -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_delimited(sep))


class BatchSeeds(NamedTuple):
    data: int
    timesteps: int
    noise: int
    real: int
    scale: int


def batch_seeds_for(seed: int, step: int) -> BatchSeeds:
    return BatchSeeds(
        data=derive_seed(seed, "data", step),
        timesteps=derive_seed(seed, "timesteps", step),
        noise=derive_seed(seed, "noise", step),
        real=derive_seed(seed, "real", step),
        scale=derive_seed(seed, "scale", step),
    )


@dataclass
class TrainerState:
    config: TrainConfig
    base_model: Denoiser
    adapted_model: torch.nn.Module
    adapter: object
    schedule: object
    source: object
    phi: object
    discriminator: Discriminator
    g_opt: torch.optim.Optimizer
    d_opt: torch.optim.Optimizer
    history: TrainHistory
    scale_box: ScaleBox = field(default_factory=ScaleBox)
    step: int = 0


def prepare_base_model(config: TrainConfig) -> Denoiser:
    """Deterministically build (and, when the source is labeled, pretrain)
    the frozen base model for this config."""
    model = Denoiser(config.model)
    source = build_source(config)
    if config.model.pretrain_steps > 0 and hasattr(source, "sample_labeled"):
        schedule = config.model.make_schedule()
        pretrain_denoiser(
            model,
            schedule,
            source,
            steps=config.model.pretrain_steps,
            batch_size=config.model.pretrain_batch,
            lr=config.model.pretrain_lr,
            seed=derive_seed(config.model.seed, "pretrain"),
        )
    for p in model.parameters():
        p.requires_grad_(False)
    model.eval()
    return model


def build_source(config: TrainConfig):
    spec = dict(config.source_spec)
    kind = spec.pop("kind")
    return make_real_source(
        kind,
        channels=config.model.channels,
        image_size=config.model.image_size,
        **spec,
    )


def build_extractor(config: TrainConfig):
    spec = dict(config.extractor_spec)
    extractor_id = spec.pop("extractor_id")
    return make_feature_extractor(extractor_id, channels=config.model.channels, **spec)


def init_trainer(config: TrainConfig, base_model: Denoiser | None = None) -> TrainerState:
    if base_model is None:
        base_model = prepare_base_model(config)
    else:
        for p in base_model.parameters():
            p.requires_grad_(False)
        base_model.eval()
    adapter = init_adapter(
        config.slider_name,
        base_model,
        config.target_layers,
        rank=config.rank,
        seed=derive_seed(config.seed, "adapter-init"),
        default_scale=config.alpha_default,
        concept=config.triplet,
    ).requires_grad_(True)
    scale_box = ScaleBox(1.0)
    adapted = attach_adapters(base_model, [(adapter, scale_box)])
    disc = Discriminator(
        channels=config.model.channels,
        width=config.disc_width,
        spectral_norm=config.disc_spectral_norm,
        seed=derive_seed(config.disc_seed, "discriminator"),
    )
    return TrainerState(
        config=config,
        base_model=base_model,
        adapted_model=adapted,
        adapter=adapter,
        schedule=config.model.make_schedule(),
        source=build_source(config),
        phi=build_extractor(config),
        discriminator=disc,
        g_opt=torch.optim.Adam(adapter.parameters(), lr=config.lr_adapter),
        d_opt=torch.optim.Adam(disc.parameters(), lr=config.lr_discriminator),
        history=TrainHistory(),
        scale_box=scale_box,
    )


def train_step(state: TrainerState, batch_seeds: BatchSeeds) -> StepRecord:
    """One discriminator update (when enabled) followed by one adapter
    update on the weighted total loss. Appends and returns the record."""
    cfg = state.config
    step = state.step
    n = cfg.batch_size
    triplet = cfg.triplet

    scales = cfg.train_scales
    if len(scales) == 1:
        train_scale = scales[0]
    else:
        gen_s = make_generator(batch_seeds.scale)
        train_scale = scales[int(torch.randint(0, len(scales), (1,), generator=gen_s))]
    state.scale_box.value = float(train_scale)

    x0 = sample_real_batch(state.source, n, batch_seeds.data)
    gen_t = make_generator(batch_seeds.timesteps)
    t = torch.randint(0, state.schedule.num_steps, (n,), generator=gen_t)
    gen_e = make_generator(batch_seeds.noise)
    eps = torch.randn(x0.shape, generator=gen_e, dtype=DTYPE)
    x_t = add_noise(x0, t, eps, state.schedule)
    levels = state.schedule.level(t).view(-1, 1, 1, 1)

    target = guided_target(state.base_model, x_t, triplet, t, train_scale * cfg.eta)
    with torch.no_grad():
        eps_base = predict_noise(state.base_model, x_t, triplet.target, t)
        preview_base = predict_clean(x_t, eps_base, levels)

    eps_pred = predict_noise(state.adapted_model, x_t, triplet.target, t)
    l_triplet = triplet_loss(eps_pred, target)
    preview = predict_clean(x_t, eps_pred, levels)

    l_adv_value = None
    d_loss_value = None
    l_adv = torch.zeros((), dtype=DTYPE)
    if cfg.use_adversarial:
        real = sample_real_batch(state.source, n, batch_seeds.real)
        d_loss = discriminator_loss(state.discriminator, real, preview.detach())
        state.d_opt.zero_grad()
        d_loss.backward()
        state.d_opt.step()
        d_loss_value = float(d_loss.detach())
        l_adv = generator_adversarial_loss(state.discriminator, preview)
        l_adv_value = float(l_adv.detach())

    l_perp_value = None
    l_perp = torch.zeros((), dtype=DTYPE)
    if cfg.use_perceptual:
        l_perp = perceptual_loss(state.phi, preview, preview_base)
        l_perp_value = float(l_perp.detach())

    for name, value in (
        ("triplet", float(l_triplet.detach())),
        ("perceptual", float(l_perp.detach())),
        ("adversarial", float(l_adv.detach())),
        ("discriminator", d_loss_value if d_loss_value is not None else 0.0),
    ):
        if not math.isfinite(value):
            raise TrainingDivergedError(step, f"{name} loss is {value}")

    loss = total_loss(l_triplet, l_perp, l_adv, step, cfg.weight_schedule)
    loss_value = float(loss.detach())
    if not math.isfinite(loss_value):
        raise TrainingDivergedError(step, f"total loss is {loss_value}")
    state.g_opt.zero_grad()
    loss.backward()
    torch.nn.utils.clip_grad_norm_(state.adapter.parameters(), cfg.grad_clip)
    state.g_opt.step()

    sample_brightness = None
    if cfg.eval_every and (step + 1) % cfg.eval_every == 0:
        state.scale_box.value = 1.0
        probe = sample_image(
            state.adapted_model, state.schedule, triplet.target,
            seed=derive_seed(cfg.seed, "probe"), steps=min(8, state.schedule.num_steps),
        )
        sample_brightness = float(probe.mean())
        state.scale_box.value = float(train_scale)

    lam_perp, lam_triplet = loss_weights(step, cfg.weight_schedule)
    record = StepRecord(
        step=step,
        triplet=float(l_triplet.detach()),
        perceptual=l_perp_value,
        adversarial=l_adv_value,
        discriminator=d_loss_value,
        total=loss_value,
        lambda_perp=lam_perp,
        lambda_triplet=lam_triplet,
        lambda_adv=cfg.weight_schedule.adversarial_weight,
        preview_brightness=float(preview.detach().mean()),
        train_scale=float(train_scale),
        sample_brightness=sample_brightness,
    )
    state.history.append(record)
    state.step += 1
    return record


def run_training(
    config: TrainConfig, base_model: Denoiser | None = None
) -> tuple[SliderCheckpoint, TrainerState]:
    """Train a slider and package it; also returns the final trainer state
    (the evaluation harness reuses the trained discriminator)."""
    state = init_trainer(config, base_model)
    for step in range(config.steps):
        train_step(state, batch_seeds_for(config.seed, step))
    checkpoint = SliderCheckpoint.from_adapter(
        state.adapter,
        layer_selector=list(config.target_layers),
        config=dict(config.config_snapshot),
        config_hash=config.config_hash,
        model_hash=config.model_hash,
        history=state.history.to_dicts(),
        optimizer_info={
            "name": "adam",
            "lr_adapter": config.lr_adapter,
            "lr_discriminator": config.lr_discriminator,
            "grad_clip": config.grad_clip,
        },
    )
    return checkpoint, state


def train_slider(config: TrainConfig, base_model: Denoiser | None = None) -> SliderCheckpoint:
    """Train a slider from config; the base model is left untouched."""
    return run_training(config, base_model)[0]
