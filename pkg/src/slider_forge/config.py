"""Application config: one YAML file with flat sections.

Sections: model, lora, concept, schedule, supervision, training, eval,
serve. Every key is validated with its section-qualified name; unknown
sections or keys are rejected. Parsing the serialized form of a config
yields an identical config.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .diffusion import SCHEDULE_KINDS, ModelConfig
from .evaluation import EvalSpec, make_embedder
from .guidance import ConceptTriplet
from .supervision import make_feature_extractor
from .training import LossWeightSchedule, TrainConfig

ENV_HOME = "SLIDER_FORGE_HOME"
DEFAULT_CHECKPOINT_DIR = "checkpoints"

_SOURCE_KINDS = ("gaussian", "blobs", "brightness-world", "directory")
_EXTRACTOR_IDS = ("identity", "random-conv")
_EMBEDDER_IDS = ("moment",)


class ConfigError(ValueError):
    """Invalid config; the message names the offending section.key."""

    def __init__(self, key: str | None, message: str):
        self.key = key
        super().__init__(message if key is None else f"{key}: {message}")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _as_int(v, key, lo=None, hi=None) -> int:
    if not _is_int(v):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(key, f"must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(key, f"must be <= {hi}, got {v}")
    return v


def _as_float(v, key, lo=None, lo_open=None) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(key, f"must be finite, got {v}")
    if lo is not None and v < lo:
        raise ConfigError(key, f"must be >= {lo}, got {v}")
    if lo_open is not None and v <= lo_open:
        raise ConfigError(key, f"must be > {lo_open}, got {v}")
    return v


def _as_bool(v, key) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(key, f"expected true/false, got {v!r}")
    return v


def _as_str(v, key, choices=None) -> str:
    if not isinstance(v, str):
        raise ConfigError(key, f"expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(key, f"must be one of {list(choices)}, got {v!r}")
    return v


def _as_str_list(v, key) -> tuple[str, ...]:
    if not isinstance(v, (list, tuple)) or not v or not all(isinstance(s, str) for s in v):
        raise ConfigError(key, f"expected a non-empty list of strings, got {v!r}")
    return tuple(v)


def _as_num_list(v, key, want_int=False) -> tuple:
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(key, f"expected a non-empty list, got {v!r}")
    out = []
    for i, item in enumerate(v):
        if want_int:
            out.append(_as_int(item, f"{key}[{i}]"))
        else:
            out.append(_as_float(item, f"{key}[{i}]"))
    return tuple(out)


def _as_level_map(v, key) -> dict[str, float]:
    if not isinstance(v, dict) or not v:
        raise ConfigError(key, f"expected a mapping of token to number, got {v!r}")
    out = {}
    for tok, val in v.items():
        if not isinstance(tok, str):
            raise ConfigError(key, f"token keys must be strings, got {tok!r}")
        out[tok] = _as_float(val, f"{key}.{tok}")
    return out


@dataclass(frozen=True)
class LoraSection:
    rank: int = 4
    alpha_default: float = 1.0
    target_layers: tuple[str, ...] = ("cond_proj", "attn")


@dataclass(frozen=True)
class ConceptSection:
    name: str = "brightness"
    positive: str = "bright"
    negative: str = "dark"
    target: str = "neutral"


@dataclass(frozen=True)
class ScheduleSection:
    t0: int = 100
    steepness: float = 0.05
    lambda_adv: float = 0.1


@dataclass(frozen=True)
class SupervisionSection:
    adversarial: bool = True
    perceptual: bool = True
    extractor_id: str = "random-conv"
    extractor_width: int = 8
    extractor_levels: int = 2
    extractor_seed: int = 7
    source_kind: str = "brightness-world"
    source_levels: dict = field(
        default_factory=lambda: {"bright": 0.6, "dark": -0.6, "neutral": 0.0}
    )
    source_texture: float = 0.25
    source_brightness: float = 0.5
    source_mean: float = 0.0
    source_std: float = 0.2
    source_path: str = ""
    disc_width: int = 16
    disc_seed: int = 1
    disc_spectral_norm: bool = False


@dataclass(frozen=True)
class TrainingSection:
    steps: int = 800
    batch_size: int = 8
    lr_adapter: float = 2e-3
    lr_discriminator: float = 1e-4
    seed: int = 0
    eta: float = 0.5
    train_scales: tuple[float, ...] = (-2.0, -1.0, 1.0, 2.0)
    grad_clip: float = 1.0
    eval_every: int = 0


@dataclass(frozen=True)
class EvalSection:
    category: str = "Text Guided"
    prompts: tuple[str, ...] = ("neutral",)
    target_texts: tuple[str, ...] | None = None
    alphas: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    seeds: tuple[int, ...] = (0, 1)
    sample_steps: int = 10
    embedder_id: str = "moment"
    embedder_values: dict | None = None


@dataclass(frozen=True)
class ServeSection:
    port: int = 8765
    checkpoint_dir: str | None = None
    alpha_min: float = -3.0
    alpha_max: float = 3.0
    max_steps: int | None = None
    ui_dir: str | None = None


@dataclass(frozen=True)
class AppConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lora: LoraSection = field(default_factory=LoraSection)
    concept: ConceptSection = field(default_factory=ConceptSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    supervision: SupervisionSection = field(default_factory=SupervisionSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    eval: EvalSection = field(default_factory=EvalSection)
    serve: ServeSection = field(default_factory=ServeSection)


_PARSERS = {
    "model": {
        "image_size": lambda v, k: _as_int(v, k, lo=2),
        "channels": lambda v, k: _as_int(v, k, lo=1, hi=4),
        "width": lambda v, k: _as_int(v, k, lo=1),
        "blocks": lambda v, k: _as_int(v, k, lo=1),
        "embed_dim": lambda v, k: _as_int(v, k, lo=2),
        "timesteps": lambda v, k: _as_int(v, k, lo=1),
        "schedule_kind": lambda v, k: _as_str(v, k, SCHEDULE_KINDS),
        "vocab": _as_str_list,
        "seed": lambda v, k: _as_int(v, k),
        "pretrain_steps": lambda v, k: _as_int(v, k, lo=0),
        "pretrain_batch": lambda v, k: _as_int(v, k, lo=1),
        "pretrain_lr": lambda v, k: _as_float(v, k, lo_open=0.0),
    },
    "lora": {
        "rank": lambda v, k: _as_int(v, k, lo=1),
        "alpha_default": _as_float,
        "target_layers": _as_str_list,
    },
    "concept": {
        "name": _as_str,
        "positive": _as_str,
        "negative": _as_str,
        "target": _as_str,
    },
    "schedule": {
        "t0": lambda v, k: _as_int(v, k, lo=1),
        "steepness": lambda v, k: _as_float(v, k, lo_open=0.0),
        "lambda_adv": lambda v, k: _as_float(v, k, lo=0.0),
    },
    "supervision": {
        "adversarial": _as_bool,
        "perceptual": _as_bool,
        "extractor_id": lambda v, k: _as_str(v, k, _EXTRACTOR_IDS),
        "extractor_width": lambda v, k: _as_int(v, k, lo=1),
        "extractor_levels": lambda v, k: _as_int(v, k, lo=1),
        "extractor_seed": lambda v, k: _as_int(v, k),
        "source_kind": lambda v, k: _as_str(v, k, _SOURCE_KINDS),
        "source_levels": _as_level_map,
        "source_texture": lambda v, k: _as_float(v, k, lo=0.0),
        "source_brightness": _as_float,
        "source_mean": _as_float,
        "source_std": lambda v, k: _as_float(v, k, lo=0.0),
        "source_path": _as_str,
        "disc_width": lambda v, k: _as_int(v, k, lo=1),
        "disc_seed": lambda v, k: _as_int(v, k),
        "disc_spectral_norm": _as_bool,
    },
    "training": {
        "steps": lambda v, k: _as_int(v, k, lo=0),
        "batch_size": lambda v, k: _as_int(v, k, lo=1),
        "lr_adapter": lambda v, k: _as_float(v, k, lo_open=0.0),
        "lr_discriminator": lambda v, k: _as_float(v, k, lo_open=0.0),
        "seed": lambda v, k: _as_int(v, k),
        "eta": lambda v, k: _as_float(v, k, lo=0.0),
        "train_scales": _as_num_list,
        "grad_clip": lambda v, k: _as_float(v, k, lo_open=0.0),
        "eval_every": lambda v, k: _as_int(v, k, lo=0),
    },
    "eval": {
        "category": _as_str,
        "prompts": _as_str_list,
        "target_texts": _as_str_list,
        "alphas": _as_num_list,
        "seeds": lambda v, k: _as_num_list(v, k, want_int=True),
        "sample_steps": lambda v, k: _as_int(v, k, lo=1),
        "embedder_id": lambda v, k: _as_str(v, k, _EMBEDDER_IDS),
        "embedder_values": _as_level_map,
    },
    "serve": {
        "port": lambda v, k: _as_int(v, k, lo=1, hi=65535),
        "checkpoint_dir": _as_str,
        "alpha_min": _as_float,
        "alpha_max": _as_float,
        "max_steps": lambda v, k: _as_int(v, k, lo=1),
        "ui_dir": _as_str,
    },
}

_SECTION_TYPES = {
    "model": ModelConfig,
    "lora": LoraSection,
    "concept": ConceptSection,
    "schedule": ScheduleSection,
    "supervision": SupervisionSection,
    "training": TrainingSection,
    "eval": EvalSection,
    "serve": ServeSection,
}


def parse_config(data: dict | None) -> AppConfig:
    """Validate a raw mapping into an AppConfig; unknown keys rejected."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(None, f"config root must be a mapping, got {type(data).__name__}")
    unknown_sections = set(data) - set(_PARSERS)
    if unknown_sections:
        raise ConfigError(sorted(unknown_sections)[0], "unknown section")
    sections = {}
    for section, parsers in _PARSERS.items():
        raw = data.get(section) or {}
        if not isinstance(raw, dict):
            raise ConfigError(section, "section must be a mapping")
        unknown = set(raw) - set(parsers)
        if unknown:
            raise ConfigError(f"{section}.{sorted(unknown)[0]}", "unknown key")
        parsed = {}
        for key, value in raw.items():
            if value is None:
                continue
            parsed[key] = parsers[key](value, f"{section}.{key}")
        try:
            sections[section] = _SECTION_TYPES[section](**parsed)
        except (ValueError, TypeError) as exc:
            raise ConfigError(section, str(exc)) from exc
    cfg = AppConfig(**sections)
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: AppConfig) -> None:
    vocab = set(cfg.model.vocab)
    for key, tok in (
        ("concept.positive", cfg.concept.positive),
        ("concept.negative", cfg.concept.negative),
        ("concept.target", cfg.concept.target),
    ):
        if tok not in vocab:
            raise ConfigError(key, f"{tok!r} is not in model.vocab")
    for i, prompt in enumerate(cfg.eval.prompts):
        if prompt not in vocab:
            raise ConfigError(f"eval.prompts[{i}]", f"{prompt!r} is not in model.vocab")
    if cfg.eval.sample_steps > cfg.model.timesteps:
        raise ConfigError("eval.sample_steps", "exceeds model.timesteps")
    if cfg.serve.max_steps is not None and cfg.serve.max_steps > cfg.model.timesteps:
        raise ConfigError("serve.max_steps", "exceeds model.timesteps")
    if cfg.serve.alpha_min >= cfg.serve.alpha_max:
        raise ConfigError("serve.alpha_min", "must be strictly below serve.alpha_max")
    if cfg.supervision.source_kind == "brightness-world":
        missing = vocab - set(cfg.supervision.source_levels)
        if missing:
            raise ConfigError(
                "supervision.source_levels",
                f"missing levels for vocab tokens {sorted(missing)}",
            )
    if cfg.supervision.source_kind == "directory" and not cfg.supervision.source_path:
        raise ConfigError("supervision.source_path", "required for a directory source")
    anchors = embedder_values_for(cfg)
    for i, text in enumerate(target_texts_for(cfg)):
        if text not in anchors:
            raise ConfigError(
                f"eval.target_texts[{i}]", f"no embedder anchor for {text!r}"
            )


def config_to_dict(cfg: AppConfig) -> dict:
    out = {}
    for section in _PARSERS:
        value = asdict(getattr(cfg, section))
        for k, v in value.items():
            if isinstance(v, tuple):
                value[k] = list(v)
        out[section] = value
    return out


def dump_config(cfg: AppConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)


def load_config(path) -> AppConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(None, f"{path}: {exc}") from exc
    return parse_config(raw)


def config_hash(cfg: AppConfig) -> str:
    payload = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def model_hash(cfg: AppConfig) -> str:
    """Hash of everything that shapes the base model and adapter layout."""
    d = config_to_dict(cfg)
    subset = {
        "model": d["model"],
        "lora": d["lora"],
        "source": {k: v for k, v in d["supervision"].items() if k.startswith("source_")},
    }
    payload = json.dumps(subset, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def source_spec_for(cfg: AppConfig) -> dict:
    sup = cfg.supervision
    kind = sup.source_kind
    if kind == "gaussian":
        return {"kind": kind, "mean": sup.source_mean, "std": sup.source_std}
    if kind == "blobs":
        return {"kind": kind, "brightness": sup.source_brightness, "texture": sup.source_texture}
    if kind == "brightness-world":
        return {"kind": kind, "levels": dict(sup.source_levels), "texture": sup.source_texture}
    return {"kind": kind, "path": sup.source_path}


def extractor_spec_for(cfg: AppConfig) -> dict:
    sup = cfg.supervision
    if sup.extractor_id == "identity":
        return {"extractor_id": "identity"}
    return {
        "extractor_id": sup.extractor_id,
        "width": sup.extractor_width,
        "levels": sup.extractor_levels,
        "seed": sup.extractor_seed,
    }


def embedder_values_for(cfg: AppConfig) -> dict[str, float]:
    """Anchor values for the toy embedder; defaults to the source levels
    normalized to the unit interval."""
    if cfg.eval.embedder_values:
        return dict(cfg.eval.embedder_values)
    levels = cfg.supervision.source_levels or {}
    peak = max((abs(v) for v in levels.values()), default=0.0)
    if peak == 0.0:
        return {tok: 0.0 for tok in levels}
    return {tok: v / peak for tok, v in levels.items()}


def target_texts_for(cfg: AppConfig) -> tuple[str, ...]:
    return cfg.eval.target_texts or (cfg.concept.positive,)


def to_train_config(cfg: AppConfig) -> TrainConfig:
    return TrainConfig(
        slider_name=cfg.concept.name,
        triplet=ConceptTriplet(
            positive=cfg.concept.positive,
            negative=cfg.concept.negative,
            target=cfg.concept.target,
        ),
        model=cfg.model,
        weight_schedule=LossWeightSchedule(
            switch_step=cfg.schedule.t0,
            steepness=cfg.schedule.steepness,
            adversarial_weight=cfg.schedule.lambda_adv,
        ),
        steps=cfg.training.steps,
        batch_size=cfg.training.batch_size,
        lr_adapter=cfg.training.lr_adapter,
        lr_discriminator=cfg.training.lr_discriminator,
        seed=cfg.training.seed,
        eta=cfg.training.eta,
        train_scales=cfg.training.train_scales,
        rank=cfg.lora.rank,
        alpha_default=cfg.lora.alpha_default,
        target_layers=cfg.lora.target_layers,
        use_adversarial=cfg.supervision.adversarial,
        use_perceptual=cfg.supervision.perceptual,
        grad_clip=cfg.training.grad_clip,
        eval_every=cfg.training.eval_every,
        extractor_spec=extractor_spec_for(cfg),
        source_spec=source_spec_for(cfg),
        disc_width=cfg.supervision.disc_width,
        disc_seed=cfg.supervision.disc_seed,
        disc_spectral_norm=cfg.supervision.disc_spectral_norm,
        config_snapshot=config_to_dict(cfg),
        config_hash=config_hash(cfg),
        model_hash=model_hash(cfg),
    )


def make_eval_spec(cfg: AppConfig) -> EvalSpec:
    extractor_spec = extractor_spec_for(cfg)
    extractor_id = extractor_spec.pop("extractor_id")
    return EvalSpec(
        category=cfg.eval.category,
        prompts=cfg.eval.prompts,
        target_texts=target_texts_for(cfg),
        alphas=cfg.eval.alphas,
        seeds=cfg.eval.seeds,
        sample_steps=cfg.eval.sample_steps,
        embedder=make_embedder(cfg.eval.embedder_id, embedder_values_for(cfg)),
        extractor=make_feature_extractor(
            extractor_id, channels=cfg.model.channels, **extractor_spec
        ),
    )


def resolve_checkpoint_dir(cfg: AppConfig) -> Path:
    """Config value wins; otherwise the SLIDER_FORGE_HOME env var
    overrides the built-in default directory."""
    if cfg.serve.checkpoint_dir:
        return Path(cfg.serve.checkpoint_dir)
    env = os.environ.get(ENV_HOME)
    if env:
        return Path(env)
    return Path(DEFAULT_CHECKPOINT_DIR)
