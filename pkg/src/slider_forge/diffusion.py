"""Minimal conditional denoising diffusion model.

Operates directly in pixel space on small tensors in [-1, 1]. The noise
schedule stores *cumulative* noise fractions: at timestep ``t`` the noised
sample is ``sqrt(1 - level[t]) * x0 + sqrt(level[t]) * eps``, so level 0
means clean data and level 1 means pure noise.

All tensors are float64 by default; the tolerances in the test suite rely
on double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import Tensor, nn
from torch.nn import functional as F

from .seeding import derive_seed, init_parameters, make_generator

DTYPE = torch.float64

SCHEDULE_KINDS = ("linear", "cosine")


class UnknownConditionError(KeyError):
    """Condition id is not in the model's vocabulary."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep cumulative noise levels.

    levels[t] is the fraction of the sample variance that is noise at
    timestep t; monotone non-decreasing with levels[0] >= 0 and
    levels[T-1] <= 1.
    """

    num_steps: int
    levels: Tensor

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError(f"num_steps must be >= 1, got {self.num_steps}")
        lv = torch.as_tensor(self.levels, dtype=DTYPE)
        if lv.ndim != 1 or lv.numel() != self.num_steps:
            raise ValueError("levels must be a 1-D sequence of length num_steps")
        if lv[0] < 0 or lv[-1] > 1:
            raise ValueError("levels must lie within [0, 1]")
        if (lv[1:] < lv[:-1]).any():
            raise ValueError("levels must be monotonically non-decreasing")
        object.__setattr__(self, "levels", lv)

    def level(self, t: int | Tensor) -> Tensor:
        tt = torch.as_tensor(t, dtype=torch.long)
        if (tt < 0).any() or (tt >= self.num_steps).any():
            raise ValueError(f"timestep {t} out of range [0, {self.num_steps})")
        return self.levels[tt]


def make_noise_schedule(
    num_steps: int,
    kind: str = "linear",
    start: float = 0.01,
    end: float = 0.99,
) -> NoiseSchedule:
    """Build a noise schedule with the given endpoint levels.

    ``linear`` interpolates the cumulative level evenly; ``cosine`` follows
    a sin^2 ramp (slow noise growth early, fast late). A one-step schedule
    consists of the end level alone.
    """
    if num_steps < 1:
        raise ValueError(f"num_steps must be >= 1, got {num_steps}")
    if kind not in SCHEDULE_KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
    if not (0.0 <= start <= end <= 1.0):
        raise ValueError(f"need 0 <= start <= end <= 1, got start={start}, end={end}")
    if num_steps == 1:
        u = torch.ones(1, dtype=DTYPE)
    else:
        u = torch.linspace(0.0, 1.0, num_steps, dtype=DTYPE)
    if kind == "cosine":
        u = torch.sin(0.5 * math.pi * u) ** 2
    levels = start + (end - start) * u
    return NoiseSchedule(num_steps=num_steps, levels=levels)


def _check_same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def add_noise(x0: Tensor, t: int | Tensor, eps: Tensor, schedule: NoiseSchedule) -> Tensor:
    """Forward-noise a clean sample to timestep t.

    ``t`` may be a scalar or one integer per batch item (then x0 and eps
    must have a leading batch dimension).
    """
    _check_same_shape(x0, eps, "add_noise")
    lvl = schedule.level(t)
    if lvl.ndim > 0:
        if lvl.numel() != x0.shape[0]:
            raise ValueError("per-sample t must match the batch dimension")
        lvl = lvl.view(-1, *([1] * (x0.ndim - 1)))
    return torch.sqrt(1.0 - lvl) * x0 + torch.sqrt(lvl) * eps


def predict_clean(x_t: Tensor, eps_hat: Tensor, level: Tensor, clamp: bool = True) -> Tensor:
    """Invert the forward-noising formula to estimate the clean sample."""
    denom = torch.sqrt(torch.clamp(1.0 - level, min=1e-12))
    x0 = (x_t - torch.sqrt(level) * eps_hat) / denom
    return x0.clamp(-1.0, 1.0) if clamp else x0


def diffusion_loss(eps_true: Tensor, eps_pred: Tensor) -> Tensor:
    """Mean squared error between true and predicted noise."""
    _check_same_shape(eps_true, eps_pred, "diffusion_loss")
    return (eps_true - eps_pred).pow(2).mean()


def _timestep_features(t: Tensor, dim: int, num_steps: int) -> Tensor:
    """Sinusoidal features of the integer timestep, shape (B, dim)."""
    half = dim // 2
    idx = torch.arange(half, dtype=DTYPE)
    freqs = torch.exp(-math.log(max(num_steps, 2)) * idx / max(half - 1, 1))
    ang = t.to(DTYPE)[:, None] * freqs[None, :]
    feats = torch.cat([torch.sin(ang), torch.cos(ang)], dim=1)
    if feats.shape[1] < dim:
        feats = F.pad(feats, (0, dim - feats.shape[1]))
    return feats


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and pretraining knobs for the toy denoiser."""

    image_size: int = 8
    channels: int = 1
    width: int = 16
    blocks: int = 2
    embed_dim: int = 16
    timesteps: int = 20
    schedule_kind: str = "linear"
    vocab: tuple[str, ...] = ("bright", "dark", "neutral")
    seed: int = 0
    pretrain_steps: int = 1200
    pretrain_batch: int = 16
    pretrain_lr: float = 3e-3

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        if len(self.vocab) == 0:
            raise ValueError("vocab must not be empty")
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocab entries must be unique")
        for name, lo in (
            ("image_size", 1), ("channels", 1), ("width", 1),
            ("blocks", 1), ("embed_dim", 2), ("timesteps", 1),
        ):
            if getattr(self, name) < lo:
                raise ValueError(f"{name} must be >= {lo}")
        if self.schedule_kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.schedule_kind!r}")

    def make_schedule(self) -> NoiseSchedule:
        return make_noise_schedule(self.timesteps, self.schedule_kind)


class _CondBlock(nn.Module):
    """Conv block with additive condition and timestep injection."""

    def __init__(self, width: int, embed_dim: int):
        super().__init__()
        self.conv = nn.Conv2d(width, width, 3, padding=1)
        self.cond_proj = nn.Linear(embed_dim, width)
        self.time_proj = nn.Linear(embed_dim, width)

    def forward(self, h: Tensor, e_c: Tensor, e_t: Tensor) -> Tensor:
        inj = self.cond_proj(e_c) + self.time_proj(e_t)
        return h + F.silu(self.conv(h) + inj[:, :, None, None])


class _AttnBlock(nn.Module):
    """Single-head self-attention over spatial positions."""

    def __init__(self, width: int):
        super().__init__()
        self.q_proj = nn.Linear(width, width)
        self.k_proj = nn.Linear(width, width)
        self.v_proj = nn.Linear(width, width)
        self.out_proj = nn.Linear(width, width)
        self.scale = width**-0.5

    def forward(self, h: Tensor) -> Tensor:
        b, c, height, width = h.shape
        seq = h.flatten(2).transpose(1, 2)  # (B, HW, C)
        q, k, v = self.q_proj(seq), self.k_proj(seq), self.v_proj(seq)
        attn = torch.softmax(q @ k.transpose(1, 2) * self.scale, dim=-1)
        out = self.out_proj(attn @ v)
        return h + out.transpose(1, 2).reshape(b, c, height, width)


class Denoiser(nn.Module):
    """Small conditional noise predictor.

    Conditions are string ids resolved through a fixed vocabulary into
    learned embeddings. Condition and timestep embeddings are injected
    additively into every block; a single attention block sits in the
    middle so that attention-projection layers exist as adapter targets.

    Weights are immutable during inference, so concurrent read-only
    sampling calls are safe; training mutates weights and must be
    externally serialized (single writer).
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.vocab = {tok: i for i, tok in enumerate(config.vocab)}
        self.embedding = nn.Embedding(len(config.vocab), config.embed_dim)
        self.stem = nn.Conv2d(config.channels, config.width, 3, padding=1)
        self.blocks = nn.ModuleList(
            _CondBlock(config.width, config.embed_dim) for _ in range(config.blocks)
        )
        self.attn = _AttnBlock(config.width)
        self.head = nn.Conv2d(config.width, config.channels, 3, padding=1)
        self.to(DTYPE)
        init_parameters(self, config.seed)

    def condition_index(self, c: str) -> int:
        try:
            return self.vocab[c]
        except KeyError:
            raise UnknownConditionError(
                f"unknown condition {c!r}; vocabulary: {sorted(self.vocab)}"
            ) from None

    @property
    def sample_shape(self) -> tuple[int, int, int]:
        cfg = self.config
        return (cfg.channels, cfg.image_size, cfg.image_size)

    def forward(self, x: Tensor, cond: Tensor, t: Tensor) -> Tensor:
        e_c = self.embedding(cond)
        e_t = _timestep_features(t, self.config.embed_dim, self.config.timesteps)
        mid = len(self.blocks) // 2
        h = self.stem(x)
        for i, block in enumerate(self.blocks):
            if i == mid:
                h = self.attn(h)
            h = block(h, e_c, e_t)
        return self.head(F.silu(h))


def predict_noise(model: nn.Module, x_t: Tensor, c: str, t: int | Tensor) -> Tensor:
    """Predict the noise content of x_t under condition id ``c``.

    Accepts a single sample (C, H, W) or a batch (B, C, H, W); ``t`` may be
    scalar or per-sample.
    """
    batched = x_t.ndim == 4
    x = x_t if batched else x_t.unsqueeze(0)
    b = x.shape[0]
    idx = torch.full((b,), model.condition_index(c), dtype=torch.long)
    tt = torch.as_tensor(t, dtype=torch.long)
    if tt.ndim == 0:
        tt = tt.expand(b)
    elif tt.numel() != b:
        raise ValueError("per-sample t must match the batch dimension")
    out = model(x, idx, tt)
    if out.shape != x.shape:
        raise RuntimeError("denoiser output shape must equal input shape")
    return out if batched else out.squeeze(0)


def sample_image(
    model: nn.Module,
    schedule: NoiseSchedule,
    c: str,
    seed: int,
    steps: int | None = None,
) -> Tensor:
    """Deterministic ancestral sampling (no noise injected after the
    initial draw). Returns a single sample clamped to [-1, 1]."""
    if steps is None:
        steps = schedule.num_steps
    if not (1 <= steps <= schedule.num_steps):
        raise ValueError(f"steps must be in [1, {schedule.num_steps}], got {steps}")
    ts = torch.linspace(schedule.num_steps - 1, 0, steps).round().long().tolist()
    ts = [t for i, t in enumerate(ts) if i == 0 or t != ts[i - 1]]
    gen = make_generator(seed)
    shape = model.sample_shape
    with torch.no_grad():
        x = torch.randn((1, *shape), generator=gen, dtype=DTYPE)
        for i, t in enumerate(ts):
            lvl = schedule.level(t)
            eps_hat = predict_noise(model, x, c, t)
            x0_hat = predict_clean(x, eps_hat, lvl)
            if i + 1 == len(ts):
                x = x0_hat
            else:
                nxt = schedule.level(ts[i + 1])
                x = torch.sqrt(1.0 - nxt) * x0_hat + torch.sqrt(nxt) * eps_hat
    return x.squeeze(0)


@dataclass
class PretrainResult:
    steps: int
    final_loss: float
    losses: list = field(default_factory=list)


def pretrain_denoiser(
    model: Denoiser,
    schedule: NoiseSchedule,
    dataset,
    steps: int,
    batch_size: int,
    lr: float,
    seed: int,
) -> PretrainResult:
    """Train the base denoiser on noise prediction over a labeled source.

    ``dataset`` must provide ``sample_labeled(n, seed) -> (conditions,
    images)`` with condition ids drawn from the model vocabulary. Fully
    deterministic given the seed.
    """
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    losses: list[float] = []
    model.train()
    for step in range(steps):
        conds, x0 = dataset.sample_labeled(batch_size, derive_seed(seed, "pretrain-data", step))
        idx = torch.tensor([model.condition_index(c) for c in conds], dtype=torch.long)
        gen_t = make_generator(derive_seed(seed, "pretrain-t", step))
        t = torch.randint(0, schedule.num_steps, (batch_size,), generator=gen_t)
        gen_e = make_generator(derive_seed(seed, "pretrain-eps", step))
        eps = torch.randn(x0.shape, generator=gen_e, dtype=DTYPE)
        x_t = add_noise(x0, t, eps, schedule)
        loss = diffusion_loss(eps, model(x_t, idx, t))
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))
    model.eval()
    final = losses[-1] if losses else float("nan")
    return PretrainResult(steps=steps, final_loss=final, losses=losses)
