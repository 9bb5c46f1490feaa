"""Realism signals: perceptual loss over a pluggable feature extractor
and adversarial training against a small binary discriminator.

Feature extractors are fixed (never trained); the desk-scale default is a
frozen randomly initialized conv stack, with an identity extractor for
exact-value tests. Real-image sources are pluggable too: synthetic
distributions for offline determinism, or a flat directory of images.
"""

from __future__ import annotations

import math
from pathlib import Path

import torch
from torch import Tensor, nn
from torch.nn import functional as F

from .diffusion import DTYPE
from .seeding import derive_seed, init_parameters, make_generator


# ---------------------------------------------------------------------------
# feature extractors


class IdentityFeatures:
    """Feature map is the image itself; useful for exact-value checks."""

    identifier = "identity"

    def __call__(self, batch: Tensor) -> list[Tensor]:
        return [batch]


class RandomConvFeatures:
    """Frozen, seeded conv stack; returns one feature map per level.

    tanh activations keep feature magnitudes bounded so loss scales stay
    comparable across configs.
    """

    def __init__(self, channels: int = 1, width: int = 8, levels: int = 2, seed: int = 7):
        if levels < 1:
            raise ValueError("levels must be >= 1")
        self.identifier = f"random-conv-w{width}-l{levels}-s{seed}"
        convs = []
        c_in = channels
        for i in range(levels):
            stride = 1 if i == 0 else 2
            convs.append(nn.Conv2d(c_in, width, 3, stride=stride, padding=1))
            c_in = width
        self._net = nn.ModuleList(convs).to(DTYPE)
        init_parameters(self._net, seed)
        for p in self._net.parameters():
            p.requires_grad_(False)

    def __call__(self, batch: Tensor) -> list[Tensor]:
        feats = []
        h = batch
        for conv in self._net:
            h = torch.tanh(conv(h))
            feats.append(h)
        return feats


def make_feature_extractor(
    extractor_id: str, channels: int = 1, width: int = 8, levels: int = 2, seed: int = 7
):
    if extractor_id == "identity":
        return IdentityFeatures()
    if extractor_id == "random-conv":
        return RandomConvFeatures(channels=channels, width=width, levels=levels, seed=seed)
    raise ValueError(f"unknown feature extractor {extractor_id!r}")


# ---------------------------------------------------------------------------
# losses


def perceptual_loss(phi, generated: Tensor, real: Tensor) -> Tensor:
    """Mean over the batch of the squared feature distance, summed over
    all feature levels. Gradients flow into ``generated`` only."""
    if generated.shape[0] != real.shape[0]:
        raise ValueError(
            f"batch length mismatch: {generated.shape[0]} vs {real.shape[0]}"
        )
    if generated.shape != real.shape:
        raise ValueError(
            f"shape mismatch {tuple(generated.shape)} vs {tuple(real.shape)}"
        )
    if generated.shape[0] == 0:
        raise ValueError("empty batch")
    feats_gen = phi(generated)
    with torch.no_grad():
        feats_real = phi(real)
    per_item = torch.zeros(generated.shape[0], dtype=generated.dtype)
    for fg, fr in zip(feats_gen, feats_real):
        per_item = per_item + (fg - fr).flatten(1).pow(2).sum(dim=1)
    return per_item.mean()


def discriminator_loss(disc: nn.Module, real: Tensor, fake: Tensor) -> Tensor:
    """Binary cross-entropy with labels real -> 1, fake -> 0.

    The fake batch is detached here so no gradient reaches the generator.
    """
    if real.shape[0] == 0 or fake.shape[0] == 0:
        raise ValueError("empty batch")
    logits_real = disc(real)
    logits_fake = disc(fake.detach())
    loss_real = F.binary_cross_entropy_with_logits(
        logits_real, torch.ones_like(logits_real)
    )
    loss_fake = F.binary_cross_entropy_with_logits(
        logits_fake, torch.zeros_like(logits_fake)
    )
    return 0.5 * (loss_real + loss_fake)


def generator_adversarial_loss(disc: nn.Module, fake: Tensor) -> Tensor:
    """Non-saturating generator loss: -mean log sigmoid(D(fake))."""
    if fake.shape[0] == 0:
        raise ValueError("empty batch")
    return F.softplus(-disc(fake)).mean()


# ---------------------------------------------------------------------------
# discriminator


class Discriminator(nn.Module):
    """3-block strided conv classifier with leaky activations.

    Emits one real-valued logit per image. Spectral normalization is
    available behind a flag; off by default. Training has single-writer
    semantics; read-only scoring is safe concurrently between updates.
    """

    def __init__(
        self,
        channels: int = 1,
        width: int = 16,
        spectral_norm: bool = False,
        seed: int = 0,
    ):
        super().__init__()
        widths = [width, 2 * width, 4 * width]
        convs = []
        c_in = channels
        for w in widths:
            convs.append(nn.Conv2d(c_in, w, 3, stride=2, padding=1))
            c_in = w
        self.convs = nn.ModuleList(convs)
        self.fc = nn.Linear(widths[-1], 1)
        self.to(DTYPE)
        init_parameters(self, seed)
        if spectral_norm:
            with torch.random.fork_rng():
                torch.manual_seed(derive_seed(seed, "spectral-norm"))
                for i, conv in enumerate(self.convs):
                    self.convs[i] = nn.utils.parametrizations.spectral_norm(conv)

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
        h = F.adaptive_avg_pool2d(h, 1).flatten(1)
        return self.fc(h).squeeze(-1)


# ---------------------------------------------------------------------------
# real image sources


def _blob_images(
    n: int, channels: int, size: int, base_levels: Tensor, texture: float, gen
) -> Tensor:
    """Smooth random blob textures around per-image base levels."""
    blobs = 3
    ys = torch.arange(size, dtype=DTYPE).view(1, 1, size, 1)
    xs = torch.arange(size, dtype=DTYPE).view(1, 1, 1, size)
    cy = torch.rand((n, blobs, 1, 1), generator=gen, dtype=DTYPE) * (size - 1)
    cx = torch.rand((n, blobs, 1, 1), generator=gen, dtype=DTYPE) * (size - 1)
    sig = 1.0 + torch.rand((n, blobs, 1, 1), generator=gen, dtype=DTYPE) * (size / 2.0)
    amp = torch.randn((n, blobs, 1, 1), generator=gen, dtype=DTYPE) * texture
    field = (amp * torch.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sig**2))).sum(dim=1)
    img = base_levels.view(n, 1, 1, 1) + field.unsqueeze(1).expand(n, channels, size, size)
    return img.clamp(-1.0, 1.0)


class GaussianSource:
    """Pixelwise Gaussian images with a fixed mean shift."""

    def __init__(self, channels: int = 1, image_size: int = 8, mean: float = 0.0, std: float = 0.2):
        self.identifier = f"gaussian(mean={mean}, std={std})"
        self.shape = (channels, image_size, image_size)
        self.mean = mean
        self.std = std

    def sample(self, n: int, seed: int) -> Tensor:
        gen = make_generator(seed)
        x = self.mean + self.std * torch.randn((n, *self.shape), generator=gen, dtype=DTYPE)
        return x.clamp(-1.0, 1.0)


class BlobSource:
    """Bright (or dark) smooth blobs around a constant base level."""

    def __init__(
        self,
        channels: int = 1,
        image_size: int = 8,
        brightness: float = 0.5,
        texture: float = 0.25,
    ):
        self.identifier = f"blobs(brightness={brightness})"
        self.channels = channels
        self.image_size = image_size
        self.brightness = brightness
        self.texture = texture

    def sample(self, n: int, seed: int) -> Tensor:
        gen = make_generator(seed)
        levels = torch.full((n,), self.brightness, dtype=DTYPE)
        return _blob_images(n, self.channels, self.image_size, levels, self.texture, gen)


class BrightnessWorldSource:
    """Synthetic world where the concept is mean brightness.

    Each condition id maps to a base brightness level; images are blob
    textures around that level. Unlabeled draws mix conditions uniformly,
    which makes both ends of the concept axis "real" for the
    discriminator. Labeled draws feed base-model pretraining.
    """

    def __init__(
        self,
        levels: dict[str, float],
        channels: int = 1,
        image_size: int = 8,
        texture: float = 0.25,
    ):
        if not levels:
            raise ValueError("levels must not be empty")
        self.identifier = f"brightness-world({sorted(levels)})"
        self.levels = dict(levels)
        self.tokens = sorted(levels)
        self.channels = channels
        self.image_size = image_size
        self.texture = texture

    def _draw(self, n: int, seed: int) -> tuple[list[str], Tensor]:
        gen = make_generator(seed)
        which = torch.randint(0, len(self.tokens), (n,), generator=gen)
        conds = [self.tokens[int(i)] for i in which]
        base = torch.tensor([self.levels[c] for c in conds], dtype=DTYPE)
        imgs = _blob_images(n, self.channels, self.image_size, base, self.texture, gen)
        return conds, imgs

    def sample(self, n: int, seed: int) -> Tensor:
        return self._draw(n, seed)[1]

    def sample_labeled(self, n: int, seed: int) -> tuple[list[str], Tensor]:
        return self._draw(n, seed)


class DirectoryImageSource:
    """Flat folder of images, filename-sorted, decoded to a fixed size."""

    EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

    def __init__(self, path: str, channels: int = 1, image_size: int = 8):
        from PIL import Image

        self.identifier = f"directory({path})"
        self.channels = channels
        self.image_size = image_size
        root = Path(path)
        files = sorted(
            p for p in root.iterdir() if p.suffix.lower() in self.EXTENSIONS
        ) if root.is_dir() else []
        if not files:
            raise ValueError(f"no images found under {path!r}")
        mode = "L" if channels == 1 else "RGB"
        stack = []
        for f in files:
            img = Image.open(f).convert(mode).resize((image_size, image_size))
            arr = torch.frombuffer(bytearray(img.tobytes()), dtype=torch.uint8)
            arr = arr.to(DTYPE).view(image_size, image_size, channels)
            stack.append(arr.permute(2, 0, 1) / 127.5 - 1.0)
        self._images = torch.stack(stack)

    def sample(self, n: int, seed: int) -> Tensor:
        gen = make_generator(seed)
        idx = torch.randint(0, self._images.shape[0], (n,), generator=gen)
        return self._images[idx].clone()


def sample_real_batch(source, n: int, seed: int) -> Tensor:
    """Draw n real samples; reproducible per seed."""
    if n < 1:
        raise ValueError(f"batch size must be >= 1, got {n}")
    batch = source.sample(n, seed)
    if batch.shape[0] != n:
        raise RuntimeError("source returned a batch of the wrong length")
    return batch


def make_real_source(kind: str, *, channels: int = 1, image_size: int = 8, **params):
    """Build a real-image source from its config spec."""
    if kind == "gaussian":
        return GaussianSource(channels=channels, image_size=image_size, **params)
    if kind == "blobs":
        return BlobSource(channels=channels, image_size=image_size, **params)
    if kind == "brightness-world":
        return BrightnessWorldSource(channels=channels, image_size=image_size, **params)
    if kind == "directory":
        return DirectoryImageSource(channels=channels, image_size=image_size, **params)
    raise ValueError(f"unknown real-image source kind {kind!r}")
