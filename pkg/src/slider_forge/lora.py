"""Low-rank adapter algebra: init, delta, merge, stacking, sweeps.

An adapter stores one factor pair per target layer: ``down`` (d x r) and
``up`` (r x k), whose product is the d x k weight delta. Merging adds
``scale * down @ up`` onto the frozen base weight; stacks sum the scaled
deltas of several adapters. Factor summation always runs in a canonical
(name-sorted) order so that merged weights are bitwise independent of
stack order.

Adapters are immutable after training; apply_stack produces a new model
view and never mutates shared state, so merged views are safe for
concurrent inference.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import torch
from torch import Tensor, nn
from torch.nn import functional as F

from .diffusion import DTYPE, NoiseSchedule, sample_image
from .seeding import make_generator

DEFAULT_TARGET_SELECTOR = ("cond_proj", "attn")


class UntargetedLayerError(KeyError):
    """Layer is not targeted by this adapter."""


class FactorPair(NamedTuple):
    down: Tensor  # (d, r)
    up: Tensor  # (r, k)


@dataclass
class LoRAAdapter:
    """A named slider: per-layer low-rank factors plus metadata."""

    name: str
    rank: int
    factors: dict[str, FactorPair]
    default_scale: float = 1.0
    concept: object | None = None

    def layer_names(self) -> list[str]:
        return sorted(self.factors)

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layer_names():
            pair = self.factors[layer]
            out.extend([pair.down, pair.up])
        return out

    def requires_grad_(self, flag: bool = True) -> "LoRAAdapter":
        for p in self.parameters():
            p.requires_grad_(flag)
        return self


@dataclass
class AdapterStack:
    """Ordered adapters with per-adapter scales.

    Duplicate adapter names are rejected (the UI addresses sliders by
    name); tests may pass ``allow_duplicate_names=True`` to probe scale
    additivity.
    """

    entries: list[tuple[LoRAAdapter, float]] = field(default_factory=list)
    allow_duplicate_names: bool = False

    def __post_init__(self):
        names = [a.name for a, _ in self.entries]
        if not self.allow_duplicate_names and len(set(names)) != len(names):
            raise ValueError(f"duplicate adapter names in stack: {names}")
        for _, scale in self.entries:
            if not math.isfinite(scale):
                raise ValueError("adapter scales must be finite")


def select_target_layers(model: nn.Module, selector) -> dict[str, nn.Linear]:
    """Linear submodules whose qualified name contains any selector token."""
    if isinstance(selector, str):
        selector = (selector,)
    patterns = tuple(selector)
    matches = {
        name: mod
        for name, mod in model.named_modules()
        if isinstance(mod, nn.Linear) and any(p in name for p in patterns)
    }
    if not matches:
        raise ValueError(f"selector {patterns!r} matches no linear layers")
    return matches


def init_adapter(
    name: str,
    base_model: nn.Module,
    target_layer_selector=DEFAULT_TARGET_SELECTOR,
    rank: int = 4,
    seed: int = 0,
    default_scale: float = 1.0,
    concept=None,
) -> LoRAAdapter:
    """Create a zero-delta adapter for the selected layers.

    The up factor starts at zero so a fresh adapter is a provable no-op;
    the down factor is seeded Gaussian with std 1/rank.
    """
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    layers = select_target_layers(base_model, target_layer_selector)
    gen = make_generator(seed)
    factors: dict[str, FactorPair] = {}
    for layer_name in sorted(layers):
        weight = layers[layer_name].weight
        d, k = weight.shape
        if rank > min(d, k):
            raise ValueError(
                f"rank {rank} exceeds min(d, k)={min(d, k)} for layer {layer_name!r}"
            )
        down = torch.randn((d, rank), generator=gen, dtype=weight.dtype) / rank
        up = torch.zeros((rank, k), dtype=weight.dtype)
        factors[layer_name] = FactorPair(down=down, up=up)
    return LoRAAdapter(
        name=name, rank=rank, factors=factors,
        default_scale=default_scale, concept=concept,
    )


def delta_weight(adapter: LoRAAdapter, layer: str) -> Tensor:
    """Weight delta for one layer: the (d x r) @ (r x k) factor product."""
    try:
        pair = adapter.factors[layer]
    except KeyError:
        raise UntargetedLayerError(
            f"adapter {adapter.name!r} does not target layer {layer!r}"
        ) from None
    return pair.down @ pair.up


def merge(base_weight: Tensor, adapter: LoRAAdapter, layer: str, scale: float) -> Tensor:
    """Merged weight: base + scale * delta. Bitwise identity at scale 0."""
    delta = delta_weight(adapter, layer)
    if base_weight.shape != delta.shape:
        raise ValueError(
            f"base weight shape {tuple(base_weight.shape)} does not match adapter "
            f"factors {tuple(delta.shape)} for layer {layer!r}"
        )
    if scale == 0:
        return base_weight.clone()
    return base_weight + scale * delta


def _as_entries(stack) -> list[tuple[LoRAAdapter, float]]:
    if isinstance(stack, AdapterStack):
        return list(stack.entries)
    return AdapterStack(entries=list(stack)).entries


def apply_stack(base_model: nn.Module, stack) -> nn.Module:
    """Return a copy of the model with every targeted weight merged.

    Deltas are accumulated per layer in adapter-name order, which makes
    the merged weights independent of the order the stack was given in.
    The base model is never modified.
    """
    entries = _as_entries(stack)
    merged = copy.deepcopy(base_model)
    layer_map = dict(merged.named_modules())
    for adapter, _ in entries:
        for layer_name, pair in adapter.factors.items():
            mod = layer_map.get(layer_name)
            if not isinstance(mod, nn.Linear):
                raise ValueError(
                    f"adapter {adapter.name!r} targets layer {layer_name!r} "
                    "which is not a linear layer of this model"
                )
            if mod.weight.shape != (pair.down.shape[0], pair.up.shape[1]):
                raise ValueError(
                    f"adapter {adapter.name!r} factors do not fit layer "
                    f"{layer_name!r} of shape {tuple(mod.weight.shape)}"
                )
    totals: dict[str, Tensor] = {}
    for adapter, scale in sorted(entries, key=lambda e: e[0].name):
        if scale == 0:
            continue
        for layer_name, pair in adapter.factors.items():
            delta = scale * (pair.down @ pair.up)
            totals[layer_name] = totals[layer_name] + delta if layer_name in totals else delta
    with torch.no_grad():
        for layer_name, total in totals.items():
            layer_map[layer_name].weight += total
    return merged


class ScaleBox:
    """Mutable scale shared between a trainer and injected layers, so the
    injection strength can change between steps without rebuilding."""

    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def __float__(self) -> float:
        return self.value


class LoRALinear(nn.Module):
    """Runtime two-path linear: frozen base plus scaled low-rank bypasses.

    Shares factor tensors with the owning adapters so gradient updates on
    the adapter are reflected immediately.
    """

    def __init__(self, base: nn.Linear, routes: list[tuple[FactorPair, object]]):
        super().__init__()
        self.weight = base.weight
        self.bias = base.bias
        self.weight.requires_grad_(False)
        if self.bias is not None:
            self.bias.requires_grad_(False)
        self._routes = routes

    def forward(self, x: Tensor) -> Tensor:
        y = F.linear(x, self.weight, self.bias)
        for pair, scale in self._routes:
            y = y + float(scale) * ((x @ pair.up.T) @ pair.down.T)
        return y


def attach_adapters(base_model: nn.Module, stack) -> nn.Module:
    """Build a trainable view of the model with adapters injected at
    runtime (unmerged). Base weights are frozen; only the shared factor
    tensors carry gradients. Scales may be ScaleBox handles."""
    if isinstance(stack, AdapterStack):
        entries = list(stack.entries)
    else:
        entries = list(stack)
        names = [a.name for a, _ in entries]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate adapter names: {names}")
    view = copy.deepcopy(base_model)
    for p in view.parameters():
        p.requires_grad_(False)
    routes: dict[str, list[tuple[FactorPair, object]]] = {}
    for adapter, scale in sorted(entries, key=lambda e: e[0].name):
        for layer_name, pair in adapter.factors.items():
            routes.setdefault(layer_name, []).append((pair, scale))
    modules = dict(view.named_modules())
    for layer_name, layer_routes in routes.items():
        mod = modules.get(layer_name)
        if not isinstance(mod, nn.Linear):
            raise ValueError(f"cannot inject adapter into layer {layer_name!r}")
        parent_name, _, child = layer_name.rpartition(".")
        parent = modules[parent_name] if parent_name else view
        setattr(parent, child, LoRALinear(mod, layer_routes))
    return view


def scale_sweep(
    base_model: nn.Module,
    adapter: LoRAAdapter,
    alphas,
    c: str,
    seed: int,
    schedule: NoiseSchedule,
    steps: int | None = None,
) -> list[Tensor]:
    """One sample per scale, all from the same seed; scale 0 reproduces
    the base model's sample exactly."""
    alphas = list(alphas)
    if not alphas:
        raise ValueError("alpha list must not be empty")
    out = []
    for alpha in alphas:
        model = apply_stack(base_model, [(adapter, float(alpha))])
        out.append(sample_image(model, schedule, c, seed, steps))
    return out
