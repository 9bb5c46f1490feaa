"""Deterministic seed derivation and parameter initialization.

Every random draw in the package flows through an explicit
``torch.Generator`` so that results are reproducible across process
restarts and independent of the global RNG state.
"""

from __future__ import annotations

import hashlib

import torch
from torch import nn

_MASK63 = (1 << 63) - 1


def derive_seed(*parts) -> int:
    """Mix an arbitrary tuple of labels/ints into a stable 63-bit seed."""
    key = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & _MASK63


def make_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed) & _MASK63)
    return gen


def init_parameters(module: nn.Module, seed: int) -> None:
    """Seeded in-place init: weights ~ N(0, 1/fan_in), biases zero.

    Parameters are visited in sorted-name order so the result depends only
    on the module's parameter names and shapes, not construction order.
    """
    gen = make_generator(seed)
    with torch.no_grad():
        for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
            if p.ndim >= 2:
                fan_in = p.shape[1]
                for d in p.shape[2:]:
                    fan_in *= d
                std = fan_in**-0.5
                p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * std)
            else:
                p.zero_()
