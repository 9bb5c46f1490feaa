"""Triplet guidance target and the loss that trains a slider against it.

The target composes the frozen base model's noise predictions: the
neutral-condition prediction plus ``eta`` times the difference between
the positive- and negative-condition predictions. The adapted model is
trained to match this target with mean squared error; the target is
always gradient-detached.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .diffusion import predict_noise


@dataclass(frozen=True)
class ConceptTriplet:
    """Positive, negative and neutral condition ids for one slider."""

    positive: str
    negative: str
    target: str

    def __post_init__(self):
        if self.positive == self.negative:
            warnings.warn(
                f"triplet positive and negative conditions are both "
                f"{self.positive!r}; the guidance target degenerates to the "
                "neutral prediction",
                stacklevel=3,
            )

    def as_dict(self) -> dict[str, str]:
        return {"positive": self.positive, "negative": self.negative, "target": self.target}


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance strength for the composed target."""

    eta: float = 1.0

    def __post_init__(self):
        if not torch.isfinite(torch.tensor(self.eta)):
            raise ValueError("eta must be finite")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")


def guided_target(
    frozen_base: nn.Module,
    x_t: Tensor,
    triplet: ConceptTriplet,
    t,
    eta: float,
) -> Tensor:
    """Composed noise-prediction target, detached from the base model."""
    with torch.no_grad():
        eps_neutral = predict_noise(frozen_base, x_t, triplet.target, t)
        if eta == 0 or triplet.positive == triplet.negative:
            return eps_neutral
        eps_pos = predict_noise(frozen_base, x_t, triplet.positive, t)
        eps_neg = predict_noise(frozen_base, x_t, triplet.negative, t)
        return eps_neutral + eta * (eps_pos - eps_neg)


def triplet_loss(eps_pred: Tensor, eps_target: Tensor) -> Tensor:
    """MSE between the adapted prediction and the (constant) target."""
    if eps_pred.shape != eps_target.shape:
        raise ValueError(
            f"shape mismatch {tuple(eps_pred.shape)} vs {tuple(eps_target.shape)}"
        )
    return (eps_pred - eps_target.detach()).pow(2).mean()


def denoising_update_step(eps_pred: Tensor, grad_total_loss: Tensor, eta_step: float) -> Tensor:
    """Diagnostic: additively adjust a prediction by a loss gradient.

    Kept verbatim with a plus sign; the trainer itself performs ordinary
    descent on the adapter parameters instead of using this op.
    """
    if eps_pred.shape != grad_total_loss.shape:
        raise ValueError(
            f"shape mismatch {tuple(eps_pred.shape)} vs {tuple(grad_total_loss.shape)}"
        )
    return eps_pred + eta_step * grad_total_loss
