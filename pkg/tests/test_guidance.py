"""Triplet guidance target, training loss, and the diagnostic update op."""

import warnings

import pytest
import torch

from conftest import StubDenoiser, finite_diff_grad, rel_grad_error
from slider_forge.diffusion import Denoiser, ModelConfig, UnknownConditionError, predict_noise
from slider_forge.guidance import (
    ConceptTriplet,
    GuidanceConfig,
    denoising_update_step,
    guided_target,
    triplet_loss,
)
from slider_forge.lora import attach_adapters, init_adapter


@pytest.fixture()
def stub():
    return StubDenoiser({"neutral": 1.0, "plus": 2.0, "minus": 0.5})


@pytest.fixture()
def triplet():
    return ConceptTriplet(positive="plus", negative="minus", target="neutral")


X = torch.zeros(1, 1, 2, 2, dtype=torch.float64)


class TestGuidedTarget:
    def test_zero_strength_returns_neutral_prediction(self, stub, triplet):
        out = guided_target(stub, X, triplet, 0, eta=0.0)
        assert torch.equal(out, predict_noise(stub, X, "neutral", 0))

    def test_equal_positive_negative_collapses_to_neutral(self, stub):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            degenerate = ConceptTriplet(positive="plus", negative="plus", target="neutral")
        out = guided_target(stub, X, degenerate, 0, eta=3.0)
        assert torch.equal(out, predict_noise(stub, X, "neutral", 0))

    def test_composition_closed_form(self, stub, triplet):
        # oracle: neutral + eta * (plus - minus) evaluated by hand
        expected = 1.0 + 0.5 * (2.0 - 0.5)
        out = guided_target(stub, X, triplet, 0, eta=0.5)
        assert torch.equal(out, torch.full_like(X, expected))
        assert expected == 1.75

    def test_linear_in_eta(self, stub, triplet):
        base = guided_target(stub, X, triplet, 0, eta=0.0)
        d1 = guided_target(stub, X, triplet, 0, eta=1.0) - base
        d2 = guided_target(stub, X, triplet, 0, eta=2.0) - base
        assert float((d2 - 2.0 * d1).abs().max()) < 1e-10

    def test_swapping_concepts_negates_the_delta(self, stub, triplet):
        swapped = ConceptTriplet(
            positive=triplet.negative, negative=triplet.positive, target=triplet.target
        )
        base = guided_target(stub, X, triplet, 0, eta=0.0)
        d = guided_target(stub, X, triplet, 0, eta=0.7) - base
        d_sw = guided_target(stub, X, swapped, 0, eta=0.7) - base
        assert float((d_sw + d).abs().max()) < 1e-10

    def test_unknown_condition_rejected(self, stub):
        bad = ConceptTriplet(positive="plus", negative="minus", target="sepia")
        with pytest.raises(UnknownConditionError):
            guided_target(stub, X, bad, 0, eta=1.0)

    def test_degenerate_triplet_warns_not_rejects(self):
        with pytest.warns(UserWarning, match="degenerates"):
            ConceptTriplet(positive="a", negative="a", target="b")

    def test_no_gradient_reaches_the_frozen_base(self):
        cfg = ModelConfig(image_size=4, width=6, blocks=1, timesteps=6)
        base = Denoiser(cfg)
        trip = ConceptTriplet(positive="bright", negative="dark", target="neutral")
        adapter = init_adapter("g", base, rank=2, seed=0).requires_grad_(True)
        adapted = attach_adapters(base, [(adapter, 1.0)])
        x = torch.randn(1, 1, 4, 4, dtype=torch.float64)
        target = guided_target(base, x, trip, 2, eta=1.0)
        assert not target.requires_grad
        loss = triplet_loss(predict_noise(adapted, x, "neutral", 2), target)
        loss.backward()
        assert all(p.grad is None for p in base.parameters())
        assert any(p.grad is not None for p in adapter.parameters())


class TestTripletLoss:
    def test_zero_when_prediction_matches_target(self):
        x = torch.randn(3, 3, dtype=torch.float64)
        assert float(triplet_loss(x, x.clone())) == 0.0

    def test_mean_squared_difference_closed_form(self):
        # oracle: ((0-2)^2 + 0) / 2
        out = triplet_loss(torch.zeros(2), torch.tensor([2.0, 0.0]))
        assert float(out) == pytest.approx(2.0, abs=1e-15)

    def test_quadratic_homogeneity(self):
        pred = torch.tensor([1.0, -1.0], dtype=torch.float64)
        target = torch.zeros(2, dtype=torch.float64)
        assert float(triplet_loss(2 * pred, target)) == pytest.approx(
            4 * float(triplet_loss(pred, target)), rel=1e-12
        )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            triplet_loss(torch.zeros(2), torch.zeros(3))

    def test_gradient_matches_finite_differences(self):
        gen = torch.Generator().manual_seed(1)
        pred = torch.randn(2, 3, dtype=torch.float64, generator=gen, requires_grad=True)
        target = torch.randn(2, 3, dtype=torch.float64, generator=gen)
        loss = triplet_loss(pred, target)
        loss.backward()
        fd = finite_diff_grad(lambda: triplet_loss(pred, target), pred.data)
        assert rel_grad_error(pred.grad, fd) < 1e-4


class TestDenoisingUpdateStep:
    def test_zero_gradient_is_identity(self):
        eps = torch.randn(2, 2, dtype=torch.float64)
        assert torch.equal(denoising_update_step(eps, torch.zeros_like(eps), 0.3), eps)

    def test_zero_step_size_is_identity(self):
        eps = torch.randn(2, 2, dtype=torch.float64)
        grad = torch.randn(2, 2, dtype=torch.float64)
        assert torch.equal(denoising_update_step(eps, grad, 0.0), eps)

    def test_additive_adjustment_closed_form(self):
        # oracle: eps + eta * grad elementwise
        eps = torch.tensor([1.0, 1.0], dtype=torch.float64)
        grad = torch.tensor([0.5, -0.5], dtype=torch.float64)
        out = denoising_update_step(eps, grad, 0.1)
        assert out.tolist() == pytest.approx([1.05, 0.95], abs=1e-15)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            denoising_update_step(torch.zeros(2), torch.zeros(3), 0.1)


class TestGuidanceConfig:
    def test_negative_eta_rejected(self):
        with pytest.raises(ValueError):
            GuidanceConfig(eta=-1.0)

    def test_non_finite_eta_rejected(self):
        with pytest.raises(ValueError):
            GuidanceConfig(eta=float("inf"))
