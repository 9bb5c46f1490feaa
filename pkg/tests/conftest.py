"""Shared fixtures: a pretrained toy base model, a fully trained slider,
and a tiny fast setup for CLI/service tests."""

from __future__ import annotations

from dataclasses import replace

import pytest
import torch

from slider_forge.config import AppConfig, dump_config, parse_config, to_train_config
from slider_forge.diffusion import UnknownConditionError
from slider_forge.training import prepare_base_model, run_training


class StubDenoiser(torch.nn.Module):
    """Returns its scalar condition embedding broadcast over the input."""

    def __init__(self, values: dict[str, float]):
        super().__init__()
        self.values = dict(values)
        self.order = list(values)

    def condition_index(self, c: str) -> int:
        if c not in self.values:
            raise UnknownConditionError(c)
        return self.order.index(c)

    def forward(self, x, cond, t):
        vals = torch.tensor(
            [self.values[self.order[int(i)]] for i in cond], dtype=x.dtype
        )
        return vals.view(-1, *([1] * (x.ndim - 1))).expand_as(x).clone()


def finite_diff_grad(f, x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Central finite differences of a scalar-valued callable wrt x."""
    grad = torch.zeros_like(x)
    flat, gflat = x.view(-1), grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + eps
            fp = float(f())
            flat[i] = orig - eps
            fm = float(f())
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def rel_grad_error(auto: torch.Tensor, fd: torch.Tensor) -> float:
    denom = max(float(fd.norm()), 1e-12)
    return float((auto - fd).norm()) / denom


@pytest.fixture(scope="session")
def app_config() -> AppConfig:
    return AppConfig()


@pytest.fixture(scope="session")
def train_config(app_config):
    return to_train_config(app_config)


@pytest.fixture(scope="session")
def base_model(train_config):
    return prepare_base_model(train_config)


@pytest.fixture(scope="session")
def schedule(train_config):
    return train_config.model.make_schedule()


@pytest.fixture(scope="session")
def trained_slider(train_config, base_model):
    """Checkpoint + final trainer state for a 1200-step brightness slider."""
    return run_training(replace(train_config, steps=1200), base_model)


TINY_CONFIG = {
    "model": {
        "image_size": 8,
        "width": 8,
        "blocks": 1,
        "embed_dim": 8,
        "timesteps": 8,
        "pretrain_steps": 80,
        "pretrain_batch": 8,
    },
    "training": {"steps": 30, "batch_size": 4},
    "eval": {"alphas": [-1, 0, 1], "seeds": [0], "sample_steps": 4},
    "schedule": {"t0": 10, "steepness": 0.2},
}


@pytest.fixture(scope="session")
def tiny_config_text() -> str:
    return dump_config(parse_config(TINY_CONFIG))


@pytest.fixture(scope="session")
def tiny_env(tmp_path_factory, tiny_config_text):
    """Config file plus two trained tiny checkpoints on disk."""
    from slider_forge.cli import main

    root = tmp_path_factory.mktemp("tiny-env")
    config_path = root / "config.yaml"
    config_path.write_text(tiny_config_text, encoding="utf-8")
    ckpt_dir = root / "checkpoints"
    assert main(["train", "--config", str(config_path), "--out-dir", str(ckpt_dir)]) == 0

    # a second slider with swapped polarity, for stacking tests
    alt = parse_config(
        {
            **TINY_CONFIG,
            "concept": {
                "name": "dimmer",
                "positive": "dark",
                "negative": "bright",
                "target": "neutral",
            },
        }
    )
    alt_path = root / "config_dimmer.yaml"
    alt_path.write_text(dump_config(alt), encoding="utf-8")
    assert main(["train", "--config", str(alt_path), "--out-dir", str(ckpt_dir)]) == 0
    return {
        "root": root,
        "config_path": config_path,
        "alt_config_path": alt_path,
        "ckpt_dir": ckpt_dir,
        "brightness": ckpt_dir / "brightness.slider",
        "dimmer": ckpt_dir / "dimmer.slider",
    }
