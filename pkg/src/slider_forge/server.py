"""HTTP inference service for trained sliders.

Checkpoints are loaded once at startup and are immutable while serving;
per-request randomness comes only from the request seed, so identical
requests return byte-identical image payloads. Errors use a structured
JSON shape: {"code", "message", "field"?}.
"""

from __future__ import annotations

import logging
import math
import time
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .checkpoint import CheckpointError, load_checkpoint
from .config import AppConfig, model_hash, resolve_checkpoint_dir, to_train_config
from .diffusion import sample_image
from .imaging import tensor_to_png_base64
from .lora import AdapterStack, apply_stack
from .training import prepare_base_model

log = logging.getLogger("slider_forge.server")

CHECKPOINT_SUFFIX = ".slider"


class SliderRef(BaseModel):
    name: str
    scale: float


class GenerateRequest(BaseModel):
    prompt: str
    seed: int = Field(ge=0)
    steps: int | None = None
    sliders: list[SliderRef] = Field(default_factory=list)


def _error(status: int, code: str, message: str, field: str | None = None) -> JSONResponse:
    body = {"code": code, "message": message}
    if field is not None:
        body["field"] = field
    return JSONResponse(status_code=status, content=body)


class SliderCatalog:
    """Read-only registry of loaded sliders plus the shared base model."""

    def __init__(self, config: AppConfig):
        self.config = config
        train_cfg = to_train_config(config)
        self.base_model = prepare_base_model(train_cfg)
        self.schedule = config.model.make_schedule()
        self.model_hash = model_hash(config)
        self.adapters = {}
        self.entries = []

    def load_directory(self, directory: Path) -> None:
        if not directory.is_dir():
            log.warning("checkpoint directory %s does not exist; serving base model only", directory)
            return
        for path in sorted(directory.glob(f"*{CHECKPOINT_SUFFIX}")):
            try:
                ckpt = load_checkpoint(path)
            except CheckpointError as exc:
                log.warning("skipping malformed checkpoint %s: %s", path, exc)
                continue
            if ckpt.model_hash and ckpt.model_hash != self.model_hash:
                log.warning(
                    "skipping %s: model hash %s does not match config %s",
                    path, ckpt.model_hash, self.model_hash,
                )
                continue
            if ckpt.name in self.adapters:
                log.warning("skipping %s: duplicate slider name %r", path, ckpt.name)
                continue
            self.adapters[ckpt.name] = ckpt.to_adapter()
            concept = ckpt.concept.as_dict() if ckpt.concept else {}
            self.entries.append(
                {
                    "name": ckpt.name,
                    "positive": concept.get("positive", ""),
                    "negative": concept.get("negative", ""),
                    "target": concept.get("target", ""),
                    "alpha_min": self.config.serve.alpha_min,
                    "alpha_max": self.config.serve.alpha_max,
                    "alpha_default": ckpt.alpha_default,
                }
            )


def create_app(config: AppConfig, checkpoint_dir: Path | None = None) -> FastAPI:
    catalog = SliderCatalog(config)
    catalog.load_directory(checkpoint_dir or resolve_checkpoint_dir(config))
    max_steps = config.serve.max_steps or config.model.timesteps

    app = FastAPI(title="slider-forge")
    app.state.catalog = catalog

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = [str(p) for p in first.get("loc", []) if p != "body"]
        return _error(400, "validation_error", first.get("msg", "invalid request"), ".".join(loc) or None)

    @app.exception_handler(Exception)
    async def on_internal_error(request: Request, exc: Exception):
        log.exception("internal error")
        return _error(500, "internal_error", str(exc))

    @app.get("/api/health")
    def health():
        return {"status": "ok", "sliders": len(catalog.entries)}

    @app.get("/api/sliders")
    def sliders():
        return catalog.entries

    @app.post("/api/generate")
    def generate(req: GenerateRequest):
        started = time.perf_counter()
        if req.prompt not in catalog.base_model.vocab:
            return _error(400, "unknown_prompt", f"unknown prompt {req.prompt!r}", "prompt")
        steps = req.steps if req.steps is not None else min(max_steps, catalog.schedule.num_steps)
        if not (1 <= steps <= min(max_steps, catalog.schedule.num_steps)):
            return _error(
                400, "invalid_steps",
                f"steps must be in [1, {min(max_steps, catalog.schedule.num_steps)}]",
                "steps",
            )
        seen = set()
        for ref in req.sliders:
            if not math.isfinite(ref.scale):
                return _error(400, "invalid_scale", f"scale for {ref.name!r} must be finite", "sliders")
            if ref.name not in catalog.adapters:
                return _error(404, "unknown_slider", f"no slider named {ref.name!r}", "sliders")
            if ref.name in seen:
                return _error(400, "duplicate_slider", f"slider {ref.name!r} listed twice", "sliders")
            seen.add(ref.name)
        active = [(catalog.adapters[r.name], r.scale) for r in req.sliders if r.scale != 0.0]
        if active:
            model = apply_stack(catalog.base_model, AdapterStack(entries=active))
        else:
            model = catalog.base_model
        image = sample_image(model, catalog.schedule, req.prompt, req.seed, steps)
        return {
            "image": tensor_to_png_base64(image),
            "applied": [{"name": r.name, "scale": r.scale} for r in req.sliders],
            "is_base": not active,
            "prompt": req.prompt,
            "seed": req.seed,
            "steps": steps,
            "elapsed_ms": (time.perf_counter() - started) * 1000.0,
        }

    if config.serve.ui_dir:
        ui_root = Path(config.serve.ui_dir)
        if ui_root.is_dir():
            from fastapi.staticfiles import StaticFiles

            app.mount("/", StaticFiles(directory=ui_root, html=True), name="ui")
        else:
            log.warning("ui directory %s does not exist; serving the API only", ui_root)

    return app


def run_server(config: AppConfig, port: int | None = None, checkpoint_dir: Path | None = None):
    import uvicorn

    app = create_app(config, checkpoint_dir)
    uvicorn.run(app, host="127.0.0.1", port=port or config.serve.port, log_level="info")
