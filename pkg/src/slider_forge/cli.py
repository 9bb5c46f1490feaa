"""Command-line surface: train, generate, eval, serve.

All commands are reproducible: identical inputs produce byte-identical
file outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import (
    AppConfig,
    ConfigError,
    load_config,
    make_eval_spec,
    model_hash,
    resolve_checkpoint_dir,
    to_train_config,
)
from .evaluation import evaluate_slider, run_ablation
from .imaging import save_png
from .lora import AdapterStack, apply_stack
from .server import CHECKPOINT_SUFFIX
from .training import TrainHistory, TrainingDivergedError, StepRecord, prepare_base_model, train_slider


class CliError(Exception):
    """Operator-facing failure; printed to stderr with exit code 1."""


def _load_config(path: str) -> AppConfig:
    try:
        return load_config(path)
    except FileNotFoundError as exc:
        raise CliError(f"config file not found: {path}") from exc
    except ConfigError as exc:
        raise CliError(f"invalid config {path}: {exc}") from exc


def _load_compatible_checkpoint(path: str, cfg: AppConfig):
    try:
        ckpt = load_checkpoint(path)
    except FileNotFoundError as exc:
        raise CliError(f"checkpoint not found: {path}") from exc
    except CheckpointError as exc:
        raise CliError(f"cannot load checkpoint {path}: {exc}") from exc
    expected = model_hash(cfg)
    if ckpt.model_hash and ckpt.model_hash != expected:
        raise CliError(
            f"checkpoint {path} is incompatible with this config: "
            f"checkpoint model hash {ckpt.model_hash}, config model hash {expected}"
        )
    return ckpt


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    train_cfg = to_train_config(cfg)
    out_dir = Path(args.out_dir) if args.out_dir else resolve_checkpoint_dir(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        checkpoint = train_slider(train_cfg)
    except TrainingDivergedError as exc:
        raise CliError(str(exc)) from exc
    ckpt_path = out_dir / f"{checkpoint.name}{CHECKPOINT_SUFFIX}"
    save_checkpoint(checkpoint, ckpt_path)
    history = TrainHistory([StepRecord.from_dict(r) for r in checkpoint.history])
    history_path = out_dir / f"{checkpoint.name}_history.tsv"
    history.write(history_path)
    if checkpoint.history:
        last = checkpoint.history[-1]
        parts = [f"triplet={last['triplet']:.6f}"]
        if last["perceptual"] is not None:
            parts.append(f"perceptual={last['perceptual']:.6f}")
        if last["adversarial"] is not None:
            parts.append(f"adversarial={last['adversarial']:.6f}")
        print(f"final losses ({train_cfg.steps} steps): " + ", ".join(parts))
    else:
        print("no training steps run; checkpoint holds the zero-delta adapter")
    print(f"history: {history_path}")
    print(f"checkpoint: {ckpt_path}")
    return 0


def _parse_slider_arg(raw: str) -> tuple[str, float]:
    name, sep, scale = raw.rpartition(":")
    if not sep or not name:
        raise CliError(f"slider argument {raw!r} must look like NAME:SCALE")
    try:
        return name, float(scale)
    except ValueError:
        raise CliError(f"unparsable slider scale in {raw!r}") from None


def cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    checkpoints = [_load_compatible_checkpoint(p, cfg) for p in args.checkpoint]
    adapters = {c.name: c.to_adapter() for c in checkpoints}
    requested = [_parse_slider_arg(s) for s in args.slider]
    for name, _ in requested:
        if name not in adapters:
            raise CliError(
                f"unknown slider {name!r}; loaded checkpoints: {sorted(adapters)}"
            )
    base_model = prepare_base_model(to_train_config(cfg))
    schedule = cfg.model.make_schedule()
    steps = args.steps or cfg.eval.sample_steps
    try:
        base_model.condition_index(args.prompt)
    except KeyError as exc:
        raise CliError(str(exc)) from exc

    from .diffusion import sample_image

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = sample_image(base_model, schedule, args.prompt, args.seed, steps)
    entries = [(adapters[name], scale) for name, scale in requested]
    edited_model = (
        apply_stack(base_model, AdapterStack(entries=entries)) if entries else base_model
    )
    edited = sample_image(edited_model, schedule, args.prompt, args.seed, steps)
    save_png(base, out_dir / "base.png")
    save_png(edited, out_dir / "edited.png")
    print(f"base: {out_dir / 'base.png'}")
    print(f"edited: {out_dir / 'edited.png'} (sliders: {args.slider or 'none'})")
    return 0


def _slug(label: str) -> str:
    return label.replace(" & ", "_and_").replace("/", "").replace(" ", "_")


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    spec = make_eval_spec(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_cfg = to_train_config(cfg)
    if args.ablation:
        reports = run_ablation(train_cfg, {"adv", "perp"}, spec)
        for report in reports:
            slug = _slug(report.metadata["arm"])
            (out_dir / f"report_{slug}.txt").write_text(report.to_text_table(), encoding="utf-8")
            (out_dir / f"report_{slug}.json").write_text(report.to_json(), encoding="utf-8")
        print(f"wrote {2 * len(reports)} report files to {out_dir}")
        return 0
    if not args.checkpoint:
        raise CliError("--checkpoint is required unless --ablation is given")
    ckpt = _load_compatible_checkpoint(args.checkpoint, cfg)
    base_model = prepare_base_model(train_cfg)
    report = evaluate_slider(base_model, ckpt, spec, cfg.model.make_schedule())
    (out_dir / "report.txt").write_text(report.to_text_table(), encoding="utf-8")
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    print(report.to_text_table(), end="")
    print(f"wrote {out_dir / 'report.txt'} and {out_dir / 'report.json'}")
    return 0


def cmd_serve(args) -> int:
    cfg = _load_config(args.config)
    from .server import run_server

    run_server(cfg, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slider-forge",
        description="Train, evaluate, and serve concept sliders for a toy diffusion model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a slider from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out-dir", default=None, help="checkpoint output directory")
    p_train.set_defaults(func=cmd_train)

    p_gen = sub.add_parser("generate", help="write base and edited images side by side")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--checkpoint", action="append", default=[], required=True)
    p_gen.add_argument("--prompt", required=True)
    p_gen.add_argument("--slider", action="append", default=[], metavar="NAME:SCALE")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--steps", type=int, default=None)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_generate)

    p_eval = sub.add_parser("eval", help="score a slider (or run the ablation grid)")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--ablation", action="store_true")
    p_eval.add_argument("--out", default="reports")
    p_eval.set_defaults(func=cmd_eval)

    p_serve = sub.add_parser("serve", help="run the HTTP inference service")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
