"""Single-file slider checkpoint archive.

Layout: 4-byte magic, little-endian uint32 format version, little-endian
uint64 header length, UTF-8 JSON header, then a raw data section of
little-endian float32 arrays. The header's manifest maps array keys to
byte offsets and shapes inside the data section. Round-trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .diffusion import DTYPE
from .guidance import ConceptTriplet
from .lora import FactorPair, LoRAAdapter

MAGIC = b"SLFG"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CorruptCheckpointError(CheckpointError):
    """File is truncated, mislabeled, or the manifest is inconsistent."""


class CheckpointVersionError(CheckpointError):
    """Archive was written by an incompatible format version."""


class CheckpointShapeError(CheckpointError):
    """Factor shapes disagree with the metadata or the caller's expectation."""


@dataclass
class SliderCheckpoint:
    """Trained adapter factors plus everything needed to reuse them."""

    name: str
    concept: ConceptTriplet
    rank: int
    alpha_default: float
    layer_selector: list[str]
    config: dict
    config_hash: str
    model_hash: str
    history: list[dict] = field(default_factory=list)
    optimizer_info: dict = field(default_factory=dict)
    factors: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_adapter(cls, adapter: LoRAAdapter, **meta) -> "SliderCheckpoint":
        """Package an adapter; factors are quantized to the archive's
        float32 layout at this point."""
        factors = {}
        for layer, pair in adapter.factors.items():
            down = np.ascontiguousarray(pair.down.detach().numpy(), dtype="<f4")
            up = np.ascontiguousarray(pair.up.detach().numpy(), dtype="<f4")
            factors[layer] = (down, up)
        return cls(
            name=adapter.name,
            concept=adapter.concept,
            rank=adapter.rank,
            alpha_default=adapter.default_scale,
            factors=factors,
            **meta,
        )

    def to_adapter(self) -> LoRAAdapter:
        pairs = {
            layer: FactorPair(
                down=torch.from_numpy(down.copy()).to(DTYPE),
                up=torch.from_numpy(up.copy()).to(DTYPE),
            )
            for layer, (down, up) in self.factors.items()
        }
        return LoRAAdapter(
            name=self.name,
            rank=self.rank,
            factors=pairs,
            default_scale=self.alpha_default,
            concept=self.concept,
        )

    def validate_shapes(self, expected_rank: int | None = None) -> None:
        rank = expected_rank if expected_rank is not None else self.rank
        for layer, (down, up) in self.factors.items():
            if down.ndim != 2 or up.ndim != 2 or down.shape[1] != up.shape[0]:
                raise CheckpointShapeError(
                    f"layer {layer!r}: factor shapes {down.shape} and {up.shape} "
                    "do not form a low-rank pair"
                )
            if down.shape[1] != rank:
                raise CheckpointShapeError(
                    f"layer {layer!r}: factors have rank {down.shape[1]}, "
                    f"expected {rank}"
                )


def save_checkpoint(checkpoint: SliderCheckpoint, path) -> Path:
    path = Path(path)
    manifest = []
    chunks = []
    offset = 0
    for layer in sorted(checkpoint.factors):
        down, up = checkpoint.factors[layer]
        for suffix, arr in (("down", down), ("up", up)):
            raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            manifest.append(
                {"key": f"{layer}.{suffix}", "offset": offset, "shape": list(arr.shape)}
            )
            chunks.append(raw)
            offset += len(raw)
    header = {
        "format_version": checkpoint.format_version,
        "name": checkpoint.name,
        "concept": checkpoint.concept.as_dict() if checkpoint.concept else None,
        "rank": checkpoint.rank,
        "alpha_default": checkpoint.alpha_default,
        "layer_selector": list(checkpoint.layer_selector),
        "config": checkpoint.config,
        "config_hash": checkpoint.config_hash,
        "model_hash": checkpoint.model_hash,
        "optimizer": checkpoint.optimizer_info,
        "history": checkpoint.history,
        "arrays": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", checkpoint.format_version))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in chunks:
            fh.write(raw)
    return path


def load_checkpoint(path, expected_rank: int | None = None) -> SliderCheckpoint:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CorruptCheckpointError(f"{path}: not a slider checkpoint")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, supported {FORMAT_VERSION}"
        )
    header_len = struct.unpack("<Q", blob[8:16])[0]
    if 16 + header_len > len(blob):
        raise CorruptCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable header ({exc})") from exc
    data = blob[16 + header_len :]

    arrays: dict[str, np.ndarray] = {}
    for entry in header.get("arrays", []):
        try:
            key, off, shape = entry["key"], entry["offset"], tuple(entry["shape"])
        except (KeyError, TypeError) as exc:
            raise CorruptCheckpointError(f"{path}: bad manifest entry {entry!r}") from exc
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if off < 0 or off + nbytes > len(data):
            raise CorruptCheckpointError(
                f"{path}: manifest entry {key!r} points outside the data section"
            )
        arrays[key] = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape).copy()

    factors: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for key in sorted(arrays):
        if not key.endswith(".down"):
            continue
        layer = key[: -len(".down")]
        up_key = f"{layer}.up"
        if up_key not in arrays:
            raise CorruptCheckpointError(f"{path}: layer {layer!r} is missing its up factor")
        factors[layer] = (arrays[key], arrays[up_key])
    strays = set(arrays) - {f"{l}.{s}" for l in factors for s in ("down", "up")}
    if strays:
        raise CorruptCheckpointError(f"{path}: unpaired arrays {sorted(strays)}")

    concept = header.get("concept")
    checkpoint = SliderCheckpoint(
        name=header["name"],
        concept=ConceptTriplet(**concept) if concept else None,
        rank=header["rank"],
        alpha_default=header["alpha_default"],
        layer_selector=list(header.get("layer_selector", [])),
        config=header.get("config", {}),
        config_hash=header.get("config_hash", ""),
        model_hash=header.get("model_hash", ""),
        history=header.get("history", []),
        optimizer_info=header.get("optimizer", {}),
        factors=factors,
        format_version=version,
    )
    checkpoint.validate_shapes(expected_rank)
    return checkpoint
