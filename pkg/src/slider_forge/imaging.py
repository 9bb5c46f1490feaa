"""Tensor <-> PNG conversion for samples in [-1, 1]."""

from __future__ import annotations

import base64
import io

import numpy as np
import torch
from PIL import Image
from torch import Tensor


def tensor_to_png_bytes(sample: Tensor) -> bytes:
    """Encode a (C, H, W) sample in [-1, 1] as lossless PNG bytes."""
    arr = sample.detach().to(torch.float64).clamp(-1.0, 1.0).numpy()
    u8 = np.round((arr + 1.0) * 127.5).astype(np.uint8)
    if u8.shape[0] == 1:
        img = Image.fromarray(u8[0], mode="L")
    elif u8.shape[0] == 3:
        img = Image.fromarray(np.moveaxis(u8, 0, 2), mode="RGB")
    else:
        raise ValueError(f"cannot encode {u8.shape[0]}-channel samples as PNG")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def tensor_to_png_base64(sample: Tensor) -> str:
    return base64.b64encode(tensor_to_png_bytes(sample)).decode("ascii")


def png_bytes_to_tensor(data: bytes) -> Tensor:
    """Decode PNG bytes back to a (C, H, W) tensor in [-1, 1]."""
    img = Image.open(io.BytesIO(data))
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = np.moveaxis(arr, 2, 0)
    return torch.from_numpy(arr.astype(np.float64) / 127.5 - 1.0)


def save_png(sample: Tensor, path) -> None:
    with open(path, "wb") as fh:
        fh.write(tensor_to_png_bytes(sample))
