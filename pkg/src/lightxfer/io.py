"""PFM / PNG image files and canonical JSON."""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from .color import linear_to_srgb


class FormatError(ValueError):
    """Raised when a file does not parse as the expected format."""


def write_pfm(path, img) -> None:
    """Write a 1- or 3-channel image as little-endian PFM (rows stored bottom to top)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        tag = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        tag = b"PF"
    else:
        raise FormatError(f"PFM needs 1 or 3 channels, got shape {arr.shape}")
    h, w = arr.shape[:2]
    header = tag + b"\n" + f"{w} {h}\n-1.0\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(arr[::-1], dtype="<f4").tobytes())


_PFM_HEADER = re.compile(rb"^(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s")


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float32 ``(H, W, C)`` array, top row first."""
    buf = Path(path).read_bytes()
    m = _PFM_HEADER.match(buf)
    if not m:
        raise FormatError(f"{path}: not a PFM file")
    channels = 3 if m.group(1) == b"PF" else 1
    w, h = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    body = buf[m.end():]
    n = w * h * channels
    if len(body) != 4 * n:
        raise FormatError(f"{path}: expected {4 * n} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype=dtype).astype(np.float32).reshape(h, w, channels)
    return np.ascontiguousarray(data[::-1])


def write_png(path, img, encode_srgb: bool = True) -> None:
    """Save an 8-bit preview; linear input is sRGB-encoded unless told otherwise."""
    from PIL import Image

    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    arr = linear_to_srgb(arr) if encode_srgb else np.clip(arr, 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(path, format="PNG")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    if isinstance(x, float) and not math.isfinite(x):
        return "identical" if x > 0 else str(x)
    return x


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, two-space indent, non-finite floats made explicit."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def read_image(path) -> np.ndarray:
    """Read a PFM (as stored) or an 8-bit PNG (code values scaled to [0, 1]) into ``(H, W, C)`` float32."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    head = path.read_bytes()[:8]
    if head[:2] in (b"PF", b"Pf"):
        return read_pfm(path)
    if head == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        with Image.open(path) as im:
            arr = np.asarray(im.convert("L" if im.mode in ("L", "1", "I", "I;16") else "RGB"), dtype=np.float32) / 255.0
        return arr[:, :, None] if arr.ndim == 2 else arr
    raise FormatError(f"{path}: neither PFM nor PNG")
