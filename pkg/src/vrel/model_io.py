"""Portable binary formats and image input/output.

Weight container (.vrelw):
    8-byte magic "VRELW001", u64 little-endian header length, a JSON header
    mapping tensor name -> {"shape": [...], "offset": o, "nbytes": n} with
    offsets relative to the payload start, then the concatenated row-major
    little-endian float32 payloads.

Raw tensor file (.vrelv):
    8-byte magic "VRELV001", four u32 little-endian extents (C, T, H, W),
    then the row-major float32 payload. Round-trips bitwise.

Clips can also be read from a directory of lexicographically ordered PNG
frames (RGB, all the same size), giving values in [0, 255]. Heatmaps render
one PNG per frame on a diverging colormap: red positive, white zero, blue
negative, normalized symmetrically by the largest absolute value over the
whole clip so relative frame importance stays visible.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image

from .errors import ContainerFormatError, VideoFormatError
from .tensor import Tensor, as_tensor, freeze

WEIGHT_MAGIC = b"VRELW001"
RAW_MAGIC = b"VRELV001"


@dataclass(frozen=True)
class WeightContainer:
    """Named map of float32 tensors loaded from a .vrelw file."""
    entries: Mapping[str, Tensor]


@dataclass(frozen=True)
class VideoClip:
    """A (3, T, H, W) clip with values in [0, 255] before normalization."""
    tensor: Tensor
    sources: tuple[str, ...] = field(default_factory=tuple)


def read_weight_container(data: bytes) -> WeightContainer:
    """Parse a VRELW001 container; every failure raises ContainerFormatError."""
    if len(data) < 16 or data[:8] != WEIGHT_MAGIC:
        raise ContainerFormatError(f"bad magic: expected {WEIGHT_MAGIC!r}, got {data[:8]!r}")
    (header_len,) = struct.unpack_from("<Q", data, 8)
    if 16 + header_len > len(data):
        raise ContainerFormatError(f"header length {header_len} exceeds file size {len(data)}")
    try:
        header = json.loads(data[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise ContainerFormatError("header must be a JSON object of tensor entries")
    payload = data[16 + header_len:]

    entries: dict[str, Tensor] = {}
    spans = []
    for name, meta in header.items():
        try:
            shape = tuple(int(e) for e in meta["shape"])
            offset, nbytes = int(meta["offset"]), int(meta["nbytes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ContainerFormatError(f"entry {name!r}: bad metadata ({exc})") from None
        dtype = meta.get("dtype", "f32")
        if dtype not in ("f32", "float32", "<f4"):
            raise ContainerFormatError(f"entry {name!r}: non-float32 dtype {dtype!r}")
        if len(shape) < 1 or min(shape) < 1:
            raise ContainerFormatError(f"entry {name!r}: bad shape {shape}")
        if nbytes != 4 * int(np.prod(shape)):
            raise ContainerFormatError(f"entry {name!r}: nbytes {nbytes} does not match "
                                       f"shape {shape}")
        if offset < 0 or offset + nbytes > len(payload):
            raise ContainerFormatError(f"entry {name!r}: payload truncated "
                                       f"(needs bytes [{offset}, {offset + nbytes}), "
                                       f"payload has {len(payload)})")
        spans.append((offset, offset + nbytes, name))
        arr = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset)
        entries[name] = as_tensor(arr.reshape(shape))
    spans.sort()
    for (s0, e0, n0), (s1, _, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise ContainerFormatError(f"entries {n0!r} and {n1!r} have overlapping offsets")
    return WeightContainer(entries=entries)


def load_weight_container(path: str | Path) -> WeightContainer:
    return read_weight_container(Path(path).read_bytes())


def write_weight_container(entries: Mapping[str, np.ndarray], path: str | Path) -> None:
    """Write tensors to a VRELW001 container, payload in iteration order."""
    header: dict[str, dict] = {}
    blobs = []
    offset = 0
    for name, arr in entries.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
        blob = arr.tobytes()
        header[name] = {"shape": list(arr.shape), "offset": offset, "nbytes": len(blob)}
        blobs.append(blob)
        offset += len(blob)
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHT_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def read_raw_tensor(path: str | Path) -> Tensor:
    """Read a VRELV001 file into a (C, T, H, W) tensor."""
    data = Path(path).read_bytes()
    if len(data) < 24 or data[:8] != RAW_MAGIC:
        raise VideoFormatError(f"bad magic: expected {RAW_MAGIC!r}, got {data[:8]!r}")
    extents = struct.unpack_from("<4I", data, 8)
    if min(extents) < 1:
        raise VideoFormatError(f"extents must be positive, got {extents}")
    count = int(np.prod(extents))
    if len(data) != 24 + 4 * count:
        raise VideoFormatError(f"payload size {len(data) - 24} does not match extents "
                               f"{extents} ({4 * count} bytes expected)")
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=24).reshape(extents)
    return as_tensor(arr)


def write_raw_tensor(arr: np.ndarray, path: str | Path) -> None:
    arr = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
    if arr.ndim != 4:
        raise VideoFormatError(f"raw tensor files hold rank-4 tensors, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(RAW_MAGIC)
        fh.write(struct.pack("<4I", *arr.shape))
        fh.write(arr.tobytes())


# relevance maps reuse the raw clip container
write_relevance = write_raw_tensor


def read_video(path: str | Path, expected_frames: int | None = None) -> VideoClip:
    """Read a clip from a raw VRELV001 file or a directory of PNG frames."""
    path = Path(path)
    if path.is_dir():
        frames = sorted(p for p in path.iterdir() if p.suffix.lower() == ".png")
        if not frames:
            raise VideoFormatError(f"no PNG frames found in {path}")
        if expected_frames is not None and len(frames) != expected_frames:
            raise VideoFormatError(f"frame count mismatch in {path}: found {len(frames)}, "
                                   f"expected {expected_frames}")
        planes = []
        size = None
        for p in frames:
            try:
                img = Image.open(p).convert("RGB")
            except Exception as exc:
                raise VideoFormatError(f"cannot decode {p}: {exc}") from None
            if size is None:
                size = img.size
            elif img.size != size:
                raise VideoFormatError(f"inconsistent frame size: {p} is {img.size}, "
                                       f"expected {size}")
            planes.append(np.asarray(img, dtype=np.float32))
        clip = np.stack(planes, axis=0).transpose(3, 0, 1, 2)  # (T,H,W,C) -> (C,T,H,W)
        return VideoClip(tensor=as_tensor(clip), sources=tuple(str(p) for p in frames))
    tensor = read_raw_tensor(path)
    if tensor.shape[0] != 3:
        raise VideoFormatError(f"clips must have 3 channels, got {tensor.shape[0]}")
    if expected_frames is not None and tensor.shape[1] != expected_frames:
        raise VideoFormatError(f"frame count mismatch in {path}: found {tensor.shape[1]}, "
                               f"expected {expected_frames}")
    if not np.all(np.isfinite(tensor)):
        raise VideoFormatError(f"clip {path} contains NaN/Inf values")
    return VideoClip(tensor=tensor, sources=(str(path),))


def render_heatmap(map_tensor: np.ndarray) -> np.ndarray:
    """Render a (C, T, H, W) relevance map to (T, H, W, 3) uint8 frames.

    Channels are summed (relevance is additive), then values are normalized
    by max |v| over the whole clip and mapped red (+) / white (0) / blue (-).
    An all-zero map renders pure white.
    """
    v = np.sum(map_tensor, axis=0, dtype=np.float32)
    peak = np.max(np.abs(v))
    u = v / peak if peak > 0 else np.zeros_like(v)
    mag = np.rint(255.0 * (1.0 - np.abs(u)))
    r = np.where(u >= 0, 255.0, np.rint(255.0 * (1.0 + u)))
    b = np.where(u <= 0, 255.0, np.rint(255.0 * (1.0 - u)))
    rgb = np.stack([r, mag, b], axis=-1)
    return np.clip(rgb, 0, 255).astype(np.uint8)


def save_heatmap_frames(map_tensor: np.ndarray, out_dir: str | Path,
                        prefix: str = "frame") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = render_heatmap(map_tensor)
    paths = []
    for t in range(frames.shape[0]):
        p = out_dir / f"{prefix}_{t:03d}.png"
        Image.fromarray(frames[t], mode="RGB").save(p, format="PNG")
        paths.append(p)
    return paths


def normalize_clip(clip: np.ndarray, mean: np.ndarray) -> Tensor:
    """Subtract a per-channel mean from a [0, 255] clip."""
    mean = np.asarray(mean, dtype=np.float32).reshape(-1, 1, 1, 1)
    return freeze((clip - mean).astype(np.float32, copy=False))


def bounds_after_normalization(mean: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Images of pixel values 0 and 255 after mean subtraction, per channel."""
    mean = np.asarray(mean, dtype=np.float32)
    return (0.0 - mean), (255.0 - mean)
