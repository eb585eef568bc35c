"""On-disk frame container (``.smrk``).

Layout, all little-endian::

    magic     4s   b"SMRK"
    version   u16
    T, H, W   u32 x 3
    bit_depth u8, one pad byte
    meta_len  u32
    metadata  meta_len bytes of UTF-8 JSON
    frames    T*H*W*3 samples, interleaved RGB, u8 (bit_depth <= 8) or u16
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from specmark.errors import ContainerError
from specmark.codec.capture import CaptureConfig, FrameSequence

MAGIC = b"SMRK"
VERSION = 1
HEADER = struct.Struct("<4sHIIIBxI")


def _sample_dtype(bit_depth: int) -> np.dtype:
    return np.dtype("<u1") if bit_depth <= 8 else np.dtype("<u2")


def encode_container(frames: FrameSequence, extra: dict | None = None) -> bytes:
    t, h, w, _ = frames.frames.shape
    meta = {
        "config": frames.config.to_dict(),
        "camera_label": frames.camera_label,
        "metadata": frames.metadata,
    }
    if extra:
        meta["extra"] = extra
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    depth = int(frames.config.bit_depth)
    header = HEADER.pack(MAGIC, VERSION, t, h, w, depth, len(meta_bytes))
    body = np.ascontiguousarray(frames.frames, dtype=_sample_dtype(depth)).tobytes()
    return header + meta_bytes + body


def write_container(path, frames: FrameSequence, extra: dict | None = None) -> Path:
    path = Path(path)
    try:
        path.write_bytes(encode_container(frames, extra))
    except OSError as exc:
        raise ContainerError(f"cannot write {path}: {exc}") from exc
    return path


def decode_container(blob: bytes) -> tuple[FrameSequence, dict]:
    """Parse container bytes; returns the frames and any ``extra`` metadata."""
    if len(blob) < HEADER.size:
        raise ContainerError("truncated container header")
    magic, version, t, h, w, depth, meta_len = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    if not 1 <= depth <= 16:
        raise ContainerError(f"invalid bit depth {depth}")
    start = HEADER.size + meta_len
    if len(blob) < start:
        raise ContainerError("truncated metadata")
    try:
        meta = json.loads(blob[HEADER.size : start].decode("utf-8"))
        config = CaptureConfig.from_dict(meta["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ContainerError(f"corrupt metadata: {exc}") from exc
    if config.bit_depth != depth or tuple(config.resolution) != (h, w):
        raise ContainerError("header disagrees with metadata")
    dtype = _sample_dtype(depth)
    expected = t * h * w * 3 * dtype.itemsize
    payload = len(blob) - start
    if payload != expected:
        kind = "truncated" if payload < expected else "oversized"
        raise ContainerError(f"{kind} frame data: expected {expected} bytes, found {payload}")
    data = np.frombuffer(blob, dtype=dtype, offset=start).reshape(t, h, w, 3)
    data = data.astype(np.uint8 if depth <= 8 else np.uint16)
    try:
        frames = FrameSequence(data, config, meta.get("camera_label", ""), meta.get("metadata", {}))
    except ValueError as exc:
        raise ContainerError(f"corrupt frame data: {exc}") from exc
    return frames, meta.get("extra", {})


def read_container(path) -> tuple[FrameSequence, dict]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ContainerError(f"cannot read {path}: {exc}") from exc
    return decode_container(blob)


def write_png_frames(directory, frames: FrameSequence) -> list[Path]:
    """One PNG per frame for inspection (8-bit frames only; needs Pillow)."""
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise ContainerError("PNG output needs Pillow (pip install artifact[png])") from exc
    if frames.config.bit_depth > 8:
        raise ContainerError("PNG export supports 8-bit frames only")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames.frames):
        p = directory / f"frame_{i:05d}.png"
        Image.fromarray(np.ascontiguousarray(frame)).save(p)
        paths.append(p)
    return paths
