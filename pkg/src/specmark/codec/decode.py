"""Bit recovery from a captured frame sequence.

Pipeline: dark-pixel mask, global normalization, mean absolute temporal
differences, phase selection with downsampling to the symbol rate, and a
two-stage (static, then dynamic) threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from specmark.errors import NoSignalError, SceneTooDarkError
from specmark.codec.capture import FrameSequence
from specmark.codec.schedule import BitStream

STATIC_THRESHOLD_SIGMAS = 4.0
NOISE_QUANTILE = 25.0
# floor on the static margin so noiseless captures still need a real change
MIN_STATIC_MARGIN = 1e-6

_CHUNK_FRAMES = 64


@dataclass(frozen=True)
class PhaseSelection:
    signal: np.ndarray
    chosen_phase: int
    phase_sums: tuple[float, ...]
    ratio: float
    ratio_flagged: bool


@dataclass(frozen=True)
class Binarization:
    bits: BitStream
    dynamic_threshold: float
    static_threshold: float
    noise_floor: float


@dataclass(frozen=True)
class DecodeReport:
    bits: BitStream
    mask_fraction: float
    chosen_phase: int
    raw_signal: np.ndarray = field(repr=False)
    dynamic_threshold: float
    static_threshold: float = 0.0
    noise_floor: float = 0.0
    phase_sums: tuple[float, ...] = ()
    symbol_ratio: float = 2.0
    ratio_flagged: bool = False
    unmasked_pixels: int = 0

    def to_dict(self) -> dict:
        return {
            "bits": list(self.bits.bits),
            "n_bits": len(self.bits),
            "mask_fraction": self.mask_fraction,
            "chosen_phase": self.chosen_phase,
            "dynamic_threshold": self.dynamic_threshold,
            "static_threshold": self.static_threshold,
            "noise_floor": self.noise_floor,
            "phase_sums": list(self.phase_sums),
            "symbol_ratio": self.symbol_ratio,
            "ratio_flagged": self.ratio_flagged,
            "unmasked_pixels": self.unmasked_pixels,
            "raw_signal": [float(v) for v in self.raw_signal],
        }


def _frames_and_depth(frames, bit_depth: int | None) -> tuple[np.ndarray, int]:
    if isinstance(frames, FrameSequence):
        return frames.frames, int(frames.config.bit_depth)
    return np.asarray(frames), 8 if bit_depth is None else int(bit_depth)


def mask_dark_pixels(frames, bit_depth: int | None = None) -> np.ndarray:
    """``True`` where a pixel is masked out: every channel of every frame
    below half of full scale (128 for 8-bit)."""
    data, depth = _frames_and_depth(frames, bit_depth)
    if data.ndim != 4:
        raise ValueError("frames must be (T, H, W, 3)")
    half = 1 << (depth - 1)
    peak = np.zeros(data.shape[1:3], dtype=data.dtype)
    for start in range(0, data.shape[0], _CHUNK_FRAMES):
        np.maximum(peak, data[start : start + _CHUNK_FRAMES].max(axis=(0, 3)), out=peak)
    return peak < half


def _normalizer(data: np.ndarray, usable: np.ndarray) -> float:
    n = int(usable.sum())
    if n == 0:
        raise SceneTooDarkError()
    total = 0.0
    for start in range(0, data.shape[0], _CHUNK_FRAMES):
        total += float(data[start : start + _CHUNK_FRAMES][:, usable].sum(dtype=np.float64))
    mean = total / (n * data.shape[0] * data.shape[3])
    if mean <= 0:
        raise SceneTooDarkError()
    return mean


def normalize(frames, mask: np.ndarray) -> np.ndarray:
    """Divide every value by the mean over unmasked pixels, channels and frames.

    Masked pixels are returned as-is (scaled by the same factor) but carry no
    meaning downstream.
    """
    data, _ = _frames_and_depth(frames, None)
    mask = np.asarray(mask, dtype=bool)
    return data.astype(np.float64) / _normalizer(data, ~mask)


def temporal_differences(normalized: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """``d[t]`` = mean over unmasked pixels and channels of ``|f[t+1] - f[t]|``."""
    normalized = np.asarray(normalized, dtype=np.float64)
    if normalized.ndim != 4:
        raise ValueError("frames must be (T, H, W, 3)")
    if normalized.shape[0] < 2:
        raise ValueError("need at least two frames to difference")
    usable = np.ones(normalized.shape[1:3], bool) if mask is None else ~np.asarray(mask, bool)
    if not usable.any():
        raise SceneTooDarkError()
    px = normalized[:, usable]
    return np.abs(np.diff(px, axis=0)).mean(axis=(1, 2))


def _stream_differences(data: np.ndarray, usable: np.ndarray, scale: float) -> np.ndarray:
    """Chunked equivalent of ``temporal_differences(normalize(...))``."""
    t = data.shape[0]
    out = np.empty(t - 1)
    prev = None
    for start in range(0, t, _CHUNK_FRAMES):
        block = data[start : start + _CHUNK_FRAMES][:, usable].astype(np.float64) / scale
        if prev is not None:
            block = np.concatenate([prev[None], block])
            lo = start - 1
        else:
            lo = 0
        d = np.abs(np.diff(block, axis=0)).mean(axis=(1, 2))
        out[lo : lo + d.size] = d
        prev = block[-1]
    return out


def select_phase_and_downsample(d, frame_rate_hz: float, symbol_rate_hz: float) -> PhaseSelection:
    """Split the gaps into interleaved phase streams, keep the strongest.

    Symbol ``k`` of phase ``p`` reads gap ``floor(k * r) + p`` with
    ``r = frame_rate / symbol_rate``. For ``r == 2`` this is the even/odd
    split; other ratios use the nearest gap and are flagged.
    """
    d = np.asarray(d, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("difference sequence must be non-empty and 1-D")
    r = frame_rate_hz / symbol_rate_hz
    if r < 2 - 1e-9:
        raise ValueError("frame rate must be at least twice the symbol rate")
    flagged = abs(r - round(r)) > 1e-9 or round(r) != 2
    n_phases = int(math.ceil(r - 1e-9))
    streams = []
    for p in range(n_phases):
        k_max = int(math.floor((d.size - 1 - p) / r + 1e-9)) + 1 if d.size > p else 0
        idx = np.floor(np.arange(k_max) * r + 1e-9).astype(np.int64) + p
        streams.append(d[idx[idx < d.size]])
    sums = tuple(float(s.sum()) for s in streams)
    chosen = int(np.argmax(sums))
    return PhaseSelection(streams[chosen], chosen, sums, float(r), bool(flagged))


def predict_noise_stats(sigma: float, pixel_count: int) -> tuple[float, float]:
    """Mean and std of the pixel-averaged difference of two AWGN frames."""
    if pixel_count <= 0:
        raise ValueError("pixel_count must be positive")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return 0.0, float(sigma) * math.sqrt(2.0 / pixel_count)


def binarize(s, static_threshold: float | None = None, sample_count: int | None = None) -> Binarization:
    """Two-stage threshold.

    The noise floor is the mean of the smallest quarter of ``s`` (at least
    one sample). Absolute
    differences of AWGN average to ``2 sigma / sqrt(pi)``, which gives a
    per-sample noise estimate; the static threshold sits
    ``STATIC_THRESHOLD_SIGMAS`` predicted standard deviations (for
    ``sample_count`` averaged samples) above the floor. Symbols over it are
    provisional changes; their mean excess ``B`` over the floor sets the
    dynamic threshold at ``floor + B / 2``.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("signal must be a non-empty 1-D sequence")
    k = max(1, int(s.size * NOISE_QUANTILE / 100.0))
    floor = float(np.sort(s)[:k].mean())
    if static_threshold is None:
        sigma_hat = floor * math.sqrt(math.pi) / 2.0
        _, std = predict_noise_stats(sigma_hat, max(int(sample_count or 1), 1))
        static_threshold = floor + max(STATIC_THRESHOLD_SIGMAS * std, MIN_STATIC_MARGIN)
    provisional = s > static_threshold
    if not provisional.any():
        raise NoSignalError()
    baseline = float((s[provisional] - floor).mean())
    dynamic = floor + baseline / 2.0
    bits = (s > dynamic).astype(int)
    return Binarization(BitStream(tuple(int(b) for b in bits)), dynamic, float(static_threshold), floor)


def decode(frames: FrameSequence, symbol_rate_hz: float | None = None) -> DecodeReport:
    """Full pipeline. Streams over frames in chunks."""
    if symbol_rate_hz is None:
        symbol_rate_hz = float(frames.metadata.get("symbol_rate_hz", 15.0))
    data = frames.frames
    if data.shape[0] < 2:
        raise ValueError("need at least two frames to decode")
    mask = mask_dark_pixels(frames)
    usable = ~mask
    scale = _normalizer(data, usable)
    d = _stream_differences(data, usable, scale)
    sel = select_phase_and_downsample(d, frames.config.frame_rate_hz, symbol_rate_hz)
    n_samples = int(usable.sum()) * data.shape[3]
    b = binarize(sel.signal, sample_count=n_samples)
    return DecodeReport(
        bits=b.bits,
        mask_fraction=float(mask.mean()),
        chosen_phase=sel.chosen_phase,
        raw_signal=sel.signal,
        dynamic_threshold=b.dynamic_threshold,
        static_threshold=b.static_threshold,
        noise_floor=b.noise_floor,
        phase_sums=sel.phase_sums,
        symbol_ratio=sel.ratio,
        ratio_flagged=sel.ratio_flagged,
        unmasked_pixels=int(usable.sum()),
    )


def bit_error_rate(sent, received) -> float:
    """Errors over the sent length; missing received bits count as errors."""
    a = np.array(list(sent), dtype=int)
    if a.size == 0:
        raise ValueError("no sent bits")
    b = np.array(list(received), dtype=int)[: a.size]
    errors = int((a[: b.size] != b).sum()) + (a.size - b.size)
    return errors / a.size


def monte_carlo_difference_std(sigma: float, pixel_count: int, trials: int, seed: int = 0) -> float:
    """Empirical std of the pixel-mean signed difference of two AWGN frames."""
    rng = np.random.default_rng(seed)
    means = np.empty(trials)
    batch = max(1, 2_000_000 // pixel_count)
    for start in range(0, trials, batch):
        n = min(batch, trials - start)
        a = rng.standard_normal((n, pixel_count))
        b = rng.standard_normal((n, pixel_count))
        means[start : start + n] = sigma * (b - a).mean(axis=1)
    return float(means.std(ddof=1))
