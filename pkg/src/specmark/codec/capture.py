"""Camera capture simulation of a scene lit by a switching light schedule.

Each pixel shows one reflectance patch (an index map). A frame integrates the
illumination over its exposure window exactly: the schedule is piecewise
constant, so the fraction of the window spent in STATE_2 is a difference of
a piecewise-linear cumulative integral. Values are then scaled by the
exposure convention, corrupted with AWGN, clamped and quantized.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from specmark.colorimetry import ObserverSensitivity, Spectrum
from specmark.errors import ConfigError
from specmark.scene import DEFAULT_WHITE_LEVEL, ReflectanceSet, exposure_gains, render_scene_matrix
from specmark.codec.schedule import STATE_2, LightSchedule

DEFAULT_FRAME_RATE_HZ = 30.0
DEFAULT_RESOLUTION = (64, 64)
COLORCHECKER_ROWS, COLORCHECKER_COLS = 4, 6

_CHUNK_FRAMES = 64


@dataclass(frozen=True)
class CaptureConfig:
    """Capture parameters.

    ``phase_offset`` delays the first exposure by that fraction of a symbol
    period; ``exposure_fraction`` is the shutter time as a fraction of the
    frame period; ``noise_sigma`` is in normalized pixel units.
    ``exposure_scale`` multiplies every pre-noise value (an exposure change).
    """

    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ
    exposure_fraction: float = 0.5
    phase_offset: float = 0.0
    noise_sigma: float = 0.0
    bit_depth: int = 8
    resolution: tuple[int, int] = DEFAULT_RESOLUTION
    exposure_scale: float = 1.0
    white_level: float = DEFAULT_WHITE_LEVEL

    def __post_init__(self):
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))
        if not self.frame_rate_hz > 0:
            raise ConfigError("frame_rate_hz must be positive")
        if not 0 < self.exposure_fraction <= 1:
            raise ConfigError("exposure_fraction must lie in (0, 1]")
        if not 0 <= self.phase_offset < 1:
            raise ConfigError("phase_offset must lie in [0, 1)")
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be non-negative")
        if int(self.bit_depth) != self.bit_depth or not 1 <= self.bit_depth <= 16:
            raise ConfigError("bit_depth must be an integer in [1, 16]")
        if len(self.resolution) != 2 or min(self.resolution) < 1:
            raise ConfigError("resolution must be two positive integers (H, W)")
        if not self.exposure_scale > 0 or not self.white_level > 0:
            raise ConfigError("exposure_scale and white_level must be positive")

    @property
    def full_scale(self) -> int:
        return (1 << int(self.bit_depth)) - 1

    def check_rate(self, symbol_rate_hz: float) -> None:
        """Capture must sample at least twice per symbol."""
        if self.frame_rate_hz < 2.0 * symbol_rate_hz - 1e-9:
            raise ConfigError(
                f"frame rate {self.frame_rate_hz:g} Hz is below twice the symbol rate {symbol_rate_hz:g} Hz"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["resolution"] = list(self.resolution)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "CaptureConfig":
        return cls(**data)


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """``frames`` is ``(T, H, W, 3)`` unsigned integers in ``[0, 2**bit_depth - 1]``."""

    frames: np.ndarray
    config: CaptureConfig
    camera_label: str = ""
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ValueError(f"frames must be (T, H, W, 3), got {frames.shape}")
        if frames.dtype.kind != "u":
            raise ValueError("frames must hold unsigned integers")
        if frames.size and int(frames.max()) > self.config.full_scale:
            raise ValueError("frame values exceed the bit depth")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def resolution(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


# -- layouts ----------------------------------------------------------------


def tiled_layout(n_patches: int = 24, resolution=DEFAULT_RESOLUTION, rows: int = COLORCHECKER_ROWS, cols: int = COLORCHECKER_COLS) -> np.ndarray:
    """Chart layout: a ``rows x cols`` grid of patches stretched over the frame."""
    if rows * cols != n_patches:
        raise ValueError(f"{rows}x{cols} grid does not hold {n_patches} patches")
    h, w = resolution
    r = (np.arange(h) * rows) // h
    c = (np.arange(w) * cols) // w
    return (r[:, None] * cols + c[None, :]).astype(np.intp)


def random_block_layout(n_patches: int, resolution=DEFAULT_RESOLUTION, seed: int = 0, block: int = 8) -> np.ndarray:
    """Random scene: square blocks, each showing a patch drawn uniformly."""
    h, w = resolution
    rng = np.random.default_rng(seed)
    bh, bw = -(-h // block), -(-w // block)
    blocks = rng.integers(0, n_patches, size=(bh, bw))
    return np.kron(blocks, np.ones((block, block), dtype=np.intp))[:h, :w].astype(np.intp)


def dark_fraction_layout(
    resolution,
    fraction: float,
    dark_patch: int,
    bright_patches,
    block: int = 8,
) -> np.ndarray:
    """First ``round(fraction * H * W)`` raster pixels show ``dark_patch``;
    the rest tile ``bright_patches`` in blocks."""
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must lie in [0, 1]")
    bright = np.asarray(list(bright_patches), dtype=np.intp)
    h, w = resolution
    if bright.size == 0 and fraction < 1:
        raise ValueError("bright_patches is empty")
    flat = np.empty(h * w, dtype=np.intp)
    n_dark = int(round(fraction * h * w))
    flat[:n_dark] = dark_patch
    if n_dark < h * w:
        ii, jj = np.divmod(np.arange(h * w), w)
        tile = ((ii // block) * (-(-w // block)) + jj // block) % bright.size
        flat[n_dark:] = bright[tile[n_dark:]]
    return flat.reshape(h, w)


def check_layout(layout: np.ndarray, n_patches: int) -> np.ndarray:
    layout = np.asarray(layout)
    if layout.ndim != 2 or layout.dtype.kind not in "iu":
        raise ValueError("layout must be a 2-D integer index map")
    if layout.size and (layout.min() < 0 or layout.max() >= n_patches):
        raise ValueError(f"layout indices must lie in [0, {n_patches})")
    return layout


# -- exposure integration ---------------------------------------------------


def _cumulative_state(states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Integral of the STATE_2 indicator over ``[0, u]`` (symbol units).

    The last state is held after the schedule ends.
    """
    on = (states == STATE_2).astype(float)
    csum = np.concatenate([[0.0], np.cumsum(on)])
    n = len(on)
    k = np.clip(np.floor(u).astype(np.int64), 0, n - 1)
    base = csum[k] + (u - k) * on[k]
    tail = np.maximum(u - n, 0.0) * on[-1]
    return np.where(u >= n, csum[n] + tail, base)


def state_fractions(
    schedule: LightSchedule, config: CaptureConfig, n_frames: int, first_frame: int = 0
) -> np.ndarray:
    """Fraction of each frame's exposure window spent in STATE_2."""
    states = np.array(schedule.states)
    ratio = schedule.symbol_rate_hz / config.frame_rate_hz
    k = np.arange(first_frame, first_frame + n_frames, dtype=float)
    start = k * ratio + config.phase_offset
    length = config.exposure_fraction * ratio
    return (_cumulative_state(states, start + length) - _cumulative_state(states, start)) / length


def default_frame_count(schedule: LightSchedule, config: CaptureConfig) -> int:
    """Frames needed to cover the whole schedule."""
    return int(np.ceil(len(schedule.states) * config.frame_rate_hz / schedule.symbol_rate_hz - 1e-9))


def patch_responses(pair, patches: ReflectanceSet, camera: ObserverSensitivity, config: CaptureConfig, reference: Spectrum | None = None):
    """Noise-free per-patch pixel values ``(n_patch, 3)`` under each state, in counts.

    Exposure gains map the brightest patch under ``reference`` (default: the
    mean of the two lights) to ``white_level`` of full scale, per channel.
    """
    l1, l2 = pair.l1, pair.l2
    if reference is None:
        reference = Spectrum(l1.grid, 0.5 * (l1.values + l2.values))
    gains = exposure_gains(camera, reference, patches.spectrum(patches.white_index), config.white_level)
    k = gains * config.exposure_scale * config.full_scale
    return render_scene_matrix(l1, patches, camera) * k, render_scene_matrix(l2, patches, camera) * k


def lit_patches(pair, patches: ReflectanceSet, camera: ObserverSensitivity, config: CaptureConfig, margin: float = 1.1) -> list[int]:
    """Patches whose brightest channel stays ``margin`` times above half scale in both states."""
    v1, v2 = patch_responses(pair, patches, camera, config)
    peak = np.minimum(v1.max(axis=1), v2.max(axis=1))
    return [int(i) for i in np.flatnonzero(peak >= margin * (1 << (config.bit_depth - 1)))]


def simulate_capture(
    schedule: LightSchedule,
    patches: ReflectanceSet,
    camera: ObserverSensitivity,
    config: CaptureConfig | None = None,
    layout: np.ndarray | None = None,
    seed: int = 0,
    reference: Spectrum | None = None,
    n_frames: int | None = None,
    first_frame: int = 0,
) -> FrameSequence:
    """Render the schedule as seen by ``camera`` (see :func:`patch_responses`)."""
    config = config or CaptureConfig()
    config.check_rate(schedule.symbol_rate_hz)
    if schedule.pair is None:
        raise ValueError("schedule carries no spectra pair")
    if layout is None:
        layout = tiled_layout(len(patches), config.resolution)
    layout = check_layout(layout, len(patches))
    n_frames = default_frame_count(schedule, config) if n_frames is None else int(n_frames)
    if n_frames < 1:
        raise ValueError("n_frames must be positive")

    v1, v2 = patch_responses(schedule.pair, patches, camera, config, reference)
    fs = config.full_scale
    base = v1[layout]
    delta = (v2 - v1)[layout]

    w = state_fractions(schedule, config, n_frames, first_frame)
    dtype = np.uint8 if config.bit_depth <= 8 else np.uint16
    frames = np.empty((n_frames,) + layout.shape + (3,), dtype=dtype)
    rng = np.random.default_rng(seed)
    sigma = config.noise_sigma * fs
    for start in range(0, n_frames, _CHUNK_FRAMES):
        stop = min(start + _CHUNK_FRAMES, n_frames)
        chunk = base + w[start:stop, None, None, None] * delta
        if sigma > 0:
            chunk = chunk + sigma * rng.standard_normal(chunk.shape)
        frames[start:stop] = np.rint(np.clip(chunk, 0.0, fs))

    meta = {
        "symbol_rate_hz": schedule.symbol_rate_hz,
        "n_states": len(schedule.states),
        "seed": int(seed),
        "first_frame": int(first_frame),
    }
    return FrameSequence(frames, config, camera.label, meta)
