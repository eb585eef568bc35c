from specmark.codec.capture import (
    CaptureConfig,
    FrameSequence,
    dark_fraction_layout,
    random_block_layout,
    simulate_capture,
    state_fractions,
    tiled_layout,
)
from specmark.codec.decode import (
    DecodeReport,
    binarize,
    bit_error_rate,
    decode,
    mask_dark_pixels,
    normalize,
    predict_noise_stats,
    select_phase_and_downsample,
    temporal_differences,
)
from specmark.codec.schedule import STATE_1, STATE_2, BitStream, LightSchedule, encode

__all__ = [
    "STATE_1",
    "STATE_2",
    "BitStream",
    "CaptureConfig",
    "DecodeReport",
    "FrameSequence",
    "LightSchedule",
    "binarize",
    "bit_error_rate",
    "dark_fraction_layout",
    "decode",
    "encode",
    "mask_dark_pixels",
    "normalize",
    "predict_noise_stats",
    "random_block_layout",
    "select_phase_and_downsample",
    "simulate_capture",
    "state_fractions",
    "temporal_differences",
]
