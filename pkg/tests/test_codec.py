import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specmark.codec import (
    STATE_1,
    STATE_2,
    BitStream,
    CaptureConfig,
    FrameSequence,
    LightSchedule,
    binarize,
    bit_error_rate,
    dark_fraction_layout,
    decode,
    encode,
    mask_dark_pixels,
    normalize,
    predict_noise_stats,
    random_block_layout,
    select_phase_and_downsample,
    simulate_capture,
    state_fractions,
    temporal_differences,
    tiled_layout,
)
from specmark.codec.capture import default_frame_count, lit_patches, patch_responses
from specmark.codec.container import (
    HEADER,
    decode_container,
    encode_container,
    read_container,
    write_container,
    write_png_frames,
)
from specmark.codec.decode import monte_carlo_difference_std
from specmark.errors import ConfigError, ContainerError, NoSignalError, SceneTooDarkError
from specmark.scene import named_synthetic_camera

CAM = named_synthetic_camera("synth-a")
SMALL = CaptureConfig(resolution=(24, 24))


def _frames(values, bit_depth=8):
    arr = np.asarray(values, dtype=np.uint8 if bit_depth <= 8 else np.uint16)
    return FrameSequence(arr, CaptureConfig(resolution=arr.shape[1:3], bit_depth=bit_depth))


def _schedule(pair, bits, sr=15.0):
    return encode(BitStream(tuple(bits)), sr, pair)


# -- encoding ---------------------------------------------------------------------


def test_encode_examples():
    assert encode([1, 0, 1, 1]).states == (STATE_1, STATE_2, STATE_2, STATE_1, STATE_2)
    assert encode([0, 0, 0]).states == (STATE_1,) * 4
    s = encode([1] * 6)
    assert s.states == (0, 1, 0, 1, 0, 1, 0)
    assert s.n_bits == 6 and s.duration_s == pytest.approx(7 / 15)


@settings(max_examples=100)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=200))
def test_encode_round_trip(bits):
    s = encode(bits)
    assert len(s.states) == len(bits) + 1
    assert s.bits().bits == tuple(bits)


def test_bitstream_validation():
    with pytest.raises(ValueError):
        BitStream(())
    with pytest.raises(ValueError):
        BitStream((0, 2))
    with pytest.raises(ValueError):
        LightSchedule(15.0, (0,))
    with pytest.raises(ValueError):
        LightSchedule(0.0, (0, 1))
    a, b = BitStream.random(64, 3), BitStream.random(64, 3)
    assert a == b and a != BitStream.random(64, 4)


# -- capture -----------------------------------------------------------------------


def test_capture_config_validation():
    for bad in (
        dict(frame_rate_hz=0),
        dict(exposure_fraction=0),
        dict(exposure_fraction=1.5),
        dict(phase_offset=1.0),
        dict(noise_sigma=-1),
        dict(bit_depth=0),
        dict(resolution=(0, 4)),
    ):
        with pytest.raises(ConfigError):
            CaptureConfig(**bad)
    with pytest.raises(ConfigError):
        CaptureConfig(frame_rate_hz=20).check_rate(15)
    CaptureConfig(frame_rate_hz=30).check_rate(15)
    cfg = CaptureConfig(noise_sigma=0.01, resolution=(8, 16))
    assert CaptureConfig.from_dict(cfg.to_dict()) == cfg


def test_constant_schedule_gives_identical_frames(pair, chart):
    seq = simulate_capture(_schedule(pair, [0] * 8), chart, CAM, SMALL)
    assert np.all(seq.frames == seq.frames[0])


def test_point_sampling_reads_current_state():
    sched = encode([1, 1, 0, 1, 1, 0, 0, 1])
    cfg = CaptureConfig(exposure_fraction=1e-6, phase_offset=0.25)
    w = state_fractions(sched, cfg, 18)
    k = np.arange(18)
    expected = np.array(sched.states + (sched.states[-1],))[np.floor(k / 2 + 0.25).astype(int)]
    assert np.allclose(w, expected, atol=1e-5)


def test_straddle_and_pure_windows():
    sched = encode([1, 0, 0])  # states 0 1 1 1, toggle at t = 1 symbol
    half = state_fractions(sched, CaptureConfig(exposure_fraction=1.0, phase_offset=0.25), 4)
    assert half[1] == pytest.approx(0.5, abs=1e-12)  # window [0.75, 1.25]
    pure = state_fractions(sched, CaptureConfig(exposure_fraction=1.0, phase_offset=0.5), 4)
    assert np.allclose(pure, [0.0, 1.0, 1.0, 1.0])


def test_last_state_is_held():
    sched = encode([1])
    w = state_fractions(sched, CaptureConfig(), 10)
    assert np.all(w[2:] == 1.0)
    assert default_frame_count(sched, CaptureConfig()) == 4


def test_capture_matches_patch_responses(pair, chart):
    sched = _schedule(pair, [1, 1])
    cfg = CaptureConfig(resolution=(4, 6), exposure_fraction=0.5)
    layout = tiled_layout(24, (4, 6))
    seq = simulate_capture(sched, chart, CAM, cfg, layout=layout)
    v1, v2 = patch_responses(pair, chart, CAM, cfg)
    assert np.array_equal(seq.frames[0], np.rint(np.clip(v1[layout], 0, 255)).astype(np.uint8))
    assert np.array_equal(seq.frames[2], np.rint(np.clip(v2[layout], 0, 255)).astype(np.uint8))
    assert seq.metadata["symbol_rate_hz"] == 15.0
    assert not seq.frames.flags.writeable


def test_capture_is_seeded(pair, chart):
    sched = _schedule(pair, [1, 0, 1, 1])
    cfg = CaptureConfig(resolution=(16, 16), noise_sigma=0.02)
    a = simulate_capture(sched, chart, CAM, cfg, seed=7)
    b = simulate_capture(sched, chart, CAM, cfg, seed=7)
    c = simulate_capture(sched, chart, CAM, cfg, seed=8)
    assert np.array_equal(a.frames, b.frames)
    assert not np.array_equal(a.frames, c.frames)


def test_capture_rejects_slow_camera(pair, chart):
    with pytest.raises(ConfigError):
        simulate_capture(_schedule(pair, [1]), chart, CAM, CaptureConfig(frame_rate_hz=25))


def test_layouts():
    t = tiled_layout(24, (4, 6))
    assert np.array_equal(t, np.arange(24).reshape(4, 6))
    r = random_block_layout(24, (20, 20), seed=1, block=4)
    assert r.shape == (20, 20) and r.max() < 24
    assert np.array_equal(r, random_block_layout(24, (20, 20), seed=1, block=4))
    d = dark_fraction_layout((10, 10), 0.4, 1, [3, 4])
    assert (d == 1).sum() == 40 and set(np.unique(d)) == {1, 3, 4}


def test_frame_sequence_validation():
    with pytest.raises(ValueError):
        _frames(np.zeros((2, 4, 4)))
    with pytest.raises(ValueError):
        FrameSequence(np.zeros((2, 4, 4, 3)), CaptureConfig(resolution=(4, 4)))
    with pytest.raises(ValueError):
        FrameSequence(np.full((2, 2, 2, 3), 300, np.uint16), CaptureConfig(resolution=(2, 2)))


# -- decoder stages -----------------------------------------------------------------


def test_mask_threshold_is_half_scale():
    f = np.full((3, 1, 3, 3), 127, dtype=np.uint8)
    f[1, 0, 1, 2] = 128  # one channel, one frame is enough
    f[:, 0, 2, :] = 255
    assert mask_dark_pixels(f).tolist() == [[True, False, False]]
    assert mask_dark_pixels(f.astype(np.uint16) * 4, bit_depth=10).tolist() == [[True, False, False]]


def test_normalize_unit_mean():
    f = np.zeros((2, 1, 3, 3), dtype=np.uint8)
    f[:, 0, 0] = 10
    f[:, 0, 1] = 200
    f[1, 0, 2] = 240
    mask = mask_dark_pixels(f)
    n = normalize(f, mask)
    assert n[:, ~mask].mean() == pytest.approx(1.0)
    with pytest.raises(SceneTooDarkError):
        normalize(f, np.ones((1, 3), bool))


def test_temporal_differences_example():
    f = np.zeros((3, 1, 2, 3))
    f[1] = 1.0
    f[2, 0, 0] = 3.0
    d = temporal_differences(f)
    assert np.allclose(d, [1.0, 1.5])
    d = temporal_differences(f, mask=np.array([[False, True]]))
    assert np.allclose(d, [1.0, 2.0])
    with pytest.raises(ValueError):
        temporal_differences(f[:1])


def test_phase_selection_even_odd():
    d = np.tile([0.0, 1.0], 10)
    sel = select_phase_and_downsample(d, 30, 15)
    assert sel.chosen_phase == 1 and np.all(sel.signal == 1.0)
    assert not sel.ratio_flagged and sel.ratio == 2.0
    shifted = select_phase_and_downsample(d[1:], 30, 15)
    assert shifted.chosen_phase == 0 and np.all(shifted.signal == 1.0)


def test_phase_selection_non_integer_ratio_is_flagged():
    sel = select_phase_and_downsample(np.arange(20.0), 37.5, 15)
    assert sel.ratio_flagged and len(sel.phase_sums) == 3
    with pytest.raises(ValueError):
        select_phase_and_downsample(np.ones(4), 20, 15)


def test_binarize_example():
    s = np.array([0.01, 0.012, 0.5, 0.011, 0.52, 0.49, 0.009, 0.01])
    b = binarize(s, sample_count=1000)
    assert b.bits.bits == (0, 0, 1, 0, 1, 1, 0, 0)
    assert b.noise_floor == pytest.approx(np.mean([0.009, 0.01]))  # two smallest of eight
    assert b.noise_floor < b.static_threshold < b.dynamic_threshold


def test_binarize_without_signal():
    with pytest.raises(NoSignalError):
        binarize(np.zeros(10))
    with pytest.raises(NoSignalError):
        binarize(np.full(10, 0.3))


def test_noise_prediction_examples():
    assert predict_noise_stats(1.0, 2) == (0.0, pytest.approx(1.0))
    assert predict_noise_stats(1.0, 1_000_000)[1] == pytest.approx(0.0014142, abs=1e-7)
    with pytest.raises(ValueError):
        predict_noise_stats(1.0, 0)


@settings(max_examples=50)
@given(st.floats(1e-4, 10), st.integers(1, 10**6))
def test_noise_prediction_scales_inverse_sqrt(sigma, n):
    assert predict_noise_stats(sigma, 4 * n)[1] == pytest.approx(predict_noise_stats(sigma, n)[1] / 2, rel=1e-12)


def test_monte_carlo_noise_agreement():
    sigma, n = 0.02, 1000
    oracle = sigma * math.sqrt(2.0 / n)
    assert monte_carlo_difference_std(sigma, n, 4000, seed=1) == pytest.approx(oracle, rel=0.05)


def test_awgn_differences_follow_folded_normal(pair, chart):
    # frames of a static scene: mean |f1 - f0| over pixels approaches 2 s / sqrt(pi)
    sigma = 0.02
    cfg = CaptureConfig(resolution=(64, 64), noise_sigma=sigma)
    seq = simulate_capture(_schedule(pair, [0] * 7), chart, CAM, cfg, layout=np.full((64, 64), chart.white_index))
    raw = seq.frames.astype(float)
    d = temporal_differences(raw)
    eff = math.sqrt((sigma * 255) ** 2 + 1 / 12)  # rounding adds uniform noise
    assert d.mean() == pytest.approx(2 * eff / math.sqrt(math.pi), rel=0.03)
    signed = np.diff(raw.mean(axis=(1, 2, 3)))
    assert signed.std() < 5 * eff * math.sqrt(2 / (64 * 64 * 3))


def test_bit_error_rate():
    assert bit_error_rate([1, 0, 1, 1], [1, 0, 1, 1, 0]) == 0.0
    assert bit_error_rate([1, 0, 1, 1], [1, 1]) == 0.75
    with pytest.raises(ValueError):
        bit_error_rate([], [1])


# -- full decode ----------------------------------------------------------------------


def test_streaming_decode_matches_stages(pair, chart):
    bits = BitStream.random(40, 2)
    seq = simulate_capture(_schedule(pair, bits), chart, CAM, CaptureConfig(resolution=(32, 32), noise_sigma=0.005))
    mask = mask_dark_pixels(seq)
    d = temporal_differences(normalize(seq, mask), mask)
    sel = select_phase_and_downsample(d, 30, 15)
    report = decode(seq)
    assert np.allclose(report.raw_signal, sel.signal, rtol=1e-12)
    b = binarize(sel.signal, sample_count=int((~mask).sum()) * 3)
    assert report.bits == b.bits
    assert report.mask_fraction == pytest.approx(mask.mean())
    assert bit_error_rate(bits, report.bits) == 0.0


def test_decode_reports_dark_scene(pair, chart):
    layout = dark_fraction_layout((16, 16), 1.0, 1, [])
    seq = simulate_capture(_schedule(pair, [1, 0, 1]), chart, CAM, CaptureConfig(resolution=(16, 16)), layout=layout)
    with pytest.raises(SceneTooDarkError, match="scene too dark"):
        decode(seq)


def test_decode_needs_two_frames(pair, chart):
    seq = simulate_capture(_schedule(pair, [1]), chart, CAM, SMALL, n_frames=1)
    with pytest.raises(ValueError):
        decode(seq)


@settings(max_examples=15, deadline=None)
@given(st.integers(16, 128), st.integers(0, 2**16))
def test_noiseless_round_trip(pair, chart, n, seed):
    bits = BitStream.random(n, seed)
    # random blocks of patches bright enough to survive the mask
    lit = np.array(lit_patches(pair, chart, CAM, SMALL))
    layout = lit[random_block_layout(lit.size, (24, 24), seed=seed, block=4)]
    seq = simulate_capture(_schedule(pair, bits), chart, CAM, SMALL, layout=layout, seed=seed)
    assert bit_error_rate(bits, decode(seq).bits) == 0.0


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 8))
def test_normalized_signal_is_scale_invariant(pair, chart, k):
    seq = simulate_capture(_schedule(pair, [1, 0, 1, 1, 0, 1]), chart, CAM, SMALL)
    mask = mask_dark_pixels(seq)
    base = temporal_differences(normalize(seq, mask), mask)
    scaled = seq.frames.astype(np.uint16) * k
    assert np.allclose(temporal_differences(normalize(scaled, mask), mask), base, rtol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(16, 64), st.integers(0, 2**16))
def test_decode_is_invariant_to_frame_phase(pair, chart, n, seed):
    bits = BitStream.random(n, seed).bits
    sched = _schedule(pair, bits)
    n = default_frame_count(sched, SMALL)
    a = decode(simulate_capture(sched, chart, CAM, SMALL, n_frames=n))
    b = decode(simulate_capture(sched, chart, CAM, SMALL, n_frames=n - 1, first_frame=1))
    assert a.chosen_phase != b.chosen_phase
    assert a.bits.bits[: len(bits)] == b.bits.bits[: len(bits)] == tuple(bits)


def test_mask_fraction_is_monotone_in_dark_area(pair, chart):
    cfg = CaptureConfig(resolution=(32, 32))
    bright = lit_patches(pair, chart, CAM, cfg)
    dark = int(np.argmin(patch_responses(pair, chart, CAM, cfg)[0].max(axis=1)))
    sched = _schedule(pair, [1, 0, 1])
    fractions = []
    for f in (0.0, 0.2, 0.5, 0.8):
        seq = simulate_capture(sched, chart, CAM, cfg, layout=dark_fraction_layout((32, 32), f, dark, bright))
        fractions.append(float(mask_dark_pixels(seq).mean()))
    assert fractions == sorted(fractions)
    assert fractions[0] == 0.0


# -- container ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_seq(pair, chart):
    cfg = CaptureConfig(resolution=(8, 12), noise_sigma=0.01)
    return simulate_capture(_schedule(pair, [1, 0, 1, 1]), chart, CAM, cfg, layout=tiled_layout(24, (8, 12)), seed=3)


def test_container_round_trip(small_seq, tmp_path):
    path = write_container(tmp_path / "c.smrk", small_seq, {"bits": [1, 0, 1, 1]})
    back, extra = read_container(path)
    assert np.array_equal(back.frames, small_seq.frames)
    assert back.config == small_seq.config
    assert back.camera_label == "synth-a" and back.metadata == small_seq.metadata
    assert extra == {"bits": [1, 0, 1, 1]}
    assert encode_container(back, extra) == path.read_bytes()


def test_container_sixteen_bit():
    f = _frames(np.full((2, 2, 2, 3), 1000), bit_depth=12)
    back, _ = decode_container(encode_container(f))
    assert back.frames.dtype == np.uint16 and np.array_equal(back.frames, f.frames)


def test_container_corruption(small_seq, tmp_path):
    blob = encode_container(small_seq)
    for bad in (blob[:10], blob[:-1], blob + b"\0", b"XXXX" + blob[4:]):
        with pytest.raises(ContainerError):
            decode_container(bad)
    version = bytearray(blob)
    version[4] = 9
    with pytest.raises(ContainerError):
        decode_container(bytes(version))
    meta = bytearray(blob)
    meta[HEADER.size] = ord("#")
    with pytest.raises(ContainerError):
        decode_container(bytes(meta))
    with pytest.raises(ContainerError):
        read_container(tmp_path / "missing.smrk")


def test_png_export(small_seq, tmp_path):
    from PIL import Image

    paths = write_png_frames(tmp_path / "png", small_seq)
    assert len(paths) == small_seq.n_frames
    assert np.array_equal(np.asarray(Image.open(paths[2])), small_seq.frames[2])
