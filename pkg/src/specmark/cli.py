"""``specmark`` command line: optimize, transmit, decode, evaluate.

Exit codes: 0 success, 1 optimization failure (divergence or CRI below the
floor), 2 configuration error, 3 decode failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from specmark.codec.capture import (
    CaptureConfig,
    dark_fraction_layout,
    default_frame_count,
    lit_patches,
    random_block_layout,
    simulate_capture,
    tiled_layout,
)
from specmark.codec.container import read_container, write_container, write_png_frames
from specmark.codec.decode import bit_error_rate, decode
from specmark.codec.schedule import BitStream, encode
from specmark.errors import ConfigError, ContainerError, DecodeError, DivergenceError, SpecmarkError
from specmark.manifest import RunManifest
from specmark.optimizer import OptimizationResult, SpectraPair, optimize_pair

EXIT_OK = 0
EXIT_OPTIMIZE = 1
EXIT_CONFIG = 2
EXIT_DECODE = 3
EXIT_IO = 4

SWEEP_AXES = ("noise_sigma", "phase_offset", "exposure_fraction", "camera", "layout")

logger = logging.getLogger("specmark")


class OptimizationFailed(SpecmarkError):
    def __init__(self, payload: dict):
        super().__init__(payload.get("message", "optimization failed"))
        self.payload = payload


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _prepare_output(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ContainerError(f"cannot create output directory {path}: {exc}") from exc
    return path


# -- manifest assembly --------------------------------------------------------


def _manifest(args) -> RunManifest:
    m = RunManifest.load(args.manifest) if args.manifest else RunManifest()
    m = m.with_assignments(getattr(args, "set", None))
    flags = {
        "seed": getattr(args, "seed", None),
        "output_dir": str(Path(args.output_dir).resolve()) if getattr(args, "output_dir", None) else None,
        "optimizer.iterations": getattr(args, "iterations", None),
        "optimizer.learning_rate": getattr(args, "learning_rate", None),
        "symbol_rate_hz": getattr(args, "symbol_rate", None),
        "capture.noise_sigma": getattr(args, "noise_sigma", None),
        "capture.phase_offset": getattr(args, "phase_offset", None),
        "capture.exposure_fraction": getattr(args, "exposure_fraction", None),
        "capture.frame_rate_hz": getattr(args, "frame_rate", None),
        "transmit.camera": getattr(args, "camera", None),
        "transmit.layout": getattr(args, "layout", None),
        "transmit.clip_seconds": getattr(args, "clip_seconds", None),
        "transmit.payload_size": getattr(args, "payload_size", None),
    }
    if getattr(args, "weights", None):
        try:
            w_h, w_c, w_w = (float(v) for v in args.weights.split(","))
        except ValueError:
            raise ConfigError("--weights expects three comma-separated numbers") from None
        flags.update({"weights.w_h": w_h, "weights.w_c": w_c, "weights.w_w": w_w})
    return m.with_overrides(flags)


def _load_pair(path) -> SpectraPair:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"pair file not found: {path}")
    try:
        return SpectraPair.from_dict(json.loads(path.read_text()))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot parse pair file {path}: {exc}") from exc


def _run_optimizer(manifest: RunManifest) -> OptimizationResult:
    ctx = manifest.context()
    try:
        return optimize_pair(ctx, manifest.weights(), manifest.thresholds(), manifest.optimizer_config())
    except DivergenceError as exc:
        raise OptimizationFailed(exc.to_dict()) from exc


def _pair_for(args, manifest: RunManifest) -> SpectraPair:
    if getattr(args, "pair", None):
        return _load_pair(args.pair)
    logger.info("no --pair given; optimizing a pair first")
    return _run_optimizer(manifest).pair


def build_layout(name: str, manifest: RunManifest, pair: SpectraPair, camera, config: CaptureConfig) -> np.ndarray:
    """``chart``, ``random:<seed>`` or ``dark:<fraction>``."""
    patches = manifest.patches()
    kind, _, arg = str(name).partition(":")
    try:
        if kind == "chart":
            return tiled_layout(len(patches), config.resolution)
        if kind == "random":
            return random_block_layout(len(patches), config.resolution, seed=int(arg or 0))
        if kind == "dark":
            fraction = float(arg)
            dark = int(np.argmin(patches.patches.mean(axis=1)))
            bright = lit_patches(pair, patches, camera, config)
            return dark_fraction_layout(config.resolution, fraction, dark, bright or [patches.white_index])
    except ValueError as exc:
        raise ConfigError(f"invalid layout {name!r}: {exc}") from exc
    raise ConfigError(f"unknown layout {name!r} (use chart, random:<seed>, dark:<fraction>)")


def _frame_count(schedule, config: CaptureConfig, clip_seconds: float) -> int:
    return max(default_frame_count(schedule, config), int(round(clip_seconds * config.frame_rate_hz)))


def _capture(manifest: RunManifest, pair: SpectraPair, bits: BitStream, seed: int, camera_name: str, layout_name: str, config: CaptureConfig):
    schedule = encode(bits, float(manifest.data["symbol_rate_hz"]), pair)
    config.check_rate(schedule.symbol_rate_hz)
    camera = manifest.camera(camera_name)
    layout = build_layout(layout_name, manifest, pair, camera, config)
    n_frames = _frame_count(schedule, config, float(manifest.data["transmit"]["clip_seconds"]))
    try:
        return simulate_capture(schedule, manifest.patches(), camera, config, layout, seed=seed, n_frames=n_frames)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _bits_from_args(args, manifest: RunManifest, seed: int) -> BitStream:
    if getattr(args, "bits", None) is not None:
        text = args.bits.strip()
        if not text:
            raise ConfigError("--bits is empty")
        if set(text) - {"0", "1"}:
            raise ConfigError("--bits must contain only 0 and 1")
        return BitStream(tuple(int(c) for c in text))
    n = manifest.data["transmit"]["payload_size"]
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"payload size must be a positive integer, got {n!r}")
    return BitStream.random(n, seed)


# -- commands -------------------------------------------------------------------


def cmd_optimize(args) -> int:
    manifest = _manifest(args)
    seed = manifest.require_seed()
    out = _prepare_output(manifest.output_dir)
    digest = manifest.sha256()
    try:
        result = _run_optimizer(manifest)
    except OptimizationFailed as exc:
        payload = {**exc.payload, "seed": seed, "manifest_sha256": digest}
        _write_json(out / "error.json", payload)
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return EXIT_OPTIMIZE

    pair = result.pair
    provenance = {"seed": seed, "manifest_sha256": digest}
    _write_json(out / "pair.json", {**pair.to_dict(), **provenance, "best_iteration": result.best_iteration})
    ctx_ref = manifest.context().reference
    wl = pair.l1.grid.wavelengths
    _write_csv(
        out / "spectra.csv",
        ["wavelength_nm", "l1", "l2", "reference", "seed", "manifest_sha256"],
        ([w, a, b, r, seed, digest] for w, a, b, r in zip(wl, pair.l1.values, pair.l2.values, ctx_ref.values)),
    )
    _write_csv(
        out / "loss_trace.csv",
        ["iteration", *OptimizationResult.TRACE_COLUMNS, "seed", "manifest_sha256"],
        ([i, *row, seed, digest] for i, row in enumerate(result.trace)),
    )
    metrics = {**pair.metrics.to_dict(), **provenance, "best_iteration": result.best_iteration}
    min_cri = float(manifest.data["min_cri"])
    metrics["cri_feasible"] = bool(pair.metrics.cri_1 >= min_cri and pair.metrics.cri_2 >= min_cri)
    _write_json(out / "metrics.json", metrics)
    if not metrics["cri_feasible"]:
        payload = {
            "error": "infeasible_cri",
            "message": f"CRI below {min_cri:g}",
            "cri_1": pair.metrics.cri_1,
            "cri_2": pair.metrics.cri_2,
            **provenance,
        }
        _write_json(out / "error.json", payload)
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return EXIT_OPTIMIZE
    print(json.dumps({"output_dir": str(out), **pair.metrics.to_dict()}, sort_keys=True))
    return EXIT_OK


def cmd_transmit(args) -> int:
    manifest = _manifest(args)
    seed = manifest.require_seed()
    config = manifest.capture_config()
    config.check_rate(float(manifest.data["symbol_rate_hz"]))
    bits = _bits_from_args(args, manifest, seed)
    pair = _pair_for(args, manifest)
    t = manifest.data["transmit"]
    frames = _capture(manifest, pair, bits, seed, t["camera"], t["layout"], config)

    out = Path(args.output) if args.output else _prepare_output(manifest.output_dir) / "frames.smrk"
    digest = manifest.sha256()
    extra = {"manifest_sha256": digest, "seed": seed, "layout": t["layout"]}
    write_container(out, frames, extra)
    sidecar = sidecar_path(out)
    _write_json(
        sidecar,
        {"bits": list(bits.bits), "n_bits": len(bits), "symbol_rate_hz": float(manifest.data["symbol_rate_hz"]), **extra},
    )
    if args.png_dir:
        write_png_frames(args.png_dir, frames)
    print(json.dumps({"frames": str(out), "n_frames": frames.n_frames, "n_bits": len(bits), "sidecar": str(sidecar)}, sort_keys=True))
    return EXIT_OK


def sidecar_path(container: Path) -> Path:
    container = Path(container)
    return container.with_name(container.stem + ".bits.json")


def cmd_decode(args) -> int:
    manifest = _manifest(args)
    frames, extra = read_container(args.frames)
    rate = args.symbol_rate if args.symbol_rate is not None else frames.metadata.get("symbol_rate_hz", 15.0)
    report = decode(frames, float(rate))
    out = _prepare_output(manifest.output_dir)
    data = report.to_dict()
    data["manifest_sha256"] = manifest.sha256()
    data["source_manifest_sha256"] = extra.get("manifest_sha256")

    truth_path = Path(args.truth) if args.truth else sidecar_path(Path(args.frames))
    if truth_path.is_file():
        try:
            truth = json.loads(truth_path.read_text())["bits"]
        except (OSError, ValueError, KeyError) as exc:
            raise ContainerError(f"cannot read ground truth {truth_path}: {exc}") from exc
        ber = bit_error_rate(truth, report.bits.bits)
        data["ber"] = ber
        data["n_sent_bits"] = len(truth)
        print(f"BER: {ber:.6g} ({round(ber * len(truth))}/{len(truth)} bits)")
    _write_json(out / "report.json", data)
    bits = report.bits.bits
    _write_csv(
        out / "signal.csv",
        ["symbol", "value", "bit", "manifest_sha256"],
        ([k, v, bits[k], data["manifest_sha256"]] for k, v in enumerate(report.raw_signal)),
    )
    print(json.dumps({"n_bits": len(bits), "mask_fraction": report.mask_fraction, "chosen_phase": report.chosen_phase}, sort_keys=True))
    return EXIT_OK


def load_sweep(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"sweep file not found: {path}")
    try:
        sweep = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot parse sweep {path}: {exc}") from exc
    if not isinstance(sweep, dict):
        raise ConfigError("sweep must be a JSON object")
    unknown = set(sweep) - set(SWEEP_AXES) - {"payload_size"}
    if unknown:
        raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
    axes = {k: sweep[k] for k in SWEEP_AXES if k in sweep}
    if not axes:
        raise ConfigError("sweep is empty: give at least one axis")
    for k, v in axes.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"sweep axis {k!r} must be a non-empty list")
    return sweep


EVALUATE_COLUMNS = [
    "cell",
    "camera",
    "layout",
    "noise_sigma",
    "phase_offset",
    "exposure_fraction",
    "n_bits",
    "bit_errors",
    "ber",
    "mask_fraction",
    "chosen_phase",
    "dynamic_threshold",
    "noise_floor",
    "signal_mean",
    "signal_max",
    "error",
    "seed",
    "manifest_sha256",
]


def evaluate_cells(manifest: RunManifest, sweep: dict, pair: SpectraPair, seed: int):
    """Yield one result row (dict) per sweep cell, in a fixed order."""
    t = manifest.data["transmit"]
    base = manifest.capture_config()
    defaults = {
        "noise_sigma": [base.noise_sigma],
        "phase_offset": [base.phase_offset],
        "exposure_fraction": [base.exposure_fraction],
        "camera": [t["camera"]],
        "layout": [t["layout"]],
    }
    axes = [sweep.get(k, defaults[k]) for k in SWEEP_AXES]
    n = sweep.get("payload_size", t["payload_size"])
    if not isinstance(n, int) or n < 1:
        raise ConfigError("payload_size must be a positive integer")
    bits = BitStream.random(n, seed)
    digest = manifest.sha256()
    for i, (noise, phase, exposure, camera, layout) in enumerate(itertools.product(*axes)):
        config = manifest.capture_config(noise_sigma=noise, phase_offset=phase, exposure_fraction=exposure)
        row = dict.fromkeys(EVALUATE_COLUMNS, "")
        row.update(
            cell=i, camera=camera, layout=layout, noise_sigma=float(noise), phase_offset=float(phase),
            exposure_fraction=float(exposure), n_bits=n, seed=seed, manifest_sha256=digest,
        )
        frames = _capture(manifest, pair, bits, seed, camera, layout, config)
        try:
            report = decode(frames, float(manifest.data["symbol_rate_hz"]))
        except DecodeError as exc:
            row.update(error=str(exc), ber=1.0, bit_errors=n)
            yield row
            continue
        ber = bit_error_rate(bits.bits, report.bits.bits)
        row.update(
            ber=ber,
            bit_errors=int(round(ber * n)),
            mask_fraction=report.mask_fraction,
            chosen_phase=report.chosen_phase,
            dynamic_threshold=report.dynamic_threshold,
            noise_floor=report.noise_floor,
            signal_mean=float(np.mean(report.raw_signal)),
            signal_max=float(np.max(report.raw_signal)),
        )
        yield row


def cmd_evaluate(args) -> int:
    manifest = _manifest(args)
    seed = manifest.require_seed()
    sweep = load_sweep(args.sweep)
    pair = _pair_for(args, manifest)
    out = _prepare_output(manifest.output_dir)
    rows = list(evaluate_cells(manifest, sweep, pair, seed))
    _write_csv(out / "evaluate.csv", EVALUATE_COLUMNS, ([r[c] for c in EVALUATE_COLUMNS] for r in rows))
    worst = max(float(r["ber"]) for r in rows)
    print(json.dumps({"cells": len(rows), "max_ber": worst, "output": str(out / "evaluate.csv")}, sort_keys=True))
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, seed_required: bool) -> None:
    p.add_argument("--manifest", help="run manifest JSON (all keys optional)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a manifest key by dotted path")
    p.add_argument("--output-dir", help="directory for output artifacts")
    p.add_argument("--seed", type=int, required=seed_required, help="random seed (recorded in every output)")
    p.add_argument("-v", "--verbose", action="store_true")


def _capture_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--noise-sigma", type=float, help="AWGN std in normalized pixel units")
    p.add_argument("--phase-offset", type=float, help="capture delay as a fraction of a symbol period")
    p.add_argument("--exposure-fraction", type=float, help="shutter time as a fraction of the frame period")
    p.add_argument("--frame-rate", type=float, help="capture frame rate (Hz)")
    p.add_argument("--symbol-rate", type=float, help="light switching rate (Hz)")
    p.add_argument("--pair", help="pair.json from a previous optimize run (else optimize first)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specmark", description="Metameric LED light pairs and spectral-modulation bit transfer.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="optimize a metameric light pair")
    _common(p, seed_required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--weights", help="w_h,w_c,w_w")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("transmit", help="encode bits and simulate a capture")
    _common(p, seed_required=True)
    _capture_flags(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--bits", help="explicit bit string, e.g. 10110")
    group.add_argument("--payload-size", type=int, help="number of random bits")
    p.add_argument("--camera", help="synthetic camera name or camera fixture path")
    p.add_argument("--layout", help="chart, random:<seed> or dark:<fraction>")
    p.add_argument("--clip-seconds", type=float, help="minimum clip length")
    p.add_argument("--output", help="container path (default <output-dir>/frames.smrk)")
    p.add_argument("--png-dir", help="also write one PNG per frame here")
    p.set_defaults(func=cmd_transmit)

    p = sub.add_parser("decode", help="decode bits from a frame container")
    _common(p, seed_required=False)
    p.add_argument("frames", help=".smrk container")
    p.add_argument("--symbol-rate", type=float)
    p.add_argument("--truth", help="ground-truth sidecar (default <frames>.bits.json)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="BER sweep over capture conditions")
    _common(p, seed_required=True)
    p.add_argument("--sweep", required=True, help="sweep JSON: lists for " + ", ".join(SWEEP_AXES))
    p.add_argument("--pair", help="pair.json from a previous optimize run (else optimize first)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except OptimizationFailed as exc:
        print(json.dumps(exc.payload, sort_keys=True), file=sys.stderr)
        return EXIT_OPTIMIZE
    except DecodeError as exc:
        print(json.dumps({"error": "decode", "kind": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_DECODE
    except (ContainerError, OSError) as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
