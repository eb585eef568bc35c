"""Run manifest: fixture bindings and every tunable, as one JSON document.

Every key has a default, so an empty manifest is valid. Overrides use dotted
paths (``optimizer.iterations=200``); values are parsed as JSON when
possible, else kept as strings.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import fields
from pathlib import Path
from typing import Any

from specmark.codec.capture import CaptureConfig
from specmark.errors import ConfigError, FixtureError
from specmark.fixtures import (
    load_camera_csv,
    load_camera_database,
    load_cmf,
    load_colorchecker,
    load_cri_samples,
    load_d65,
    load_led_bank,
    load_reflectance_set,
)
from specmark.optimizer import LossWeights, OptimizationContext, OptimizerConfig, Thresholds
from specmark.scene import (
    DEFAULT_LED_CENTERS_NM,
    DEFAULT_LED_FWHM_NM,
    OPTIMIZATION_CAMERAS,
    SYNTHETIC_CAMERA_LOBES,
    CameraSet,
    LedBank,
    named_synthetic_camera,
)

DEFAULTS: dict[str, Any] = {
    "fixtures": {
        "bank": None,
        "patches": None,
        "cmf": None,
        "d65": None,
        "cri_samples": None,
        "allow_colorchecker_cri": False,
    },
    "led_bank": {"centers_nm": list(DEFAULT_LED_CENTERS_NM), "fwhm_nm": DEFAULT_LED_FWHM_NM},
    "cameras": list(OPTIMIZATION_CAMERAS),
    "weights": {"w_h": 0.15, "w_c": 0.05, "w_w": 0.8},
    "thresholds": {"tau_c": 1.0 / 256.0, "tau_w": 40.0 / 4.6, "camera_full_scale": 255.0},
    "optimizer": {"learning_rate": 0.01, "iterations": 5000},
    "capture": {},
    "transmit": {"camera": "synth-a", "layout": "chart", "clip_seconds": 10.0, "payload_size": 128},
    "symbol_rate_hz": 15.0,
    "min_cri": 60.0,
    "seed": None,
    "output_dir": "specmark-out",
}


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown manifest key {path + key!r}")
        if isinstance(base[key], dict) and base[key] and isinstance(value, dict):
            out[key] = _merge(base[key], value, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def set_path(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise ConfigError(f"cannot set {dotted!r}: {key!r} is not a section")
        node = node[key]
    node[keys[-1]] = value


class RunManifest:
    def __init__(self, data: dict | None = None, base_dir: Path | None = None):
        self.data = _merge(DEFAULTS, data or {})
        self.base_dir = Path(base_dir) if base_dir else Path.cwd()
        self._validate()

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"manifest not found: {path}")
        try:
            data = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot parse manifest {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("manifest must be a JSON object")
        return cls(data, path.parent)

    def with_overrides(self, overrides: dict[str, Any]) -> "RunManifest":
        """Dotted-path overrides; ``None`` values are skipped (flag not given)."""
        data = copy.deepcopy(self.data)
        for key, value in overrides.items():
            if value is not None:
                set_path(data, key, value)
        return RunManifest(data, self.base_dir)

    def with_assignments(self, assignments) -> "RunManifest":
        parsed = {}
        for item in assignments or ():
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, text = item.split("=", 1)
            parsed[key.strip()] = _parse_value(text)
        return self.with_overrides(parsed)

    def _validate(self) -> None:
        try:
            self.weights()
            self.thresholds()
            self.capture_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        seed = self.data["seed"]
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
            raise ConfigError("seed must be an integer")
        if not self.data["cameras"]:
            raise ConfigError("at least one camera is required")

    # -- provenance ---------------------------------------------------------

    def canonical_json(self) -> str:
        # where the outputs go is not part of what was run
        data = {k: v for k, v in self.data.items() if k != "output_dir"}
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    @property
    def seed(self) -> int | None:
        return self.data["seed"]

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required (--seed or manifest 'seed')")
        return int(self.seed)

    @property
    def output_dir(self) -> Path:
        return self._resolve(self.data["output_dir"])

    # -- builders -------------------------------------------------------------

    def _resolve(self, p) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def _fixture(self, key: str) -> Path | None:
        p = self.data["fixtures"][key]
        if p is None:
            return None
        path = self._resolve(p)
        if not path.is_file():
            raise ConfigError(f"fixture {key!r} not found: {path}")
        return path

    def weights(self) -> LossWeights:
        return LossWeights(**self.data["weights"])

    def thresholds(self) -> Thresholds:
        return Thresholds(**self.data["thresholds"])

    def optimizer_config(self) -> OptimizerConfig:
        cfg = dict(self.data["optimizer"])
        allowed = {f.name for f in fields(OptimizerConfig)}
        unknown = set(cfg) - allowed
        if unknown:
            raise ConfigError(f"unknown optimizer keys: {sorted(unknown)}")
        if self.seed is not None:
            cfg["seed"] = self.seed
        try:
            return OptimizerConfig(**cfg)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def capture_config(self, **overrides) -> CaptureConfig:
        cfg = {**self.data["capture"], **{k: v for k, v in overrides.items() if v is not None}}
        allowed = {f.name for f in fields(CaptureConfig)}
        unknown = set(cfg) - allowed
        if unknown:
            raise ConfigError(f"unknown capture keys: {sorted(unknown)}")
        try:
            return CaptureConfig(**cfg)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def led_bank(self) -> LedBank:
        path = self._fixture("bank")
        if path is not None:
            return self._load(load_led_bank, path)
        spec = self.data["led_bank"]
        try:
            return LedBank.gaussian(spec["centers_nm"], spec["fwhm_nm"])
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"invalid led_bank: {exc}") from exc

    def patches(self):
        path = self._fixture("patches")
        return self._load(load_reflectance_set, path) if path else load_colorchecker()

    def human(self):
        path = self._fixture("cmf")
        return self._load(load_cmf, path) if path else load_cmf()

    def reference(self):
        path = self._fixture("d65")
        return self._load(load_d65, path) if path else load_d65()

    def cri_samples(self):
        path = self._fixture("cri_samples")
        allow = bool(self.data["fixtures"]["allow_colorchecker_cri"])
        return self._load(load_cri_samples, path, allow_colorchecker=allow)

    def camera(self, name: str):
        """A synthetic camera by name, or the first camera of a fixture file."""
        cams = self._camera_entry(name)
        return cams[0]

    def cameras(self) -> CameraSet:
        cams = []
        for entry in self.data["cameras"]:
            cams.extend(self._camera_entry(entry))
        return CameraSet(tuple(cams))

    def _camera_entry(self, entry) -> list:
        if isinstance(entry, str) and entry in SYNTHETIC_CAMERA_LOBES:
            return [named_synthetic_camera(entry)]
        if isinstance(entry, str):
            path = self._resolve(entry)
            if not path.is_file():
                raise ConfigError(f"unknown camera {entry!r} (not a synthetic name or a file)")
            if path.suffix.lower() == ".csv":
                return [self._load(load_camera_csv, path)]
            return self._load(load_camera_database, path)
        raise ConfigError(f"invalid camera entry {entry!r}")

    @staticmethod
    def _load(loader, *args, **kwargs):
        try:
            return loader(*args, **kwargs)
        except (FixtureError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def context(self) -> OptimizationContext:
        try:
            return OptimizationContext(
                self.led_bank(),
                self.patches(),
                self.cameras(),
                self.human(),
                self.reference(),
                self.cri_samples(),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
