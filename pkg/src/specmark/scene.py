"""LED banks, reflectance sets, camera sets and per-patch rendering.

The scene model is purely spectral: every patch is a reflectance curve lit
uniformly, and an observer (human or camera) integrates the product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from specmark.colorimetry import (
    CANONICAL_GRID,
    ObserverSensitivity,
    Spectrum,
    WavelengthGrid,
    frozen_array,
    check_grids,
    integrate_to_tristimulus,
    tristimulus,
)

DEFAULT_LED_CENTERS_NM = (405, 430, 455, 480, 505, 530, 560, 590, 620, 660)
DEFAULT_LED_FWHM_NM = 20.0

# exposure convention: the white patch under the reference light lands here
DEFAULT_WHITE_LEVEL = 0.9


def gaussian_profile(grid: WavelengthGrid, center_nm: float, fwhm_nm: float) -> np.ndarray:
    sigma = fwhm_nm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    return np.exp(-0.5 * ((grid.wavelengths - center_nm) / sigma) ** 2)


@dataclass(frozen=True, eq=False)
class LedBank:
    """Narrowband LED spectra, one unit-peak row per LED."""

    grid: WavelengthGrid
    profiles: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        profiles = frozen_array(self.profiles, ndim=2)
        n_led, count = profiles.shape
        if count != self.grid.count:
            raise ValueError(f"profiles have {count} samples, grid has {self.grid.count}")
        if n_led < 2:
            raise ValueError("an LED bank needs at least two LEDs")
        if np.any(profiles < 0) or not np.all(np.isfinite(profiles)):
            raise ValueError("LED profiles must be finite and non-negative")
        if not np.allclose(profiles.max(axis=1), 1.0, atol=1e-9):
            raise ValueError("each LED profile must peak at exactly 1")
        labels = tuple(self.labels) or tuple(f"led{i}" for i in range(n_led))
        if len(labels) != n_led:
            raise ValueError("one label per LED required")
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "labels", labels)

    @property
    def n_led(self) -> int:
        return self.profiles.shape[0]

    @classmethod
    def gaussian(
        cls,
        centers_nm: Sequence[float] = DEFAULT_LED_CENTERS_NM,
        fwhm_nm: float | Sequence[float] = DEFAULT_LED_FWHM_NM,
        grid: WavelengthGrid = CANONICAL_GRID,
    ) -> "LedBank":
        widths = np.broadcast_to(np.asarray(fwhm_nm, dtype=float), (len(centers_nm),))
        rows = []
        for c, w in zip(centers_nm, widths):
            p = gaussian_profile(grid, c, w)
            rows.append(p / p.max())
        return cls(grid, np.array(rows), tuple(f"{c:g}nm" for c in centers_nm))

    @classmethod
    def from_spectra(cls, spectra: Iterable[Spectrum], labels: Sequence[str] = ()) -> "LedBank":
        spectra = list(spectra)
        grid = check_grids(*(s.grid for s in spectra))
        rows = [s.values / s.values.max() for s in spectra]
        return cls(grid, np.array(rows), tuple(labels))


@dataclass(frozen=True, eq=False)
class IntensityVector:
    """Per-LED duty cycles in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = frozen_array(self.values, ndim=1)
        if not np.all(np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def tolist(self) -> list[float]:
        return [float(v) for v in self.values]


@dataclass(frozen=True, eq=False)
class ReflectanceSet:
    grid: WavelengthGrid
    patches: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        patches = frozen_array(self.patches, ndim=2)
        if patches.shape[1] != self.grid.count:
            raise ValueError(f"patches have {patches.shape[1]} samples, grid has {self.grid.count}")
        if patches.shape[0] < 1:
            raise ValueError("reflectance set is empty")
        if not np.all(np.isfinite(patches)) or np.any(patches < 0) or np.any(patches > 1):
            raise ValueError("reflectance values must lie in [0, 1]")
        labels = tuple(self.labels) or tuple(f"patch{i}" for i in range(patches.shape[0]))
        if len(labels) != patches.shape[0]:
            raise ValueError("one label per patch required")
        object.__setattr__(self, "patches", patches)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.patches.shape[0]

    def spectrum(self, index: int) -> Spectrum:
        return Spectrum(self.grid, self.patches[index])

    @property
    def white_index(self) -> int:
        """Index of the brightest (highest mean reflectance) patch."""
        return int(np.argmax(self.patches.mean(axis=1)))

    def subset(self, indices: Sequence[int]) -> "ReflectanceSet":
        idx = list(indices)
        return ReflectanceSet(self.grid, self.patches[idx], tuple(self.labels[i] for i in idx))


@dataclass(frozen=True, eq=False)
class CameraSet:
    cameras: tuple[ObserverSensitivity, ...]

    def __post_init__(self):
        cameras = tuple(self.cameras)
        if not cameras:
            raise ValueError("camera set is empty")
        for cam in cameras:
            if cam.grid != CANONICAL_GRID:
                raise ValueError(f"camera {cam.label!r} is not on the canonical grid")
        object.__setattr__(self, "cameras", cameras)

    def __len__(self) -> int:
        return len(self.cameras)

    def __iter__(self) -> Iterator[ObserverSensitivity]:
        return iter(self.cameras)

    def __getitem__(self, i) -> ObserverSensitivity:
        return self.cameras[i]

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.cameras]

    def by_label(self, label: str) -> ObserverSensitivity:
        for cam in self.cameras:
            if cam.label == label:
                return cam
        raise KeyError(label)


# -- rendering --------------------------------------------------------------


def compose_illumination(bank: LedBank, intensities: IntensityVector | Sequence[float]) -> Spectrum:
    values = intensities.values if isinstance(intensities, IntensityVector) else np.asarray(intensities, float)
    if values.shape != (bank.n_led,):
        raise ValueError(f"expected {bank.n_led} intensities, got shape {values.shape}")
    return Spectrum(bank.grid, values @ bank.profiles)


def render_patch_response(light: Spectrum, reflectance: Spectrum, observer: ObserverSensitivity) -> np.ndarray:
    check_grids(light.grid, reflectance.grid, observer.grid)
    return integrate_to_tristimulus(Spectrum(light.grid, light.values * reflectance.values), observer)


def render_scene_matrix(light: Spectrum, patches: ReflectanceSet, observer: ObserverSensitivity) -> np.ndarray:
    """Row ``i`` is the observer's response to patch ``i`` under ``light``."""
    check_grids(light.grid, patches.grid, observer.grid)
    return tristimulus(patches.patches * light.values, observer)


def response_tensor(bank: LedBank, patches: ReflectanceSet, observer: ObserverSensitivity) -> np.ndarray:
    """Per-LED patch responses, shape ``(n_led, n_patches, 3)``.

    Rendering is linear in the LED intensities, so the response to any
    intensity vector ``x`` is ``tensordot(x, T, 1)``.
    """
    check_grids(bank.grid, patches.grid, observer.grid)
    return np.einsum("il,pl,lc->ipc", bank.profiles, patches.patches, observer.weights)


def exposure_gains(
    camera: ObserverSensitivity,
    reference: Spectrum,
    white: Spectrum,
    level: float = DEFAULT_WHITE_LEVEL,
) -> np.ndarray:
    """Per-channel gains mapping ``white`` under ``reference`` to ``level`` of full scale."""
    raw = render_patch_response(reference, white, camera)
    if np.any(raw <= 0):
        raise ValueError(f"camera {camera.label!r} sees no signal from the white patch")
    return level / raw


# -- synthetic cameras ------------------------------------------------------

# (center nm, sigma nm, amplitude) lobes per R, G, B channel
SYNTHETIC_CAMERA_LOBES: dict[str, tuple] = {
    "synth-a": (
        ((603, 28, 1.0), (445, 18, 0.04)),
        ((535, 36, 1.0),),
        ((462, 27, 1.0),),
    ),
    "synth-b": (
        ((596, 31, 1.0),),
        ((545, 34, 1.0), (480, 18, 0.08)),
        ((452, 24, 1.0), (515, 20, 0.08)),
    ),
    "synth-c": (
        ((612, 24, 1.0),),
        ((527, 40, 1.0),),
        ((470, 31, 1.0),),
    ),
    # held out of optimization; used for cross-camera decoding checks
    "synth-d": (
        ((600, 30, 1.0), (525, 18, 0.05)),
        ((540, 42, 1.0),),
        ((456, 28, 1.0),),
    ),
}

OPTIMIZATION_CAMERAS = ("synth-a", "synth-b", "synth-c")
HELD_OUT_CAMERA = "synth-d"


def synthetic_camera(label: str, lobes, grid: WavelengthGrid = CANONICAL_GRID) -> ObserverSensitivity:
    """Camera whose channels are sums of Gaussian lobes, each channel peak-normalised."""
    wl = grid.wavelengths
    channels = []
    for channel in lobes:
        curve = np.zeros(grid.count)
        for center, sigma, amp in channel:
            curve += amp * np.exp(-0.5 * ((wl - center) / sigma) ** 2)
        channels.append(curve / curve.max())
    return ObserverSensitivity(grid, np.array(channels), label)


def named_synthetic_camera(label: str) -> ObserverSensitivity:
    try:
        lobes = SYNTHETIC_CAMERA_LOBES[label]
    except KeyError:
        raise KeyError(f"unknown synthetic camera {label!r}; have {sorted(SYNTHETIC_CAMERA_LOBES)}") from None
    return synthetic_camera(label, lobes)


def default_cameras() -> CameraSet:
    return CameraSet(tuple(named_synthetic_camera(n) for n in OPTIMIZATION_CAMERAS))
