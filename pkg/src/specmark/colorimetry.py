"""Spectral sampling, CIE tristimulus integration, CIELAB and CIEDE2000.

Everything runs on a single :class:`WavelengthGrid`; fixtures are resampled on
load so spectral arrays can be combined elementwise without realignment.

The array-level helpers (:func:`tristimulus`, :func:`lab_from_xyz`,
:func:`delta_e_2000`) accept :class:`~specmark.autodiff.Dual` inputs, which is
how the optimizer gets exact gradients through the colour pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from specmark import autodiff as ad
from specmark.errors import GridMismatchError

# CIELAB cube-root / linear split point
LAB_EPSILON = (6.0 / 29.0) ** 3
LAB_KAPPA = 1.0 / (3.0 * (6.0 / 29.0) ** 2)

CRI_SLOPE = 4.6


def frozen_array(values, ndim: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-D array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WavelengthGrid:
    start_nm: float
    step_nm: float
    count: int

    def __post_init__(self):
        if not self.step_nm > 0:
            raise ValueError("step_nm must be positive")
        if int(self.count) != self.count or self.count < 2:
            raise ValueError("a wavelength grid needs at least two samples")

    @property
    def wavelengths(self) -> np.ndarray:
        return self.start_nm + self.step_nm * np.arange(self.count)

    @property
    def stop_nm(self) -> float:
        return self.start_nm + self.step_nm * (self.count - 1)

    @classmethod
    def from_range(cls, start_nm: float, stop_nm: float, step_nm: float) -> "WavelengthGrid":
        count = int(round((stop_nm - start_nm) / step_nm)) + 1
        return cls(float(start_nm), float(step_nm), count)


CANONICAL_GRID = WavelengthGrid(400.0, 10.0, 33)


def check_grids(*grids: WavelengthGrid) -> WavelengthGrid:
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridMismatchError(f"wavelength grids differ: {first} vs {g}")
    return first


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Relative spectral power sampled on ``grid``."""

    grid: WavelengthGrid
    values: np.ndarray

    def __post_init__(self):
        values = frozen_array(self.values, ndim=1)
        if values.shape[0] != self.grid.count:
            raise ValueError(f"{values.shape[0]} samples for a {self.grid.count}-point grid")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("spectral values must be finite and non-negative")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: WavelengthGrid = CANONICAL_GRID) -> "Spectrum":
        return cls(grid, np.zeros(grid.count))

    @classmethod
    def flat(cls, grid: WavelengthGrid = CANONICAL_GRID, level: float = 1.0) -> "Spectrum":
        return cls(grid, np.full(grid.count, float(level)))

    def scaled(self, factor: float) -> "Spectrum":
        return Spectrum(self.grid, self.values * float(factor))

    def resample(self, grid: WavelengthGrid) -> "Spectrum":
        """Linear interpolation onto ``grid`` (no extrapolation)."""
        return Spectrum(grid, resample_values(self.grid.wavelengths, self.values, grid))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values > 0)


def resample_values(wavelengths, values, grid: WavelengthGrid) -> np.ndarray:
    """Linearly resample ``values`` (wavelength along axis 0) onto ``grid``."""
    wavelengths = np.asarray(wavelengths, dtype=float)
    values = np.asarray(values, dtype=float)
    target = grid.wavelengths
    tol = 1e-9
    if target[0] < wavelengths[0] - tol or target[-1] > wavelengths[-1] + tol:
        raise ValueError(
            f"data covers {wavelengths[0]:g}-{wavelengths[-1]:g} nm, "
            f"grid needs {target[0]:g}-{target[-1]:g} nm"
        )
    if values.ndim == 1:
        return np.interp(target, wavelengths, values)
    return np.stack([np.interp(target, wavelengths, col) for col in values.T], axis=1)


@dataclass(frozen=True, eq=False)
class ObserverSensitivity:
    """Three spectral responsivity curves: human CMFs or one camera's RGB.

    ``channels`` has shape ``(3, grid.count)``.
    """

    grid: WavelengthGrid
    channels: np.ndarray
    label: str = ""

    def __post_init__(self):
        channels = frozen_array(self.channels, ndim=2)
        if channels.shape != (3, self.grid.count):
            raise ValueError(f"observer needs shape (3, {self.grid.count}), got {channels.shape}")
        if not np.all(np.isfinite(channels)) or np.any(channels < 0):
            raise ValueError("observer curves must be finite and non-negative")
        object.__setattr__(self, "channels", channels)

    @property
    def weights(self) -> np.ndarray:
        """``(count, 3)`` integration weights including the wavelength step."""
        return self.channels.T * self.grid.step_nm


@dataclass(frozen=True)
class LabColor:
    L: float
    a: float
    b: float

    def __post_init__(self):
        if not all(np.isfinite((self.L, self.a, self.b))):
            raise ValueError("Lab components must be finite")
        if self.L < 0:
            raise ValueError("L* must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.L, self.a, self.b])


@dataclass(frozen=True)
class CriReport:
    cri_value: float
    per_sample_delta_e: tuple[float, ...]

    @property
    def mean_delta_e(self) -> float:
        return float(np.mean(self.per_sample_delta_e))


# -- tristimulus ----------------------------------------------------------


def tristimulus(values, observer: ObserverSensitivity):
    """Integrate spectral ``values`` (last axis on the grid) against ``observer``."""
    return ad.matmul(values, observer.weights)


def integrate_to_tristimulus(spectrum: Spectrum, observer: ObserverSensitivity) -> np.ndarray:
    check_grids(spectrum.grid, observer.grid)
    return spectrum.values @ observer.weights


def chromaticity(xyz) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=float)
    total = xyz.sum(axis=-1, keepdims=True)
    return xyz[..., :2] / total


def luminance(spectrum: Spectrum, observer: ObserverSensitivity) -> float:
    """Y of a perfect white diffuser under ``spectrum``."""
    return float(integrate_to_tristimulus(spectrum, observer)[1])


# -- CIELAB ---------------------------------------------------------------


def _lab_f(t):
    safe = ad.maximum(t, LAB_EPSILON)
    return ad.where(ad.value(t) > LAB_EPSILON, safe ** (1.0 / 3.0), LAB_KAPPA * t + 4.0 / 29.0)


def lab_from_xyz(xyz, white_point):
    """CIELAB from XYZ along the last axis. Works on arrays and Duals."""
    white_point = np.asarray(white_point, dtype=float)
    if np.any(white_point <= 0):
        raise ValueError("white point components must be positive")
    fx = _lab_f(xyz[..., 0] / white_point[0])
    fy = _lab_f(xyz[..., 1] / white_point[1])
    fz = _lab_f(xyz[..., 2] / white_point[2])
    return ad.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def xyz_to_lab(xyz, white_point) -> LabColor:
    xyz = np.asarray(xyz, dtype=float)
    if xyz.shape != (3,) or not np.all(np.isfinite(xyz)):
        raise ValueError("xyz must be a finite 3-vector")
    if not np.all(np.isfinite(white_point)):
        raise ValueError("white point must be finite")
    L, a, b = lab_from_xyz(xyz, white_point)
    # L* can dip a hair below zero for tiny negative rounding in Y
    return LabColor(max(float(L), 0.0), float(a), float(b))


# -- CIEDE2000 ------------------------------------------------------------

_POW25_7 = 25.0**7
# hue-difference comparisons against 180 deg tolerate arctan2 rounding so the
# exact-antipode pairs resolve the same way on every platform
_HUE_TOL = 1e-9


def _as_lab_array(lab):
    if isinstance(lab, LabColor):
        return lab.as_array()
    if isinstance(lab, ad.Dual):
        return lab
    return np.asarray(lab, dtype=float)


def delta_e_2000(lab1, lab2, kL: float = 1.0, kC: float = 1.0, kH: float = 1.0):
    """CIEDE2000 colour difference.

    Accepts :class:`LabColor` objects, ``(..., 3)`` arrays, or Duals. Returns a
    float for a single pair of LabColors, an array (or Dual) otherwise.
    """
    scalar = isinstance(lab1, LabColor) and isinstance(lab2, LabColor)
    lab1, lab2 = _as_lab_array(lab1), _as_lab_array(lab2)
    for lab in (lab1, lab2):
        if not np.all(np.isfinite(ad.value(lab))):
            raise ValueError("Lab inputs must be finite")

    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    C1 = ad.sqrt(a1 * a1 + b1 * b1)
    C2 = ad.sqrt(a2 * a2 + b2 * b2)
    C_bar7 = ((C1 + C2) * 0.5) ** 7
    G = 0.5 * (1.0 - ad.sqrt(C_bar7 / (C_bar7 + _POW25_7)))

    a1p = (1.0 + G) * a1
    a2p = (1.0 + G) * a2
    C1p = ad.sqrt(a1p * a1p + b1 * b1)
    C2p = ad.sqrt(a2p * a2p + b2 * b2)

    h1p = _hue_degrees(b1, a1p)
    h2p = _hue_degrees(b2, a2p)

    dLp = L2 - L1
    dCp = C2p - C1p

    chroma_product = C1p * C2p
    achromatic = ad.value(chroma_product) == 0
    hdiff = h2p - h1p
    hd = ad.value(hdiff)
    dhp = ad.where(
        np.abs(hd) <= 180.0 + _HUE_TOL,
        hdiff,
        ad.where(hd > 180.0, hdiff - 360.0, hdiff + 360.0),
    )
    dhp = ad.where(achromatic, 0.0, dhp)
    dHp = 2.0 * ad.sqrt(chroma_product) * ad.sin(np.deg2rad(1.0) * dhp * 0.5)

    Lbp = (L1 + L2) * 0.5
    Cbp = (C1p + C2p) * 0.5

    hsum = h1p + h2p
    hs = ad.value(hsum)
    hbp = ad.where(
        np.abs(hd) <= 180.0 + _HUE_TOL,
        hsum * 0.5,
        ad.where(hs < 360.0, (hsum + 360.0) * 0.5, (hsum - 360.0) * 0.5),
    )
    hbp = ad.where(achromatic, hsum, hbp)

    rad = np.deg2rad(1.0)
    T = (
        1.0
        - 0.17 * ad.cos(rad * (hbp - 30.0))
        + 0.24 * ad.cos(rad * (2.0 * hbp))
        + 0.32 * ad.cos(rad * (3.0 * hbp + 6.0))
        - 0.20 * ad.cos(rad * (4.0 * hbp - 63.0))
    )
    dtheta = 30.0 * ad.exp(-(((hbp - 275.0) / 25.0) ** 2))
    Cbp7 = Cbp**7
    RC = 2.0 * ad.sqrt(Cbp7 / (Cbp7 + _POW25_7))
    Lm50 = (Lbp - 50.0) ** 2
    SL = 1.0 + 0.015 * Lm50 / ad.sqrt(20.0 + Lm50)
    SC = 1.0 + 0.045 * Cbp
    SH = 1.0 + 0.015 * Cbp * T
    RT = -ad.sin(rad * (2.0 * dtheta)) * RC

    tL = dLp / (kL * SL)
    tC = dCp / (kC * SC)
    tH = dHp / (kH * SH)
    result = ad.sqrt(tL * tL + tC * tC + tH * tH + RT * tC * tH)
    if scalar:
        return float(result)
    return result


def _hue_degrees(b, a):
    h = ad.atan2(b, a) * np.rad2deg(1.0)
    h = ad.where(ad.value(h) < 0, h + 360.0, h)
    # hue of a neutral colour is defined as 0
    neutral = (ad.value(a) == 0) & (ad.value(b) == 0)
    return ad.where(neutral, 0.0, h)


# -- colour rendering -------------------------------------------------------


def cri_from_delta_e(mean_delta_e: float) -> float:
    return 100.0 - CRI_SLOPE * float(mean_delta_e)


def cri(test_light: Spectrum, reference: Spectrum, cri_samples, human: ObserverSensitivity) -> CriReport:
    """Colour rendering index by the linear rule ``100 - 4.6 * mean dE2000``.

    Both lights are scaled to the reference's luminance, then each sample's
    Lab under the test light is compared with its Lab under the reference.
    Lab is taken relative to the reference white.

    Args:
        test_light: light being rated.
        reference: reference illuminant (D65 in practice).
        cri_samples: a ``ReflectanceSet`` or an iterable of reflectance
            :class:`Spectrum` objects (TCS01-TCS08).
        human: colour matching functions.
    """
    samples = _reflectance_matrix(cri_samples)
    check_grids(test_light.grid, reference.grid, human.grid)
    y_test = luminance(test_light, human)
    y_ref = luminance(reference, human)
    if y_test <= 0 or y_ref <= 0:
        raise ValueError("CRI needs lights with non-zero luminance")
    white = integrate_to_tristimulus(reference, human)
    test_values = test_light.values * (y_ref / y_test)
    lab_ref = lab_from_xyz(tristimulus(samples * reference.values, human), white)
    lab_test = lab_from_xyz(tristimulus(samples * test_values, human), white)
    per_sample = delta_e_2000(lab_ref, lab_test)
    return CriReport(cri_from_delta_e(per_sample.mean()), tuple(float(v) for v in per_sample))


def _reflectance_matrix(samples) -> np.ndarray:
    patches = getattr(samples, "patches", None)
    if patches is not None:
        return np.asarray(patches)
    return np.stack([s.values for s in samples])
