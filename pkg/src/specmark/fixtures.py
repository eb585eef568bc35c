"""CSV fixture loading and resampling onto the canonical grid.

Spectral CSVs have a header row, wavelength (nm) in the first column and one
column per curve. The multi-camera text layout is a name line followed by
three lines (R, G, B) of 33 values sampled at 400..720 nm.
"""

from __future__ import annotations

import csv
from importlib import resources
from pathlib import Path

import numpy as np

from specmark.colorimetry import CANONICAL_GRID, ObserverSensitivity, Spectrum, WavelengthGrid, resample_values
from specmark.errors import FixtureError
from specmark.scene import LedBank, ReflectanceSet

CMF_FILE = "cie1931_2deg_cmf.csv"
D65_FILE = "cie_d65.csv"
CRI_SAMPLES_FILE = "cri_tcs01_08.csv"
COLORCHECKER_FILE = "colorchecker_babelcolor.csv"
NPL_CAMERAS_FILE = "cameras_npl.txt"

CAMERA_DATABASE_GRID = WavelengthGrid(400.0, 10.0, 33)


def data_path(name: str) -> Path:
    return Path(str(resources.files("specmark") / "data" / name))


def read_spectral_csv(path) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Return ``(wavelengths, column_names, values)`` with values ``(n_wl, n_cols)``."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise FixtureError(f"cannot read fixture {path}: {exc}") from exc
    if len(rows) < 3:
        raise FixtureError(f"{path}: need a header row and at least two data rows")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise FixtureError(f"{path}: non-numeric data ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(header) or data.shape[1] < 2:
        raise FixtureError(f"{path}: ragged rows or no value columns")
    wl = data[:, 0]
    if np.any(np.diff(wl) <= 0):
        raise FixtureError(f"{path}: wavelengths must increase strictly")
    return wl, header[1:], data[:, 1:]


def _resampled(path, grid: WavelengthGrid) -> tuple[list[str], np.ndarray]:
    wl, names, values = read_spectral_csv(path)
    try:
        out = resample_values(wl, values, grid)
    except ValueError as exc:
        raise FixtureError(f"{path}: {exc}") from exc
    # tiny negative values show up in measured data
    return names, np.clip(out, 0.0, None)


def load_cmf(path=None, grid: WavelengthGrid = CANONICAL_GRID) -> ObserverSensitivity:
    names, values = _resampled(path or data_path(CMF_FILE), grid)
    if values.shape[1] != 3:
        raise FixtureError("CMF fixture needs exactly three columns")
    return ObserverSensitivity(grid, values.T, "CIE 1931 2deg")


def load_spectrum(path, grid: WavelengthGrid = CANONICAL_GRID, column: int = 0) -> Spectrum:
    _, values = _resampled(path, grid)
    return Spectrum(grid, values[:, column])


def load_d65(path=None, grid: WavelengthGrid = CANONICAL_GRID) -> Spectrum:
    return load_spectrum(path or data_path(D65_FILE), grid)


def load_reflectance_set(path, grid: WavelengthGrid = CANONICAL_GRID) -> ReflectanceSet:
    names, values = _resampled(path, grid)
    if np.any(values > 1.0 + 1e-6):
        raise FixtureError(f"{path}: reflectance above 1")
    return ReflectanceSet(grid, np.clip(values.T, 0.0, 1.0), tuple(names))


def load_colorchecker(path=None, grid: WavelengthGrid = CANONICAL_GRID) -> ReflectanceSet:
    return load_reflectance_set(path or data_path(COLORCHECKER_FILE), grid)


def load_cri_samples(path=None, grid: WavelengthGrid = CANONICAL_GRID, allow_colorchecker: bool = False) -> ReflectanceSet:
    """TCS01-TCS08. With ``allow_colorchecker`` a missing file falls back to
    the first eight chromatic ColorChecker patches (non-standard)."""
    target = Path(path) if path else data_path(CRI_SAMPLES_FILE)
    if not target.exists() and allow_colorchecker:
        cc = load_colorchecker(grid=grid)
        subset = cc.subset(range(8))
        return ReflectanceSet(grid, subset.patches, tuple(f"{n} (non-standard)" for n in subset.labels))
    samples = load_reflectance_set(target, grid)
    if len(samples) != 8:
        raise FixtureError(f"{target}: CRI needs exactly 8 samples, found {len(samples)}")
    return samples


def load_led_bank(path, grid: WavelengthGrid = CANONICAL_GRID) -> LedBank:
    names, values = _resampled(path, grid)
    peaks = values.max(axis=0)
    if np.any(peaks <= 0):
        raise FixtureError(f"{path}: an LED column is all zero on the grid")
    return LedBank(grid, (values / peaks).T, tuple(names))


def load_camera_csv(path, label: str | None = None, grid: WavelengthGrid = CANONICAL_GRID) -> ObserverSensitivity:
    names, values = _resampled(path, grid)
    if values.shape[1] != 3:
        raise FixtureError(f"{path}: camera file needs R, G, B columns")
    return ObserverSensitivity(grid, values.T, label or Path(path).stem)


def load_camera_database(path, grid: WavelengthGrid = CANONICAL_GRID) -> list[ObserverSensitivity]:
    """Parse the multi-camera layout (name line + R, G, B rows at 400..720 nm)."""
    path = Path(path)
    try:
        lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise FixtureError(f"cannot read camera database {path}: {exc}") from exc
    if len(lines) % 4:
        raise FixtureError(f"{path}: expected blocks of 4 lines (name, R, G, B)")
    cameras = []
    src = CAMERA_DATABASE_GRID.wavelengths
    for i in range(0, len(lines), 4):
        name = lines[i]
        try:
            rows = np.array([[float(v) for v in lines[i + k].replace(",", " ").split()] for k in (1, 2, 3)])
        except ValueError as exc:
            raise FixtureError(f"{path}: bad values for camera {name!r}") from exc
        if rows.shape != (3, CAMERA_DATABASE_GRID.count):
            raise FixtureError(f"{path}: camera {name!r} needs 3x{CAMERA_DATABASE_GRID.count} values")
        channels = np.clip(resample_values(src, rows.T, grid), 0.0, None).T
        cameras.append(ObserverSensitivity(grid, channels, name))
    return cameras
