"""Regenerate the CSV fixtures under src/specmark/data from colour-science.

Only needed when refreshing the shipped data; the package itself never
imports colour. Requires ``pip install colour-science``.
"""

from __future__ import annotations

import csv
from pathlib import Path

import colour
import numpy as np
from colour.quality.datasets.tcs import SDS_TCS

OUT = Path(__file__).resolve().parents[1] / "src" / "specmark" / "data"


def write_csv(path: Path, wavelengths, header, columns) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["wavelength_nm", *header])
        for i, wl in enumerate(wavelengths):
            writer.writerow([f"{wl:g}", *(f"{col[i]:.8g}" for col in columns)])


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)

    cmfs = colour.MSDS_CMFS["CIE 1931 2 Degree Standard Observer"]
    wl = np.arange(360, 831, 5)
    vals = cmfs[wl]
    write_csv(OUT / "cie1931_2deg_cmf.csv", wl, ["x_bar", "y_bar", "z_bar"], vals.T)

    d65 = colour.SDS_ILLUMINANTS["D65"]
    write_csv(OUT / "cie_d65.csv", d65.wavelengths, ["D65"], [d65.values])

    names = [f"TCS{i:02d}" for i in range(1, 9)]
    wl = SDS_TCS["TCS01"].wavelengths
    write_csv(OUT / "cri_tcs01_08.csv", wl, names, [SDS_TCS[n].values for n in names])

    cc = colour.SDS_COLOURCHECKERS["BabelColor Average"]
    wl = next(iter(cc.values())).wavelengths
    write_csv(OUT / "colorchecker_babelcolor.csv", wl, list(cc.keys()), [sd.values for sd in cc.values()])

    # multi-camera text layout: name line, then R, G, B rows of 33 values (400..720 nm)
    nikon = colour.MSDS_CAMERA_SENSITIVITIES["Nikon 5100 (NPL)"]
    grid = np.arange(400, 721, 10)
    rgb = nikon[grid]
    with (OUT / "cameras_npl.txt").open("w") as fh:
        fh.write("Nikon 5100 (NPL)\n")
        for ch in rgb.T:
            fh.write("\t".join(f"{v:.8g}" for v in ch) + "\n")


if __name__ == "__main__":
    main()
