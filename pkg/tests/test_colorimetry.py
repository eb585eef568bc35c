import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specmark.colorimetry import (
    CANONICAL_GRID,
    LabColor,
    Spectrum,
    WavelengthGrid,
    check_grids,
    chromaticity,
    cri,
    cri_from_delta_e,
    delta_e_2000,
    integrate_to_tristimulus,
    xyz_to_lab,
)
from specmark.errors import GridMismatchError
from specmark.fixtures import load_cmf

# components on a 1e-6 lattice: distinct triples stay distinct after squaring
_q = lambda lo, hi: st.floats(lo, hi).map(lambda v: round(v, 6))
lab_triples = st.tuples(_q(0, 100), _q(-128, 128), _q(-128, 128))


def test_canonical_grid():
    wl = CANONICAL_GRID.wavelengths
    assert wl[0] == 400 and wl[-1] == 720 and wl.size == 33


@pytest.mark.parametrize("kwargs", [dict(start_nm=400, step_nm=0, count=5), dict(start_nm=400, step_nm=10, count=1)])
def test_grid_rejects_bad_shapes(kwargs):
    with pytest.raises(ValueError):
        WavelengthGrid(**kwargs)


def test_spectrum_rejects_negative_values():
    with pytest.raises(ValueError):
        Spectrum(CANONICAL_GRID, -np.ones(33))


def test_grid_mismatch_is_rejected(cmf):
    other = WavelengthGrid(400.0, 5.0, 65)
    with pytest.raises(GridMismatchError):
        integrate_to_tristimulus(Spectrum.flat(other), cmf)
    with pytest.raises(GridMismatchError):
        check_grids(CANONICAL_GRID, other)


def test_zero_spectrum_integrates_to_zero(cmf):
    assert np.array_equal(integrate_to_tristimulus(Spectrum.zeros(), cmf), np.zeros(3))


def test_equal_energy_white_point(cmf):
    xy = chromaticity(integrate_to_tristimulus(Spectrum.flat(), cmf))
    assert np.allclose(xy, (1 / 3, 1 / 3), atol=0.005)


def test_d65_white_point(cmf, d65):
    # published D65 chromaticity for the 2 degree observer
    xy = chromaticity(integrate_to_tristimulus(d65, cmf))
    assert np.allclose(xy, (0.3127, 0.3290), atol=0.003)


def test_tristimulus_is_explicit_sum(cmf, d65):
    expected = [sum(d65.values[i] * cmf.channels[c, i] * 10.0 for i in range(33)) for c in range(3)]
    assert np.allclose(integrate_to_tristimulus(d65, cmf), expected, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0, 10), min_size=33, max_size=33),
    st.lists(st.floats(0, 10), min_size=33, max_size=33),
    st.floats(0, 5),
    st.floats(0, 5),
)
def test_tristimulus_is_linear(v1, v2, alpha, beta):
    cmf = load_cmf()
    s1, s2 = Spectrum(CANONICAL_GRID, np.array(v1)), Spectrum(CANONICAL_GRID, np.array(v2))
    mixed = Spectrum(CANONICAL_GRID, alpha * s1.values + beta * s2.values)
    lhs = integrate_to_tristimulus(mixed, cmf)
    rhs = alpha * integrate_to_tristimulus(s1, cmf) + beta * integrate_to_tristimulus(s2, cmf)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


def test_resampling_to_finer_grid_keeps_tristimulus(d65):
    # the CMF table is natively 5 nm; compare a smooth light on both grids
    fine = WavelengthGrid(400.0, 5.0, 65)
    cmf_fine = load_cmf(grid=fine)
    cmf_coarse = load_cmf()
    wl = CANONICAL_GRID.wavelengths
    smooth = Spectrum(CANONICAL_GRID, 1.0 + 0.5 * np.sin((wl - 400) / 60.0))
    coarse_xyz = integrate_to_tristimulus(smooth, cmf_coarse)
    fine_xyz = integrate_to_tristimulus(smooth.resample(fine), cmf_fine)
    assert np.all(np.abs(fine_xyz / coarse_xyz - 1) < 0.005)


def test_resample_refuses_to_extrapolate():
    s = Spectrum(CANONICAL_GRID, np.ones(33))
    with pytest.raises(ValueError):
        s.resample(WavelengthGrid(380.0, 10.0, 10))


# -- Lab ----------------------------------------------------------------------


def test_white_maps_to_neutral():
    white = np.array([95.047, 100.0, 108.883])
    lab = xyz_to_lab(white, white)
    assert lab.L == pytest.approx(100.0, abs=1e-12)
    assert abs(lab.a) < 1e-12 and abs(lab.b) < 1e-12


def test_black_maps_to_origin():
    lab = xyz_to_lab(np.zeros(3), np.array([95.0, 100.0, 108.0]))
    assert np.allclose(lab.as_array(), 0.0, atol=1e-12)


def test_eighteen_percent_grey():
    oracle = 116.0 * 0.18 ** (1.0 / 3.0) - 16.0
    white = np.array([95.047, 100.0, 108.883])
    lab = xyz_to_lab(0.18 * white, white)
    assert lab.L == pytest.approx(49.496, abs=0.01)
    assert lab.L == pytest.approx(oracle, abs=1e-9)


def test_linear_branch_below_epsilon():
    white = np.ones(3)
    t = 0.5 * (6 / 29) ** 3
    lab = xyz_to_lab(np.full(3, t), white)
    assert lab.L == pytest.approx(116 * (t / (3 * (6 / 29) ** 2) + 4 / 29) - 16, abs=1e-12)


def test_lab_rejects_non_finite_and_bad_white():
    with pytest.raises(ValueError):
        xyz_to_lab(np.array([np.nan, 1, 1]), np.ones(3))
    with pytest.raises(ValueError):
        xyz_to_lab(np.ones(3), np.array([1.0, 0.0, 1.0]))


# -- CIEDE2000 ------------------------------------------------------------------


def test_sharma_pairs(sharma_pairs):
    for row in sharma_pairs:
        a = LabColor(row["L1"], row["a1"], row["b1"])
        b = LabColor(row["L2"], row["a2"], row["b2"])
        assert delta_e_2000(a, b) == pytest.approx(row["delta_e"], abs=1e-4), int(row["pair"])
        assert delta_e_2000(b, a) == pytest.approx(row["delta_e"], abs=1e-4), int(row["pair"])


def test_sharma_vectorised_matches_scalar(sharma_pairs):
    lab1 = np.stack([sharma_pairs["L1"], sharma_pairs["a1"], sharma_pairs["b1"]], axis=1)
    lab2 = np.stack([sharma_pairs["L2"], sharma_pairs["a2"], sharma_pairs["b2"]], axis=1)
    assert np.allclose(delta_e_2000(lab1, lab2), sharma_pairs["delta_e"], atol=1e-4)


def test_identical_colours_have_zero_difference():
    c = LabColor(52.0, -13.0, 40.0)
    assert delta_e_2000(c, c) == 0.0


@settings(max_examples=200, deadline=None)
@given(lab_triples, lab_triples)
def test_delta_e_symmetric_and_non_negative(p, q):
    a, b = LabColor(*p), LabColor(*q)
    d_ab, d_ba = delta_e_2000(a, b), delta_e_2000(b, a)
    assert d_ab >= 0
    assert d_ab == pytest.approx(d_ba, abs=1e-9)
    if p != q:
        assert d_ab > 0


def test_delta_e_rejects_non_finite():
    with pytest.raises(ValueError):
        delta_e_2000(np.array([50.0, np.inf, 0.0]), np.array([50.0, 0.0, 0.0]))


# -- CRI -------------------------------------------------------------------------


def test_cri_self_comparison(d65, tcs, cmf):
    report = cri(d65, d65, tcs, cmf)
    assert report.cri_value == 100.0
    assert len(report.per_sample_delta_e) == 8


def test_cri_formula_inversion():
    assert cri_from_delta_e(40 / 4.6) == pytest.approx(60.0, abs=1e-12)


def test_cri_ignores_global_scale(d65, tcs, cmf):
    assert cri(d65.scaled(2.0), d65, tcs, cmf).cri_value == pytest.approx(100.0, abs=1e-9)


def test_cri_report_is_consistent(d65, tcs, cmf):
    warm = Spectrum(CANONICAL_GRID, d65.values * np.linspace(0.6, 1.4, 33))
    report = cri(warm, d65, tcs, cmf)
    assert report.cri_value == pytest.approx(100 - 4.6 * np.mean(report.per_sample_delta_e), abs=1e-12)
    assert report.cri_value < 100


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 100))
def test_cri_scale_invariance_property(k):
    from specmark.fixtures import load_cri_samples, load_d65

    d65 = load_d65()
    tcs = load_cri_samples()
    cmf = load_cmf()
    light = Spectrum(CANONICAL_GRID, d65.values * np.linspace(1.3, 0.7, 33))
    base = cri(light, d65, tcs, cmf).cri_value
    assert cri(light.scaled(k), d65, tcs, cmf).cri_value == pytest.approx(base, abs=1e-9)


def test_cri_rejects_dark_light(d65, tcs, cmf):
    with pytest.raises(ValueError):
        cri(Spectrum.zeros(), d65, tcs, cmf)


def test_lab_color_requires_non_negative_l():
    with pytest.raises(ValueError):
        LabColor(-1.0, 0.0, 0.0)
