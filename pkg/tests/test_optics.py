import numpy as np
import pytest

from nanosim import stackio
from nanosim.optics import (
    OpticsParams,
    build_psf,
    default_window_size,
    optics_from_metadata,
    optics_metadata,
    psf_at,
    psf_intensity_quadrature,
    sample_image,
)

from oracles import psf_intensity_oracle


class TestOpticsParams:
    def test_defaults(self):
        p = OpticsParams()
        assert p.na == 1.49
        assert p.wavelength_nm == 660.0
        assert p.pixel_size_nm == 65.0
        assert p.coverslip_thickness_um == 170.0
        assert (p.n_sample, p.n_coverslip, p.n_immersion) == (1.33, 1.515, 1.515)

    def test_na_bounds(self):
        with pytest.raises(ValueError):
            OpticsParams(na=1.6)  # beyond the immersion index
        with pytest.raises(ValueError):
            OpticsParams(na=0.0)

    def test_positive_values(self):
        with pytest.raises(ValueError):
            OpticsParams(wavelength_nm=0.0)
        with pytest.raises(ValueError):
            OpticsParams(pixel_size_nm=-1.0)

    def test_metadata_roundtrip(self):
        p = OpticsParams(na=1.3, pixel_size_nm=80.0)
        assert optics_from_metadata(optics_metadata(p)) == p


class TestPsfModel:
    def test_peak_at_origin(self, psf_149):
        assert psf_at(psf_149, 0.0, 0.0, 0.0) == pytest.approx(1.0)
        assert psf_149.table.max() == pytest.approx(1.0)
        # in-focus on-axis value is the global table maximum
        iz = np.argmin(np.abs(psf_149.z_axis_um))
        assert psf_149.table[iz, 0] == psf_149.table.max()

    def test_rotational_symmetry(self, psf_149):
        assert psf_at(psf_149, 120.0, 45.0, 50.0) == pytest.approx(
            psf_at(psf_149, 45.0, 120.0, 50.0)
        )
        assert psf_at(psf_149, -130.0, 0.0, 0.0) == pytest.approx(
            psf_at(psf_149, 130.0, 0.0, 0.0)
        )

    def test_far_tail_small(self, psf_149):
        assert psf_at(psf_149, 2000.0, 0.0, 0.0) < 1e-2

    def test_nonnegative_finite(self, psf_149, psf_12):
        for model in (psf_149, psf_12):
            assert np.isfinite(model.table).all()
            assert (model.table >= 0).all()

    @pytest.mark.parametrize("fixture", ["psf_149", "psf_12"])
    def test_fwhm_matches_abbe_scaling(self, fixture, request):
        model = request.getfixturevalue(fixture)
        expected = 0.51 * model.params.wavelength_um / model.params.na
        assert model.lateral_fwhm_um(0.0) == pytest.approx(expected, rel=0.10)

    def test_monotone_broadening(self, psf_149):
        assert psf_149.lateral_fwhm_um(0.3) > psf_149.lateral_fwhm_um(0.0)

    def test_table_vs_quadrature_oracle(self, psf_149):
        rng = np.random.default_rng(0)
        peak = psf_149.normalization
        for _ in range(20):
            r = float(rng.uniform(0.0, 1.5))
            z = float(rng.uniform(-0.8, 0.8))
            got = psf_at(psf_149, r * 1e3, 0.0, z * 1e3)
            want = psf_intensity_oracle(psf_149.params, r, z) / peak
            assert got == pytest.approx(want, rel=2e-3, abs=1e-9)

    def test_out_of_range_returns_zero_and_counts(self, psf_149):
        before = psf_149.out_of_range_count
        assert psf_at(psf_149, 5000.0, 0.0, 0.0) == 0.0
        assert psf_at(psf_149, 0.0, 0.0, 5000.0) == 0.0
        assert psf_149.out_of_range_count == before + 2

    def test_quadrature_direct_matches_oracle(self, optics_149):
        got = psf_intensity_quadrature(optics_149, np.array([0.2]), np.array([0.1]))
        want = psf_intensity_oracle(optics_149, 0.2, 0.1)
        assert float(got[0, 0]) == pytest.approx(want, rel=1e-6)


class TestSampleImage:
    def test_matches_psf_at(self, psf_149, rng):
        dx = rng.uniform(-2.0, 2.0, (6, 40))
        dy = rng.uniform(-2.0, 2.0, (6, 40))
        z = rng.uniform(-0.5, 0.5, 6)
        grid = sample_image(psf_149, dx, dy, z)
        for i in range(6):
            for j in range(0, 40, 7):
                expect = psf_at(psf_149, dx[i, j] * 1e3, dy[i, j] * 1e3, z[i] * 1e3)
                assert grid[i, j] == pytest.approx(expect, abs=1e-12)

    def test_float32_path_consistent(self, psf_149, rng):
        dx = rng.uniform(-2.0, 2.0, (4, 50))
        dy = rng.uniform(-2.0, 2.0, (4, 50))
        z = rng.uniform(-0.5, 0.5, 4)
        a = sample_image(psf_149, dx, dy, z)
        b = sample_image(psf_149, dx.astype(np.float32), dy.astype(np.float32), z)
        assert b.dtype == np.float32
        assert np.abs(a - b).max() < 1e-5

    def test_out_of_range_zeroed(self, psf_149):
        dx = np.array([[3.5, 0.0]])
        dy = np.zeros((1, 2))
        out = sample_image(psf_149, dx, dy, np.array([0.0]))
        assert out[0, 0] == 0.0
        assert out[0, 1] == pytest.approx(1.0)
        out = sample_image(psf_149, np.zeros((1, 1)), np.zeros((1, 1)), np.array([3.0]))
        assert out[0, 0] == 0.0


class TestHelpers:
    def test_default_window_size(self, psf_149):
        w = default_window_size(psf_149)
        assert w % 2 == 1 and w >= 3
        fwhm = psf_149.lateral_fwhm_um(0.0)
        assert w * psf_149.params.pixel_size_um >= 2 * fwhm

    def test_export_table(self, psf_149, tmp_path):
        from nanosim.optics import export_table

        path = tmp_path / "psf.raw"
        export_table(psf_149, path)
        arr, meta = stackio.load_array(path)
        assert arr.shape == psf_149.table.shape
        assert meta["optics"]["na"] == 1.49
        assert np.allclose(arr, psf_149.table, atol=1e-6)
