import numpy as np
import pytest

from cosmopert.errors import DataError, DomainError
from cosmopert.spectral import (
    SpectralField,
    TorusGeometry,
    random_band_limited,
    read_field,
    write_field,
)

from oracles import dft3_reference

GEOM = TorusGeometry()  # N=17, L=2*pi
SMALL = TorusGeometry(n=9)


def grid_of(geom, fn):
    x = geom.grid_axis()
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    return fn(X, Y, Z)


class TestTransforms:
    def test_constant_field(self):
        f = SpectralField.from_grid(SMALL, np.full((9, 9, 9), 2.5))
        assert f.get_mode((0, 0, 0)) == pytest.approx(2.5)
        other = np.abs(f.coeffs).sum() - abs(f.coeffs[0, 0, 0])
        assert other < 1e-13

    def test_cosine_mode(self):
        g = grid_of(SMALL, lambda x, y, z: np.cos(2 * np.pi * x / SMALL.length))
        f = SpectralField.from_grid(SMALL, g)
        assert f.get_mode((1, 0, 0)) == pytest.approx(0.5, abs=1e-14)
        assert f.get_mode((-1, 0, 0)) == pytest.approx(0.5, abs=1e-14)

    def test_roundtrip_identity(self):
        rng = np.random.default_rng(11)
        g = rng.standard_normal((9, 9, 9))
        back = SpectralField.from_grid(SMALL, g).to_grid()
        assert np.max(np.abs(back - g)) < 1e-13

    def test_matches_reference_dft(self):
        rng = np.random.default_rng(3)
        g = rng.standard_normal((9, 9, 9))
        f = SpectralField.from_grid(SMALL, g)
        ref = dft3_reference(g)
        assert np.max(np.abs(f.coeffs - ref)) < 1e-13

    def test_nonfinite_rejected(self):
        g = np.zeros((9, 9, 9))
        g[1, 2, 3] = np.nan
        with pytest.raises(DataError):
            SpectralField.from_grid(SMALL, g)


class TestLaplacian:
    def test_constant_maps_to_zero(self):
        f = SpectralField.constant(SMALL, 3.0)
        assert f.laplacian().max_abs_coeff() == 0.0

    def test_unit_mode_eigenvalue(self):
        f = SpectralField.from_modes(SMALL, {(1, 0, 0): 1.0})
        lap = f.laplacian()
        assert lap.get_mode((1, 0, 0)) == pytest.approx(-1.0)

    def test_mixed_mode_eigenvalue(self):
        f = SpectralField.from_modes(SMALL, {(1, 2, 2): 1.0})
        assert f.laplacian().get_mode((1, 2, 2)) == pytest.approx(-9.0)

    def test_scaled_torus(self):
        geom = TorusGeometry(n=9, length=4.0 * np.pi)
        f = SpectralField.from_modes(geom, {(2, 0, 0): 1.0})
        assert f.laplacian().get_mode((2, 0, 0)) == pytest.approx(-1.0)


class TestZeroMeanSplit:
    def test_constant(self):
        mean, residual = SpectralField.constant(SMALL, 4.0).zero_mean_split()
        assert mean == pytest.approx(4.0)
        assert residual.max_abs_coeff() == 0.0

    def test_zero_mean_input(self):
        f = SpectralField.from_modes(SMALL, {(1, 1, 0): 0.3 + 0.1j})
        mean, residual = f.zero_mean_split()
        assert mean == 0.0
        assert np.array_equal(residual.coeffs, f.coeffs)

    def test_reconstruction(self):
        rng = np.random.default_rng(5)
        f = random_band_limited(SMALL, rng, k_max=3)
        mean, residual = f.zero_mean_split()
        rebuilt = SpectralField.constant(SMALL, mean) + residual
        assert np.max(np.abs(rebuilt.coeffs - f.coeffs)) == 0.0

    def test_commutes_with_laplacian(self):
        rng = np.random.default_rng(6)
        f = random_band_limited(GEOM, rng, k_max=4)
        _, r = f.zero_mean_split()
        a = r.laplacian()
        _, b = f.laplacian().zero_mean_split()
        assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-12


class TestParsevalAndSymmetry:
    def test_parseval_50_random_fields(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            f = random_band_limited(GEOM, rng, k_max=4)
            g = f.to_grid()
            grid_norm = np.sqrt(np.sum(g**2) * (GEOM.length / GEOM.n) ** 3)
            assert abs(grid_norm - f.l2_norm()) <= 1e-12 * f.l2_norm()

    def test_hermitian_preserved_by_operations(self):
        rng = np.random.default_rng(8)
        f = random_band_limited(GEOM, rng, k_max=4)
        assert f.hermitian_defect() == 0.0
        assert f.laplacian().hermitian_defect() == 0.0
        assert (2.5 * f + f.laplacian()).hermitian_defect() == 0.0
        assert f.zero_mean_split()[1].hermitian_defect() == 0.0

    def test_real_grid_output(self):
        rng = np.random.default_rng(9)
        f = random_band_limited(GEOM, rng, k_max=4)
        n = GEOM.n
        full = np.fft.ifftn(f.coeffs) * n**3
        assert np.max(np.abs(full.imag)) < 1e-12 * max(1.0, np.max(np.abs(full.real)))


class TestGeometry:
    def test_odd_required(self):
        with pytest.raises(DomainError):
            TorusGeometry(n=16)

    def test_mode_out_of_range(self):
        with pytest.raises(DomainError):
            SMALL.mode_index((5, 0, 0))

    def test_wavenumber_span(self):
        assert set(GEOM.wavenumbers) == set(range(-8, 9))


class TestFieldFiles:
    @pytest.mark.parametrize("kind", ["spectral", "grid"])
    def test_roundtrip(self, tmp_path, kind):
        rng = np.random.default_rng(10)
        f = random_band_limited(SMALL, rng, k_max=2)
        path = tmp_path / "field.json"
        write_field(path, f, kind=kind)
        g = read_field(path)
        assert g.geometry == f.geometry
        assert np.max(np.abs(g.coeffs - f.coeffs)) < 1e-13

    def test_header_contents(self, tmp_path):
        import json

        f = SpectralField.constant(SMALL, 1.0)
        path = tmp_path / "f.json"
        write_field(path, f, kind="grid")
        header = json.loads(path.read_text())
        assert header["N"] == 9 and header["kind"] == "grid"
        assert header["layout"] == "row-major"
        assert (tmp_path / header["data"]).exists()
