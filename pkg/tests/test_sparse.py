import io

import numpy as np
import pytest

from fracpow.errors import MatrixFormatError, SpectralBoundsError
from fracpow.sparse import (
    HermitianSparseMatrix,
    SpectralBounds,
    build_diagonal,
    build_laplacian_1d,
    build_laplacian_2d,
    estimate_spectral_bounds,
    matvec,
    read_matrix_market,
    write_matrix_market,
)

from conftest import random_hermitian


def lap1d_eigenvalues(n: int) -> np.ndarray:
    k = np.arange(1, n + 1)
    return 2.0 - 2.0 * np.cos(np.pi * k / (n + 1))


class TestHermitianSparseMatrix:
    def test_from_dense_round_trip(self, rng):
        dense = random_hermitian(rng, 7)
        dense[np.abs(dense) < 0.8] = 0.0
        dense = (dense + dense.T) / 2.0
        np.fill_diagonal(dense, 3.0)
        A = HermitianSparseMatrix.from_dense(dense)
        np.testing.assert_array_equal(A.to_dense(), dense)

    def test_matvec_matches_dense_real(self, rng):
        dense = random_hermitian(rng, 11)
        A = HermitianSparseMatrix.from_dense(dense)
        x = rng.standard_normal(11)
        np.testing.assert_allclose(A.matvec(x), dense @ x, rtol=1e-14, atol=1e-14)
        np.testing.assert_allclose(matvec(A, x), dense @ x, rtol=1e-14, atol=1e-14)

    def test_matvec_matches_dense_complex(self, rng):
        dense = random_hermitian(rng, 9, complex_valued=True)
        A = HermitianSparseMatrix.from_dense(dense)
        x = rng.standard_normal(9) + 1j * rng.standard_normal(9)
        np.testing.assert_allclose(A.matvec(x), dense @ x, rtol=1e-14, atol=1e-14)

    def test_matvec_with_structurally_empty_row(self):
        # Row 1 has no stored entries at all; the product must still have n slots.
        dense = np.zeros((3, 3))
        dense[0, 0] = 2.0
        dense[2, 2] = 1.0
        dense[0, 2] = dense[2, 0] = 0.5
        A = HermitianSparseMatrix.from_dense(dense)
        np.testing.assert_allclose(A.matvec(np.ones(3)), dense @ np.ones(3))

    def test_rejects_non_hermitian_pattern(self):
        with pytest.raises(MatrixFormatError):
            HermitianSparseMatrix.from_coo(2, [0], [1], [1.0])

    def test_rejects_non_hermitian_values(self):
        with pytest.raises(MatrixFormatError):
            HermitianSparseMatrix.from_coo(2, [0, 1], [1, 0], [1.0, 2.0])

    def test_rejects_conjugate_mismatch(self):
        with pytest.raises(MatrixFormatError):
            HermitianSparseMatrix.from_coo(2, [0, 1], [1, 0], [1.0 + 1j, 1.0 + 1j])

    def test_accepts_conjugate_pair(self):
        A = HermitianSparseMatrix.from_coo(2, [0, 1], [1, 0], [1.0 + 1j, 1.0 - 1j])
        assert A.nnz == 2

    def test_rejects_complex_diagonal(self):
        with pytest.raises(MatrixFormatError):
            HermitianSparseMatrix.from_coo(1, [0], [0], [1.0 + 0.5j])

    def test_rejects_duplicate_entries(self):
        with pytest.raises(ValueError):
            HermitianSparseMatrix.from_coo(2, [0, 0], [0, 0], [1.0, 2.0])

    def test_rejects_out_of_range_column(self):
        with pytest.raises((MatrixFormatError, ValueError)):
            HermitianSparseMatrix.from_coo(2, [0], [5], [1.0])

    def test_diagonal(self):
        A = build_diagonal([3.0, 1.0, 2.0])
        np.testing.assert_array_equal(A.diagonal(), [3.0, 1.0, 2.0])
        L = build_laplacian_1d(4)
        np.testing.assert_array_equal(L.diagonal(), [2.0, 2.0, 2.0, 2.0])


class TestBuilders:
    def test_laplacian_1d_dense(self):
        A = build_laplacian_1d(4)
        expected = np.array(
            [
                [2.0, -1.0, 0.0, 0.0],
                [-1.0, 2.0, -1.0, 0.0],
                [0.0, -1.0, 2.0, -1.0],
                [0.0, 0.0, -1.0, 2.0],
            ]
        )
        np.testing.assert_array_equal(A.to_dense(), expected)

    def test_laplacian_1d_spectrum(self):
        A = build_laplacian_1d(10)
        got = np.linalg.eigvalsh(A.to_dense())
        np.testing.assert_allclose(got, np.sort(lap1d_eigenvalues(10)), atol=1e-13)

    def test_laplacian_2d_is_kronecker_sum(self):
        nx, ny = 3, 4
        A = build_laplacian_2d(nx, ny)
        Lx = build_laplacian_1d(nx).to_dense()
        Ly = build_laplacian_1d(ny).to_dense()
        expected = np.kron(Lx, np.eye(ny)) + np.kron(np.eye(nx), Ly)
        np.testing.assert_array_equal(A.to_dense(), expected)

    def test_laplacian_2d_size_and_diagonal(self):
        A = build_laplacian_2d(32, 32)
        assert A.n == 1024
        np.testing.assert_array_equal(A.diagonal(), np.full(1024, 4.0))

    def test_builders_reject_bad_sizes(self):
        with pytest.raises(ValueError):
            build_laplacian_1d(0)
        with pytest.raises(ValueError):
            build_laplacian_2d(0, 3)
        with pytest.raises(ValueError):
            build_diagonal([])


class TestMatrixMarket:
    def test_round_trip_real(self, rng, tmp_path):
        dense = random_hermitian(rng, 6)
        dense[np.abs(dense) < 0.5] = 0.0
        dense = (dense + dense.T) / 2.0
        np.fill_diagonal(dense, 2.0)
        A = HermitianSparseMatrix.from_dense(dense)
        path = tmp_path / "a.mtx"
        write_matrix_market(A, path)
        B = read_matrix_market(path)
        np.testing.assert_array_equal(A.to_dense(), B.to_dense())

    def test_round_trip_complex(self, rng, tmp_path):
        dense = random_hermitian(rng, 5, complex_valued=True)
        A = HermitianSparseMatrix.from_dense(dense)
        path = tmp_path / "h.mtx"
        write_matrix_market(A, path)
        B = read_matrix_market(path)
        np.testing.assert_array_equal(A.to_dense(), B.to_dense())

    def test_reads_stream(self):
        text = (
            "%%MatrixMarket matrix coordinate real symmetric\n"
            "2 2 3\n"
            "1 1 2.0\n"
            "2 1 -1.0\n"
            "2 2 2.0\n"
        )
        A = read_matrix_market(io.StringIO(text))
        np.testing.assert_array_equal(A.to_dense(), [[2.0, -1.0], [-1.0, 2.0]])

    def test_rejects_general_symmetry(self):
        text = "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 2.0\n"
        with pytest.raises(MatrixFormatError):
            read_matrix_market(io.StringIO(text))

    def test_rejects_pattern_field(self):
        text = "%%MatrixMarket matrix coordinate pattern symmetric\n1 1 1\n1 1\n"
        with pytest.raises(MatrixFormatError):
            read_matrix_market(io.StringIO(text))

    def test_rejects_upper_triangle_entry(self):
        text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1.0\n"
        with pytest.raises(MatrixFormatError):
            read_matrix_market(io.StringIO(text))

    def test_rejects_empty_matrix(self):
        text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 0\n"
        with pytest.raises(MatrixFormatError):
            read_matrix_market(io.StringIO(text))

    def test_rejects_rectangular(self):
        text = "%%MatrixMarket matrix coordinate real symmetric\n2 3 1\n1 1 1.0\n"
        with pytest.raises(MatrixFormatError):
            read_matrix_market(io.StringIO(text))

    def test_rejects_index_out_of_range(self):
        text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n3 1 1.0\n"
        with pytest.raises(MatrixFormatError):
            read_matrix_market(io.StringIO(text))

    def test_rejects_bad_header(self):
        with pytest.raises(MatrixFormatError):
            read_matrix_market(io.StringIO("not a matrix market file\n"))

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            read_matrix_market(tmp_path / "missing.mtx")


class TestSpectralBounds:
    def test_bounds_type_validation(self):
        with pytest.raises(ValueError):
            SpectralBounds(0.0, 1.0)
        with pytest.raises(ValueError):
            SpectralBounds(2.0, 1.0)
        with pytest.raises(ValueError):
            SpectralBounds(1.0, np.inf)

    def test_diagonal_spectrum_enclosed(self):
        A = build_diagonal([0.5, 1.0, 2.0, 4.0])
        bounds = estimate_spectral_bounds(A)
        assert bounds.lambda_lo <= 0.5
        assert bounds.lambda_hi >= 4.0
        # Gershgorin on a diagonal matrix is exact, so the top is tight.
        assert bounds.lambda_hi == pytest.approx(4.0, rel=1e-12)

    def test_laplacian_enclosure_is_certified(self):
        for n in (50, 200):
            A = build_laplacian_1d(n)
            ev = lap1d_eigenvalues(n)
            bounds = estimate_spectral_bounds(A)
            assert bounds.lambda_lo <= ev.min() * (1 + 1e-12)
            assert bounds.lambda_hi >= ev.max() * (1 - 1e-12)
            # The enclosure must also be reasonably tight at the bottom.
            assert bounds.lambda_lo >= ev.min() * 0.5

    def test_large_laplacian_bottom_eigenvalue(self):
        # Needs the adaptive escalation: a short Krylov sweep cannot resolve
        # the bottom of this spectrum.
        A = build_laplacian_1d(1000)
        ev_min = lap1d_eigenvalues(1000).min()
        bounds = estimate_spectral_bounds(A)
        assert bounds.lambda_lo <= ev_min * (1 + 1e-12)
        assert bounds.lambda_lo >= ev_min * 0.3

    def test_identity_invariant_subspace(self):
        A = build_diagonal(np.ones(8))
        bounds = estimate_spectral_bounds(A)
        assert bounds.lambda_lo == pytest.approx(1.0, rel=1e-9)
        assert bounds.lambda_hi == pytest.approx(1.0, rel=1e-9)

    def test_indefinite_matrix_rejected(self):
        A = build_diagonal([-1.0, 1.0])
        with pytest.raises(SpectralBoundsError):
            estimate_spectral_bounds(A)

    def test_seed_changes_probe_not_validity(self, rng):
        dense = random_hermitian(rng, 30)
        dense = dense @ dense.T + 0.5 * np.eye(30)
        A = HermitianSparseMatrix.from_dense(dense)
        ev = np.linalg.eigvalsh(dense)
        for seed in (0, 1, 7):
            bounds = estimate_spectral_bounds(A, seed=seed)
            assert bounds.lambda_lo <= ev.min() * (1 + 1e-10)
            assert bounds.lambda_hi >= ev.max() * (1 - 1e-10)
