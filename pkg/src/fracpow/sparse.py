"""Sparse Hermitian matrices, model problem generators, and spectral bounds.

Matrices are stored in compressed sparse row form with both triangles present,
so a matrix-vector product needs no conjugation logic.  The generators build
the standard Dirichlet Laplacians used throughout the test-suite, and
:func:`estimate_spectral_bounds` produces a certified interval
``[lambda_lo, lambda_hi]`` enclosing the spectrum of a Hermitian positive
definite matrix: Gershgorin discs give an unconditional upper bound, a
(re-orthogonalized) Lanczos sweep tightens it and supplies the lower end.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import MatrixFormatError, SpectralBoundsError

logger = logging.getLogger(__name__)

# Relative slack for "equal up to rounding" checks on stored values.
HERMITIAN_RTOL = 1e-13


def _is_complex(values: np.ndarray) -> bool:
    return np.issubdtype(values.dtype, np.complexfloating)


@dataclass(frozen=True)
class HermitianSparseMatrix:
    """Structurally Hermitian sparse matrix in CSR form.

    Invariants checked at construction:

    - ``row_offsets`` has length ``n + 1``, starts at 0, is non-decreasing;
    - column indices are in range and strictly increasing within each row
      (hence no duplicate entries);
    - entry ``(i, j)`` is present exactly when ``(j, i)`` is, and the two
      values agree with conjugation to within ``1e-13`` relative;
    - every stored diagonal entry is real to the same tolerance.

    Positive definiteness is not checked here; it is the caller's
    responsibility where an operation requires it.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _row_indices: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n = int(self.n)
        if n < 1:
            raise ValueError(f"matrix dimension must be positive, got {n}")
        offsets = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values)
        if not np.issubdtype(vals.dtype, np.inexact):
            vals = vals.astype(np.float64)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", cols)
        object.__setattr__(self, "values", vals)

        if offsets.shape != (n + 1,) or offsets[0] != 0:
            raise ValueError("row_offsets must have length n + 1 and start at 0")
        if np.any(np.diff(offsets) < 0) or offsets[-1] != cols.size:
            raise ValueError("row_offsets must be non-decreasing and end at nnz")
        if vals.shape != cols.shape:
            raise ValueError("values and col_indices must have equal length")
        if cols.size and (cols.min() < 0 or cols.max() >= n):
            raise ValueError("column index out of range")

        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets))
        object.__setattr__(self, "_row_indices", rows)

        # Strictly increasing columns per row: compare neighbours that share a row.
        same_row = rows[1:] == rows[:-1]
        if np.any(same_row & (np.diff(cols) <= 0)):
            raise ValueError("col_indices must be strictly increasing within each row")

        self._check_hermitian(rows, cols, vals)

    def _check_hermitian(self, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray) -> None:
        order = np.lexsort((rows, cols))  # CSR order of the transpose
        if not (np.array_equal(cols[order], rows) and np.array_equal(rows[order], cols)):
            raise MatrixFormatError("sparsity pattern is not symmetric")
        mirrored = np.conjugate(vals[order])
        scale = np.maximum(np.abs(vals), np.abs(mirrored))
        if np.any(np.abs(vals - mirrored) > HERMITIAN_RTOL * scale):
            raise MatrixFormatError("matrix values are not Hermitian within 1e-13 relative")
        diag = vals[rows == cols]
        if _is_complex(vals) and np.any(np.abs(diag.imag) > HERMITIAN_RTOL * np.abs(diag)):
            raise MatrixFormatError("diagonal entries must be real")

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    @classmethod
    def from_coo(
        cls, n: int, rows: np.ndarray, cols: np.ndarray, values: np.ndarray
    ) -> "HermitianSparseMatrix":
        """Build from coordinate triplets (duplicates are rejected, not summed)."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values)
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise ValueError("row index out of range")
        dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
        if np.any(dup):
            raise ValueError("duplicate entries in coordinate data")
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        np.cumsum(offsets, out=offsets)
        return cls(n, offsets, cols, values)

    @classmethod
    def from_dense(cls, dense: np.ndarray, *, tol: float = 0.0) -> "HermitianSparseMatrix":
        dense = np.asarray(dense)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise ValueError("dense input must be square")
        rows, cols = np.nonzero(np.abs(dense) > tol)
        return cls.from_coo(dense.shape[0], rows, cols, dense[rows, cols])

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Return ``A @ x``."""
        x = np.asarray(x)
        if x.shape != (self.n,):
            raise ValueError(f"vector length {x.shape} does not match n = {self.n}")
        prod = self.values * x[self.col_indices]
        if _is_complex(prod):
            out = np.bincount(self._row_indices, weights=prod.real, minlength=self.n)
            out = out + 1j * np.bincount(self._row_indices, weights=prod.imag, minlength=self.n)
            return out
        return np.bincount(self._row_indices, weights=prod, minlength=self.n)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=self.values.dtype)
        out[self._row_indices, self.col_indices] = self.values
        return out

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(self.n, dtype=self.values.dtype)
        on_diag = self._row_indices == self.col_indices
        diag[self._row_indices[on_diag]] = self.values[on_diag]
        return diag


def matvec(A: HermitianSparseMatrix, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product ``A @ x`` (functional form of the method)."""
    return A.matvec(x)


@dataclass(frozen=True)
class SpectralBounds:
    """Certified spectral interval ``0 < lambda_lo <= lambda_hi``."""

    lambda_lo: float
    lambda_hi: float

    def __post_init__(self) -> None:
        lo = float(self.lambda_lo)
        hi = float(self.lambda_hi)
        object.__setattr__(self, "lambda_lo", lo)
        object.__setattr__(self, "lambda_hi", hi)
        if not (0.0 < lo <= hi) or not np.isfinite(hi):
            raise ValueError(f"need 0 < lambda_lo <= lambda_hi, got ({lo}, {hi})")


def build_laplacian_1d(n: int) -> HermitianSparseMatrix:
    """Tridiagonal (-1, 2, -1) matrix of order ``n`` (Dirichlet at both ends).

    Its eigenvalues are ``4 sin^2(j pi / (2 (n + 1)))`` for ``j = 1..n``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = np.arange(n)
    rows = np.concatenate([idx, idx[:-1], idx[1:]])
    cols = np.concatenate([idx, idx[1:], idx[:-1]])
    vals = np.concatenate([np.full(n, 2.0), np.full(2 * (n - 1), -1.0)])
    return HermitianSparseMatrix.from_coo(n, rows, cols, vals)


def build_laplacian_2d(nx: int, ny: int) -> HermitianSparseMatrix:
    """Five-point Laplacian on an ``nx`` by ``ny`` Dirichlet grid.

    Kronecker sum of two 1-D operators; every diagonal entry is 4 and the
    eigenvalues are sums of the 1-D eigenvalues.  Grid point ``(ix, iy)`` maps
    to row ``ix * ny + iy``.
    """
    if nx < 1 or ny < 1:
        raise ValueError("grid dimensions must be >= 1")
    n = nx * ny
    ix, iy = np.divmod(np.arange(n), ny)
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 4.0)]
    # Horizontal neighbours (ix, iy) <-> (ix + 1, iy)
    left = np.flatnonzero(ix < nx - 1)
    rows += [left, left + ny]
    cols += [left + ny, left]
    vals += [np.full(left.size, -1.0)] * 2
    # Vertical neighbours (ix, iy) <-> (ix, iy + 1)
    down = np.flatnonzero(iy < ny - 1)
    rows += [down, down + 1]
    cols += [down + 1, down]
    vals += [np.full(down.size, -1.0)] * 2
    return HermitianSparseMatrix.from_coo(
        n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )


def build_diagonal(entries: np.ndarray) -> HermitianSparseMatrix:
    """Diagonal matrix from a vector of (real) entries."""
    entries = np.asarray(entries, dtype=np.float64)
    if entries.ndim != 1 or entries.size == 0:
        raise ValueError("entries must be a non-empty vector")
    idx = np.arange(entries.size)
    return HermitianSparseMatrix.from_coo(entries.size, idx, idx, entries)


# ---------------------------------------------------------------------------
# Matrix Market I/O (coordinate format, symmetric/hermitian only)
# ---------------------------------------------------------------------------


def read_matrix_market(source) -> HermitianSparseMatrix:
    """Read a coordinate Matrix Market file into a Hermitian sparse matrix.

    Accepts a path or an open text/byte stream.  Only ``symmetric`` and
    ``hermitian`` qualifiers are admitted; ``general`` files are rejected
    because symmetry cannot be certified from one triangle.  Entries must
    store the lower triangle (``i >= j``); the upper triangle is generated by
    conjugation.
    """
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("ascii")
    else:
        with open(source, "rb") as fh:
            text = fh.read().decode("ascii")
    lines = text.splitlines()
    if not lines:
        raise MatrixFormatError("empty Matrix Market stream")

    header = lines[0].strip().split()
    if len(header) != 5 or header[0] != "%%MatrixMarket":
        raise MatrixFormatError(f"malformed Matrix Market header: {lines[0]!r}")
    _, obj, fmt, fieldq, symq = (tok.lower() for tok in header)
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixFormatError("only 'matrix coordinate' Matrix Market data is supported")
    if fieldq not in ("real", "complex"):
        raise MatrixFormatError(f"unsupported field qualifier {fieldq!r}")
    if symq == "general":
        raise MatrixFormatError(
            "'general' files are not accepted: Hermitian structure cannot be certified"
        )
    if symq not in ("symmetric", "hermitian"):
        raise MatrixFormatError(f"unsupported symmetry qualifier {symq!r}")

    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixFormatError("missing size line")
    size = body[0].split()
    if len(size) != 3:
        raise MatrixFormatError(f"malformed size line: {body[0]!r}")
    try:
        nrows, ncols, nnz = (int(tok) for tok in size)
    except ValueError as exc:
        raise MatrixFormatError(f"malformed size line: {body[0]!r}") from exc
    if nrows != ncols:
        raise MatrixFormatError(f"matrix must be square, got {nrows} x {ncols}")
    if nnz == 0:
        raise MatrixFormatError("no entries: an all-zero matrix is not positive definite")
    if len(body) - 1 != nnz:
        raise MatrixFormatError(f"expected {nnz} entries, found {len(body) - 1}")

    want = 4 if fieldq == "complex" else 3
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.complex128 if fieldq == "complex" else np.float64)
    for k, line in enumerate(body[1:]):
        toks = line.split()
        if len(toks) != want:
            raise MatrixFormatError(f"malformed entry line: {line!r}")
        try:
            i, j = int(toks[0]), int(toks[1])
            if fieldq == "complex":
                v = complex(float(toks[2]), float(toks[3]))
            else:
                v = float(toks[2])
        except ValueError as exc:
            raise MatrixFormatError(f"malformed entry line: {line!r}") from exc
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixFormatError(f"entry index ({i}, {j}) out of range for n = {nrows}")
        if i < j:
            raise MatrixFormatError(
                f"entry ({i}, {j}) lies above the diagonal; "
                "symmetric files must store the lower triangle"
            )
        rows[k], cols[k], vals[k] = i - 1, j - 1, v

    off = rows != cols
    full_rows = np.concatenate([rows, cols[off]])
    full_cols = np.concatenate([cols, rows[off]])
    full_vals = np.concatenate([vals, np.conjugate(vals[off])])
    try:
        return HermitianSparseMatrix.from_coo(nrows, full_rows, full_cols, full_vals)
    except ValueError as exc:
        raise MatrixFormatError(str(exc)) from exc


def write_matrix_market(A: HermitianSparseMatrix, dest) -> None:
    """Write the lower triangle in coordinate format.

    Values are formatted with 17 significant digits so that a read-back
    reproduces the stored doubles bit-exactly.
    """
    rows = A._row_indices
    keep = rows >= A.col_indices
    r, c, v = rows[keep], A.col_indices[keep], A.values[keep]
    is_c = _is_complex(v)
    lines = [
        "%%MatrixMarket matrix coordinate "
        + ("complex hermitian" if is_c else "real symmetric"),
        f"{A.n} {A.n} {r.size}",
    ]
    for i, j, val in zip(r, c, v):
        if is_c:
            lines.append(f"{i + 1} {j + 1} {val.real:.17g} {val.imag:.17g}")
        else:
            lines.append(f"{i + 1} {j + 1} {val:.17g}")
    payload = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(payload)
    else:
        with open(dest, "w") as fh:
            fh.write(payload)


# ---------------------------------------------------------------------------
# Spectral bounds
# ---------------------------------------------------------------------------


def _gershgorin_upper(A: HermitianSparseMatrix) -> float:
    centers = np.zeros(A.n)
    radii = np.zeros(A.n)
    on_diag = A._row_indices == A.col_indices
    centers[A._row_indices[on_diag]] = A.values[on_diag].real
    np.add.at(radii, A._row_indices[~on_diag], np.abs(A.values[~on_diag]))
    return float(np.max(centers + radii))


def _lanczos_extremes(A: HermitianSparseMatrix, steps: int, seed: int):
    """Run ``steps`` fully re-orthogonalized Lanczos iterations.

    Returns the extreme Ritz values with their residual norms and whether the
    Krylov space became invariant (exact answers on that subspace).
    """
    n = A.n
    steps = max(1, min(steps, n))
    rng = np.random.default_rng(seed)
    dtype = np.complex128 if _is_complex(A.values) else np.float64
    v = rng.standard_normal(n).astype(dtype)
    v /= np.linalg.norm(v)
    V = np.empty((steps, n), dtype=dtype)
    alphas = np.empty(steps)
    betas = np.empty(steps)
    scale = max(_gershgorin_upper(A), np.finfo(float).tiny)
    invariant = False
    k = 0
    v_prev = np.zeros(n, dtype=dtype)
    beta_prev = 0.0
    for j in range(steps):
        V[j] = v
        w = A.matvec(v) - beta_prev * v_prev
        a = np.vdot(v, w).real
        w = w - a * v
        # Two Gram-Schmidt passes keep the basis orthogonal to working precision.
        for _ in range(2):
            w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        alphas[j] = a
        b = float(np.linalg.norm(w))
        k = j + 1
        if b <= 1e-12 * scale:
            invariant = True
            betas[j] = 0.0
            break
        betas[j] = b
        v_prev, v, beta_prev = v, w / b, b
    theta, Y = eigh_tridiagonal(alphas[:k], betas[: k - 1])
    beta_last = 0.0 if invariant else betas[k - 1]
    res = beta_last * np.abs(Y[-1, :])
    return theta[0], float(res[0]), theta[-1], float(res[-1]), k, invariant


def estimate_spectral_bounds(
    A: HermitianSparseMatrix,
    refine_steps: int = 50,
    *,
    adaptive: bool = True,
    seed: int = 0,
) -> SpectralBounds:
    """Certified enclosure of the spectrum of a Hermitian positive definite A.

    ``lambda_hi`` is ``min(Gershgorin bound, top Ritz value + its residual)``
    and never drops below the largest diagonal entry; overestimating it only
    tightens downstream stopping thresholds, so this direction is safe.
    ``lambda_lo`` is the bottom Ritz value minus its residual, floored at
    ``1e-12 * lambda_hi``; underestimating the lower end only widens the
    probing interval.

    ``refine_steps`` is the initial Lanczos budget.  With ``adaptive=True``
    (the default) the sweep is re-run with a doubled budget, up to ``n`` steps,
    until the bottom Ritz pair has a small relative residual: on matrices with
    a tiny relative gap at the low end (the 1-D Laplacian at n = 1000, say) a
    fixed 50-step sweep overestimates ``lambda_lo`` by orders of magnitude,
    and the node-count needed to cover the resulting fictitious interval
    becomes infeasible.
    """
    gersh = _gershgorin_upper(A)
    if gersh <= 0.0:
        raise SpectralBoundsError(
            "Gershgorin bound is non-positive: cannot certify a positive spectrum"
        )
    steps = max(1, int(refine_steps))
    while True:
        t_lo, r_lo, t_hi, r_hi, used, invariant = _lanczos_extremes(A, steps, seed)
        converged = invariant or r_lo <= 0.05 * max(t_lo, np.finfo(float).tiny)
        if not adaptive or converged or used >= A.n:
            break
        steps = min(2 * steps, A.n)
        logger.debug("bottom Ritz residual %.3e, escalating Lanczos to %d steps", r_lo, steps)

    if t_lo <= 0.0:
        raise SpectralBoundsError(
            f"Lanczos found a non-positive Rayleigh quotient ({t_lo:.3e}): "
            "matrix is not positive definite"
        )
    pad = 64.0 * np.finfo(float).eps * max(abs(t_hi), abs(t_lo), 1.0)
    max_diag = float(np.max(A.diagonal().real))
    lambda_hi = max(min(gersh, t_hi + r_hi + pad), max_diag)
    lambda_lo = max(t_lo - r_lo - pad, 1e-12 * lambda_hi)
    return SpectralBounds(lambda_lo, lambda_hi)
