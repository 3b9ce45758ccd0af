"""Linear-algebra kernels: sparse storage, LU solves with refinement,
symmetric dense eigendecomposition, and a shift-invert Arnoldi iteration.

The factorization and dense-eigen layers wrap LAPACK (via scipy); the
Arnoldi iteration, with its deterministic start vector, deflation hook and
reorthogonalization monitor, is implemented here directly because the
complex-symmetric pencils need bilinear (unconjugated) handling that
off-the-shelf eigensolvers do not expose.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

__all__ = [
    "SparseMatrix",
    "LUFactors",
    "SingularMatrixError",
    "ArnoldiError",
    "lu_factor",
    "sym_eig_dense",
    "shift_invert_arnoldi",
    "bilinear_dot",
    "sesquilinear_dot",
]


class SingularMatrixError(RuntimeError):
    """Raised when elimination meets a (near-)zero pivot."""

    def __init__(self, pivot_index: int, pivot_value: float):
        super().__init__(f"singular matrix: pivot {pivot_index} has magnitude {pivot_value:.3e}")
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class ArnoldiError(RuntimeError):
    """Non-convergence of the shift-invert iteration; carries best residuals."""

    def __init__(self, residuals):
        super().__init__(f"Arnoldi did not converge; best residuals {residuals}")
        self.residuals = residuals


class SparseMatrix:
    """CSR matrix built from COO triplets, real or complex."""

    def __init__(self, n: int, rows, cols, values):
        values = np.asarray(values)
        self.n = n
        self.csr = scipy.sparse.csr_matrix(
            (values, (np.asarray(rows, dtype=int), np.asarray(cols, dtype=int))),
            shape=(n, n))
        self.csr.sum_duplicates()
        self.csr.sort_indices()

    @classmethod
    def from_csr(cls, csr) -> "SparseMatrix":
        obj = cls.__new__(cls)
        obj.n = csr.shape[0]
        obj.csr = csr.tocsr()
        obj.csr.sort_indices()
        return obj

    @property
    def dtype(self):
        return self.csr.dtype

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.csr @ x

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        d = self.csr - self.csr.T
        return abs(d).max() <= tol * max(1.0, abs(self.csr).max())

    def __add__(self, other):
        return SparseMatrix.from_csr(self.csr + other.csr)

    def scaled(self, alpha) -> "SparseMatrix":
        return SparseMatrix.from_csr(self.csr * alpha)


def bilinear_dot(u: np.ndarray, v: np.ndarray):
    """Unconjugated pairing u^T v (analytic in the entries)."""
    return np.dot(u, v)


def sesquilinear_dot(u: np.ndarray, v: np.ndarray):
    return np.vdot(u, v)


class LUFactors:
    """LU factors of a square matrix with one step of iterative refinement.

    Dense inputs go through LAPACK getrf; sparse inputs above the dense
    cutoff use a sparse LU with a fixed, deterministic ordering.
    """

    _DENSE_CUTOFF = 1200

    def __init__(self, matrix, pivot_tol: float = 1e-13):
        if isinstance(matrix, SparseMatrix):
            sparse_input = matrix.csr
            n = matrix.n
        elif scipy.sparse.issparse(matrix):
            sparse_input = matrix.tocsc()
            n = matrix.shape[0]
        else:
            sparse_input = None
            dense = np.asarray(matrix)
            if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
                raise ValueError("lu_factor requires a square matrix")
            n = dense.shape[0]
        self.n = n

        if sparse_input is not None and n > self._DENSE_CUTOFF:
            self._mat = sparse_input.tocsr()
            splu = scipy.sparse.linalg.splu(
                sparse_input.tocsc(), permc_spec="COLAMD",
                options={"SymmetricMode": False})
            diag = np.abs(splu.U.diagonal())
            scale = max(1.0, abs(sparse_input).max())
            small = np.nonzero(diag <= pivot_tol * scale)[0]
            if len(small):
                raise SingularMatrixError(int(small[0]), float(diag[small[0]]))
            self._splu = splu
            self._dense = None
        else:
            dense = sparse_input.toarray() if sparse_input is not None else np.array(dense)
            self._mat = dense
            with warnings.catch_warnings():
                # zero pivots are detected and reported below
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(dense, check_finite=False)
            diag = np.abs(np.diag(lu))
            scale = max(1.0, np.abs(dense).max())
            small = np.nonzero(diag <= pivot_tol * scale)[0]
            if len(small):
                raise SingularMatrixError(int(small[0]), float(diag[small[0]]))
            self._lu, self._piv = lu, piv
            self._splu = None
            self._dense = dense

    def _solve_once(self, b: np.ndarray) -> np.ndarray:
        if self._splu is not None:
            return self._splu.solve(b)
        return scipy.linalg.lu_solve((self._lu, self._piv), b, check_finite=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b)
        x = self._solve_once(b)
        # one step of iterative refinement
        r = b - self._mat @ x
        x = x + self._solve_once(r)
        return x


def lu_factor(matrix) -> LUFactors:
    return LUFactors(matrix)


def sym_eig_dense(a: np.ndarray, b: np.ndarray | None = None,
                  sym_tol: float = 1e-12):
    """Eigendecomposition of a real symmetric matrix, optionally generalized
    against a symmetric positive definite b.  Eigenvalues ascending; the
    eigenvector matrix X satisfies X^T b X = I (or X^T X = I when b is None).
    """
    a = np.asarray(a, dtype=float)
    scale = max(1.0, np.abs(a).max())
    if np.abs(a - a.T).max() > sym_tol * scale:
        raise ValueError("matrix is not symmetric to the required tolerance")
    if b is None:
        w, x = scipy.linalg.eigh(a, check_finite=False)
        return w, x
    b = np.asarray(b, dtype=float)
    if np.abs(b - b.T).max() > sym_tol * max(1.0, np.abs(b).max()):
        raise ValueError("mass matrix is not symmetric to the required tolerance")
    w, x = scipy.linalg.eigh(a, b, check_finite=False)
    return w, x


def _orthonormal_start(n: int, deflate, dtype) -> np.ndarray:
    v = np.ones(n, dtype=dtype)
    if deflate is not None:
        v = deflate(v)
    nrm = np.linalg.norm(v)
    if nrm <= 1e-8 * np.sqrt(n):
        # the all-ones vector lies in the deflated space; fall back to a
        # fixed, seedless pseudo-random direction
        v = np.cos(np.arange(n, dtype=float)).astype(dtype)
        if deflate is not None:
            v = deflate(v)
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            raise ArnoldiError([np.inf])
    return v / nrm


def shift_invert_arnoldi(apply_op, n: int, count: int, deflate=None,
                         dtype=complex, tol: float = 1e-10,
                         krylov_dim: int | None = None, max_restarts: int = 4):
    """Arnoldi iteration on the (already shift-inverted) operator.

    apply_op(v) must compute (A - sigma B)^{-1} B v.  Returns the `count`
    Ritz pairs of largest |theta| as (thetas, vectors, residual_estimates);
    pencil eigenvalues follow as lambda = sigma + 1/theta.  The start vector
    is the all-ones vector (deflated, then normalized) for determinism.
    """
    if count >= n:
        raise ValueError("count must be smaller than the dimension")
    m = krylov_dim or min(n, max(2 * count + 16, 40))
    for attempt in range(max_restarts):
        mm = min(n, m * (attempt + 1))
        v0 = _orthonormal_start(n, deflate, dtype)
        V = np.zeros((n, mm + 1), dtype=dtype)
        H = np.zeros((mm + 1, mm), dtype=dtype)
        V[:, 0] = v0
        k = mm
        for j in range(mm):
            w = apply_op(V[:, j])
            if deflate is not None:
                w = deflate(w)
            # modified Gram-Schmidt with one full reorthogonalization pass
            for i in range(j + 1):
                h = np.vdot(V[:, i], w)
                H[i, j] += h
                w = w - h * V[:, i]
            for i in range(j + 1):
                h = np.vdot(V[:, i], w)
                H[i, j] += h
                w = w - h * V[:, i]
            beta = np.linalg.norm(w)
            H[j + 1, j] = beta
            if beta < 1e-14:
                k = j + 1
                break
            V[:, j + 1] = w / beta
        Hk = H[:k, :k]
        theta, S = np.linalg.eig(Hk)
        order = np.lexsort((theta.imag, theta.real, -np.abs(theta)))
        theta, S = theta[order], S[:, order]
        take = min(count, k)
        res = np.empty(take)
        for i in range(take):
            # last-subdiagonal residual estimate for the operator Ritz pair
            res[i] = abs(H[k, k - 1] * S[k - 1, i]) / max(abs(theta[i]), 1e-300)
        vecs = V[:, :k] @ S[:, :take]
        if take == count and (k < mm or np.all(res <= tol)):
            return theta[:take], vecs, res
    raise ArnoldiError(res.tolist())
