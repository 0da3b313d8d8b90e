"""Sparse storage and linear solvers.

Thin layer over scipy.sparse: triplet accumulation compresses to CSR with
duplicates summed; direct solves go through SuperLU with COLAMD ordering,
which handles the nonsymmetric transport systems and the indefinite
saddle-point blocks alike at desk scale. The iterative path is
ILU-preconditioned GMRES and is optional.
"""

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ShapeError, SingularMatrixError

DIRECT_RESIDUAL_FACTOR = 1e-10


@dataclass
class SolverReport:
    iterations: int
    residual: float
    success: bool


class TripletBuffer:
    """(row, col, value) accumulator; duplicate entries are allowed."""

    def __init__(self, n_rows, n_cols):
        self.n_rows = n_rows
        self.n_cols = n_cols
        self._rows = []
        self._cols = []
        self._vals = []

    def add(self, row, col, value):
        self.add_batch(np.array([row]), np.array([col]), np.array([value]))

    def add_batch(self, rows, cols, values):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == values.shape):
            raise ShapeError("triplet arrays must have identical lengths")
        if len(rows) and (
            rows.min() < 0
            or cols.min() < 0
            or rows.max() >= self.n_rows
            or cols.max() >= self.n_cols
        ):
            raise ShapeError(
                f"triplet index out of range for {self.n_rows}x{self.n_cols} matrix"
            )
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(values)

    def arrays(self):
        if not self._rows:
            empty = np.empty(0)
            return empty.astype(np.int64), empty.astype(np.int64), empty
        return (
            np.concatenate(self._rows),
            np.concatenate(self._cols),
            np.concatenate(self._vals),
        )


class CsrMatrix:
    """Compressed sparse rows with sorted column indices, duplicates summed."""

    def __init__(self, matrix):
        matrix = matrix.tocsr()
        matrix.sum_duplicates()
        matrix.sort_indices()
        self._m = matrix

    @classmethod
    def from_scipy(cls, matrix):
        return cls(matrix)

    @property
    def scipy(self):
        return self._m

    @property
    def shape(self):
        return self._m.shape

    @property
    def indptr(self):
        return self._m.indptr

    @property
    def indices(self):
        return self._m.indices

    @property
    def data(self):
        return self._m.data

    @property
    def nnz(self):
        return self._m.nnz

    def toarray(self):
        return self._m.toarray()

    def dot(self, x):
        return self._m @ x

    def __matmul__(self, x):
        return self._m @ x

    def transpose(self):
        return CsrMatrix(self._m.T)

    def frobenius(self):
        return float(np.sqrt((self._m.data ** 2).sum()))

    def copy(self):
        return CsrMatrix(self._m.copy())

    def write_matrixmarket(self, path):
        """Dump in MatrixMarket coordinate format (debug aid)."""
        scipy.io.mmwrite(str(path), self._m)


def compress(buffer):
    """Compress accumulated triplets to CSR, summing duplicates."""
    rows, cols, vals = buffer.arrays()
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(buffer.n_rows, buffer.n_cols))
    return CsrMatrix(coo)


def _suspect_singular_dof(matrix):
    """Best-effort index of a structurally deficient row (else -1)."""
    m = matrix.scipy
    counts = np.diff(m.indptr)
    empty = np.nonzero(counts == 0)[0]
    if len(empty):
        return int(empty[0])
    diag = m.diagonal()
    zero = np.nonzero(diag == 0.0)[0]
    if len(zero):
        return int(zero[0])
    return -1


class DirectFactor:
    """Reusable sparse LU factorization (SuperLU, COLAMD ordering)."""

    def __init__(self, matrix):
        if matrix.shape[0] != matrix.shape[1]:
            raise ShapeError("direct solver requires a square matrix")
        self._matrix = matrix
        try:
            self._lu = spla.splu(matrix.scipy.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            dof = _suspect_singular_dof(matrix)
            raise SingularMatrixError(
                f"sparse LU failed ({exc}); suspect dof {dof}", dof=dof
            ) from exc

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (self._matrix.shape[0],):
            raise ShapeError("right-hand side length does not match matrix")
        x = self._lu.solve(b)
        if not np.isfinite(x).all():
            dof = _suspect_singular_dof(self._matrix)
            raise SingularMatrixError(
                f"sparse LU produced non-finite solution; suspect dof {dof}", dof=dof
            )
        return x


def solve_direct(A, b):
    """Solve A x = b by sparse LU; guarantees a small verified residual."""
    x = DirectFactor(A).solve(b)
    b = np.asarray(b, dtype=np.float64)
    residual = float(np.linalg.norm(A @ x - b))
    bound = DIRECT_RESIDUAL_FACTOR * (
        A.frobenius() * float(np.linalg.norm(x)) + float(np.linalg.norm(b))
    )
    if residual > max(bound, 1e-300):
        dof = _suspect_singular_dof(A)
        raise SingularMatrixError(
            f"direct solve residual {residual:.3e} exceeds bound {bound:.3e}; "
            f"suspect dof {dof}",
            dof=dof,
        )
    return x


class CachedDirectSolver:
    """Direct solves for a slowly-varying sequence of matrices.

    Successive time steps change only the convection/drift entries of each
    system, so the previous factorization is an excellent preconditioner:
    iterative refinement against the current matrix reaches direct-solver
    accuracy in a few sweeps. When the iteration stalls (large time steps,
    strong coefficient changes) the matrix is refactored. Results satisfy
    the same residual contract as ``solve_direct``.
    """

    def __init__(self, rtol=1e-12, max_sweeps=30):
        self.rtol = rtol
        self.max_sweeps = max_sweeps
        self._factor = None
        self.refactor_count = 0

    def _refresh(self, A):
        self._factor = DirectFactor(A)
        self.refactor_count += 1

    def solve(self, A, b):
        b = np.asarray(b, dtype=np.float64)
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            return np.zeros_like(b)
        if self._factor is None:
            self._refresh(A)
        x = self._factor.solve(b)
        r = b - A @ x
        rnorm = float(np.linalg.norm(r))
        sweeps = 0
        while rnorm > self.rtol * bnorm and sweeps < self.max_sweeps:
            x = x + self._factor.solve(r)
            r = b - A @ x
            new_norm = float(np.linalg.norm(r))
            if new_norm > 0.5 * rnorm:
                break  # stalled: the cached factor no longer matches
            rnorm = new_norm
            sweeps += 1
        if rnorm > self.rtol * bnorm:
            self._refresh(A)
            x = self._factor.solve(b)
            r = b - A @ x
            rnorm = float(np.linalg.norm(r))
        bound = DIRECT_RESIDUAL_FACTOR * (
            A.frobenius() * float(np.linalg.norm(x)) + bnorm
        )
        if rnorm > max(bound, 1e-300):
            dof = _suspect_singular_dof(A)
            raise SingularMatrixError(
                f"cached direct solve residual {rnorm:.3e} exceeds bound {bound:.3e}; "
                f"suspect dof {dof}",
                dof=dof,
            )
        return x


def _ilu_preconditioner(A):
    try:
        ilu = spla.spilu(A.scipy.tocsc(), drop_tol=1e-5, fill_factor=20.0)
    except RuntimeError:
        return None
    n = A.shape[0]
    return spla.LinearOperator((n, n), matvec=ilu.solve)


def solve_iterative(A, b, tol=1e-8, max_iter=1000):
    """ILU-preconditioned GMRES; residual target is ``tol * ||b||``.

    Non-convergence is reported, not raised: the caller decides whether it
    is fatal.
    """
    if A.shape[0] != A.shape[1]:
        raise ShapeError("iterative solver requires a square matrix")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.shape[0],):
        raise ShapeError("right-hand side length does not match matrix")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), SolverReport(0, 0.0, True)

    count = {"n": 0}

    def cb(_):
        count["n"] += 1

    M = _ilu_preconditioner(A)
    x, info = spla.gmres(
        A.scipy,
        b,
        rtol=tol,
        atol=0.0,
        restart=50,
        maxiter=max_iter,
        M=M,
        callback=cb,
        callback_type="pr_norm",
    )
    residual = float(np.linalg.norm(A @ x - b))
    success = info == 0 and residual <= tol * bnorm
    return x, SolverReport(count["n"], residual, success)
