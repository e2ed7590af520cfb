"""Krylov and dense solvers used by the schemes and their oracles.

Sparse storage is scipy's CSR format. ``cg_solve`` is a conjugate-residual
iteration (the CG-family member that minimises the 2-norm residual, so the
residual history is monotone) with an optional weighted mean-zero constraint.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_TOL = 1e-10


class SolverBreakdown(ArithmeticError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass
class SolverReport:
    iterations: int
    residual: float
    converged: bool
    history: list = field(default_factory=list, repr=False)


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_structurally_symmetric(A) -> bool:
    A = as_csr(A)
    P = (A != 0).astype(np.int8)
    return (P != P.T).nnz == 0


def _project(v):
    # drop the component along the constant vector (Euclidean)
    return v - v.mean()


def cg_solve(A, b, tol=DEFAULT_TOL, max_iter=None, constraint=None):
    """Solve ``A x = b`` for symmetric positive (semi)definite ``A``.

    Parameters
    ----------
    constraint : array_like, optional
        Lumped-mass weights ``m``. When given, ``A`` may have the constant
        vector in its kernel; ``b`` must be orthogonal to constants, the
        iteration is kept orthogonal to constants and the returned ``x`` has
        zero weighted mean ``sum(m * x) = 0``.

    Returns
    -------
    x, SolverReport
        Converged iff ``||A x - b|| <= tol * ||b||``.
    """
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    bnorm = np.linalg.norm(b)
    if constraint is not None:
        w = np.asarray(constraint, dtype=float)
        if abs(b.sum()) > tol * max(bnorm, 1.0) * np.sqrt(n):
            raise ValueError("right-hand side is not orthogonal to the constant kernel")
        b = _project(b)
    x = np.zeros(n)
    if bnorm == 0.0:
        return x, SolverReport(0, 0.0, True, [0.0])
    r = b.copy()
    p = r.copy()
    Ar = A @ r
    Ap = Ar.copy()
    rAr = r @ Ar
    history = [np.linalg.norm(r)]
    it = 0
    converged = history[-1] <= tol * bnorm
    while not converged and it < max_iter:
        ApAp = Ap @ Ap
        if ApAp <= 0.0 or rAr <= 0.0:
            raise SolverBreakdown(f"indefinite or singular operator at iteration {it}")
        alpha = rAr / ApAp
        x += alpha * p
        r -= alpha * Ap
        if constraint is not None:
            r = _project(r)
        it += 1
        rn = np.linalg.norm(r)
        history.append(rn)
        if rn <= tol * bnorm:
            converged = True
            break
        Ar = A @ r
        rAr_new = r @ Ar
        beta = rAr_new / rAr
        rAr = rAr_new
        p = r + beta * p
        Ap = Ar + beta * Ap
    if constraint is not None:
        x -= (w @ x) / w.sum()
    res = np.linalg.norm(A @ x - b)
    return x, SolverReport(it, float(res), bool(res <= tol * bnorm), history)


def gmres_solve(A, b, tol=DEFAULT_TOL, restart=50, max_iter=1000, M=None):
    """Restarted GMRES (scipy) with a residual report."""
    A = as_csr(A) if sp.issparse(A) else A
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolverReport(0, 0.0, True)
    count = [0]

    def cb(_):
        count[0] += 1

    x, _info = spla.gmres(A, b, rtol=tol, atol=0.0, restart=restart, maxiter=max_iter,
                          M=M, callback=cb, callback_type="pr_norm")
    res = float(np.linalg.norm(A @ x - b))
    ok = bool(np.isfinite(res) and res <= tol * bnorm * (1 + 1e-8))
    if not np.all(np.isfinite(x)):
        x = np.zeros_like(b)
        ok = False
    return x, SolverReport(count[0], res, ok)


def dense_solve(A, b) -> np.ndarray:
    """LU with partial pivoting for small dense systems."""
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > 2000:
        raise ValueError("dense_solve is limited to 2000 unknowns")
    with warnings.catch_warnings():
        # singularity is reported below as an exception
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    d = np.abs(np.diag(lu))
    if d.min() <= np.finfo(float).eps * n * max(d.max(), np.abs(A).max()):
        raise SingularMatrixError("matrix is singular to working precision")
    return scipy.linalg.lu_solve((lu, piv), b)


def write_matrix_market(path, A, comment="") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, precision=17)


def read_matrix_market(path) -> sp.csr_matrix:
    return as_csr(scipy.io.mmread(str(path)))
