"""Sparse symmetric factorization with multi right-hand-side reuse.

MKL PARDISO (through ``pypardiso``) is used when importable, otherwise SciPy's
SuperLU. Both operate on a symmetrically diagonal-scaled copy of the matrix,
which keeps penalty-dominated systems well balanced.
"""

from __future__ import annotations

import glob
import os

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["Factorization", "factorize", "solve", "FactorizationError",
           "NotPositiveDefiniteError", "pardiso_available"]


class FactorizationError(RuntimeError):
    """Raised when the system is numerically singular or the residual fails."""


class NotPositiveDefiniteError(FactorizationError):
    """A Cholesky-type factorization met a non-positive pivot.

    For penalty systems this usually means the penalty parameter is too large
    for double precision relative to the (fictitious) stiffness.
    """


def _load_pardiso():
    if "PYPARDISO_MKL_RT" not in os.environ:
        for pattern in ("/usr/local/lib/libmkl_rt.so*", "/usr/lib/libmkl_rt.so*",
                        os.path.join(os.sys.prefix, "lib", "libmkl_rt.so*")):
            hits = sorted(glob.glob(pattern))
            if hits:
                os.environ["PYPARDISO_MKL_RT"] = hits[-1]
                break
    try:
        from pypardiso import PyPardisoSolver
    except Exception:  # missing package or MKL runtime
        return None
    return PyPardisoSolver


_PARDISO = _load_pardiso()


def pardiso_available():
    return _PARDISO is not None


def _scaled(M, s):
    """In-place symmetric diagonal scaling ``diag(s) M diag(s)`` of a CSR matrix."""
    M.sort_indices()
    rows = np.repeat(np.arange(M.shape[0]), np.diff(M.indptr))
    M.data *= s[rows] * s[M.indices]
    return M


class Factorization:
    """Reusable factorization of a symmetric positive definite sparse matrix.

    Parameters
    ----------
    A : sparse matrix
        Symmetric system matrix.
    backend : {"auto", "pardiso", "splu"}
    rtol : float
        Required relative residual per solve; up to ``refine`` steps of
        iterative refinement are taken to reach it.
    """

    def __init__(self, A, backend="auto", rtol=1e-8, refine=3):
        A = sp.csr_matrix(A, dtype=np.float64)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.A = A
        self.n = A.shape[0]
        self.rtol = rtol
        self.refine = refine
        d = A.diagonal()
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            bad = int(np.sum(~(d > 0)))
            raise FactorizationError(
                f"matrix has {bad} non-positive diagonal entries; the system is not "
                "positive definite (unconstrained rigid-body modes?)")
        self.scale = 1.0 / np.sqrt(d)
        if backend == "auto":
            backend = "pardiso" if _PARDISO is not None else "splu"
        self.backend = backend
        if backend == "pardiso":
            if _PARDISO is None:
                raise FactorizationError("PARDISO backend requested but not available")
            self._upper = _scaled(sp.triu(A, format="csr"), self.scale)
            # Cholesky only: a pivot-perturbed indefinite factorization returns
            # inaccurate solutions without failing on penalty systems
            self.mtype = 2
            self._solver = _PARDISO(mtype=2, size_limit_storage=0)
            self._solver.set_statistical_info_off()
            try:
                self._solver.factorize(self._upper)
            except Exception as exc:
                raise NotPositiveDefiniteError(
                    f"PARDISO Cholesky factorization failed ({exc}); the matrix is not "
                    "numerically positive definite") from None
        elif backend == "splu":
            try:
                self._lu = spla.splu(_scaled(A.copy(), self.scale).tocsc(), permc_spec="MMD_AT_PLUS_A",
                                     diag_pivot_thresh=0.0,
                                     options={"SymmetricMode": True})
            except RuntimeError as exc:
                raise FactorizationError(f"factorization failed: {exc}") from exc
            diag = self._lu.U.diagonal()
            piv = np.abs(diag)
            # diagonal pivoting keeps perm_r == perm_c, so pivot signs give the inertia
            if np.array_equal(self._lu.perm_r, self._lu.perm_c) and np.any(diag < 0):
                raise NotPositiveDefiniteError(
                    f"{int(np.sum(diag < 0))} negative pivot(s) in a symmetric factorization")
            if np.any(piv < 1e-13 * piv.max()):
                raise FactorizationError(
                    f"numerically singular: {int(np.sum(piv < 1e-13 * piv.max()))} "
                    "negligible pivots")
        else:
            raise ValueError(f"unknown backend {backend!r}")

    def free(self):
        """Release the factor; MKL memory is not returned on garbage collection."""
        solver = self.__dict__.pop("_solver", None)
        if solver is not None:
            try:
                solver.free_memory(everything=True)
            except Exception:  # interpreter shutdown or already released
                pass
        self.__dict__.pop("_lu", None)

    def __del__(self):
        self.free()

    def _raw_solve(self, b):
        if "_solver" not in self.__dict__ and "_lu" not in self.__dict__:
            raise FactorizationError("factorization was released")
        if self.backend == "pardiso":
            x = self._solver.solve(self._upper, np.ascontiguousarray(b))
        else:
            x = self._lu.solve(b)
        return x.reshape(b.shape)

    def solve(self, rhs):
        """Solve for one (n,) or many (n, r) right-hand sides."""
        b = np.asarray(rhs, dtype=np.float64)
        if b.shape[0] != self.n:
            raise ValueError("right-hand side has the wrong length")
        B = b.reshape(self.n, -1)
        bn = np.linalg.norm(B, axis=0)
        X = np.zeros_like(B)
        live = bn > 0
        if not live.any():
            return X.reshape(b.shape)
        s = self.scale[:, None]
        Bs = B[:, live]
        Xl = s * self._raw_solve(s * Bs)
        for step in range(self.refine + 1):
            R = Bs - self.A @ Xl
            rel = np.linalg.norm(R, axis=0) / bn[live]
            if np.all(rel < self.rtol) or step == self.refine:
                break
            Xl += s * self._raw_solve(s * R)
        if not np.all(np.isfinite(Xl)):
            raise FactorizationError("solution is not finite; system numerically singular")
        worst = float(rel.max())
        if worst >= self.rtol:
            raise FactorizationError(
                f"relative residual {worst:.3e} exceeds {self.rtol:.0e} after refinement")
        X[:, live] = Xl
        self.last_residual = worst
        return X.reshape(b.shape)


def factorize(A, **kwargs):
    return Factorization(A, **kwargs)


def solve(handle, rhs):
    return handle.solve(rhs)
