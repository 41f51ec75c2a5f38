"""Sylvester solver ``A X + X B = C`` by a precomputed eigendecomposition.

Every time step of the full and reduced integrators solves Sylvester equations
with fixed coefficients, so both matrices are diagonalised once and each solve
costs two pairs of matrix products plus an elementwise division.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as la

SINGULAR_RTOL = 1e-12
MAX_EIGVEC_COND = 1e10


class SingularPencilError(np.linalg.LinAlgError):
    """Raised when some eigenvalue sum ``a_i + b_j`` vanishes."""

    def __init__(self, index):
        self.index = tuple(int(k) for k in index)
        super().__init__(f"singular Sylvester pencil: a[{self.index[0]}] + b[{self.index[1]}] ~ 0")


def _eig(M):
    if np.allclose(M, M.T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(M).max())):
        w, Q = np.linalg.eigh(M)
        return w, Q, Q.T
    w, Q = la.eig(M)
    cond = np.linalg.cond(Q)
    if not np.isfinite(cond) or cond > MAX_EIGVEC_COND:
        raise np.linalg.LinAlgError(f"matrix is not safely diagonalisable (eigenvector cond {cond:.2e})")
    if np.all(np.abs(w.imag) == 0):
        w, Q = w.real, Q.real
    return w, Q, np.linalg.inv(Q)


class SylvesterFactorization:
    """Eigen-factors of ``A`` (m x m) and ``B`` (k x k).

    ``singular_pairs`` lists the index pairs whose eigenvalue sum falls below
    ``SINGULAR_RTOL * max(|a|, |b|)``.
    """

    def __init__(self, A, B):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if A.shape[0] != A.shape[1] or B.shape[0] != B.shape[1]:
            raise ValueError("A and B must be square")
        self.m, self.k = A.shape[0], B.shape[0]
        self.a, self.Qa, self.Qa_inv = _eig(A)
        # B acts from the right: X B = X Qb diag(b) Qb^-1
        self.b, self.Qb, self.Qb_inv = _eig(B)
        self.sums = self.a[:, None] + self.b[None, :]
        scale = max(np.abs(self.a).max(initial=0.0), np.abs(self.b).max(initial=0.0), np.finfo(float).tiny)
        mask = np.abs(self.sums) < SINGULAR_RTOL * scale
        self.singular_pairs = [tuple(p) for p in np.argwhere(mask)]
        self._mask = mask
        with np.errstate(divide="ignore"):
            inv = 1.0 / np.where(mask, 1.0, self.sums)
        self._inv_sums = np.where(mask, 0.0, inv)

    @property
    def is_singular(self) -> bool:
        return bool(self.singular_pairs)

    def reconstruct(self):
        A = (self.Qa * self.a) @ self.Qa_inv
        B = (self.Qb * self.b) @ self.Qb_inv
        if np.iscomplexobj(A):
            A, B = A.real, B.real
        return A, B

    def solve(self, C, deflate: bool = False):
        """Return X with ``A X + X B = C``.

        With ``deflate=True`` the singular eigen-directions get a zero
        coefficient (least-squares solution when C is compatible). ``C`` may
        carry leading batch dimensions.
        """
        C = np.asarray(C)
        if C.shape[-2:] != (self.m, self.k):
            raise ValueError(f"C has shape {C.shape}, expected (..., {self.m}, {self.k})")
        if self.singular_pairs and not deflate:
            raise SingularPencilError(self.singular_pairs[0])
        Y = self.Qa_inv @ C @ self.Qb
        Y = Y * self._inv_sums
        X = self.Qa @ Y @ self.Qb_inv
        if np.iscomplexobj(X):
            X = X.real
        return X


def factorize(A, B) -> SylvesterFactorization:
    return SylvesterFactorization(A, B)


def solve(fact: SylvesterFactorization, C, deflate: bool = False):
    return fact.solve(C, deflate=deflate)


def kron_solve(A, B, C):
    """Reference solve through ``(I (x) A + B^T (x) I) vec(X) = vec(C)``."""
    m, k = A.shape[0], B.shape[0]
    K = np.kron(np.eye(k), A) + np.kron(B.T, np.eye(m))
    x = np.linalg.solve(K, C.reshape(-1, order="F"))
    return x.reshape((m, k), order="F")
