"""Sparse and small dense linear-algebra kernels.

CSR storage and Matrix Market I/O come from scipy. The incomplete Cholesky
factorization, triangular sweeps and the Jacobi eigensolver are compiled
with numba.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee

DENSE_EIG_MAX = 2000


class NotSPDError(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot is not positive."""

    def __init__(self, msg, column=None):
        super().__init__(msg)
        self.column = column


def as_csr(A) -> sp.csr_matrix:
    """Canonical CSR: sorted column indices, duplicates summed, no stored zeros."""
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def spmv(A, x):
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape} vs vector {x.shape}")
    return A @ x


# ---------------------------------------------------------------------------
# Cholesky factors


@dataclass
class CholeskyFactor:
    """``P A P^T ~= L L^T`` with ``L`` lower triangular (CSC).

    ``perm[i]`` is the original index placed at position ``i``; ``None`` means
    the identity ordering.
    """

    L: sp.csc_matrix = field(repr=False)
    perm: np.ndarray | None = field(default=None, repr=False)
    exact: bool = True
    shift: float = 0.0
    droptol: float = 0.0
    _lu: object = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def nnz(self) -> int:
        return self.L.nnz

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self._lu is not None:
            # same triangular pair as L, up to a diagonal scaling
            return self._lu.solve(b)
        if self.perm is not None:
            b = b[self.perm]
        L = self.L
        y = _lower_solve(L.indptr, L.indices, L.data, b.copy())
        x = _upper_t_solve(L.indptr, L.indices, L.data, y)
        if self.perm is not None:
            out = np.empty_like(x)
            out[self.perm] = x
            x = out
        return x

    __call__ = solve

    def reconstruct(self) -> sp.csr_matrix:
        """``L L^T`` mapped back to the original ordering."""
        LLt = (self.L @ self.L.T).tocsr()
        if self.perm is None:
            return LLt
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return LLt[inv][:, inv].tocsr()


def cholesky_exact(A, ordering: str = "mmd") -> CholeskyFactor:
    """Exact sparse Cholesky factor of an SPD matrix.

    ``ordering`` is ``"mmd"`` (minimum degree on ``A + A^T``), ``"rcm"``
    (reverse Cuthill-McKee) or ``"natural"``.
    """
    A = as_csr(A)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if ordering == "rcm":
        perm = reverse_cuthill_mckee(A, symmetric_mode=True).astype(np.int64)
        Ap = A[perm][:, perm].tocsc()
        permc = "NATURAL"
    elif ordering in ("mmd", "natural"):
        perm = None
        Ap = A.tocsc()
        permc = "MMD_AT_PLUS_A" if ordering == "mmd" else "NATURAL"
    else:
        raise ValueError(f"unknown ordering {ordering!r}")

    # diagonal pivoting in symmetric mode gives P A P^T = L' U with U = diag(U) L'^T
    lu = spla.splu(Ap, permc_spec=permc, diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise NotSPDError("row pivoting occurred; matrix is not SPD")
    d = lu.U.diagonal()
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        raise NotSPDError(f"non-positive pivot {d[bad[0]]:.3e}; matrix is not SPD", column=int(bad[0]))
    L = (lu.L @ sp.diags(np.sqrt(d))).tocsc()
    L.sort_indices()
    # factor row i corresponds to row inv_c[i] of Ap
    inv_c = np.empty_like(lu.perm_c)
    inv_c[lu.perm_c] = np.arange(n)
    total = inv_c if perm is None else perm[inv_c]
    return CholeskyFactor(L=L, perm=total.astype(np.int64), exact=True, _lu=_PermutedLU(lu, perm))


class _PermutedLU:
    """SuperLU solve expressed in the caller's numbering."""

    def __init__(self, lu, perm):
        self.lu, self.perm = lu, perm

    def solve(self, b):
        if self.perm is None:
            return self.lu.solve(b)
        x = self.lu.solve(b[self.perm])
        out = np.empty_like(x)
        out[self.perm] = x
        return out


@numba.njit(cache=True)
def _lower_solve(indptr, indices, data, b):
    n = b.size
    for j in range(n):
        start = indptr[j]
        bj = b[j] / data[start]
        b[j] = bj
        for q in range(start + 1, indptr[j + 1]):
            b[indices[q]] -= data[q] * bj
    return b


@numba.njit(cache=True)
def _upper_t_solve(indptr, indices, data, y):
    n = y.size
    x = y.copy()
    for j in range(n - 1, -1, -1):
        start = indptr[j]
        acc = x[j]
        for q in range(start + 1, indptr[j + 1]):
            acc -= data[q] * x[indices[q]]
        x[j] = acc / data[start]
    return x


@numba.njit(cache=True)
def _ict(n, Ap, Ai, Ax, colnorm, droptol):
    """Left-looking threshold incomplete Cholesky on a CSC lower triangle.

    Returns ``(Lp, Li, Lx, status)``; ``status`` is ``-1`` on success or the
    column where a non-positive pivot appeared.
    """
    cap = max(2 * Ai.size, 16)
    Li = np.empty(cap, np.int64)
    Lx = np.empty(cap, np.float64)
    Lp = np.zeros(n + 1, np.int64)
    w = np.zeros(n)
    mark = np.full(n, -1, np.int64)
    pattern = np.empty(n, np.int64)
    first = np.full(n, -1, np.int64)
    link = np.full(n, -1, np.int64)
    nextpos = np.zeros(n, np.int64)
    nnz = 0
    for j in range(n):
        npat = 0
        mark[j] = j
        w[j] = 0.0
        for q in range(Ap[j], Ap[j + 1]):
            i = Ai[q]
            if i < j:
                continue
            if mark[i] != j:
                mark[i] = j
                w[i] = 0.0
                if i != j:
                    pattern[npat] = i
                    npat += 1
            w[i] += Ax[q]
        k = first[j]
        while k != -1:
            nk = link[k]
            pos = nextpos[k]
            ljk = Lx[pos]
            end = Lp[k + 1]
            for q in range(pos, end):
                i = Li[q]
                if mark[i] != j:
                    mark[i] = j
                    w[i] = 0.0
                    pattern[npat] = i
                    npat += 1
                w[i] -= Lx[q] * ljk
            pos += 1
            if pos < end:
                nextpos[k] = pos
                r = Li[pos]
                link[k] = first[r]
                first[r] = k
            k = nk
        d = w[j]
        if not d > 0.0:
            return Lp, Li, Lx, j
        ljj = math.sqrt(d)
        if nnz + npat + 1 > cap:
            cap = max(2 * cap, nnz + npat + 1)
            Li2 = np.empty(cap, np.int64)
            Lx2 = np.empty(cap, np.float64)
            Li2[:nnz] = Li[:nnz]
            Lx2[:nnz] = Lx[:nnz]
            Li, Lx = Li2, Lx2
        Lp[j] = nnz
        Li[nnz] = j
        Lx[nnz] = ljj
        nnz += 1
        rows = np.sort(pattern[:npat])
        tol = droptol * colnorm[j]
        for i in rows:
            v = w[i] / ljj
            if abs(v) >= tol and v != 0.0:
                Li[nnz] = i
                Lx[nnz] = v
                nnz += 1
        Lp[j + 1] = nnz
        if Lp[j + 1] > Lp[j] + 1:
            pos = Lp[j] + 1
            nextpos[j] = pos
            r = Li[pos]
            link[j] = first[r]
            first[r] = j
    return Lp, Li[:nnz].copy(), Lx[:nnz].copy(), -1


def cholesky_incomplete(A, droptol: float = 1e-3, shift: float = 0.0) -> CholeskyFactor:
    """Threshold incomplete Cholesky of ``A + shift * diag(diag(A))``.

    Entries of ``L`` in column ``j`` smaller than ``droptol`` times the 2-norm
    of row ``j`` of the shifted matrix are dropped. Identity ordering.
    """
    A = as_csr(A)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise NotSPDError("matrix has a non-positive diagonal entry")
    As = as_csr(A + shift * sp.diags(diag)) if shift else A
    lower = sp.tril(As, format="csc")
    lower.sort_indices()
    colnorm = np.sqrt(np.asarray(As.multiply(As).sum(axis=1)).ravel())
    Lp, Li, Lx, status = _ict(
        n, lower.indptr.astype(np.int64), lower.indices.astype(np.int64), lower.data, colnorm, float(droptol)
    )
    if status >= 0:
        raise NotSPDError(
            f"incomplete Cholesky breakdown at column {status} (shift={shift}); increase the shift",
            column=int(status),
        )
    L = sp.csc_matrix((Lx, Li, Lp), shape=(n, n))
    return CholeskyFactor(L=L, perm=None, exact=False, shift=shift, droptol=droptol)


# ---------------------------------------------------------------------------
# dense symmetric-definite eigenproblem


@numba.njit(cache=True)
def _jacobi_eig(C, tol, max_sweeps):
    n = C.shape[0]
    V = np.eye(n)
    A = C.copy()
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += A[i, j] * A[i, j]
        scale = 0.0
        for i in range(n):
            scale += A[i, i] * A[i, i]
        if off <= tol * tol * (scale + off):
            return np.diag(A).copy(), V, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                app = A[p, p]
                aqq = A[q, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
    return np.diag(A).copy(), V, max_sweeps


def dense_sym_eig(A, B=None, vectors: bool = False, tol: float = 1e-15, max_sweeps: int = 60):
    """Eigenvalues of ``A x = lam B x`` in ascending order.

    ``B`` is reduced by its Cholesky factor and the symmetric matrix
    ``L^{-1} A L^{-T}`` is diagonalized by cyclic Jacobi rotations.
    """
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    n = A.shape[0]
    if n > DENSE_EIG_MAX:
        raise ValueError(f"dense eigensolver is capped at n={DENSE_EIG_MAX}, got {n}")
    A = 0.5 * (A + A.T)
    if B is None:
        L = None
        C = A
    else:
        B = np.asarray(B.toarray() if sp.issparse(B) else B, dtype=float)
        try:
            L = np.linalg.cholesky(0.5 * (B + B.T))
        except np.linalg.LinAlgError as exc:
            raise NotSPDError("B is not symmetric positive definite") from exc
        X = sla.solve_triangular(L, A, lower=True)
        C = sla.solve_triangular(L, X.T, lower=True)
        C = 0.5 * (C + C.T)
    w, V, _ = _jacobi_eig(np.ascontiguousarray(C), tol, max_sweeps)
    order = np.argsort(w)
    w = w[order]
    if not vectors:
        return w
    V = V[:, order]
    if L is not None:
        V = sla.solve_triangular(L.T, V, lower=False)
    return w, V


# ---------------------------------------------------------------------------
# affine-constrained least squares


def least_squares_constrained(F, rank_tol: float = 1e-12) -> np.ndarray:
    """Weights ``a`` minimizing ``||F a||_2`` subject to ``sum(a) == 1``.

    With ``g_j = a_0 + ... + a_j`` the problem becomes the unconstrained fit
    ``min || f_m - dF g ||`` over the consecutive differences
    ``dF_j = f_{j+1} - f_j``, solved by Householder QR. When ``dF`` is
    numerically rank deficient the oldest columns are discarded (zero weight)
    until it is not; if all columns coincide the minimum-norm answer, uniform
    weights, is returned.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    m1 = F.shape[1]
    if m1 == 1:
        return np.ones(1)
    dF = np.diff(F, axis=1)
    ref = max(np.linalg.norm(F, axis=0).max(), np.finfo(float).tiny)
    if np.linalg.norm(dF) <= rank_tol * ref:
        return np.full(m1, 1.0 / m1)
    # more differences than rows cannot have full column rank
    start = max(0, dF.shape[1] - dF.shape[0])
    while True:
        Q, R = np.linalg.qr(dF[:, start:])
        diag = np.abs(np.diag(R))
        if diag.size == 0 or diag.min() > rank_tol * max(diag.max(), rank_tol * ref):
            break
        start += 1
    gamma = np.linalg.solve(R, Q.T @ F[:, -1]) if diag.size else np.zeros(0)
    alpha = np.zeros(m1)
    k = m1 - start
    a = np.empty(k)
    if k > 1:
        a[0] = gamma[0]
        a[1:-1] = np.diff(gamma)
        a[-1] = 1.0 - gamma[-1]
    else:
        a[0] = 1.0
    alpha[start:] = a
    return alpha


# ---------------------------------------------------------------------------
# Matrix Market


def write_matrix_market(path, A, comment: str = "") -> None:
    """Coordinate-format dump with 17 significant digits; 1-D arrays become columns."""
    if not sp.issparse(A):
        A = np.asarray(A, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        A = sp.coo_matrix(A)
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, field="real", precision=17)


def read_matrix_market(path):
    M = scipy.io.mmread(str(path))
    return as_csr(M) if sp.issparse(M) else np.asarray(M)
