"""Block preconditioners for the generalized saddle-point system.

``diag``, ``lower`` and ``upper`` are::

    P1 = [P_A   0  ]   P2 = [P_A   0  ]   P3 = [P_A  B^T ]
         [ 0  -P_S ]        [ B  -P_S ]        [ 0   -P_S ]

where ``P_A ~ A`` and ``P_S ~ S = B A^{-1} B^T + D`` are applied through
exact or incomplete Cholesky factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import BiotSystem, PhysicalParams
from .sparse import CholeskyFactor, NotSPDError, cholesky_exact, cholesky_incomplete

KINDS = ("diag", "lower", "upper")
SCHUR_VARIANTS = ("mass_plus_D", "D_only")


class InnerSolverError(RuntimeError):
    """Factorization or solve failure inside one diagonal block."""

    def __init__(self, block: str, cause: Exception):
        super().__init__(f"{block} inner solver failed: {cause}")
        self.block = block
        self.cause = cause


@dataclass(frozen=True)
class InnerSolverSpec:
    kind: str = "exact"
    droptol: float = 1e-3
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("exact", "incomplete"):
            raise ValueError(f"inner solver kind must be 'exact' or 'incomplete', got {self.kind!r}")

    def __str__(self):
        if self.kind == "exact":
            return "exact"
        return f"ichol(droptol={self.droptol:g},shift={self.shift:g})"


EXACT = InnerSolverSpec("exact")


def factorize(M, spec: InnerSolverSpec = EXACT, block: str = "block") -> CholeskyFactor:
    try:
        if spec.kind == "exact":
            return cholesky_exact(M)
        return cholesky_incomplete(M, droptol=spec.droptol, shift=spec.shift)
    except NotSPDError as exc:
        raise InnerSolverError(block, exc) from exc


@dataclass
class SchurApprox:
    matrix: sp.csr_matrix = field(repr=False)
    solver: CholeskyFactor = field(repr=False)
    variant: str = "mass_plus_D"
    inner: InnerSolverSpec = EXACT

    def solve(self, r):
        return self.solver.solve(r)


def schur_matrix(M_p, D, params: PhysicalParams, variant: str = "mass_plus_D") -> sp.csr_matrix:
    """``M_p / (2 mu + lambda) + D``, or ``D`` alone for ``variant="D_only"``."""
    if variant == "mass_plus_D":
        return (M_p / params.longitudinal_modulus + D).tocsr()
    if variant == "D_only":
        return sp.csr_matrix(D, copy=True)
    raise ValueError(f"unknown Schur variant {variant!r}; expected one of {SCHUR_VARIANTS}")


def build_schur_approx(M_p, D, params, inner: InnerSolverSpec = EXACT, variant: str = "mass_plus_D") -> SchurApprox:
    P_S = schur_matrix(M_p, D, params, variant)
    return SchurApprox(matrix=P_S, solver=factorize(P_S, inner, "pressure"), variant=variant, inner=inner)


@dataclass
class BlockPreconditioner:
    """Action of ``P^{-1}`` for one of the three block preconditioners."""

    kind: str
    A: sp.csr_matrix = field(repr=False)
    B: sp.csr_matrix = field(repr=False)
    solve_A: CholeskyFactor = field(repr=False)
    schur: SchurApprox = field(repr=False)
    inner_A: InnerSolverSpec = EXACT

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown preconditioner kind {self.kind!r}; expected one of {KINDS}")

    @property
    def n_u(self) -> int:
        return self.A.shape[0]

    @property
    def shape(self):
        n = self.n_u + self.B.shape[0]
        return (n, n)

    def _A_inv(self, r):
        try:
            return self.solve_A.solve(r)
        except Exception as exc:  # pragma: no cover - surfaced with block identity
            raise InnerSolverError("displacement", exc) from exc

    def _S_inv(self, r):
        try:
            return self.schur.solve(r)
        except Exception as exc:  # pragma: no cover
            raise InnerSolverError("pressure", exc) from exc

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        r_u, r_p = r[: self.n_u], r[self.n_u :]
        if self.kind == "diag":
            z_u = self._A_inv(r_u)
            z_p = -self._S_inv(r_p)
        elif self.kind == "lower":
            z_u = self._A_inv(r_u)
            z_p = -self._S_inv(r_p - self.B @ z_u)
        else:
            z_p = -self._S_inv(r_p)
            z_u = self._A_inv(r_u - self.B.T @ z_p)
        return np.concatenate([z_u, z_p])

    __call__ = apply

    def matrix(self, P_A=None) -> sp.csr_matrix:
        """The block matrix ``P`` itself (with ``P_A = A`` unless given)."""
        P_A = self.A if P_A is None else P_A
        P_S = self.schur.matrix
        Zup = None if self.kind != "upper" else self.B.T
        Zlo = None if self.kind != "lower" else self.B
        return sp.bmat([[P_A, Zup], [Zlo, -P_S]], format="csr")

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator(self.shape, matvec=self.apply, dtype=float)


def build_block_preconditioner(
    system: BiotSystem,
    kind: str = "upper",
    inner_A: InnerSolverSpec = EXACT,
    inner_S: InnerSolverSpec = EXACT,
    schur: str = "mass_plus_D",
    solve_A: CholeskyFactor | None = None,
    schur_approx: SchurApprox | None = None,
) -> BlockPreconditioner:
    """Factor ``P_A`` and ``P_S`` (unless prebuilt ones are passed) and wire them up."""
    if solve_A is None:
        solve_A = factorize(system.A, inner_A, "displacement")
    if schur_approx is None:
        schur_approx = build_schur_approx(system.M_p, system.D, system.params, inner_S, schur)
    return BlockPreconditioner(kind=kind, A=system.A, B=system.B, solve_A=solve_A, schur=schur_approx, inner_A=inner_A)
