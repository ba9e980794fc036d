"""Small-mesh eigenvalue checks for the Schur-complement preconditioner.

Two symmetric pencils are examined densely:

* ``S q = lam P_S q`` with ``S = B A^{-1} B^T + D``;
* ``B A0^{-1} B^T q = lam M_p q``, the discrete inf-sup pencil, whose
  eigenvalues lie in ``[beta^2, 1]``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .assembly import BiotSystem
from .preconditioners import schur_matrix
from .sparse import DENSE_EIG_MAX, cholesky_exact, dense_sym_eig


@dataclass
class SpectrumReport:
    case: str
    nx: int
    n_u: int
    n_p: int
    schur_min: float | None = None
    schur_max: float | None = None
    infsup_min: float | None = None
    infsup_max: float | None = None

    def merge(self, other: "SpectrumReport") -> "SpectrumReport":
        d = asdict(self)
        d.update({k: v for k, v in asdict(other).items() if v is not None})
        return SpectrumReport(**d)


def _check_size(system: BiotSystem):
    if system.n_p > DENSE_EIG_MAX:
        raise ValueError(f"pressure space has {system.n_p} dofs; spectral mode is capped at {DENSE_EIG_MAX}")


def _schur_dense(system: BiotSystem, K) -> np.ndarray:
    """``B K^{-1} B^T`` as a dense array, solving column by column."""
    Bt = system.B.T.toarray()
    X = cholesky_exact(K).solve(Bt)
    return system.B @ X


def dense_schur_complement(system: BiotSystem) -> np.ndarray:
    _check_size(system)
    return _schur_dense(system, system.A) + system.D.toarray()


def schur_eigenvalues(system: BiotSystem, variant: str = "mass_plus_D") -> np.ndarray:
    _check_size(system)
    S = dense_schur_complement(system)
    P_S = schur_matrix(system.M_p, system.D, system.params, variant).toarray()
    return dense_sym_eig(S, P_S)


def infsup_eigenvalues(system: BiotSystem) -> np.ndarray:
    _check_size(system)
    return dense_sym_eig(_schur_dense(system, system.A0), system.M_p.toarray())


def schur_spectrum(system: BiotSystem, case: str = "", variant: str = "mass_plus_D") -> SpectrumReport:
    lam = schur_eigenvalues(system, variant)
    return SpectrumReport(
        case=case,
        nx=system.mesh.nx,
        n_u=system.n_u,
        n_p=system.n_p,
        schur_min=float(lam[0]),
        schur_max=float(lam[-1]),
    )


def infsup_spectrum(system: BiotSystem, case: str = "") -> SpectrumReport:
    lam = infsup_eigenvalues(system)
    return SpectrumReport(
        case=case,
        nx=system.mesh.nx,
        n_u=system.n_u,
        n_p=system.n_p,
        infsup_min=float(lam[0]),
        infsup_max=float(lam[-1]),
    )


CSV_FIELDS = ["case", "nx", "n_u", "n_p", "schur_min", "schur_max", "infsup_min", "infsup_max"]


def spectrum_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow({k: ("" if v is None else (f"{v:.12g}" if isinstance(v, float) else v)) for k, v in asdict(r).items()})
    return buf.getvalue()
