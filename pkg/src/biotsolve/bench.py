"""Experiment grid: one solve per (mesh, parameters, solver) case."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .assembly import DEFAULT_EPS, PhysicalParams, assemble_system, count_dofs
from .mesh import build_structured_mesh
from .preconditioners import InnerSolverError, InnerSolverSpec, build_block_preconditioner, build_schur_approx, factorize
from .solvers import SolveReport, anderson_uzawa, gmres, uzawa, variable_uzawa
from .sparse import write_matrix_market

log = logging.getLogger(__name__)

SOLVER_IDS = ("nopre", "pgmres", "u", "aau", "vu", "ipgmres", "iu", "iaau", "ivu")
DEFAULT_SOLVERS = ("pgmres", "u", "aau", "vu", "ipgmres", "iu", "iaau", "ivu")

# E = 1000 throughout; everything not listed is 1
TABLE_PARAMS = {
    1: dict(E=1000.0, nu=0.3, kappa=1.0),
    2: dict(E=1000.0, nu=0.49, kappa=1.0),
    3: dict(E=1000.0, nu=0.3, kappa=1e-4),
}


@dataclass(frozen=True)
class CaseConfig:
    nx: int = 16
    E: float = 1000.0
    nu: float = 0.3
    kappa: float = 1.0
    s: float = 1.0
    dt: float = 1.0
    eps_stab: float | None = None
    fe: str = "mini"
    solver: str = "pgmres"
    precond: str = "upper"
    side: str = "right"
    schur: str = "mass_plus_D"
    droptol: float = 1e-3
    shift_a: float = 10.0
    shift_s: float = 0.0
    tol: float = 1e-6
    maxit: int = 3000
    omega: float = 2.5
    anderson_m: int = 5
    seed: int = 0  # reserved; every case is deterministic

    def __post_init__(self):
        if self.solver not in SOLVER_IDS:
            raise ValueError(f"unknown solver {self.solver!r}; expected one of {SOLVER_IDS}")

    @property
    def inexact(self) -> bool:
        return self.solver.startswith("i")

    @property
    def params(self) -> PhysicalParams:
        eps = DEFAULT_EPS[self.fe] if self.eps_stab is None else self.eps_stab
        return PhysicalParams(E=self.E, nu=self.nu, kappa=self.kappa, s=self.s, dt=self.dt, eps_stab=eps)

    @property
    def inner_A(self) -> InnerSolverSpec:
        return InnerSolverSpec("incomplete", self.droptol, self.shift_a) if self.inexact else InnerSolverSpec()

    @property
    def inner_S(self) -> InnerSolverSpec:
        return InnerSolverSpec("incomplete", self.droptol, self.shift_s) if self.inexact else InnerSolverSpec()

    @property
    def case_id(self) -> str:
        return f"nx={self.nx},E={self.E:g},nu={self.nu:g},kappa={self.kappa:g},solver={self.solver}"


class CaseError(RuntimeError):
    def __init__(self, case_id: str, cause: Exception):
        super().__init__(f"[{case_id}] {type(cause).__name__}: {cause}")
        self.case_id = case_id
        self.cause = cause


@dataclass
class _Cache:
    """Assembled systems and factorizations shared between cases of a table."""

    systems: dict = field(default_factory=dict)
    factors: dict = field(default_factory=dict)

    def system(self, cfg: CaseConfig):
        key = (cfg.nx, cfg.fe, cfg.params)
        if key not in self.systems:
            self.systems[key] = assemble_system(build_structured_mesh(cfg.nx), cfg.params, fe=cfg.fe)
        return self.systems[key]

    def factor_A(self, cfg, system):
        key = (cfg.nx, cfg.fe, cfg.params, "A", cfg.inner_A)
        if key not in self.factors:
            self.factors[key] = factorize(system.A, cfg.inner_A, "displacement")
        return self.factors[key]

    def schur(self, cfg, system):
        key = (cfg.nx, cfg.fe, cfg.params, "S", cfg.inner_S, cfg.schur)
        if key not in self.factors:
            self.factors[key] = build_schur_approx(system.M_p, system.D, system.params, cfg.inner_S, cfg.schur)
        return self.factors[key]


def run_case(config: CaseConfig, cache: _Cache | None = None, x_ref=None):
    """Assemble, precondition and solve one case. Returns ``(x, SolveReport)``."""
    cache = _Cache() if cache is None else cache
    cfg = config
    try:
        t0 = time.perf_counter()
        system = cache.system(cfg)
        if cfg.solver == "nopre":
            x, report = gmres(system.matvec, system.rhs, None, tol=cfg.tol, maxit=cfg.maxit, x_ref=x_ref, name="nopre")
            report.inner = "none"
        else:
            solve_A = cache.factor_A(cfg, system)
            schur = cache.schur(cfg, system)
            base = cfg.solver.lstrip("i")
            if base == "pgmres":
                P = build_block_preconditioner(system, cfg.precond, solve_A=solve_A, schur_approx=schur)
                x, report = gmres(system.matvec, system.rhs, P, side=cfg.side, tol=cfg.tol, maxit=cfg.maxit, x_ref=x_ref)
            elif base == "u":
                x, report = uzawa(system, solve_A, schur, omega=cfg.omega, tol=cfg.tol, maxit=cfg.maxit, x_ref=x_ref)
            elif base == "vu":
                x, report = variable_uzawa(system, solve_A, schur, schur.matrix, tol=cfg.tol, maxit=cfg.maxit, x_ref=x_ref)
            else:
                x, report = anderson_uzawa(system, solve_A, schur, m=cfg.anderson_m, tol=cfg.tol, maxit=cfg.maxit, x_ref=x_ref)
            report.inner = f"A:{cfg.inner_A} S:{cfg.inner_S}"
        report.solver = cfg.solver
        report.info.update(case=cfg.case_id, dofs=system.layout.total_dofs, setup_time=time.perf_counter() - t0 - report.wall_time)
    except InnerSolverError as exc:
        raise CaseError(cfg.case_id, exc) from exc
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise CaseError(cfg.case_id, exc) from exc
    log.info("%s: %d its, converged=%s, %.2fs", cfg.case_id, report.iterations, report.converged, report.wall_time)
    return x, report


def format_cell(report: SolveReport, maxit: int) -> str:
    if report.converged:
        return str(report.iterations)
    return f">{maxit}"


def table_config(table: int, **overrides) -> CaseConfig:
    if table not in TABLE_PARAMS:
        raise ValueError(f"table must be one of {sorted(TABLE_PARAMS)}")
    return replace(CaseConfig(), **TABLE_PARAMS[table], **overrides)


def run_table(
    table: int,
    nx_list=(16, 32, 64),
    solvers=DEFAULT_SOLVERS,
    reports: list | None = None,
    export_mm: str | Path | None = None,
    **overrides,
) -> str:
    """CSV with columns ``DOFs, Nx, <solver ids...>``; failures are written in-cell."""
    base = table_config(table, **overrides)
    cache = _Cache()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["DOFs", "Nx", *solvers])
    if not solvers:
        return buf.getvalue()
    for nx in nx_list:
        row = [count_dofs(nx, base.fe), nx]
        if export_mm is not None:
            export_system(cache.system(replace(base, nx=nx)), Path(export_mm) / f"table{table}_nx{nx}")
        for sid in solvers:
            cfg = replace(base, nx=nx, solver=sid)
            try:
                _, rep = run_case(cfg, cache)
                row.append(format_cell(rep, cfg.maxit))
                if reports is not None:
                    reports.append(rep)
            except CaseError as exc:
                log.error("%s", exc)
                row.append(f"error: {type(exc.cause).__name__}")
        w.writerow(row)
        # factorizations for this mesh are not reused by larger meshes
        cache.factors.clear()
        cache.systems.clear()
    return buf.getvalue()


def export_system(system, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("A", "B", "D", "M_p", "A0"):
        write_matrix_market(directory / f"{name}.mtx", getattr(system, name), comment=name)
    write_matrix_market(directory / "f.mtx", system.f, comment="f")
    write_matrix_market(directory / "g.mtx", system.g, comment="g")
