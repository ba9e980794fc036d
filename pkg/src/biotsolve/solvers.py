"""Outer iterations for ``[[A, B^T], [B, -D]] [u; p] = [f; g]``.

All solvers start from zero and, except GMRES with left preconditioning,
stop on the true relative residual ``||b - M x|| / ||b||`` of the full
system.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .assembly import BiotSystem
from .sparse import least_squares_constrained

DIVERGENCE_FACTOR = 1e6


@dataclass
class SolveReport:
    solver: str
    iterations: int = 0
    converged: bool = False
    diverged: bool = False
    residuals: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    wall_time: float = 0.0
    inner: str = ""
    info: dict = field(default_factory=dict)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), default=float)


def _rel(r, bnorm):
    nr = float(np.linalg.norm(r))
    return nr / bnorm if bnorm > 0 else nr


def _err(x, x_ref):
    nref = np.linalg.norm(x_ref)
    e = float(np.linalg.norm(x - x_ref))
    return e / nref if nref > 0 else e


def _as_operator(M) -> Callable[[np.ndarray], np.ndarray]:
    if M is None:
        return lambda v: v
    if callable(M) and not hasattr(M, "shape"):
        return M
    if hasattr(M, "apply"):
        return M.apply
    if hasattr(M, "matvec") and not hasattr(M, "dot"):
        return M.matvec
    return lambda v: M @ v


# ---------------------------------------------------------------------------
# GMRES


def gmres(
    matvec,
    b: np.ndarray,
    precond=None,
    side: str = "right",
    tol: float = 1e-6,
    maxit: int = 3000,
    x_ref: np.ndarray | None = None,
    name: str = "gmres",
):
    """Full GMRES with modified Gram-Schmidt plus one reorthogonalization pass.

    ``matvec`` and ``precond`` may be matrices or callables; ``precond`` is
    the action of ``P^{-1}``. With ``side="left"`` the stopping test uses the
    preconditioned residual, otherwise the (true) Arnoldi residual.

    Returns ``(x, report)``.
    """
    t0 = time.perf_counter()
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    A = _as_operator(matvec)
    P = _as_operator(precond)
    b = np.asarray(b, dtype=float)
    n = b.size
    left = precond is not None and side == "left"
    right = precond is not None and side == "right"

    r0 = P(b) if left else b.copy()
    beta = float(np.linalg.norm(r0))
    report = SolveReport(solver=name, residuals=[1.0 if beta > 0 else 0.0])
    x = np.zeros(n)
    if x_ref is not None:
        report.errors.append(_err(x, x_ref))
    if beta == 0.0:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return x, report

    kmax = min(maxit, n)
    V = np.zeros((kmax + 1, n))
    H = np.zeros((kmax + 1, kmax))
    cs = np.zeros(kmax)
    sn = np.zeros(kmax)
    s = np.zeros(kmax + 1)
    s[0] = beta
    V[0] = r0 / beta
    k = 0

    def solution(k):
        y = np.linalg.solve(np.triu(H[:k, :k]), s[:k]) if k else np.zeros(0)
        z = V[:k].T @ y
        return P(z) if right else z

    while k < kmax:
        w = V[k]
        w = A(P(w)) if right else (P(A(w)) if left else A(w))
        wnorm0 = np.linalg.norm(w)
        for _ in range(2):
            for i in range(k + 1):
                hij = V[i] @ w
                H[i, k] += hij
                w = w - hij * V[i]
        hnext = float(np.linalg.norm(w))
        H[k + 1, k] = hnext
        for i in range(k):
            tmp = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = tmp
        denom = np.hypot(H[k, k], H[k + 1, k])
        cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
        H[k, k] = denom
        H[k + 1, k] = 0.0
        s[k + 1] = -sn[k] * s[k]
        s[k] = cs[k] * s[k]
        k += 1
        rel = abs(s[k]) / beta
        report.residuals.append(rel)
        if x_ref is not None:
            report.errors.append(_err(solution(k), x_ref))
        breakdown = hnext <= 1e-14 * max(wnorm0, 1.0)
        if rel <= tol or breakdown:
            report.converged = True
            report.info["breakdown"] = bool(breakdown and rel > tol)
            break
        V[k] = w / hnext

    x = solution(k)
    report.iterations = k
    report.info["true_residual"] = _rel(b - A(x), float(np.linalg.norm(b)))
    report.wall_time = time.perf_counter() - t0
    return x, report


# ---------------------------------------------------------------------------
# Uzawa family


def _solve(s):
    return s.solve if hasattr(s, "solve") else s


def _start(system: BiotSystem, name, x_ref):
    b = system.rhs
    bnorm = float(np.linalg.norm(b))
    u = np.zeros(system.n_u)
    p = np.zeros(system.n_p)
    report = SolveReport(solver=name, residuals=[_rel(b, bnorm)])
    if x_ref is not None:
        report.errors.append(_err(np.zeros(system.n), x_ref))
    return u, p, bnorm, report


def _record(system, report, u, p, bnorm, x_ref, tol):
    x = np.concatenate([u, p])
    rel = _rel(system.residual(x), bnorm)
    report.residuals.append(rel)
    report.iterations += 1
    if x_ref is not None:
        report.errors.append(_err(x, x_ref))
    if rel <= tol:
        report.converged = True
        return True
    if not np.isfinite(rel) or rel > DIVERGENCE_FACTOR * max(report.residuals[0], 1e-300):
        report.diverged = True
        return True
    return False


def _finish(report, t0, u, p):
    report.wall_time = time.perf_counter() - t0
    return np.concatenate([u, p]), report


def uzawa(system: BiotSystem, solve_A, solve_S, omega: float = 2.5, tol: float = 1e-6, maxit: int = 3000, x_ref=None):
    """Preconditioned Uzawa with relaxation ``omega`` on the pressure step.

    ``u <- u + P_A^{-1}(f - A u - B^T p)``,
    ``p <- p - omega P_S^{-1}(g - B u + D p)``.

    The pressure correction is subtracted: ``g - B u + D p`` equals
    ``S (p - p*)`` once ``u`` solves its block, so this is the direction
    that contracts.
    """
    if not omega >= 0:
        raise ValueError("omega must be non-negative")
    t0 = time.perf_counter()
    SA, SS = _solve(solve_A), _solve(solve_S)
    A, B, D, f, g = system.A, system.B, system.D, system.f, system.g
    u, p, bnorm, report = _start(system, "u", x_ref)
    report.info["omega"] = omega
    if report.residuals[0] <= tol:
        report.converged = True
        return _finish(report, t0, u, p)
    for _ in range(maxit):
        u = u + SA(f - A @ u - B.T @ p)
        p = p - omega * SS(g - B @ u + D @ p)
        if _record(system, report, u, p, bnorm, x_ref, tol):
            break
    return _finish(report, t0, u, p)


def variable_uzawa(
    system: BiotSystem,
    solve_A,
    solve_S,
    P_S,
    damping: str = "one",
    tau_denominator: str = "P_S",
    tol: float = 1e-6,
    maxit: int = 3000,
    x_ref=None,
    callback=None,
):
    """Uzawa with step lengths chosen to minimize energy-norm errors.

    Displacement step: ``c = P_A^{-1} f_k``, ``omega_k = (f_k, c)/(A c, c)``.
    Pressure step: ``d = P_S^{-1} g_k``, ``tau_k = (g_k, d)/(W d, d)`` with
    ``W = P_S`` or ``W = S = B P_A^{-1} B^T + D``, then
    ``p <- p - theta_k tau_k d``. ``damping="hu"`` uses
    ``theta_k = (1 - sqrt(1 - omega_k)) / 2``.

    ``callback(k, u_k, c_k, omega_k, p_k)`` is called before each
    displacement update.
    """
    if damping not in ("one", "hu"):
        raise ValueError("damping must be 'one' or 'hu'")
    if tau_denominator not in ("P_S", "S"):
        raise ValueError("tau_denominator must be 'P_S' or 'S'")
    t0 = time.perf_counter()
    SA, SS = _solve(solve_A), _solve(solve_S)
    A, B, D, f, g = system.A, system.B, system.D, system.f, system.g
    u, p, bnorm, report = _start(system, "vu", x_ref)
    omegas, taus = [], []
    report.info.update(omegas=omegas, taus=taus, damping=damping, tau_denominator=tau_denominator)
    if report.residuals[0] <= tol:
        report.converged = True
        return _finish(report, t0, u, p)
    clamped = 0
    for k in range(maxit):
        fk = f - A @ u - B.T @ p
        if not np.any(fk):
            omega_k = 1.0
            c = np.zeros_like(fk)
        else:
            c = SA(fk)
            den = float((A @ c) @ c)
            if den == 0.0:
                raise ZeroDivisionError("(A c_k, c_k) vanished with f_k != 0")
            omega_k = float(fk @ c) / den
        if callback is not None:
            callback(k, u, c, omega_k, p)
        u = u + omega_k * c

        gk = g - B @ u + D @ p
        if not np.any(gk):
            tau_k = 1.0
            d = np.zeros_like(gk)
        else:
            d = SS(gk)
            W_d = P_S @ d if tau_denominator == "P_S" else B @ SA(B.T @ d) + D @ d
            tau_k = float(gk @ d) / float(W_d @ d)
        if damping == "one":
            theta_k = 1.0
        else:
            w = omega_k
            if w > 1.0:
                clamped += 1
                w = 1.0
            theta_k = 0.5 * (1.0 - np.sqrt(1.0 - w))
        p = p - theta_k * tau_k * d
        omegas.append(omega_k)
        taus.append(tau_k)
        if _record(system, report, u, p, bnorm, x_ref, tol):
            break
    if clamped:
        report.info["omega_clamped"] = clamped
        warnings.warn(f"omega_k > 1 at {clamped} steps; clamped to 1 in the damping formula", RuntimeWarning)
    return _finish(report, t0, u, p)


def uzawa_fixed_point_map(system: BiotSystem, solve_A, solve_S, x: np.ndarray) -> np.ndarray:
    """One unrelaxed Uzawa sweep ``x -> G(x)``.

    Equivalent to ``[[P_A, 0], [B, -P_S]] x_new = [[P_A - A, -B^T], [0, D - P_S]] x + [f; g]``,
    whose fixed point solves the saddle-point system.
    """
    SA, SS = _solve(solve_A), _solve(solve_S)
    u, p = system.split(np.asarray(x, dtype=float))
    u_new = u + SA(system.f - system.A @ u - system.B.T @ p)
    p_new = p - SS(system.g - system.B @ u_new + system.D @ p)
    return np.concatenate([u_new, p_new])


@dataclass
class AndersonState:
    """Sliding window of the last ``m + 1`` map values and residuals."""

    m: int
    G: list = field(default_factory=list)
    F: list = field(default_factory=list)
    alpha: np.ndarray | None = None

    def push(self, gx: np.ndarray, fx: np.ndarray) -> None:
        self.G.append(gx)
        self.F.append(fx)
        if len(self.G) > self.m + 1:
            del self.G[0], self.F[0]

    @property
    def m_k(self) -> int:
        return len(self.F) - 1

    def extrapolate(self) -> np.ndarray:
        self.alpha = least_squares_constrained(np.column_stack(self.F))
        return np.column_stack(self.G) @ self.alpha


def anderson_uzawa(system: BiotSystem, solve_A, solve_S, m: int = 5, tol: float = 1e-6, maxit: int = 3000, x_ref=None):
    """Anderson acceleration of the Uzawa fixed-point map with window depth ``m``."""
    if m < 1:
        raise ValueError("Anderson depth m must be >= 1")
    t0 = time.perf_counter()
    b = system.rhs
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(system.n)
    report = SolveReport(solver="aau", residuals=[_rel(b, bnorm)])
    if x_ref is not None:
        report.errors.append(_err(x, x_ref))
    alpha_sums = []
    report.info.update(m=m, alpha_sums=alpha_sums)
    if report.residuals[0] <= tol:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return x, report

    def check(x):
        rel = _rel(system.residual(x), bnorm)
        report.residuals.append(rel)
        report.iterations += 1
        if x_ref is not None:
            report.errors.append(_err(x, x_ref))
        if rel <= tol:
            report.converged = True
        elif not np.isfinite(rel) or rel > DIVERGENCE_FACTOR * report.residuals[0]:
            report.diverged = True
        return report.converged or report.diverged

    state = AndersonState(m)
    gx = uzawa_fixed_point_map(system, solve_A, solve_S, x)
    state.push(gx, gx - x)
    x = gx
    done = check(x)
    while not done and report.iterations < maxit:
        gx = uzawa_fixed_point_map(system, solve_A, solve_S, x)
        state.push(gx, gx - x)
        x = state.extrapolate()
        alpha_sums.append(float(state.alpha.sum()))
        done = check(x)
    report.wall_time = time.perf_counter() - t0
    return x, report
