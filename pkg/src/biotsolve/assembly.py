"""Stabilized finite-element assembly of one backward-Euler step of the Biot system.

The discrete system reads::

    [ A   B^T ] [u]   [f]
    [ B   -D  ] [p] = [g]

with ``A`` the elasticity block, ``B`` the (negative) divergence and ``D`` the
stabilized storage/diffusion block. Displacements live in the Mini space (P1
plus one cubic bubble per triangle, per component) or in plain P1; pressures
are P1. Homogeneous Dirichlet conditions are imposed on both fields by
deleting the boundary rows and columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh

FE_PAIRS = ("mini", "p1p1")
DEFAULT_EPS = {"mini": 1.0 / 6.0, "p1p1": 1.0 / 4.0}

# 6-point rule, exact for polynomials of degree 4 (barycentric points, weights sum to 1)
_QA, _QB = 0.445948490915965, 0.091576213509771
_QW1, _QW2 = 0.223381589678011, 0.109951743655322
QUAD_POINTS = np.array(
    [
        [_QA, _QA, 1 - 2 * _QA],
        [_QA, 1 - 2 * _QA, _QA],
        [1 - 2 * _QA, _QA, _QA],
        [_QB, _QB, 1 - 2 * _QB],
        [_QB, 1 - 2 * _QB, _QB],
        [1 - 2 * _QB, _QB, _QB],
    ]
)
QUAD_WEIGHTS = np.array([_QW1] * 3 + [_QW2] * 3)

VectorField = Union[Callable[[np.ndarray, np.ndarray], tuple], tuple, list]
ScalarField = Union[Callable[[np.ndarray, np.ndarray], np.ndarray], float, int]


@dataclass(frozen=True)
class PhysicalParams:
    """Material and discretization constants for one time step."""

    E: float = 1000.0
    nu: float = 0.3
    kappa: float = 1.0
    s: float = 1.0
    alpha_biot: float = 1.0
    dt: float = 1.0
    eps_stab: float = 1.0 / 6.0

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError("E must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError("nu must satisfy 0 <= nu < 0.5")
        if self.kappa < 0 or self.s < 0 or self.eps_stab < 0:
            raise ValueError("kappa, s and eps_stab must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.alpha_biot != 1.0:
            # the symmetric block form assumes p has been rescaled by alpha
            raise ValueError("only alpha_biot = 1 is supported")

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))

    @property
    def mu(self) -> float:
        return self.E / (2 * (1 + self.nu))

    @property
    def theta(self) -> float:
        return self.kappa * self.dt

    @property
    def longitudinal_modulus(self) -> float:
        """``2 mu + lambda``."""
        return 2 * self.mu + self.lam

    def stabilization_coefficient(self, h: float) -> float:
        return self.eps_stab * h**2 / (self.dt * self.longitudinal_modulus)


@dataclass(frozen=True)
class DofLayout:
    """Numbering of displacement and pressure unknowns.

    Scalar displacement dofs are ordered nodes first, then bubbles; the two
    components are stacked (x block, then y block). ``u_free`` / ``p_free``
    map reduced indices to full indices.
    """

    fe: str
    n_nodes: int
    n_triangles: int
    u_free: np.ndarray = field(repr=False)
    p_free: np.ndarray = field(repr=False)

    @property
    def n_scalar_u(self) -> int:
        return self.n_nodes + (self.n_triangles if self.fe == "mini" else 0)

    @property
    def n_u_total(self) -> int:
        return 2 * self.n_scalar_u

    @property
    def n_p_total(self) -> int:
        return self.n_nodes

    @property
    def total_dofs(self) -> int:
        return self.n_u_total + self.n_p_total

    @property
    def n_u(self) -> int:
        return self.u_free.size

    @property
    def n_p(self) -> int:
        return self.p_free.size

    def expand_u(self, u: np.ndarray) -> np.ndarray:
        full = np.zeros(self.n_u_total)
        full[self.u_free] = u
        return full

    def expand_p(self, p: np.ndarray) -> np.ndarray:
        full = np.zeros(self.n_p_total)
        full[self.p_free] = p
        return full


def count_dofs(nx: int, fe: str = "mini") -> int:
    """Total dof count before boundary elimination."""
    n_nodes = (nx + 1) ** 2
    n_scalar = n_nodes + (2 * nx * nx if fe == "mini" else 0)
    return 2 * n_scalar + n_nodes


def make_layout(mesh: TriMesh, fe: str = "mini") -> DofLayout:
    if fe not in FE_PAIRS:
        raise ValueError(f"unknown element pair {fe!r}; expected one of {FE_PAIRS}")
    N, T = mesh.n_nodes, mesh.n_triangles
    n_scalar = N + (T if fe == "mini" else 0)
    fixed = np.zeros(n_scalar, dtype=bool)
    fixed[mesh.boundary_nodes] = True
    free_scalar = np.flatnonzero(~fixed)
    u_free = np.concatenate([free_scalar, free_scalar + n_scalar])
    p_free = mesh.interior_nodes
    return DofLayout(fe=fe, n_nodes=N, n_triangles=T, u_free=u_free, p_free=p_free)


# ---------------------------------------------------------------------------
# element kernels


def _geometry(mesh: TriMesh):
    """Areas ``(E,)`` and barycentric gradients ``(E, 3, 2)``."""
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    grads = np.empty((len(det), 3, 2))
    grads[:, 0, 0] = y[:, 1] - y[:, 2]
    grads[:, 0, 1] = x[:, 2] - x[:, 1]
    grads[:, 1, 0] = y[:, 2] - y[:, 0]
    grads[:, 1, 1] = x[:, 0] - x[:, 2]
    grads[:, 2, 0] = y[:, 0] - y[:, 1]
    grads[:, 2, 1] = x[:, 1] - x[:, 0]
    grads /= det[:, None, None]
    return 0.5 * det, grads


def _quad_xy(mesh: TriMesh) -> np.ndarray:
    """Physical quadrature points, shape ``(E, Q, 2)``."""
    p = mesh.nodes[mesh.triangles]
    return np.einsum("qa,eai->eqi", QUAD_POINTS, p)


def displacement_basis(mesh: TriMesh, fe: str = "mini"):
    """Values ``(Q, nb)`` and gradients ``(E, Q, nb, 2)`` of the scalar displacement basis."""
    L = QUAD_POINTS
    _, gl = _geometry(mesh)
    nq = len(L)
    if fe == "p1p1":
        vals = L.copy()
        grads = np.broadcast_to(gl[:, None], (gl.shape[0], nq, 3, 2)).copy()
        return vals, grads
    vals = np.column_stack([L, 27.0 * L[:, 0] * L[:, 1] * L[:, 2]])
    grads = np.empty((gl.shape[0], nq, 4, 2))
    grads[:, :, :3] = gl[:, None]
    # grad(27 L0 L1 L2) = 27 (L1 L2 grad L0 + L0 L2 grad L1 + L0 L1 grad L2)
    coef = 27.0 * np.column_stack([L[:, 1] * L[:, 2], L[:, 0] * L[:, 2], L[:, 0] * L[:, 1]])
    grads[:, :, 3] = np.einsum("qa,eai->eqi", coef, gl)
    return vals, grads


def _scalar_dofs(mesh: TriMesh, fe: str) -> np.ndarray:
    if fe == "p1p1":
        return mesh.triangles
    bubbles = mesh.n_nodes + np.arange(mesh.n_triangles)
    return np.column_stack([mesh.triangles, bubbles])


def p1_mass_element(area: float) -> np.ndarray:
    return area / 12.0 * np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])


def p1_stiffness_element(vertices) -> np.ndarray:
    """``int grad(phi_a) . grad(phi_b)`` on one triangle."""
    v = np.asarray(vertices, dtype=float)
    m = TriMesh(nx=1, nodes=v, triangles=np.array([[0, 1, 2]]), boundary_nodes=np.arange(3))
    area, g = _geometry(m)
    return area[0] * g[0] @ g[0].T


def _scatter(rows, cols, vals, shape) -> sp.csr_matrix:
    m = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    return m


def _vector_form(mesh: TriMesh, fe: str, c_grad: float, c_gradT: float, c_div: float) -> sp.csr_matrix:
    """Full (unreduced) matrix of

    ``c_grad * grad u : grad v + c_gradT * grad u : grad v^T + c_div * div u div v``.
    """
    area, _ = _geometry(mesh)
    _, grads = displacement_basis(mesh, fe)
    # G[e, a, b, i, j] = int d_i phi_a d_j phi_b
    G = np.einsum("e,q,eqai,eqbj->eabij", area, QUAD_WEIGHTS, grads, grads)
    nb = G.shape[1]
    lap = G[..., 0, 0] + G[..., 1, 1]
    dofs = _scalar_dofs(mesh, fe)
    n_scalar = mesh.n_nodes + (mesh.n_triangles if fe == "mini" else 0)
    E = len(area)
    local = np.empty((E, 2, nb, 2, nb))
    for c in range(2):
        for d in range(2):
            blk = c_gradT * G[..., d, c] + c_div * G[..., c, d]
            if c == d:
                blk = blk + c_grad * lap
            local[:, c, :, d, :] = blk
    gdofs = np.concatenate([dofs, dofs + n_scalar], axis=1)  # (E, 2*nb) ordered (c, a)
    local = local.reshape(E, 2 * nb, 2 * nb)
    rows = np.repeat(gdofs[:, :, None], 2 * nb, axis=2)
    cols = np.repeat(gdofs[:, None, :], 2 * nb, axis=1)
    return _scatter(rows, cols, local, (2 * n_scalar, 2 * n_scalar))


def _reduce(M: sp.spmatrix, rows: np.ndarray, cols: np.ndarray) -> sp.csr_matrix:
    out = M.tocsr()[rows][:, cols].tocsr()
    out.sort_indices()
    return out


# ---------------------------------------------------------------------------
# public assembly routines


def assemble_elasticity(mesh: TriMesh, params: PhysicalParams, fe: str = "mini", reduced: bool = True):
    """``a(u, v) = int 2 mu eps(u):eps(v) + lambda div u div v``."""
    mu, lam = params.mu, params.lam
    A = _vector_form(mesh, fe, mu, mu, lam)
    if not reduced:
        return A
    lay = make_layout(mesh, fe)
    return _reduce(A, lay.u_free, lay.u_free)


def assemble_vector_laplacian(mesh: TriMesh, fe: str = "mini", reduced: bool = True):
    A0 = _vector_form(mesh, fe, 1.0, 0.0, 0.0)
    if not reduced:
        return A0
    lay = make_layout(mesh, fe)
    return _reduce(A0, lay.u_free, lay.u_free)


def assemble_divergence(mesh: TriMesh, layout: DofLayout | None = None, fe: str = "mini", reduced: bool = True):
    """``B[q, v] = -int div(v) q``, shape ``n_p x n_u``."""
    if layout is None:
        layout = make_layout(mesh, fe)
    fe = layout.fe
    area, _ = _geometry(mesh)
    _, grads = displacement_basis(mesh, fe)
    psi = QUAD_POINTS  # P1 pressure values at quadrature points
    # Bl[e, q, c, a] = -int psi_q d_c phi_a
    Bl = -np.einsum("e,k,kq,ekac->eqca", area, QUAD_WEIGHTS, psi, grads)
    E, _, _, nb = Bl.shape
    dofs = _scalar_dofs(mesh, fe)
    n_scalar = layout.n_scalar_u
    gdofs = np.concatenate([dofs, dofs + n_scalar], axis=1)
    Bl = Bl.reshape(E, 3, 2 * nb)
    rows = np.repeat(mesh.triangles[:, :, None], 2 * nb, axis=2)
    cols = np.repeat(gdofs[:, None, :], 3, axis=1)
    B = _scatter(rows, cols, Bl, (layout.n_p_total, layout.n_u_total))
    if not reduced:
        return B
    return _reduce(B, layout.p_free, layout.u_free)


def assemble_p1_mass_stiffness(mesh: TriMesh):
    """Full P1 mass and stiffness matrices on the mesh nodes."""
    area, g = _geometry(mesh)
    ref = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    Me = area[:, None, None] * ref
    Ke = area[:, None, None] * np.einsum("eai,ebi->eab", g, g)
    t = mesh.triangles
    rows = np.repeat(t[:, :, None], 3, axis=2)
    cols = np.repeat(t[:, None, :], 3, axis=1)
    shape = (mesh.n_nodes, mesh.n_nodes)
    return _scatter(rows, cols, Me, shape), _scatter(rows, cols, Ke, shape)


def assemble_pressure_block(mesh: TriMesh, params: PhysicalParams, reduced: bool = True):
    """Return ``(D, M_p)`` with ``D = s M_p + (theta + stab) K_p``."""
    M, K = assemble_p1_mass_stiffness(mesh)
    coef = params.theta + params.stabilization_coefficient(mesh.h)
    D = (params.s * M + coef * K).tocsr()
    D.eliminate_zeros()
    if not reduced:
        return D, M
    free = mesh.interior_nodes
    return _reduce(D, free, free), _reduce(M, free, free)


def _eval_vector(f_body, x, y):
    if callable(f_body):
        fx, fy = f_body(x, y)
    else:
        fx, fy = f_body
    return np.broadcast_to(fx, x.shape), np.broadcast_to(fy, x.shape)


def _eval_scalar(g, x, y):
    if callable(g):
        return np.broadcast_to(g(x, y), x.shape)
    return np.full(x.shape, float(g))


def assemble_rhs(
    mesh: TriMesh,
    params: PhysicalParams,
    f_body: VectorField = (1.0, 1.0),
    g_source: ScalarField = 1.0,
    p_prev: np.ndarray | None = None,
    fe: str = "mini",
    layout: DofLayout | None = None,
):
    """Load vectors ``(f, g)`` on the free dofs.

    ``p_prev`` is the previous pressure on the free pressure dofs. The
    stabilization acts on the pressure increment, so ``eps h^2/dt/(2mu+lam)
    K_p p_prev`` is subtracted from ``g``.
    """
    if layout is None:
        layout = make_layout(mesh, fe)
    fe = layout.fe
    area, _ = _geometry(mesh)
    vals, _ = displacement_basis(mesh, fe)
    xq = _quad_xy(mesh)
    fx, fy = _eval_vector(f_body, xq[..., 0], xq[..., 1])
    gq = _eval_scalar(g_source, xq[..., 0], xq[..., 1])

    dofs = _scalar_dofs(mesh, fe)
    n_scalar = layout.n_scalar_u
    wq = area[:, None] * QUAD_WEIGHTS[None, :]
    f_full = np.zeros(2 * n_scalar)
    np.add.at(f_full, dofs, np.einsum("eq,eq,qa->ea", wq, fx, vals))
    np.add.at(f_full, dofs + n_scalar, np.einsum("eq,eq,qa->ea", wq, fy, vals))
    g_full = np.zeros(mesh.n_nodes)
    np.add.at(g_full, mesh.triangles, np.einsum("eq,eq,qa->ea", wq, gq, QUAD_POINTS))

    f = f_full[layout.u_free]
    g = g_full[layout.p_free]
    if p_prev is not None:
        stab = params.stabilization_coefficient(mesh.h)
        if stab != 0.0:
            _, K = assemble_p1_mass_stiffness(mesh)
            Kr = _reduce(K, layout.p_free, layout.p_free)
            g = g - stab * (Kr @ np.asarray(p_prev, dtype=float))
    return f, g


@dataclass(frozen=True)
class BiotSystem:
    A: sp.csr_matrix = field(repr=False)
    B: sp.csr_matrix = field(repr=False)
    D: sp.csr_matrix = field(repr=False)
    M_p: sp.csr_matrix = field(repr=False)
    A0: sp.csr_matrix = field(repr=False)
    f: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    layout: DofLayout
    params: PhysicalParams
    mesh: TriMesh = field(repr=False)

    @property
    def n_u(self) -> int:
        return self.A.shape[0]

    @property
    def n_p(self) -> int:
        return self.D.shape[0]

    @property
    def n(self) -> int:
        return self.n_u + self.n_p

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.f, self.g])

    def matrix(self) -> sp.csr_matrix:
        """The saddle-point matrix ``[[A, B^T], [B, -D]]``."""
        return sp.bmat([[self.A, self.B.T], [self.B, -self.D]], format="csr")

    def matvec(self, x: np.ndarray) -> np.ndarray:
        u, p = self.split(x)
        return np.concatenate([self.A @ u + self.B.T @ p, self.B @ u - self.D @ p])

    def split(self, x: np.ndarray):
        return x[: self.n_u], x[self.n_u :]

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.rhs - self.matvec(x)


def assemble_system(
    mesh: TriMesh,
    params: PhysicalParams,
    f_body: VectorField = (1.0, 1.0),
    g_source: ScalarField = 1.0,
    p_prev: np.ndarray | None = None,
    fe: str = "mini",
) -> BiotSystem:
    layout = make_layout(mesh, fe)
    A = assemble_elasticity(mesh, params, fe)
    A0 = assemble_vector_laplacian(mesh, fe)
    B = assemble_divergence(mesh, layout)
    D, M_p = assemble_pressure_block(mesh, params)
    f, g = assemble_rhs(mesh, params, f_body, g_source, p_prev, layout=layout)
    return BiotSystem(A=A, B=B, D=D, M_p=M_p, A0=A0, f=f, g=g, layout=layout, params=params, mesh=mesh)
