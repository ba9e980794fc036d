import numpy as np
import pytest
import scipy.sparse as sp

from biotsolve.assembly import PhysicalParams
from biotsolve.preconditioners import (
    BlockPreconditioner,
    InnerSolverSpec,
    SchurApprox,
    build_block_preconditioner,
    build_schur_approx,
    schur_matrix,
)
from biotsolve.sparse import cholesky_exact

from conftest import cached_system


class _Identity:
    def solve(self, r):
        return np.array(r, copy=True)


def test_schur_reduces_to_mass():
    s = cached_system(4)
    params = PhysicalParams(E=1.0, nu=0.0)  # mu = 0.5, lambda = 0
    assert params.longitudinal_modulus == pytest.approx(1.0)
    P = schur_matrix(s.M_p, 0 * s.D, params)
    assert abs(P - s.M_p).max() < 1e-15


def test_schur_coefficient():
    p = PhysicalParams(E=1000.0, nu=0.3)
    assert 1 / p.longitudinal_modulus == pytest.approx(1 / 1346.1538461538462, rel=1e-14)
    s = cached_system(4)
    P = schur_matrix(s.M_p, s.D, p)
    assert abs(P - s.D - s.M_p / 1346.1538461538462).max() < 1e-15


def test_schur_d_only():
    s = cached_system(4)
    SA = build_schur_approx(s.M_p, s.D, s.params, variant="D_only")
    assert (SA.matrix != s.D).nnz == 0
    with pytest.raises(ValueError):
        schur_matrix(s.M_p, s.D, s.params, "bogus")


def test_inner_spec_validation():
    with pytest.raises(ValueError):
        InnerSolverSpec("multigrid")
    assert str(InnerSolverSpec("incomplete", 1e-3, 10.0)) == "ichol(droptol=0.001,shift=10)"


@pytest.mark.parametrize("kind", ["diag", "lower", "upper"])
def test_zero_in_zero_out(kind):
    P = build_block_preconditioner(cached_system(4), kind)
    z = P.apply(np.zeros(cached_system(4).n))
    assert not z.any()


def test_diag_with_identity_blocks(rng):
    s = cached_system(4)
    I_p = sp.identity(s.n_p, format="csr")
    schur = SchurApprox(matrix=I_p, solver=_Identity())
    P = BlockPreconditioner("diag", s.A, s.B, _Identity(), schur)
    r = rng.standard_normal(s.n)
    z = P.apply(r)
    np.testing.assert_array_equal(z[: s.n_u], r[: s.n_u])
    np.testing.assert_array_equal(z[s.n_u :], -r[s.n_u :])


@pytest.mark.parametrize("kind", ["diag", "lower", "upper"])
def test_multiply_back(kind, rng):
    s = cached_system(8)
    P = build_block_preconditioner(s, kind)
    Pm = P.matrix()
    for _ in range(20):
        r = rng.standard_normal(s.n)
        back = Pm @ P.apply(r)
        assert np.linalg.norm(back - r) <= 1e-10 * np.linalg.norm(r)


def test_apply_is_linear(rng):
    s = cached_system(6)
    P = build_block_preconditioner(
        s, "lower", InnerSolverSpec("incomplete", 1e-3, 10.0), InnerSolverSpec("incomplete", 1e-3, 0.0)
    )
    x, y = rng.standard_normal((2, s.n))
    np.testing.assert_allclose(P(2 * x - 3 * y), 2 * P(x) - 3 * P(y), atol=1e-10 * np.linalg.norm(P(x)))


def test_lower_preconditioned_leading_block_is_identity(rng):
    """P2^{-1} M maps (v, 0) to (v, 0) when P_A = A."""
    s = cached_system(8)
    P = build_block_preconditioner(s, "lower")
    for _ in range(20):
        v = np.concatenate([rng.standard_normal(s.n_u), np.zeros(s.n_p)])
        z = P.apply(s.matvec(v))
        assert np.linalg.norm(z - v) <= 1e-10 * np.linalg.norm(v)


def test_lower_preconditioned_pressure_block_is_schur_ratio(rng):
    """(P2^{-1} M)_{pp} = P_S^{-1} S, the source of the non-unit eigenvalues."""
    s = cached_system(4)
    P = build_block_preconditioner(s, "lower")
    q = rng.standard_normal(s.n_p)
    z = P.apply(s.matvec(np.concatenate([np.zeros(s.n_u), q])))
    S_q = s.B @ cholesky_exact(s.A).solve(s.B.T @ q) + s.D @ q
    np.testing.assert_allclose(z[s.n_u :], P.schur.solve(S_q), rtol=1e-9, atol=1e-12)


def test_precomputed_factors_reused():
    s = cached_system(4)
    P1 = build_block_preconditioner(s, "upper")
    P2 = build_block_preconditioner(s, "lower", solve_A=P1.solve_A, schur_approx=P1.schur)
    assert P2.solve_A is P1.solve_A and P2.schur is P1.schur
    with pytest.raises(ValueError):
        BlockPreconditioner("sideways", s.A, s.B, P1.solve_A, P1.schur)


def test_linear_operator_wrapper(rng):
    s = cached_system(4)
    P = build_block_preconditioner(s)
    op = P.as_linear_operator()
    r = rng.standard_normal(s.n)
    np.testing.assert_array_equal(op @ r, P.apply(r))
