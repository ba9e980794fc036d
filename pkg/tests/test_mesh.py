import numpy as np
import pytest

from biotsolve.mesh import build_structured_mesh


def test_smallest_mesh():
    m = build_structured_mesh(1)
    assert m.n_nodes == 4
    assert m.n_triangles == 2
    assert len(m.boundary_nodes) == 4


def test_counts_nx16():
    m = build_structured_mesh(16)
    assert m.n_nodes == 289
    assert m.n_triangles == 512
    assert m.h == 1 / 16


@pytest.mark.parametrize("nx", [1, 2, 3, 7, 16, 33, 64])
def test_invariants(nx):
    m = build_structured_mesh(nx)
    assert m.n_nodes == (nx + 1) ** 2
    assert m.n_triangles == 2 * nx * nx
    assert len(m.boundary_nodes) == 4 * nx
    areas = m.signed_areas()
    np.testing.assert_allclose(areas, 1 / (2 * nx * nx), rtol=1e-14)
    assert abs(areas.sum() - 1.0) < 1e-12
    edges, counts = m.edges()
    on_bnd = np.isin(edges, m.boundary_nodes).all(axis=1)
    # interior edges shared by two triangles, boundary edges by one
    assert np.all(counts[on_bnd & (counts == 1)] == 1)
    assert np.all(counts[~on_bnd] == 2)
    assert (counts == 1).sum() == 4 * nx


def test_unit_area_nx2():
    assert build_structured_mesh(2).signed_areas().sum() == pytest.approx(1.0, abs=1e-15)


def test_lexicographic_order_and_diagonal():
    m = build_structured_mesh(2)
    np.testing.assert_allclose(m.nodes[:4], [[0, 0], [0.5, 0], [1, 0], [0, 0.5]])
    # first cell: lower triangle (0,1,4), upper (0,4,3) share the diagonal 0-4
    np.testing.assert_array_equal(m.triangles[:2], [[0, 1, 4], [0, 4, 3]])


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_rejects_bad_nx(bad):
    with pytest.raises(ValueError):
        build_structured_mesh(bad)


def test_immutable():
    m = build_structured_mesh(3)
    with pytest.raises(ValueError):
        m.nodes[0, 0] = 1.0


def test_dump(tmp_path):
    m = build_structured_mesh(2)
    path = tmp_path / "mesh.txt"
    m.dump(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# nodes 9"
    assert lines[10] == "# triangles 8"
    assert len(lines) == 1 + 9 + 1 + 8
