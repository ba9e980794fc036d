"""Structured right-triangle meshes of the unit square."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TriMesh:
    """Uniform triangulation of [0, 1]^2 with ``nx`` cells per axis.

    Node ``k = j * (nx + 1) + i`` sits at ``(i * h, j * h)``. Every cell is cut
    along its lower-left to upper-right diagonal, and triangles are stored
    counterclockwise.
    """

    nx: int
    nodes: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary_nodes: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return 1.0 / self.nx

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges (sorted node pairs) and how many triangles share each."""
        t = self.triangles
        all_edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        all_edges.sort(axis=1)
        return np.unique(all_edges, axis=0, return_counts=True)

    def dump(self, path) -> None:
        """Write the node and triangle tables as plain text."""
        with open(path, "w") as fh:
            fh.write(f"# nodes {self.n_nodes}\n")
            for x, y in self.nodes:
                fh.write(f"{x:.17g} {y:.17g}\n")
            fh.write(f"# triangles {self.n_triangles}\n")
            for a, b, c in self.triangles:
                fh.write(f"{a} {b} {c}\n")


def build_structured_mesh(nx: int) -> TriMesh:
    if int(nx) != nx or nx < 1:
        raise ValueError(f"nx must be a positive integer, got {nx!r}")
    nx = int(nx)
    n1 = nx + 1
    xs = np.arange(n1) / nx
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(nx), np.arange(nx), indexing="ij")
    ll = (j * n1 + i).ravel()
    lr = ll + 1
    ul = ll + n1
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.empty((2 * nx * nx, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    k = np.arange(n1 * n1)
    row, col = divmod(k, n1)
    on_bnd = (row == 0) | (row == nx) | (col == 0) | (col == nx)
    boundary = np.flatnonzero(on_bnd)

    for a in (nodes, triangles, boundary):
        a.setflags(write=False)
    return TriMesh(nx=nx, nodes=nodes, triangles=triangles, boundary_nodes=boundary)
