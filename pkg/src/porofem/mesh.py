"""Structured triangulations of the unit square with tagged boundary edges.

The mesh is the bisection of an N x N grid of squares, each split along its
lower-left to upper-right diagonal. Boundary edges carry two independent
tags, one for the displacement condition (Dirichlet/traction) and one for
the pressure condition (pressure/flux).
"""

from typing import NamedTuple

import numpy as np

# displacement boundary parts
DIRICHLET = "dirichlet"
TRACTION = "traction"
# pressure boundary parts
PRESSURE = "pressure"
FLUX = "flux"

BC_PRESETS = ("all_dirichlet", "left_open")


class BoundaryTag(NamedTuple):
    """Tag pair of one boundary edge.

    Attributes:
        displacement: DIRICHLET or TRACTION.
        pressure: PRESSURE or FLUX.
    """

    displacement: str
    pressure: str


class TriMesh:
    """Triangulation of the unit square.

    Parameters
    ----------
    n_div : int
        Number of square subdivisions per side (the N of the experiments).
    vertices : array, shape (num_vertex, 2)
        Vertex coordinates, lexicographic by (y, x).
    cells : array, shape (num_cell, 3)
        Vertex indices per triangle, counter-clockwise.
    boundary_edges : list of ((int, int), BoundaryTag)
        Sorted vertex pair and tag pair of every boundary edge.

    Derived attributes: ``edges`` (all unique sorted vertex pairs, in
    lexicographic order), ``cell_edges`` (per-cell global edge index, local
    edge k opposite local vertex k), ``cell_areas``.
    """

    def __init__(self, n_div, vertices, cells, boundary_edges):
        self.n_div = int(n_div)
        self.vertices = np.asarray(vertices, dtype=float)
        self.cells = np.asarray(cells, dtype=np.int64)
        self.boundary_edges = list(boundary_edges)

        p0 = self.vertices[self.cells[:, 0]]
        p1 = self.vertices[self.cells[:, 1]]
        p2 = self.vertices[self.cells[:, 2]]
        d1 = p1 - p0
        d2 = p2 - p0
        self.cell_areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(self.cell_areas <= 0.0):
            raise ValueError("cells must be counter-clockwise with positive area")

        # local edge k is opposite local vertex k
        pairs = np.concatenate([
            self.cells[:, [1, 2]],
            self.cells[:, [0, 2]],
            self.cells[:, [0, 1]],
        ])
        pairs.sort(axis=1)
        self.edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        self.cell_edges = inverse.reshape(3, -1).T.copy()

    @property
    def num_vertex(self):
        return self.vertices.shape[0]

    @property
    def num_cell(self):
        return self.cells.shape[0]

    @property
    def num_edge(self):
        return self.edges.shape[0]

    def boundary_vertex_flags(self, part, tag):
        """Boolean mask of vertices touching a boundary edge with the given tag.

        A vertex counts as tagged if any incident boundary edge carries the
        tag, so corners shared by two differently tagged edges belong to the
        closed (Dirichlet-like) side.

        Parameters
        ----------
        part : str
            "displacement" or "pressure".
        tag : str
            Tag value to match (e.g. DIRICHLET).
        """
        flags = np.zeros(self.num_vertex, dtype=bool)
        for (a, b), t in self.boundary_edges:
            if getattr(t, part) == tag:
                flags[a] = True
                flags[b] = True
        return flags

    def boundary_edge_flags(self, part, tag):
        """Boolean mask over ``edges`` of boundary edges carrying the tag."""
        keys = {tuple(e): i for i, e in enumerate(self.edges.tolist())}
        flags = np.zeros(self.num_edge, dtype=bool)
        for (a, b), t in self.boundary_edges:
            if getattr(t, part) == tag:
                flags[keys[(min(a, b), max(a, b))]] = True
        return flags

    def dump_text(self):
        """Plain-text listing (one record per line) for debugging."""
        lines = []
        for i, (x, y) in enumerate(self.vertices):
            lines.append("v %d %.17g %.17g" % (i, x, y))
        for i, (a, b, c) in enumerate(self.cells):
            lines.append("c %d %d %d %d" % (i, a, b, c))
        for (a, b), t in self.boundary_edges:
            lines.append("b %d %d %s %s" % (a, b, t.displacement, t.pressure))
        return "\n".join(lines) + "\n"


def build_unit_square(N, bc_preset="all_dirichlet"):
    """Build the bisected N x N triangulation of the unit square.

    Parameters
    ----------
    N : int
        Subdivisions per side, N >= 1.
    bc_preset : str
        "all_dirichlet": displacement fixed on the whole boundary.
        "left_open": displacement fixed where x < 1, traction on the
        edge x = 1. The pressure tag is PRESSURE on the whole boundary
        in both presets.

    Returns
    -------
    TriMesh
    """
    N = int(N)
    if N < 1:
        raise ValueError("N must be a positive integer")
    if bc_preset not in BC_PRESETS:
        raise ValueError("unknown bc_preset %r, expected one of %s" % (bc_preset, BC_PRESETS))

    xs = np.linspace(0.0, 1.0, N + 1)
    X, Y = np.meshgrid(xs, xs)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    ii, jj = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    v00 = (jj * (N + 1) + ii).ravel()
    v10 = v00 + 1
    v01 = v00 + (N + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * N * N, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper

    mesh = TriMesh(N, vertices, cells, [])

    # boundary edges = edges incident to exactly one cell
    counts = np.bincount(mesh.cell_edges.ravel(), minlength=mesh.num_edge)
    boundary = np.flatnonzero(counts == 1)
    bedges = []
    for e in boundary:
        a, b = mesh.edges[e]
        on_right = vertices[a, 0] == 1.0 and vertices[b, 0] == 1.0
        if bc_preset == "left_open" and on_right:
            disp = TRACTION
        else:
            disp = DIRICHLET
        bedges.append(((int(a), int(b)), BoundaryTag(disp, PRESSURE)))
    mesh.boundary_edges = bedges
    return mesh


def locate_region(mesh, rect):
    """Cells whose barycenter lies in a closed axis-aligned rectangle.

    Parameters
    ----------
    mesh : TriMesh
    rect : (xmin, xmax, ymin, ymax)

    Returns
    -------
    array of cell indices, sorted ascending.
    """
    xmin, xmax, ymin, ymax = rect
    bary = mesh.vertices[mesh.cells].mean(axis=1)
    inside = (
        (bary[:, 0] >= xmin) & (bary[:, 0] <= xmax)
        & (bary[:, 1] >= ymin) & (bary[:, 1] <= ymax)
    )
    return np.flatnonzero(inside)
