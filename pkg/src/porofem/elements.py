"""Reference elements, quadrature, and global degree-of-freedom maps.

Scalar families on the reference triangle with vertices (0,0), (1,0), (0,1):

* P1: the three barycentric hats.
* P2: vertex functions l_i (2 l_i - 1) followed by edge functions
  4 l_j l_k, where edge k is opposite vertex k.
* MINI: P1 plus the cubic cell bubble 27 l_0 l_1 l_2 (value 1 at the
  barycenter), vector valued only.

Global scalar dofs are numbered vertices first (mesh order), then edges
(mesh order), then cell bubbles (cell order). Vector dofs interleave the
two components of each scalar dof.
"""

import numpy as np

from . import mesh as _mesh

FAMILIES = ("P1", "P2", "MINI")

# barycentric gradients on the reference triangle
_GRAD_L = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


class QuadratureRule:
    """Quadrature on the reference triangle.

    Attributes:
        points: (nq, 3) barycentric coordinates.
        weights: (nq,) positive weights summing to the reference area 1/2.
        degree: largest polynomial degree integrated exactly.
    """

    def __init__(self, points, weights, degree):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.degree = int(degree)


def default_rule():
    """Six-point rule of degree 4, used for every volume integral."""
    a1, b1, w1 = 0.816847572980459, 0.091576213509771, 0.109951743655322
    a2, b2, w2 = 0.108103018168070, 0.445948490915965, 0.223381589678011
    xy = np.array([
        [b1, b1], [a1, b1], [b1, a1],
        [b2, b2], [a2, b2], [b2, a2],
    ])
    lam = np.column_stack([1.0 - xy.sum(axis=1), xy])
    w = np.array([w1, w1, w1, w2, w2, w2])
    w *= 0.5 / w.sum()
    return QuadratureRule(lam, w, 4)


def eval_basis(family, point):
    """Values and reference gradients of all local basis functions.

    Parameters
    ----------
    family : str
        One of P1, P2, MINI (scalar part; vector spaces reuse it per
        component).
    point : array, shape (3,)
        Barycentric coordinates of one point in the reference triangle.

    Returns
    -------
    values : array, shape (n_local,)
    grads : array, shape (n_local, 2)
        Gradients with respect to the reference coordinates.
    """
    lam = np.asarray(point, dtype=float)
    if family == "P1":
        return lam.copy(), _GRAD_L.copy()
    if family == "P2":
        vals = np.empty(6)
        grads = np.empty((6, 2))
        vals[:3] = lam * (2.0 * lam - 1.0)
        grads[:3] = (4.0 * lam - 1.0)[:, None] * _GRAD_L
        for k in range(3):
            j, l = (k + 1) % 3, (k + 2) % 3
            vals[3 + k] = 4.0 * lam[j] * lam[l]
            grads[3 + k] = 4.0 * (lam[j] * _GRAD_L[l] + lam[l] * _GRAD_L[j])
        return vals, grads
    if family == "MINI":
        vals = np.empty(4)
        grads = np.empty((4, 2))
        vals[:3] = lam
        grads[:3] = _GRAD_L
        vals[3] = 27.0 * lam[0] * lam[1] * lam[2]
        grads[3] = 27.0 * (
            lam[1] * lam[2] * _GRAD_L[0]
            + lam[0] * lam[2] * _GRAD_L[1]
            + lam[0] * lam[1] * _GRAD_L[2]
        )
        return vals, grads
    raise ValueError("unknown family %r" % (family,))


def tabulate(family, rule):
    """Stack eval_basis over all points of a rule.

    Returns (values (nq, n_local), grads (nq, n_local, 2)).
    """
    out = [eval_basis(family, p) for p in rule.points]
    return np.stack([v for v, _ in out]), np.stack([g for _, g in out])


class FeSpace:
    """Global finite element space on a triangulation.

    Attributes:
        mesh, family, value_dim, n_dofs.
        scalar_dofs: (num_cell, n_local) global scalar dof per cell.
        dof_map: per-cell global dofs; equals scalar_dofs for scalars,
            interleaved components (2g, 2g+1 per scalar dof g) for vectors.
        dof_coords: (n_dofs, 2) representative coordinates (edge dofs at
            midpoints, bubbles at barycenters; vector dofs repeat them).
    """

    def __init__(self, mesh, family, value_dim, n_scalar, scalar_dofs, scalar_coords):
        self.mesh = mesh
        self.family = family
        self.value_dim = int(value_dim)
        self.n_scalar = int(n_scalar)
        self.scalar_dofs = scalar_dofs
        self.n_dofs = self.value_dim * self.n_scalar
        if value_dim == 1:
            self.dof_map = scalar_dofs
            self.dof_coords = scalar_coords
        else:
            nc, nl = scalar_dofs.shape
            vec = np.empty((nc, 2 * nl), dtype=np.int64)
            vec[:, 0::2] = 2 * scalar_dofs
            vec[:, 1::2] = 2 * scalar_dofs + 1
            self.dof_map = vec
            self.dof_coords = np.repeat(scalar_coords, 2, axis=0)

    @property
    def n_local_scalar(self):
        return self.scalar_dofs.shape[1]


def make_space(mesh, family, value_dim):
    """Build a global space.

    Supported combinations: P1 and P2 with value_dim 1 or 2, MINI with
    value_dim 2.

    Parameters
    ----------
    mesh : TriMesh
    family : str
    value_dim : int

    Returns
    -------
    FeSpace
    """
    if family not in FAMILIES:
        raise ValueError("unknown family %r" % (family,))
    if value_dim not in (1, 2):
        raise ValueError("value_dim must be 1 or 2")
    if family == "MINI" and value_dim != 2:
        raise ValueError("MINI is supported as a vector space only")

    nv = mesh.num_vertex
    if family == "P1":
        scalar_dofs = mesh.cells
        n_scalar = nv
        coords = mesh.vertices
    elif family == "P2":
        scalar_dofs = np.hstack([mesh.cells, nv + mesh.cell_edges])
        n_scalar = nv + mesh.num_edge
        mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        coords = np.vstack([mesh.vertices, mid])
    else:
        bubble = nv + np.arange(mesh.num_cell, dtype=np.int64)
        scalar_dofs = np.hstack([mesh.cells, bubble[:, None]])
        n_scalar = nv + mesh.num_cell
        bary = mesh.vertices[mesh.cells].mean(axis=1)
        coords = np.vstack([mesh.vertices, bary])
    return FeSpace(mesh, family, value_dim, n_scalar, scalar_dofs.astype(np.int64), coords)


def dirichlet_dofs(space, which):
    """Global dofs constrained by the homogeneous boundary condition.

    Parameters
    ----------
    space : FeSpace
        Vector space for "displacement", scalar space for "pressure".
    which : str
        "displacement" (tag DIRICHLET) or "pressure" (tag PRESSURE).

    Returns
    -------
    array of global dof indices, sorted ascending. A vertex dof is
    constrained if any incident boundary edge carries the tag, so corners
    close toward the constrained side. Bubble dofs are never constrained.
    """
    if which == "displacement":
        if space.value_dim != 2:
            raise ValueError("displacement conditions need a vector space")
        part, tag = "displacement", _mesh.DIRICHLET
    elif which == "pressure":
        if space.value_dim != 1:
            raise ValueError("pressure conditions need a scalar space")
        part, tag = "pressure", _mesh.PRESSURE
    else:
        raise ValueError("which must be 'displacement' or 'pressure'")

    mesh = space.mesh
    scalar = np.flatnonzero(mesh.boundary_vertex_flags(part, tag))
    if space.family == "P2":
        edges = np.flatnonzero(mesh.boundary_edge_flags(part, tag))
        scalar = np.concatenate([scalar, mesh.num_vertex + edges])
    scalar = np.sort(scalar)
    if space.value_dim == 1:
        return scalar
    return np.sort(np.concatenate([2 * scalar, 2 * scalar + 1]))
