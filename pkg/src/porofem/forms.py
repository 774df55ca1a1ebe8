"""Assembly of bilinear forms into CSR matrices, plus Dirichlet elimination.

All volume integrals use the single degree-4 rule from ``elements``. Local
matrices are computed for all cells at once; the global matrix is built
from triplets through one canonical sort, so the result is bit-identical
under any permutation of the cell list.
"""

import numpy as np
import scipy.sparse as sp

from . import elements as el


class CoefficientField:
    """Constant or piecewise-constant (per cell) scalar coefficient.

    Parameters
    ----------
    value : float, optional
        Constant value.
    cell_values : array, optional
        One value per cell; exactly one of the two must be given.
    admissible : bool
        When set, values must be strictly positive (reduced-parameter
        range); construction fails otherwise.
    """

    def __init__(self, value=None, cell_values=None, admissible=False):
        if (value is None) == (cell_values is None):
            raise ValueError("give exactly one of value, cell_values")
        self.value = None if value is None else float(value)
        self.cell_values = None if cell_values is None else np.asarray(cell_values, dtype=float)
        self.admissible = bool(admissible)
        if self.admissible and np.any(self.values_flat() <= 0.0):
            raise ValueError("coefficient must be strictly positive")

    def values_flat(self):
        return np.atleast_1d(self.value if self.cell_values is None else self.cell_values)

    def on_cells(self, mesh):
        """Per-cell values as an array of length num_cell."""
        if self.cell_values is None:
            return np.full(mesh.num_cell, self.value)
        if self.cell_values.shape != (mesh.num_cell,):
            raise ValueError("cell_values length does not match the mesh")
        return self.cell_values


def as_field(weight):
    if isinstance(weight, CoefficientField):
        return weight
    return CoefficientField(value=float(weight))


def _geometry(mesh):
    """detJ (num_cell,) and inverse Jacobians (num_cell, 2, 2)."""
    p = mesh.vertices[mesh.cells]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    inv = np.empty((mesh.num_cell, 2, 2))
    inv[:, 0, 0] = d2[:, 1]
    inv[:, 0, 1] = -d2[:, 0]
    inv[:, 1, 0] = -d1[:, 1]
    inv[:, 1, 1] = d1[:, 0]
    inv /= det[:, None, None]
    return det, inv


def _phys_grads(space, rule):
    """Physical gradients, shape (num_cell, nq, n_local_scalar, 2)."""
    _, gq = el.tabulate(space.family, rule)
    _, jinv = _geometry(space.mesh)
    return np.einsum("qae,ced->cqad", gq, jinv)


def csr_from_triplets(rows, cols, vals, shape):
    """Canonical CSR: triplets sorted by (row, col, value), duplicates summed.

    The value participates in the sort key so duplicate entries are summed
    in a fixed order regardless of how the triplets were generated.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if vals.size == 0:
        return sp.csr_matrix(shape)
    order = np.lexsort((vals, cols, rows))
    r, c, v = rows[order], cols[order], vals[order]
    first = np.empty(r.size, dtype=bool)
    first[0] = True
    first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    starts = np.flatnonzero(first)
    data = np.add.reduceat(v, starts)
    indices = c[starts]
    counts = np.bincount(r[starts], minlength=shape[0])
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return sp.csr_matrix((data, indices, indptr), shape=shape)


def _scatter(space_row, space_col, local):
    """Assemble per-cell local matrices (nc, nr, ncol) into global CSR."""
    rows = np.repeat(space_row.dof_map, space_col.dof_map.shape[1], axis=1)
    cols = np.tile(space_col.dof_map, (1, space_row.dof_map.shape[1]))
    return csr_from_triplets(rows, cols, local, (space_row.n_dofs, space_col.n_dofs))


def assemble_mass(Q, weight=1.0):
    """Weighted mass matrix ∫ w u v (componentwise for vector spaces).

    Parameters
    ----------
    Q : FeSpace
    weight : float or CoefficientField

    Returns
    -------
    csr_matrix, symmetric positive definite for positive weights.
    """
    field = as_field(weight)
    rule = el.default_rule()
    vq, _ = el.tabulate(Q.family, rule)
    det, _ = _geometry(Q.mesh)
    base = np.einsum("q,qa,qb->ab", rule.weights, vq, vq)
    scale = field.on_cells(Q.mesh) * det
    local = scale[:, None, None] * base[None]
    if Q.value_dim == 2:
        nl = Q.n_local_scalar
        vec = np.zeros((Q.mesh.num_cell, 2 * nl, 2 * nl))
        vec[:, 0::2, 0::2] = local
        vec[:, 1::2, 1::2] = local
        local = vec
    return _scatter(Q, Q, local)


def assemble_grad_grad(V, weight=1.0):
    """Weighted stiffness matrix ∫ w ∇u·∇v (full gradient for vectors)."""
    field = as_field(weight)
    if field.admissible and np.any(field.values_flat() <= 0.0):
        raise ValueError("weight must be strictly positive")
    rule = el.default_rule()
    pg = _phys_grads(V, rule)
    det, _ = _geometry(V.mesh)
    local = np.einsum("q,cqad,cqbd->cab", rule.weights, pg, pg)
    local *= (field.on_cells(V.mesh) * det)[:, None, None]
    if V.value_dim == 2:
        nl = V.n_local_scalar
        vec = np.zeros((V.mesh.num_cell, 2 * nl, 2 * nl))
        vec[:, 0::2, 0::2] = local
        vec[:, 1::2, 1::2] = local
        local = vec
    return _scatter(V, V, local)


def assemble_eps_eps(V):
    """Symmetric-gradient stiffness ∫ ε(u):ε(v) on a vector space."""
    if V.value_dim != 2:
        raise ValueError("eps_eps needs a vector space")
    rule = el.default_rule()
    pg = _phys_grads(V, rule)
    det, _ = _geometry(V.mesh)
    w = rule.weights
    # ε(e_i f):ε(e_j g) = (δ_ij ∇f·∇g + ∂_j f ∂_i g) / 2
    dot = np.einsum("q,cqad,cqbd->cab", w, pg, pg)
    cross = np.einsum("q,cqaj,cqbi->cabij", w, pg, pg)
    nl = V.n_local_scalar
    local = np.zeros((V.mesh.num_cell, 2 * nl, 2 * nl))
    for i in range(2):
        for j in range(2):
            blk = 0.5 * cross[:, :, :, i, j]
            if i == j:
                blk = blk + 0.5 * dot
            local[:, i::2, j::2] = blk
    local *= det[:, None, None]
    return _scatter(V, V, local)


def assemble_div(V, Q):
    """Mixed divergence matrix B[q, v] = ∫ div(φ_v) ψ_q."""
    if V.value_dim != 2 or Q.value_dim != 1:
        raise ValueError("div couples a vector space with a scalar space")
    if V.mesh is not Q.mesh:
        raise ValueError("spaces must share a mesh")
    rule = el.default_rule()
    pg = _phys_grads(V, rule)
    vq, _ = el.tabulate(Q.family, rule)
    det, _ = _geometry(V.mesh)
    # div(e_i φ_a) = ∂_i φ_a
    loc = np.einsum("q,qb,cqai->cbai", rule.weights, vq, pg)
    nlv = V.n_local_scalar
    local = np.empty((V.mesh.num_cell, Q.n_local_scalar, 2 * nlv))
    local[:, :, 0::2] = loc[:, :, :, 0]
    local[:, :, 1::2] = loc[:, :, :, 1]
    local *= det[:, None, None]
    return _scatter(Q, V, local)


def assemble_load(space, func):
    """Load vector ∫ f·φ for a callable f(x, y).

    ``func`` receives arrays of physical coordinates and returns one array
    of the same shape per value component.
    """
    rule = el.default_rule()
    vq, _ = el.tabulate(space.family, rule)
    det, _ = _geometry(space.mesh)
    p = space.mesh.vertices[space.mesh.cells]
    x = np.einsum("qk,ck->cq", rule.points, p[:, :, 0])
    y = np.einsum("qk,ck->cq", rule.points, p[:, :, 1])
    fvals = func(x, y)
    if space.value_dim == 1:
        fvals = (fvals,)
    out = np.zeros(space.n_dofs)
    for comp, fv in enumerate(fvals):
        loc = np.einsum("q,cq,qa,c->ca", rule.weights, np.asarray(fv, dtype=float), vq, det)
        np.add.at(out, space.dof_map[:, comp::space.value_dim], loc)
    return out


def apply_dirichlet(mat, rhs, dofs):
    """Symmetric elimination of homogeneous Dirichlet dofs.

    Rows and columns of constrained dofs are zeroed, the diagonal is set
    to 1 and the rhs entries to 0, so the constrained subspace contributes
    eigenvalues exactly 1 to any symmetrically preconditioned operator.

    Returns the modified (matrix, rhs) pair; inputs are not mutated.
    """
    n = mat.shape[0]
    if mat.shape[1] != n:
        raise ValueError("apply_dirichlet needs a square matrix")
    mask = np.ones(n)
    mask[np.asarray(dofs, dtype=np.int64)] = 0.0
    dm = sp.diags(mask)
    out = (dm @ mat @ dm).tocsr() + sp.diags(1.0 - mask)
    out = sp.csr_matrix(out)
    out.sum_duplicates()
    return out, np.asarray(rhs, dtype=float) * mask
