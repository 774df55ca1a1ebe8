"""Saddle-point benchmark systems with block-diagonal preconditioners.

Each builder assembles one symmetric indefinite block system on a unit
square mesh, applies the boundary eliminations of its variant, and returns a
``BlockSystem`` bundling the monolithic matrix, the factorized preconditioner
blocks, and the metadata a solver run needs (free-dof mask, null-space
vectors, field offsets).
"""

import json
import os
import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .elements import dirichlet_dofs, make_space
from .forms import (
    CoefficientField,
    apply_dirichlet,
    as_field,
    assemble_div,
    assemble_eps_eps,
    assemble_grad_grad,
    assemble_load,
    assemble_mass,
)
from .krylov import block_diag_op, factorize, save_matrix_market
from .mesh import DIRICHLET, TRACTION
from .pressure_precond import (
    RankOneMass,
    build_QT_preconditioner,
    build_mean_vector,
)

ELEMENTS = ("taylor_hood", "mini")
PRECONDS = ("GeneralBC", "DirichletBC")

# Admissible reduced-parameter ranges; leaving them triggers a warning, not
# an error, so that deliberately out-of-range sweeps stay runnable.
LAMBDA_MIN = 1.0
ALPHA_RANGE = (0.0, 1.0)
KAPPA_RANGE = (0.0, 1.0)


def _check_range(name, values, low, high, low_open=False, high_open=False):
    values = np.atleast_1d(np.asarray(values, dtype=float))
    bad_low = (values <= low) if low_open else (values < low)
    bad_high = (values >= high) if high_open else (values > high)
    if np.any(bad_low | bad_high):
        warnings.warn(
            "%s = %s leaves the admissible range %s%g, %g%s"
            % (
                name,
                np.min(values) if np.any(bad_low) else np.max(values),
                "(" if low_open else "[",
                low,
                high,
                ")" if high_open else "]",
            ),
            stacklevel=3,
        )


class BiotParams:
    """Reduced parameter triple (lambda, alpha, kappa) of the three-field flow.

    Parameters
    ----------
    lam : float or CoefficientField
        Scaled Lame parameter, expected >= 1.  A per-cell field is accepted
        for assembly but rejected by the rank-one pressure preconditioner.
    alpha : float
        Scaled coupling coefficient, expected in (0, 1].
    kappa : float or CoefficientField
        Scaled permeability (time step included), expected in (0, 1].

    Out-of-range values emit a warning; construction never fails on ranges
    so stress sweeps beyond the theory can still be assembled.
    """

    def __init__(self, lam, alpha, kappa):
        self.lam = lam if isinstance(lam, CoefficientField) else float(lam)
        self.alpha = float(alpha)
        self.kappa = as_field(kappa)
        _check_range("lambda", self.lam_values(), LAMBDA_MIN, np.inf)
        _check_range("alpha", self.alpha, *ALPHA_RANGE, low_open=True)
        _check_range("kappa", self.kappa_values(), *KAPPA_RANGE, low_open=True)

    def lam_values(self):
        """Constant or per-cell lambda values as an array."""
        if isinstance(self.lam, CoefficientField):
            if self.lam.cell_values is not None:
                return self.lam.cell_values
            return np.array([self.lam.value])
        return np.array([self.lam])

    def kappa_values(self):
        """Constant or per-cell kappa values as an array."""
        if self.kappa.cell_values is not None:
            return self.kappa.cell_values
        return np.array([self.kappa.value])

    def lam_constant(self):
        """Scalar lambda, or raise if a per-cell field was given."""
        values = self.lam_values()
        if values.size > 1 and np.ptp(values) > 0.0:
            raise ValueError(
                "spatially varying lambda: the rank-one pressure "
                "preconditioner requires a single constant"
            )
        return float(values.flat[0])

    def inv_lam_field(self):
        """CoefficientField holding 1/lambda for mass-matrix weighting."""
        if isinstance(self.lam, CoefficientField) and self.lam.cell_values is not None:
            return CoefficientField(cell_values=1.0 / self.lam.cell_values)
        return CoefficientField(value=1.0 / self.lam_values().flat[0])


class PhysicalParams:
    """Physical Biot inputs before nondimensionalization.

    Parameters
    ----------
    mu_bar : float
        Reference shear modulus used for rescaling (typically the mean).
    lambda_phys : float
        Physical Lame parameter.
    alpha_phys : float
        Biot-Willis coefficient.
    s0 : float
        Constrained storage coefficient.
    kappa_phys : float
        Hydraulic conductivity (permeability over viscosity).
    dt2 : float
        Squared time-step factor multiplying the conductivity.
    mu : float, optional
        Actual shear modulus when it differs from the reference.
    """

    def __init__(self, mu_bar, lambda_phys, alpha_phys, s0, kappa_phys, dt2, mu=None):
        self.mu_bar = float(mu_bar)
        self.lambda_phys = float(lambda_phys)
        self.alpha_phys = float(alpha_phys)
        self.s0 = float(s0)
        self.kappa_phys = float(kappa_phys)
        self.dt2 = float(dt2)
        self.mu = self.mu_bar if mu is None else float(mu)
        for name in ("mu_bar", "lambda_phys", "alpha_phys", "kappa_phys", "dt2"):
            if getattr(self, name) <= 0.0:
                raise ValueError("%s must be positive" % name)
        if self.s0 < 0.0:
            raise ValueError("s0 must be nonnegative")


def rescale_parameters(phys):
    """Map physical parameters to the reduced triple and a load scale.

    Parameters
    ----------
    phys : PhysicalParams
        Physical inputs.

    Returns
    -------
    params : BiotParams
        Reduced (lambda, alpha, kappa); out-of-range values warn.
    scale : float
        Factor 1/(2 mu_bar) that multiplies the physical right-hand side.
    """
    two_mu = 2.0 * phys.mu_bar
    ratio = phys.mu / phys.mu_bar
    if not 0.1 <= ratio <= 10.0:
        warnings.warn(
            "mu/mu_bar = %g is far from 1; the unit-shear scaling is "
            "inaccurate" % ratio,
            stacklevel=2,
        )
    lam = phys.lambda_phys / two_mu
    alpha = phys.alpha_phys / two_mu
    kappa = phys.dt2 * phys.kappa_phys / two_mu
    s0_conv = phys.alpha_phys**2 / phys.lambda_phys
    if not np.isclose(phys.s0, s0_conv, rtol=1e-9, atol=0.0):
        warnings.warn(
            "s0 = %g deviates from the alpha^2/lambda storage convention "
            "(%g) hard-wired into the total-pressure (3,3) block"
            % (phys.s0, s0_conv),
            stacklevel=2,
        )
    return BiotParams(lam, alpha, kappa), 1.0 / two_mu


class BlockSystem:
    """Assembled symmetric block system with its preconditioner.

    Attributes
    ----------
    kind : str
        Case identifier ("biot", "solid_pressure", "stokes_darcy", "lame").
    mat : scipy.sparse.csr_matrix
        Monolithic symmetric matrix after boundary elimination; constrained
        rows and columns hold an identity.
    rhs : ndarray
        Right-hand side, zeros until a load is attached.
    precond : LinearOp
        Block-diagonal preconditioner action.
    blocks : list of list
        Field-by-field raw blocks before elimination (None marks a zero).
    field_offsets : list of (int, int)
        Half-open monolithic index range of each field.
    free_mask : ndarray
        1.0 on free coordinates, 0.0 on eliminated ones.
    drop_null : int
        Number of known zero eigenvalues of the preconditioned operator.
    null_vectors : list of ndarray
        Basis of the known null space (empty when drop_null is 0).
    spaces : list of FeSpace
        Field spaces in block order.
    params : dict
        Scalar parameters for reports and manifests.
    """

    def __init__(
        self,
        kind,
        blocks,
        spaces,
        precond_blocks,
        precond_inv_mats,
        dirichlet,
        params,
        drop_null=0,
        null_vectors=None,
    ):
        self.kind = kind
        self.blocks = blocks
        self.spaces = spaces
        sizes = [space.n_dofs for space in spaces]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.field_offsets = [
            (int(offsets[i]), int(offsets[i + 1])) for i in range(len(spaces))
        ]
        mat = sp.bmat(blocks, format="csr")
        n = mat.shape[0]
        mask = np.ones(n)
        mask[dirichlet] = 0.0
        keep = sp.diags(mask)
        self.mat = (keep @ mat @ keep + sp.diags(1.0 - mask)).tocsr()
        self.free_mask = mask
        self.rhs = np.zeros(n)
        self.precond_blocks = precond_blocks
        self.precond = block_diag_op(precond_blocks)
        self.precond_inv_mats = precond_inv_mats
        self.params = dict(params)
        self.drop_null = int(drop_null)
        self.null_vectors = list(null_vectors) if null_vectors else []

    @property
    def n(self):
        """Total number of coordinates."""
        return self.mat.shape[0]

    def binv_dense(self):
        """Dense matrix of the preconditioner inverse, for eigenvalue oracles.

        Returns the block-diagonal matrix whose exact inverse the
        preconditioner applies; pair it with ``dense_eig_oracle``.
        """
        dense = [
            m.toarray() if sp.issparse(m) else np.asarray(m)
            for m in self.precond_inv_mats
        ]
        return sla.block_diag(*dense)

    def dump(self, out_dir):
        """Write the system to Matrix Market files plus a JSON manifest.

        Parameters
        ----------
        out_dir : str
            Directory, created if needed.

        Returns
        -------
        str
            Path of the manifest file.
        """
        os.makedirs(out_dir, exist_ok=True)
        save_matrix_market(os.path.join(out_dir, "mat.mtx"), self.mat)
        block_files = []
        for i, row in enumerate(self.blocks):
            for j, block in enumerate(row):
                if block is None:
                    continue
                name = "block_%d_%d.mtx" % (i, j)
                save_matrix_market(os.path.join(out_dir, name), block)
                block_files.append(name)
        np.savetxt(os.path.join(out_dir, "rhs.txt"), self.rhs)
        manifest = {
            "kind": self.kind,
            "n": self.n,
            "field_offsets": self.field_offsets,
            "field_sizes": [b - a for a, b in self.field_offsets],
            "drop_null": self.drop_null,
            "params": self.params,
            "blocks": block_files,
        }
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w") as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
        return path


def _require_all_dirichlet(mesh, what):
    if any(tag.displacement != DIRICHLET for _, tag in mesh.boundary_edges):
        raise ValueError("%s requires a fully clamped displacement boundary" % what)


def _spd_factor_block(mat, dofs, name):
    """Eliminate rows/columns `dofs` of a symmetric block and factorize."""
    if len(dofs):
        mat, _ = apply_dirichlet(mat, np.zeros(mat.shape[0]), dofs)
    return factorize(mat, spd=True, name=name), mat


def build_biot_total_pressure(mesh, element, params, precond="GeneralBC"):
    """Assemble the three-field flow system (displacement, total pressure,
    fluid pressure) with its block-diagonal preconditioner.

    Parameters
    ----------
    mesh : TriMesh
        Unit-square mesh carrying boundary tags.
    element : str
        Displacement/pressure pair: "taylor_hood" (quadratic displacement)
        or "mini" (linear plus bubble).  Both pair with linear pressures.
    params : BiotParams
        Reduced parameter triple.
    precond : str
        "GeneralBC" uses an unweighted total-pressure mass solve;
        "DirichletBC" replaces it by the rank-one corrected mass inverse,
        valid only for a fully clamped boundary and constant lambda.

    Returns
    -------
    BlockSystem
    """
    if element not in ELEMENTS:
        raise ValueError(
            "unsupported element pair %r (stable choices: %s)"
            % (element, ", ".join(ELEMENTS))
        )
    if precond not in PRECONDS:
        raise ValueError("unknown preconditioner %r" % precond)
    family = "P2" if element == "taylor_hood" else "MINI"
    V = make_space(mesh, family, value_dim=2)
    QT = make_space(mesh, "P1", value_dim=1)
    QF = make_space(mesh, "P1", value_dim=1)

    inv_lam = params.inv_lam_field()
    alpha = params.alpha
    A_eps = assemble_eps_eps(V)
    B_T = assemble_div(V, QT)
    B_F = assemble_div(V, QF)
    M_inv_lam = assemble_mass(QT, weight=inv_lam)
    M_T = assemble_mass(QT)
    M_F = assemble_mass(QF)
    K_kappa = assemble_grad_grad(QF, weight=params.kappa)

    blocks = [
        [A_eps, -B_T.T, None],
        [-B_T, -M_inv_lam, alpha * M_inv_lam],
        [None, alpha * M_inv_lam, -2.0 * alpha**2 * M_inv_lam - K_kappa],
    ]

    u_fixed = dirichlet_dofs(V, "displacement")
    pf_fixed = dirichlet_dofs(QF, "pressure")
    off_pf = V.n_dofs + QT.n_dofs
    dirichlet = np.concatenate([u_fixed, off_pf + pf_fixed]).astype(int)

    op_u, A_eps_elim = _spd_factor_block(A_eps, u_fixed, "displacement block")
    if isinstance(params.lam, CoefficientField) and params.lam.cell_values is not None:
        weight = CoefficientField(cell_values=alpha**2 / params.lam.cell_values)
        QF_mat = assemble_mass(QF, weight=weight) + K_kappa
    else:
        QF_mat = (alpha**2 / params.lam_constant()) * M_F + K_kappa
    op_pf, QF_elim = _spd_factor_block(QF_mat, pf_fixed, "fluid-pressure block")

    if precond == "GeneralBC":
        op_pt = factorize(M_T, spd=True, name="total-pressure mass")
        pt_inv = M_T
    else:
        _require_all_dirichlet(mesh, "the rank-one pressure preconditioner")
        lam = params.lam_constant()
        mean = build_mean_vector(QT, M_T)
        rank_one = RankOneMass(M_T, mean, lam)
        op_pt = build_QT_preconditioner(rank_one, inner="ExactMass")
        pt_inv = M_T.toarray() + (1.0 / lam - 1.0) * np.outer(mean.m, mean.m)

    system = BlockSystem(
        kind="biot",
        blocks=blocks,
        spaces=[V, QT, QF],
        precond_blocks=[op_u, op_pt, op_pf],
        precond_inv_mats=[A_eps_elim, pt_inv, QF_elim],
        dirichlet=dirichlet,
        params={
            "case": "biot",
            "element": element,
            "precond": precond,
            "N": mesh.n_div,
            "lambda": float(np.max(params.lam_values())),
            "alpha": alpha,
            "kappa": float(np.min(params.kappa_values())),
        },
    )
    return system


def build_biot_solid_pressure(mesh, lam, kappa):
    """Assemble the solid-pressure variant (displacement, solid pressure,
    fluid pressure) whose preconditioner degrades as lambda grows.

    Parameters
    ----------
    mesh : TriMesh
        Mesh with at least one traction edge (open boundary segment).
    lam : float
        Scaled Lame parameter, >= 1.
    kappa : float or CoefficientField
        Scaled permeability.

    Returns
    -------
    BlockSystem
    """
    if not any(tag.displacement == TRACTION for _, tag in mesh.boundary_edges):
        raise ValueError(
            "the solid-pressure variant needs an open boundary segment "
            "(traction edges)"
        )
    lam = float(lam)
    if lam < 1.0:
        warnings.warn("lambda = %g below 1" % lam, stacklevel=2)
    kappa = as_field(kappa)
    V = make_space(mesh, "P2", value_dim=2)
    QS = make_space(mesh, "P1", value_dim=1)
    QF = make_space(mesh, "P1", value_dim=1)

    A_eps = assemble_eps_eps(V)
    A_grad = assemble_grad_grad(V)
    B_S = assemble_div(V, QS)
    B_F = assemble_div(V, QF)
    M_S = assemble_mass(QS)
    M_F = assemble_mass(QF)
    K_kappa = assemble_grad_grad(QF, weight=kappa)

    blocks = [
        [A_eps, -B_S.T, -B_F.T],
        [-B_S, -(1.0 / lam) * M_S, None],
        [-B_F, None, -(1.0 / lam) * M_F - K_kappa],
    ]

    u_fixed = dirichlet_dofs(V, "displacement")
    pf_fixed = dirichlet_dofs(QF, "pressure")
    off_pf = V.n_dofs + QS.n_dofs
    dirichlet = np.concatenate([u_fixed, off_pf + pf_fixed]).astype(int)

    op_u, A_grad_elim = _spd_factor_block(A_grad, u_fixed, "displacement block")
    op_ps = factorize(M_S, spd=True, name="solid-pressure mass")
    op_pf, QF_elim = _spd_factor_block(M_F + K_kappa, pf_fixed, "fluid-pressure block")

    return BlockSystem(
        kind="solid_pressure",
        blocks=blocks,
        spaces=[V, QS, QF],
        precond_blocks=[op_u, op_ps, op_pf],
        precond_inv_mats=[A_grad_elim, M_S, QF_elim],
        dirichlet=dirichlet,
        params={
            "case": "ex3",
            "element": "taylor_hood",
            "N": mesh.n_div,
            "lambda": lam,
            "kappa": float(np.min(kappa.values_flat())),
        },
    )


def build_ex1(mesh, kappa):
    """Assemble the Stokes-to-Darcy interpolation warm-up: clamped vector
    Laplacian coupled to an unconstrained linear pressure.

    The system is singular for every kappa >= 0 with the constant-pressure
    null vector; the returned system records it and drop_null = 1.

    Parameters
    ----------
    mesh : TriMesh
        Fully clamped mesh.
    kappa : float
        Nonnegative constant; kappa = 0 gives the Stokes limit.

    Returns
    -------
    BlockSystem
    """
    _require_all_dirichlet(mesh, "the perturbed Stokes warm-up")
    kappa = float(kappa)
    if kappa < 0.0:
        raise ValueError("kappa must be nonnegative")
    V = make_space(mesh, "P2", value_dim=2)
    Q = make_space(mesh, "P1", value_dim=1)

    A_grad = assemble_grad_grad(V)
    B = assemble_div(V, Q)
    M = assemble_mass(Q)
    K = assemble_grad_grad(Q)

    blocks = [
        [A_grad, -B.T],
        [-B, -kappa * K],
    ]
    u_fixed = dirichlet_dofs(V, "displacement")

    op_u, A_elim = _spd_factor_block(A_grad, u_fixed, "displacement block")
    Q_mat = M + kappa * K
    op_p = factorize(Q_mat, spd=True, name="pressure block")

    null = np.zeros(V.n_dofs + Q.n_dofs)
    null[V.n_dofs :] = 1.0
    null /= np.linalg.norm(null)

    return BlockSystem(
        kind="stokes_darcy",
        blocks=blocks,
        spaces=[V, Q],
        precond_blocks=[op_u, op_p],
        precond_inv_mats=[A_elim, Q_mat],
        dirichlet=u_fixed,
        params={"case": "ex1", "element": "taylor_hood", "N": mesh.n_div, "kappa": kappa},
        drop_null=1,
        null_vectors=[null],
    )


def build_ex2(mesh, lam, precond="B1"):
    """Assemble the nearly incompressible elasticity warm-up in mixed form.

    Parameters
    ----------
    mesh : TriMesh
        Fully clamped mesh.
    lam : float
        Scaled Lame parameter, >= 1.
    precond : str
        "B1" pairs the exact elasticity solve with a plain mass inverse
        (iteration counts grow with lambda); "B2" uses the rank-one
        corrected mass inverse (counts stay flat).

    Returns
    -------
    BlockSystem
    """
    _require_all_dirichlet(mesh, "the mixed elasticity warm-up")
    lam = float(lam)
    if lam < 1.0:
        raise ValueError("lambda must be >= 1")
    if precond not in ("B1", "B2"):
        raise ValueError("unknown preconditioner %r (choices: B1, B2)" % precond)
    V = make_space(mesh, "P2", value_dim=2)
    Q = make_space(mesh, "P1", value_dim=1)

    A_eps = assemble_eps_eps(V)
    B = assemble_div(V, Q)
    M = assemble_mass(Q)

    blocks = [
        [A_eps, B.T],
        [B, -(1.0 / lam) * M],
    ]
    u_fixed = dirichlet_dofs(V, "displacement")
    op_u, A_elim = _spd_factor_block(A_eps, u_fixed, "displacement block")

    if precond == "B1":
        op_p = factorize(M, spd=True, name="pressure mass")
        p_inv = M
    else:
        mean = build_mean_vector(Q, M)
        rank_one = RankOneMass(M, mean, lam)
        op_p = build_QT_preconditioner(rank_one, inner="ExactMass")
        p_inv = M.toarray() + (1.0 / lam - 1.0) * np.outer(mean.m, mean.m)

    return BlockSystem(
        kind="lame",
        blocks=blocks,
        spaces=[V, Q],
        precond_blocks=[op_u, op_p],
        precond_inv_mats=[A_elim, p_inv],
        dirichlet=u_fixed,
        params={
            "case": "ex2a" if precond == "B1" else "ex2b",
            "element": "taylor_hood",
            "N": mesh.n_div,
            "lambda": lam,
        },
    )


def discrete_inf_sup(V, Q, zero_mean=False):
    """Smallest discrete inf-sup constant of the divergence coupling.

    Computes beta_0 = sqrt(lambda_min) of the pressure Schur complement
    B A1^{-1} B^T measured against the pressure mass matrix, where A1 is
    the full H1 inner product (stiffness plus mass) on the free
    displacement dofs.

    Parameters
    ----------
    V : FeSpace
        Vector displacement space; its Dirichlet dofs are removed.
    Q : FeSpace
        Scalar pressure space.
    zero_mean : bool
        Restrict pressures to the zero-mean subspace first (needed when
        the displacement boundary is fully clamped, where constants are
        in the kernel of B^T).

    Returns
    -------
    float
        Nonnegative inf-sup constant.
    """
    A1 = assemble_grad_grad(V) + assemble_mass(V)
    B = assemble_div(V, Q)
    M = assemble_mass(Q)
    fixed = dirichlet_dofs(V, "displacement")
    free = np.setdiff1d(np.arange(V.n_dofs), fixed)
    if free.size + Q.n_dofs > 4000:
        raise ValueError(
            "dense inf-sup oracle limited to 4000 dofs, got %d"
            % (free.size + Q.n_dofs)
        )
    A1ff = A1[np.ix_(free, free)].toarray()
    Bf = B[:, free].toarray()
    chol = sla.cho_factor(A1ff)
    S = Bf @ sla.cho_solve(chol, Bf.T)
    M = M.toarray()
    if zero_mean:
        m = assemble_load(Q, lambda x, y: np.ones_like(x))
        C = sla.null_space(m[None, :])
        S = C.T @ S @ C
        M = C.T @ M @ C
    eigs = sla.eigh(S, M, eigvals_only=True)
    return float(np.sqrt(max(eigs[0], 0.0)))
