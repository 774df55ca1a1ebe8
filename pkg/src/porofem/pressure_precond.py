"""Rank-one machinery for preconditioning the total-pressure block.

The block operator is lambda^{-1} I_m + I_0 (scaled mean part plus
mean-free part), whose matrix is the rank-one update

    M_lam = M + (1/lambda - 1) m m^T,

with m the normalized moment vector of the basis. M_lam is congruent to
M: M_lam = V M V^T with V^{-1} = I + a m w^T, w the all-ones vector and
a = (sqrt(lambda) - 1)/sqrt(|O|). Any preconditioner D of M therefore
yields V^{-T} D V^{-1} for M_lam at exactly the same condition number.
M_lam and its inverse are dense, so every action here is a matvec plus a
two-pass rank-one correction; no outer product is ever materialized.
"""

import numpy as np

from . import forms
from .krylov import LinearOp, factorize

_MEAN_TOL = 1e-13


class MeanVector:
    """Moment vector of a scalar nodal space.

    Attributes:
        m: vector with m_i = integral of basis i, divided by sqrt(|O|).
        omega_sqrt: sqrt of the domain area.
        family: element family the vector was built for.

    The all-ones vector w is implicit; the defining identities are
    M w = sqrt(|O|) m and m^T w = sqrt(|O|).
    """

    def __init__(self, m, omega_sqrt, family):
        self.m = m
        self.omega_sqrt = float(omega_sqrt)
        self.family = family

    @property
    def n(self):
        return self.m.size


def build_mean_vector(Q, mass):
    """Moment vector of Q, cross-checked against the mass matrix.

    Parameters
    ----------
    Q : FeSpace, scalar P1 or P2 without boundary constraints.
    mass : csr_matrix
        Unweighted mass matrix of Q, used to verify the identities; a
        matrix with eliminated boundary rows is rejected, since the
        partition-of-unity argument behind them fails on a constrained
        space.

    Returns
    -------
    MeanVector
    """
    if Q.value_dim != 1 or Q.family not in ("P1", "P2"):
        raise ValueError("mean vector needs a scalar nodal (P1/P2) space")
    load = forms.assemble_load(Q, lambda x, y: np.ones_like(x))
    omega = load.sum()
    omega_sqrt = np.sqrt(omega)
    m = load / omega_sqrt
    w = np.ones(Q.n_dofs)
    if np.abs(mass @ w - omega_sqrt * m).max() > _MEAN_TOL:
        raise ValueError(
            "mass matrix and moment vector disagree; "
            "the space must not carry boundary constraints"
        )
    if abs(m @ w - omega_sqrt) > _MEAN_TOL:
        raise ValueError("moment vector normalization failed")
    return MeanVector(m, omega_sqrt, Q.family)


class RankOneMass:
    """Mass matrix with the rank-one mean correction for one lambda.

    Attributes:
        M: unweighted mass matrix; mean: MeanVector; lam: constant;
        a = (sqrt(lam) - 1)/sqrt(|O|); abar = 1 - 1/sqrt(lam).
    """

    def __init__(self, M, mean, lam):
        lam = float(lam)
        if not lam > 0:
            raise ValueError("lambda must be positive")
        self.M = M
        self.mean = mean
        self.lam = lam
        self.a = (np.sqrt(lam) - 1.0) / mean.omega_sqrt
        self.abar = 1.0 - 1.0 / np.sqrt(lam)

    @property
    def n(self):
        return self.mean.n


def apply_Mlambda(R, x):
    """(M + (1/lam - 1) m m^T) x without forming the dense update."""
    return R.M @ x + (1.0 / R.lam - 1.0) * (R.mean.m @ x) * R.mean.m


def apply_Vlambda_inv(R, x):
    """V^{-1} x = x + a (w^T x) m."""
    return x + (R.a * x.sum()) * R.mean.m


def apply_Vlambda_inv_T(R, x):
    """V^{-T} x = x + a (m^T x) w."""
    return x + R.a * (R.mean.m @ x)


def apply_Vlambda(R, x):
    """V x = x - (abar/sqrt(|O|)) (w^T x) m, the inverse of V^{-1}.

    Follows from the rank-one inversion formula applied to I + a m w^T,
    using m^T w = sqrt(|O|) and 1 + a sqrt(|O|) = sqrt(lam).
    """
    return x - (R.abar / R.mean.omega_sqrt * x.sum()) * R.mean.m


def build_QT_preconditioner(R, inner="Jacobi"):
    """Preconditioner V^{-T} D V^{-1} for the corrected mass matrix.

    Parameters
    ----------
    R : RankOneMass with lam >= 1 (the congruence argument needs it).
    inner : str
        "Jacobi": D = diag(M)^{-1}; condition of the preconditioned
        operator equals that of the Jacobi-preconditioned plain mass
        matrix, independent of lam.
        "ExactMass": D = M^{-1}; the result is the exact inverse.

    Returns
    -------
    LinearOp
    """
    if R.lam < 1.0:
        raise ValueError("lambda must be >= 1 for the mean-part splitting")
    if inner == "Jacobi":
        d = 1.0 / R.M.diagonal()
        inner_op = lambda x: d * x
    elif inner == "ExactMass":
        inner_op = factorize(R.M, spd=True, name="total-pressure mass").apply
    else:
        raise ValueError("inner must be 'Jacobi' or 'ExactMass'")

    def apply(x):
        return apply_Vlambda_inv_T(R, inner_op(apply_Vlambda_inv(R, x)))

    return LinearOp(R.n, apply)


def project_mean(x, mean, mass):
    """Split coefficients into mean-value and mean-free parts.

    The represented function q decomposes as q = q_mean + q_zero with
    q_mean the constant (integral of q)/|O|. Returns (x_mean, x_zero).
    """
    c = (mean.m @ x) / mean.omega_sqrt
    x_mean = np.full_like(np.asarray(x, dtype=float), c)
    return x_mean, x - x_mean
