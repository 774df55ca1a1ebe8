"""Preconditioned MinRes, exact sparse inner solves, and spectral estimation.

The solver is the classic tridiagonalization form of MinRes. With a
symmetric positive definite preconditioner B it monitors the quantity
(B r_k, r_k) / (B r_0, r_0), which is the stopping rule used by all the
iteration-count experiments (rtol 1e-6 on that squared ratio).

Condition numbers come from two independent paths: Lanczos with full
reorthogonalization on the preconditioned operator, and a dense
generalized eigensolve usable up to moderate dimensions as an oracle.
"""

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu


class LinearOp:
    """Linear operator with a dimension and a symmetry flag."""

    def __init__(self, n, apply, symmetric=True):
        self.n = int(n)
        self._apply = apply
        self.symmetric = bool(symmetric)

    def apply(self, x):
        return self._apply(x)

    def __call__(self, x):
        return self._apply(x)

    @staticmethod
    def from_matrix(mat):
        n = mat.shape[0]
        return LinearOp(n, lambda x: mat @ x)

    @staticmethod
    def identity(n):
        return LinearOp(n, lambda x: x.copy())


def aslinearop(obj):
    if isinstance(obj, LinearOp):
        return obj
    if sp.issparse(obj) or isinstance(obj, np.ndarray):
        return LinearOp.from_matrix(obj)
    raise TypeError("expected LinearOp, sparse matrix or ndarray")


def block_diag_op(ops):
    """Block-diagonal composition of LinearOps acting on stacked vectors."""
    ops = [aslinearop(o) for o in ops]
    sizes = [o.n for o in ops]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def apply(x):
        out = np.empty_like(x)
        for o, a, b in zip(ops, offsets[:-1], offsets[1:]):
            out[a:b] = o(x[a:b])
        return out

    return LinearOp(offsets[-1], apply)


def factorize(mat, spd=False, name="matrix"):
    """Exact solve operator from a sparse LU factorization.

    Parameters
    ----------
    mat : sparse matrix, symmetric.
    spd : bool
        Assert positive definiteness: factor with symmetric ordering and
        no diagonal pivoting, then require all pivots positive.
    name : str
        Used in error messages to identify the offending block.

    Returns
    -------
    LinearOp applying mat^{-1}.
    """
    A = sp.csc_matrix(mat)
    if spd:
        lu = splu(
            A,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
        if np.any(lu.U.diagonal() <= 0.0):
            raise ValueError("%s: not positive definite (nonpositive pivot)" % name)
    else:
        lu = splu(A)
    return LinearOp(A.shape[0], lu.solve)


class SolveReport:
    """Outcome of one MinRes run.

    residual_history holds (B r_k, r_k)/(B r_0, r_0) per iteration,
    starting at 1. Ritz values come from the solver's own (non
    reorthogonalized) Lanczos coefficients and are rough estimates;
    ritz_min/ritz_max are the extreme nonzero-magnitude ones.
    """

    def __init__(self, iterations, converged, residual_history, ritz=None):
        self.iterations = int(iterations)
        self.converged = bool(converged)
        self.residual_history = [float(h) for h in residual_history]
        self.ritz_min = None
        self.ritz_max = None
        self.cond_estimate = None
        if ritz is not None and len(ritz):
            mag = np.abs(ritz)
            keep = mag > 1e-12 * mag.max()
            if np.any(keep):
                self.ritz_min = float(mag[keep].min())
                self.ritz_max = float(mag[keep].max())
                self.cond_estimate = self.ritz_max / self.ritz_min

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "cond_estimate": self.cond_estimate,
            "ritz_min": self.ritz_min,
            "ritz_max": self.ritz_max,
            "residual_history": self.residual_history,
        }


def _ritz_from_tridiag(alphas, betas):
    if not alphas:
        return None
    if len(alphas) == 1:
        return np.array(alphas)
    return scipy.linalg.eigh_tridiagonal(
        np.asarray(alphas), np.asarray(betas[:-1]), eigvals_only=True
    )


def minres(A, B, rhs, rtol=1e-6, max_iter=1000):
    """Preconditioned minimum-residual solve of A x = rhs.

    Parameters
    ----------
    A : LinearOp or sparse matrix, symmetric (may be indefinite).
    B : LinearOp or sparse matrix, symmetric positive definite.
    rhs : array.
    rtol : float
        Stop when (B r_k, r_k)/(B r_0, r_0) <= rtol.
    max_iter : int

    Returns
    -------
    (x, SolveReport)

    Raises
    ------
    FloatingPointError on non-finite arithmetic, RuntimeError on Lanczos
    breakdown before convergence, ValueError if B is not positive.
    """
    A = aslinearop(A)
    B = aslinearop(B)
    b = np.asarray(rhs, dtype=float)
    n = b.size
    x = np.zeros(n)

    r1 = b.copy()
    y = B(r1)
    beta1sq = r1 @ y
    if not np.isfinite(beta1sq):
        raise FloatingPointError("non-finite (B r0, r0)")
    if beta1sq < 0.0:
        raise ValueError("preconditioner is not positive definite")
    beta1 = np.sqrt(beta1sq)
    if beta1 == 0.0:
        return x, SolveReport(0, True, [1.0])

    history = [1.0]
    alphas, betas = [], []
    oldb = 0.0
    beta = beta1
    dbar = epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1
    converged = False
    breakdown = False

    k = 0
    while k < max_iter:
        k += 1
        v = y / beta
        y = A(v)
        if k >= 2:
            y -= (beta / oldb) * r1
        alfa = v @ y
        if not np.isfinite(alfa):
            raise FloatingPointError("non-finite Lanczos coefficient at step %d" % k)
        y -= (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = B(r2)
        oldb = beta
        betasq = r2 @ y
        if not np.isfinite(betasq):
            raise FloatingPointError("non-finite Lanczos coefficient at step %d" % k)
        if betasq < 0.0:
            raise ValueError("preconditioner is not positive definite")
        beta = np.sqrt(betasq)
        alphas.append(alfa)
        betas.append(beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = np.hypot(gbar, beta)
        gamma = max(gamma, 1e-300)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x += phi * w

        history.append((phibar / beta1) ** 2)
        if history[-1] <= rtol:
            converged = True
            break
        if beta < 1e-14 * beta1:
            breakdown = True
            break

    if breakdown and not converged:
        raise RuntimeError(
            "MinRes breakdown at step %d with residual ratio %.3e" % (k, history[-1])
        )
    ritz = _ritz_from_tridiag(alphas, betas)
    return x, SolveReport(k, converged, history, ritz)


def estimate_condition(
    A,
    B,
    n_probe=1,
    drop_null=0,
    probe_mask=None,
    seed=0,
    stag_tol=1e-10,
    stag_steps=5,
    max_steps=None,
):
    """Condition number of the preconditioned operator B A.

    Runs Lanczos with full reorthogonalization on B A, self-adjoint in the
    inner product induced by the inverse of B, so B itself is the only
    operator applied. Iterates until the extreme Ritz values stagnate
    (relative change below stag_tol for stag_steps consecutive steps).

    Parameters
    ----------
    A, B : LinearOp or sparse matrix.
    n_probe : int
        Independent random starting vectors; Ritz sets are pooled.
    drop_null : int
        Number of smallest-magnitude Ritz values to discard (known zero
        modes of the operator).
    probe_mask : array, optional
        Entrywise mask applied to the probes (zero at constrained dofs
        keeps the iteration inside the free invariant subspace).
    seed : int
    max_steps : int, optional
        Cap on Lanczos steps per probe; defaults to the dimension.

    Returns
    -------
    (cond, ritz) with ritz the pooled sorted Ritz values after dropping.
    """
    A = aslinearop(A)
    B = aslinearop(B)
    n = A.n
    cap = min(n, max_steps) if max_steps else n

    pooled = []
    for p in range(n_probe):
        rng = np.random.default_rng(seed + 811 * p)
        z = rng.standard_normal(n)
        if probe_mask is not None:
            z = z * probe_mask
        theta = _lanczos_reorth(A, B, z, cap, drop_null, stag_tol, stag_steps)
        if drop_null:
            # each run sees its own copy of the known zero modes
            order = np.argsort(np.abs(theta))
            theta = theta[np.sort(order[drop_null:])]
        pooled.append(theta)
    ritz = np.sort(np.concatenate(pooled))
    mag = np.abs(ritz)
    if ritz.size == 0 or mag.min() == 0.0:
        raise RuntimeError("degenerate spectrum, increase drop_null")
    return float(mag.max() / mag.min()), ritz


def _lanczos_reorth(A, B, z0, cap, drop_null, stag_tol, stag_steps):
    """One Lanczos run; returns Ritz values at stagnation."""
    n = A.n
    v = B(z0)
    beta = np.sqrt(z0 @ v)
    if beta == 0.0:
        raise ValueError("zero probe vector")
    Z = np.empty((cap + 1, n))
    V = np.empty((cap + 1, n))
    Z[0] = z0 / beta
    V[0] = v / beta
    alphas, betas = [], []
    prev = None
    calm = 0
    scale = None
    for k in range(cap):
        u = A(V[k])
        alfa = V[k] @ u
        u -= alfa * Z[k]
        if k > 0:
            u -= betas[-1] * Z[k - 1]
        # full reorthogonalization in the B-weighted inner product
        u -= Z[: k + 1].T @ (V[: k + 1] @ u)
        v = B(u)
        betasq = u @ v
        if not np.isfinite(betasq):
            raise FloatingPointError("non-finite Lanczos coefficient")
        betasq = max(betasq, 0.0)
        beta = np.sqrt(betasq)
        alphas.append(alfa)

        theta = _ritz_from_tridiag(alphas, betas + [0.0])
        mag = np.abs(theta)
        if scale is None:
            scale = mag.max()
        if len(alphas) > drop_null:
            m = np.sort(mag)
            lo, hi = m[drop_null], m[-1]
            if prev is not None:
                dlo = abs(lo - prev[0]) / max(hi, 1e-300)
                dhi = abs(hi - prev[1]) / max(hi, 1e-300)
                calm = calm + 1 if (dlo < stag_tol and dhi < stag_tol) else 0
                if calm >= stag_steps:
                    return theta
            prev = (lo, hi)
        if beta <= 1e-12 * scale:
            # invariant subspace exhausted; Ritz values are exact there
            return theta
        betas.append(beta)
        Z[k + 1] = u / beta
        V[k + 1] = v / beta
    raise RuntimeError("Lanczos did not stagnate within %d steps" % cap)


def dense_eig_oracle(A, Binv):
    """All eigenvalues of A x = t Binv x by dense reduction.

    Binv is the inverse of the preconditioner (itself symmetric positive
    definite). Dimension capped at 4000.
    """
    n = A.shape[0]
    if n > 4000:
        raise ValueError("dense oracle capped at dimension 4000, got %d" % n)
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    Bd = Binv.toarray() if sp.issparse(Binv) else np.asarray(Binv, dtype=float)
    return scipy.linalg.eigh(Ad, Bd, eigvals_only=True)


def save_matrix_market(path, mat):
    scipy.io.mmwrite(path, sp.coo_matrix(mat))


def load_matrix_market(path):
    return sp.csr_matrix(scipy.io.mmread(path))
