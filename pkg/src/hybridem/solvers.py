"""Sparse and dense linear algebra kernels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_RANK_TOL = 1e-10
DEFAULT_FEAS_TOL = 1e-8
NULLSPACE_SIZE_LIMIT = 12000


class SolverError(RuntimeError):
    pass


class DefinitenessError(SolverError):
    pass


class InfeasibleError(SolverError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


class ConvergenceError(SolverError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (last residual {residual:.3e})")
        self.residual = residual


class SizeLimitError(SolverError):
    pass


def _norm1(A):
    if sp.issparse(A):
        return float(abs(A).sum(axis=0).max()) if A.nnz else 0.0
    return float(np.abs(A).sum(axis=0).max()) if A.size else 0.0


@dataclass(eq=False)
class FactorizationHandle:
    """LU factors of a square sparse matrix (symmetric ordering when
    ``definite``)."""

    lu: spla.SuperLU
    definite: bool
    shape: tuple

    def solve(self, b):
        return self.lu.solve(np.asarray(b, dtype=float))


def factorize(A, definite: bool = True) -> FactorizationHandle:
    """Factorize a sparse symmetric matrix.

    With ``definite=True`` the factorization uses a symmetric ordering and
    no off-diagonal pivoting, so it is an LDL^T in disguise: every pivot
    must be positive or :class:`DefinitenessError` is raised.
    """
    A = sp.csc_matrix(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if definite:
        try:
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise DefinitenessError(f"factorization failed: {exc}") from exc
        piv = lu.U.diagonal()
        if np.any(piv <= 0) or not np.all(np.isfinite(piv)):
            raise DefinitenessError("matrix is not positive definite")
    else:
        lu = spla.splu(A)
    return FactorizationHandle(lu, definite, A.shape)


def solve_spd(A, b) -> np.ndarray:
    """Solve A x = b for sparse or dense symmetric positive definite A."""
    if not sp.issparse(A):
        try:
            return la.cho_solve(la.cho_factor(np.asarray(A, float)), b)
        except la.LinAlgError as exc:
            raise DefinitenessError(str(exc)) from exc
    return factorize(A).solve(b)


# ---------------------------------------------------------------------------
# equality-constrained least squares


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def constrained_lsq(Q, q, C=None, g=None, rank_tol: float = DEFAULT_RANK_TOL,
                    feas_tol: float = DEFAULT_FEAS_TOL, row_kernel=None):
    """Minimize 1/2 x^T Q x - q^T x subject to C x = g.

    Parameters
    ----------
    Q : (n, n) symmetric positive semidefinite
    q : (n,)
    C : (m, n), optional
        Constraint matrix; may be rank deficient as long as the system is
        consistent.
    g : (m,)
    rank_tol : float
        Singular values below ``rank_tol * s_max`` count as zero.
    feas_tol : float
        Relative inconsistency of ``C x = g`` tolerated before raising
        :class:`InfeasibleError`.
    row_kernel : (m, p), optional
        Basis of null(C^T).  When given, the sparse path is used: the KKT
        system is bordered by ``row_kernel`` so that it is nonsingular, and
        ``Q`` must be positive definite on null(C).

    Returns
    -------
    x : (n,)
        The minimizer; when it is not unique, the one of least Euclidean
        norm (dense path).
    """
    q = np.asarray(q, dtype=float)
    if row_kernel is not None:
        return KKTSolver(Q, C, row_kernel, feas_tol).solve(q, g)
    Q = _dense(Q)
    n = len(q)
    if C is None or np.size(C) == 0:
        x_p = np.zeros(n)
        Z = np.eye(n)
    else:
        C = _dense(C)
        g = np.asarray(g, dtype=float)
        U, s, Vt = la.svd(C, full_matrices=True)
        rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
        x_p = Vt[:rank].T @ ((U[:, :rank].T @ g) / s[:rank])
        res = np.linalg.norm(C @ x_p - g)
        scale = max(np.linalg.norm(g), s[0] * np.linalg.norm(x_p) if s.size else 0.0, 1e-300)
        if res > feas_tol * scale:
            raise InfeasibleError("inconsistent equality constraints", res / scale)
        Z = Vt[rank:].T
    if Z.shape[1] == 0:
        return x_p
    H = Z.T @ Q @ Z
    rhs = Z.T @ (q - Q @ x_p)
    w, V = la.eigh(0.5 * (H + H.T))
    cut = rank_tol * max(abs(w).max(), 1e-300)
    pos = w > cut
    coef = V.T @ rhs
    if np.any(np.abs(coef[~pos]) > feas_tol * max(np.linalg.norm(rhs), 1e-300)):
        raise InfeasibleError("objective unbounded below on the feasible set",
                              float(np.abs(coef[~pos]).max()))
    y = V[:, pos] @ (coef[pos] / w[pos])
    return x_p + Z @ y


class KKTSolver:
    """Prefactored sparse solver for repeated equality-constrained
    least-squares problems with fixed ``Q`` and ``C``.

    The constraint matrix may have dependent rows; the left kernel ``K``
    (basis of null(C^T)) borders the saddle-point system

        [ Q   C^T  0 ] [x]   [q]
        [ C   0    K ] [l] = [g]
        [ 0   K^T  0 ] [m]   [0]

    which is nonsingular when Q is positive definite on null(C).  A nonzero
    ``K m`` measures the inconsistency of ``C x = g``.
    """

    def __init__(self, Q, C, row_kernel, feas_tol: float = DEFAULT_FEAS_TOL):
        Q = sp.csr_matrix(Q)
        C = sp.csr_matrix(C)
        K = sp.csr_matrix(row_kernel)
        self.n, self.m, self.p = Q.shape[0], C.shape[0], K.shape[1]
        self.C, self.K, self.Q = C, K, Q
        self.feas_tol = feas_tol
        kkt = sp.bmat([[Q, C.T, None], [C, None, K], [None, K.T, None]], format="csc")
        self.lu = spla.splu(kkt)

    def solve(self, q, g, return_multipliers: bool = False):
        rhs = np.concatenate([q, g, np.zeros(self.p)])
        sol = self.lu.solve(rhs)
        x = sol[: self.n]
        lam = sol[self.n: self.n + self.m]
        mu = sol[self.n + self.m:]
        incons = np.linalg.norm(self.K @ mu)
        scale = max(np.linalg.norm(g), 1e-300)
        if incons > self.feas_tol * scale and incons > 1e-14:
            raise InfeasibleError("inconsistent equality constraints", incons / scale)
        if return_multipliers:
            return x, lam
        return x


class AugmentedLagrangianSolver:
    """Prefactored iterated-penalty solver for

        minimize 1/2 x^T Q x - q^T x  subject to  C x = g

    with Q symmetric positive definite and C possibly rank deficient.

    Iterates x = (Q + gamma C^T C)^{-1} (q - C^T l + gamma C^T g),
    l += gamma (C x - g).  Only the SPD matrix Q + gamma C^T C is factored,
    which keeps the sparsity of Q when C is local; the fixed point is the
    exact constrained minimizer.  A component of g outside range(C) does not
    affect x and is reported as inconsistency.
    """

    def __init__(self, Q, C, gamma: float = 100.0, feas_tol: float = DEFAULT_FEAS_TOL,
                 tol: float = 1e-14, max_iter: int = 100):
        Q = sp.csc_matrix(Q, dtype=float)
        self.C = sp.csr_matrix(C, dtype=float)
        self.Ct = self.C.T.tocsr()
        CtC = (self.Ct @ self.C).tocsc()
        dq, dc = Q.diagonal().mean(), CtC.diagonal().mean()
        self.gamma = gamma * dq / dc if dc > 0 else 0.0
        self.factor = factorize(Q + self.gamma * CtC)
        self.feas_tol, self.tol, self.max_iter = feas_tol, tol, max_iter
        self.iterations = 0

    def solve(self, q, g):
        q = np.asarray(q, dtype=float)
        g = np.asarray(g, dtype=float)
        Ctg = self.Ct @ g
        base = q + self.gamma * Ctg
        scale = max(np.linalg.norm(Ctg), 1e-300)
        lam_t = np.zeros_like(q)          # C^T lambda
        x = self.factor.solve(base)
        prev = np.inf
        for it in range(1, self.max_iter + 1):
            rt = self.Ct @ (self.C @ x) - Ctg
            rnorm = np.linalg.norm(rt)
            if rnorm <= self.tol * max(scale, np.linalg.norm(self.Ct @ (self.C @ x))) \
                    or rnorm == 0.0:
                break
            lam_t += self.gamma * rt
            x_new = self.factor.solve(base - lam_t)
            step = np.linalg.norm(x_new - x)
            x = x_new
            if step <= self.tol * np.linalg.norm(x) or (it > 3 and step >= prev):
                break
            prev = step
        else:
            raise ConvergenceError("augmented Lagrangian iteration did not converge",
                                   rnorm / scale)
        self.iterations = it
        res = np.linalg.norm(self.C @ x - g)
        gscale = max(np.linalg.norm(g), 1e-300)
        if res > self.feas_tol * gscale and res > 1e-14:
            raise InfeasibleError("inconsistent equality constraints", res / gscale)
        return x


# ---------------------------------------------------------------------------
# kernels and eigenproblems


def nullspace_basis(B, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis Z of null(B^T), i.e. B^T Z = 0.

    ``B`` is the coupling matrix with rows indexed by broken coefficients,
    so Z spans the discrete kernel of the coupling operator.
    """
    n = B.shape[0]
    if n > NULLSPACE_SIZE_LIMIT:
        raise SizeLimitError(f"dense null space of size {n} exceeds limit")
    Bd = _dense(B)
    if not np.any(Bd):
        return np.eye(n)
    U, s, _ = la.svd(Bd, full_matrices=True)
    rank = int(np.sum(s > rank_tol * s[0]))
    return U[:, rank:]


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int = 0


def eigen_shift_invert(A, M, sigma: float, tol: float = 1e-10, max_iter: int = 200,
                       seed: int = 0) -> EigenPair:
    """Eigenpair of A x = lambda M x nearest ``sigma`` by inverse iteration.

    The shift is fixed; the result is M-normalized.  Convergence is
    declared when ``||A x - lambda M x|| / ||x|| <= tol``.
    """
    A = sp.csc_matrix(A, dtype=float)
    M = sp.csc_matrix(M, dtype=float)
    shift = sigma
    lu = None
    for attempt in range(5):
        try:
            lu = spla.splu((A - shift * M).tocsc())
            if np.all(np.abs(lu.U.diagonal()) > 0):
                break
        except RuntimeError:
            pass
        shift = sigma + (1e-8 * max(abs(sigma), 1.0)) * 10 ** attempt
        lu = None
    if lu is None:
        raise SolverError("shifted operator singular for every perturbation tried")

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.shape[0])
    x /= np.sqrt(x @ (M @ x))
    lam, res = shift, np.inf
    for it in range(1, max_iter + 1):
        y = lu.solve(M @ x)
        x = y / np.sqrt(y @ (M @ y))
        Ax = A @ x
        lam = float(x @ Ax)
        res = float(np.linalg.norm(Ax - lam * (M @ x)) / np.linalg.norm(x))
        if res <= tol:
            return EigenPair(lam, x, res, it)
    raise ConvergenceError(f"inverse iteration did not converge in {max_iter} steps", res)
