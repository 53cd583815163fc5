"""Generalized Lyapunov operator for multiplicative-noise dynamics,
its direct solver in packed symmetric coordinates, and the mean-square
stability tests built on it.

The primal operator maps X to A'X + XA + sum_j Nj'X Nj; the adjoint
swaps the transposes.  Equations op(X) = RHS are solved by assembling
the d x d matrix of the operator in svec coordinates (d = n(n+1)/2)
and factoring it with dense LU, which keeps the whole package free of
nonsymmetric eigensolvers.
"""

import warnings

import numpy as np
import scipy.linalg

from . import linalg
from .errors import (
    BracketFailureError,
    DimensionMismatchError,
    DomainError,
    NotPositiveDefiniteError,
    NumericalError,
    SingularOperatorError,
)

PRIMAL = "primal"
ADJOINT = "adjoint"

# direct dense solves scale with n^6; anything bigger needs low-rank methods
MAX_STATE_DIM = 300

_PIVOT_RTOL = 1e-13
_RESIDUAL_RTOL = 1e-9


def _check_operands(A, N_list):
    A = linalg.check_finite(linalg.as_square(A, "A"), "A")
    mats = []
    for j, N in enumerate(N_list):
        N = linalg.check_finite(linalg.as_square(N, f"N[{j}]"), f"N[{j}]")
        if N.shape != A.shape:
            raise DimensionMismatchError(
                f"N[{j}] has shape {N.shape}, expected {A.shape}"
            )
        mats.append(N)
    if A.shape[0] > MAX_STATE_DIM:
        raise DomainError(
            f"state dimension {A.shape[0]} exceeds the dense-solve cap {MAX_STATE_DIM}"
        )
    return A, mats


class GenLyapOperator:
    """X -> A'X + XA + sum_j Nj'X Nj (primal) or its Frobenius adjoint."""

    def __init__(self, A, N_list, direction=PRIMAL):
        if direction not in (PRIMAL, ADJOINT):
            raise DomainError(f"direction must be {PRIMAL!r} or {ADJOINT!r}")
        A, N_list = _check_operands(A, N_list)
        self.A = A
        self.N_list = N_list
        self.direction = direction
        self.n = A.shape[0]
        self._lu = None
        self._scale = None

    def adjoint(self):
        other = ADJOINT if self.direction == PRIMAL else PRIMAL
        return GenLyapOperator(self.A, self.N_list, other)

    def apply(self, X):
        X = linalg.as_square(X, "X")
        if X.shape[0] != self.n:
            raise DimensionMismatchError(
                f"X has shape {X.shape}, expected {(self.n, self.n)}"
            )
        A = self.A
        if self.direction == PRIMAL:
            out = A.T @ X + X @ A
            for N in self.N_list:
                out += N.T @ X @ N
        else:
            out = A @ X + X @ A.T
            for N in self.N_list:
                out += N @ X @ N.T
        return linalg.symmetrize(out)

    def matrix(self):
        """Dense representation in svec coordinates, assembled column by column."""
        if self.direction == PRIMAL:
            A, Ns = self.A, self.N_list
        else:  # adjoint == primal of the transposed data
            A, Ns = self.A.T, [N.T for N in self.N_list]
        n = self.n
        d = linalg.svec_len(n)
        M = np.empty((d, d))
        rows, cols = np.triu_indices(n)
        c = 1.0 / linalg.SQRT2
        for col, (i, j) in enumerate(zip(rows, cols)):
            T = np.zeros((n, n))
            if i == j:
                T[:, i] = A[i, :]
                Y = T + T.T
                for N in Ns:
                    Y += np.outer(N[i, :], N[i, :])
            else:
                T[:, j] = c * A[i, :]
                T[:, i] += c * A[j, :]
                Y = T + T.T
                for N in Ns:
                    Y += c * (np.outer(N[i, :], N[j, :]) + np.outer(N[j, :], N[i, :]))
            M[:, col] = linalg.svec(Y)
        return M

    def factor(self):
        """LU-factor the svec representation (cached)."""
        if self._lu is None:
            M = self.matrix()
            scale = float(np.abs(M).max(initial=0.0))
            with warnings.catch_warnings():
                # exact singularity is detected by the pivot test below
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
            pivots = np.abs(np.diag(lu))
            if pivots.min(initial=np.inf) <= _PIVOT_RTOL * max(scale, 1e-300):
                raise SingularOperatorError(
                    "generalized Lyapunov operator is singular at working "
                    "precision (zero in the spectrum of the noise-extended "
                    "Kronecker generator)"
                )
            self._lu = (lu, piv)
            self._scale = scale
        return self._lu

    def solve(self, rhs, check_residual=True):
        """Solve op(X) = rhs for symmetric X.

        The residual contract ||op(X) - rhs||_F <= 1e-9 max(1, ||rhs||_F)
        is enforced with a few steps of iterative refinement; pass
        ``check_residual=False`` to get the refined solution regardless
        (callers then validate it by other means).
        """
        rhs = linalg.check_finite(linalg.as_square(rhs, "rhs"), "rhs")
        if rhs.shape[0] != self.n:
            raise DimensionMismatchError(
                f"rhs has shape {rhs.shape}, expected {(self.n, self.n)}"
            )
        lu = self.factor()
        b = linalg.svec(linalg.symmetrize(rhs))
        x = scipy.linalg.lu_solve(lu, b, check_finite=False)
        X = linalg.smat(x)
        tol = _RESIDUAL_RTOL * max(1.0, float(np.linalg.norm(rhs)))
        res_norm = float(np.linalg.norm(self.apply(X) - rhs))
        for _ in range(3):
            if res_norm <= tol:
                break
            x_ref = x - scipy.linalg.lu_solve(
                lu, linalg.svec(self.apply(X) - rhs), check_finite=False
            )
            X_ref = linalg.smat(x_ref)
            ref_norm = float(np.linalg.norm(self.apply(X_ref) - rhs))
            if ref_norm >= res_norm:
                break
            x, X, res_norm = x_ref, X_ref, ref_norm
        if check_residual and res_norm > tol:
            raise NumericalError(
                f"Lyapunov solve residual {res_norm:.3e} exceeds tolerance {tol:.3e}"
            )
        return X


def apply_primal(A, N_list, X):
    return GenLyapOperator(A, N_list, PRIMAL).apply(X)


def apply_adjoint(A, N_list, X):
    return GenLyapOperator(A, N_list, ADJOINT).apply(X)


def solve(A, N_list, rhs, direction=PRIMAL):
    return GenLyapOperator(A, N_list, direction).solve(rhs)


def ms_stability_certificate(A, N_list):
    """Positive-definite X with primal(X) = -I, or None if none exists.

    Existence of such an X is equivalent to asymptotic mean-square
    stability; a singular operator (marginal spectrum) counts as not
    stable.  Any X > 0 with op(X) < 0 is a valid certificate, so the
    solve residual only needs to keep op(X) strictly negative, which
    stays checkable for badly scaled operators.
    """
    op = GenLyapOperator(A, N_list, PRIMAL)
    try:
        X = op.solve(-np.eye(op.n), check_residual=False)
    except SingularOperatorError:
        return None
    try:
        # tol 0: near the stability boundary ||X|| blows up while its
        # smallest eigenvalue stays O(1), so a scale-relative pivot
        # tolerance would misclassify strictly positive certificates
        linalg.cholesky_pd(X, tol=0.0)
    except NotPositiveDefiniteError:
        return None
    residual = op.apply(X) + np.eye(op.n)  # op(X) = -I + residual
    w, _ = linalg.sym_eig(residual)
    if w[-1] >= 0.5:  # op(X) no longer provably negative definite
        return None
    return X


def is_ms_stable(A, N_list):
    return ms_stability_certificate(A, N_list) is not None


def _refine_abscissa(op_matrix, alpha0, window):
    """Polish an abscissa estimate by shifted inverse iteration.

    The stability certificate loses a few digits right at the boundary,
    so the bisection result carries a small systematic offset.  The
    abscissa is a real eigenvalue of the operator matrix with a
    nonnegative eigenvector, which inverse iteration recovers to near
    machine precision.  Returns None when the iteration does not settle
    inside the trust window.
    """
    d = op_matrix.shape[0]
    scale = float(np.abs(op_matrix).max(initial=0.0)) + 1.0
    v = linalg.svec(np.eye(linalg.smat_dim(d)))
    v /= np.linalg.norm(v)
    lam = alpha0
    for _ in range(12):
        shifted = op_matrix - lam * np.eye(d)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu = scipy.linalg.lu_factor(shifted, check_finite=False)
            w = scipy.linalg.lu_solve(lu, v, check_finite=False)
        except scipy.linalg.LinAlgError:
            return lam  # shift sits on the eigenvalue itself
        norm_w = np.linalg.norm(w)
        if not np.isfinite(norm_w) or norm_w == 0.0:
            return lam
        v = w / norm_w
        lam_new = float(v @ (op_matrix @ v))
        if abs(lam_new - alpha0) > window:
            return None  # drifted to a different eigenvalue
        residual = np.linalg.norm(op_matrix @ v - lam_new * v)
        if residual <= 1e-12 * scale:
            return lam_new
        lam = lam_new
    return lam_new if residual <= 1e-8 * scale else None


def spectral_abscissa(A, N_list, tol=1e-8):
    """Largest real part of the noise-extended Kronecker generator.

    Located by bisection over diagonal shifts ((A - sI, N) is mean-square
    stable exactly when the abscissa is below 2s) and polished by inverse
    iteration.  Returns the abscissa within +-tol.
    """
    A, N_list = _check_operands(A, N_list)
    if tol <= 0:
        raise DomainError("tol must be > 0")
    n = A.shape[0]
    eye = np.eye(n)

    def stable_at(shift):
        return is_ms_stable(A - shift * eye, N_list)

    guess = float(np.linalg.norm(A)) + sum(
        float(np.linalg.norm(N)) ** 2 for N in N_list
    ) + 1.0
    hi = guess
    while not stable_at(hi):
        hi *= 2.0
        if hi > 1e16:
            raise BracketFailureError("no stable shift found below 1e16")
    lo = -guess
    while stable_at(lo):
        lo *= 2.0
        if -lo > 1e16:
            raise BracketFailureError("no unstable shift found above -1e16")
    # alpha lies in [2*lo, 2*hi); bisect the shift
    left, right = 2.0 * lo, 2.0 * hi
    while right - left > tol:
        mid = 0.5 * (left + right)
        if stable_at(0.5 * mid):
            right = mid
        else:
            left = mid
    alpha = 0.5 * (left + right)
    # the certificate's resolution near the boundary is a few parts in 1e6
    window = max(10.0 * tol, 1e-4 * (abs(alpha) + 1.0))
    refined = _refine_abscissa(
        GenLyapOperator(A, N_list, ADJOINT).matrix(), alpha, window
    )
    return refined if refined is not None else alpha
