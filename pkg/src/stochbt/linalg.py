"""Dense symmetric linear algebra shared by every solver in the package.

Symmetric matrices are stored as full float64 arrays; ``svec``/``smat``
convert to and from packed upper-triangular coordinates with the
off-diagonal entries scaled by sqrt(2), so the packed dot product of two
matrices equals their Frobenius inner product.  All factorizations are
backed by LAPACK through scipy with tolerance guards layered on top.
"""

import math

import numpy as np
import scipy.linalg

from .errors import (
    DecompositionError,
    DimensionMismatchError,
    DomainError,
    NotPositiveDefiniteError,
)

SQRT2 = math.sqrt(2.0)

# definiteness classes returned by classify_definiteness
PD = "PD"
PSD = "PSD"
INDEFINITE = "INDEFINITE"
NSD = "NSD"
ND = "ND"


def as_square(X, name="matrix"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {X.shape}")
    return X


def check_finite(X, name="matrix"):
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def symmetrize(X):
    return 0.5 * (X + X.T)


def svec_len(n):
    return n * (n + 1) // 2


def smat_dim(length):
    n = (math.isqrt(8 * length + 1) - 1) // 2
    if svec_len(n) != length:
        raise DimensionMismatchError(
            f"vector of length {length} is not a packed symmetric matrix"
        )
    return n


def svec(X):
    """Pack the upper triangle of symmetric X, off-diagonals scaled by sqrt(2)."""
    X = as_square(X, "X")
    rows, cols = np.triu_indices(X.shape[0])
    v = X[rows, cols].copy()
    v[rows != cols] *= SQRT2
    return v


def smat(v):
    """Inverse of :func:`svec`.

    Off-diagonals are divided by the same sqrt(2) constant and nudged by
    at most one ulp so that rescaling reproduces the packed value; the
    svec/smat round trip is then exact up to the (rare) cases where two
    adjacent doubles share the same scaled representation.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatchError("smat expects a 1-D packed vector")
    n = smat_dim(v.size)
    rows, cols = np.triu_indices(n)
    off = rows != cols
    vals = v.copy()
    y = vals[off] / SQRT2
    back = y * SQRT2
    lo = back > vals[off]
    hi = back < vals[off]
    if lo.any() or hi.any():
        cand = np.where(lo, np.nextafter(y, -np.inf), np.nextafter(y, np.inf))
        take = (cand * SQRT2) == vals[off]
        y = np.where((lo | hi) & take, cand, y)
    vals[off] = y
    X = np.zeros((n, n))
    X[rows, cols] = vals
    X[cols, rows] = vals
    return X


def pd_tolerance(X):
    """Scale-aware pivot tolerance: 1e-10 * max(1, row-sum norm of X)."""
    X = np.asarray(X, dtype=float)
    return 1e-10 * max(1.0, float(np.abs(X).sum(axis=1).max(initial=0.0)))


def _locate_failing_pivot(X, tol):
    # plain outer-product sweep, only used to report the pivot index
    n = X.shape[0]
    L = np.zeros_like(X)
    for k in range(n):
        pivot = X[k, k] - L[k, :k] @ L[k, :k]
        if pivot <= tol:
            return k, pivot
        L[k, k] = math.sqrt(pivot)
        if k + 1 < n:
            L[k + 1 :, k] = (X[k + 1 :, k] - L[k + 1 :, :k] @ L[k, :k]) / L[k, k]
    return None, None


def cholesky_pd(X, tol=None):
    """Lower-triangular L with L @ L.T == X, guarded against indefiniteness.

    Raises :class:`NotPositiveDefiniteError` carrying the index of the
    first pivot at or below ``tol`` (default :func:`pd_tolerance`).
    """
    X = check_finite(as_square(X, "X"), "X")
    X = symmetrize(X)
    if tol is None:
        tol = pd_tolerance(X)
    try:
        L = scipy.linalg.cholesky(X, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        L = None
    if L is not None:
        pivots = np.diag(L) ** 2
        if pivots.min(initial=np.inf) > tol:
            return L
    k, pivot = _locate_failing_pivot(X, tol)
    if k is None:  # scipy failed but the sweep passed: extremely marginal input
        k, pivot = X.shape[0] - 1, 0.0
    raise NotPositiveDefiniteError(
        f"matrix is not positive definite: pivot {k} = {pivot:.6g} <= tol {tol:.3g}",
        pivot_index=k,
        pivot_value=pivot,
    )


def psd_sqrt_factor(X, tol=None):
    """Full square factor F with F @ F.T == X for a PSD matrix.

    Eigenvalue-based; negative eigenvalues within -tol*scale are clipped
    to zero, anything below that raises NotPositiveDefiniteError.  Used
    where Cholesky fails because the spectrum decays to roundoff level
    (rank-deficient Gramians).
    """
    X = check_finite(as_square(X, "X"), "X")
    w, V = sym_eig(X)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if tol is None:
        tol = 1e-10
    if w[0] < -tol * scale:
        raise NotPositiveDefiniteError(
            f"matrix is indefinite: min eigenvalue {w[0]:.6g} < -{tol:.3g}*scale",
            pivot_index=0,
            pivot_value=float(w[0]),
        )
    return V * np.sqrt(np.clip(w, 0.0, None))


def sym_eig(X):
    """Eigendecomposition of a symmetric matrix.

    Returns (w, V) with eigenvalues ascending and orthonormal columns,
    X @ V == V @ diag(w).
    """
    X = check_finite(as_square(X, "X"), "X")
    try:
        w, V = scipy.linalg.eigh(symmetrize(X), check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise DecompositionError(f"symmetric eigensolver did not converge: {exc}")
    return w, V


def svd(M):
    """Economy SVD M = U @ diag(s) @ V.T with descending s.

    Signs are canonicalized (first nonzero entry of each U column is
    positive) so the factors are reproducible across runs.
    """
    M = check_finite(np.atleast_2d(np.asarray(M, dtype=float)), "M")
    try:
        U, s, Vt = scipy.linalg.svd(M, full_matrices=False, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise DecompositionError(f"SVD did not converge: {exc}")
    V = Vt.T
    for j in range(s.size):
        col = U[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-13 * max(1.0, np.abs(col).max()))
        if nz.size and col[nz[0]] < 0:
            U[:, j] = -col
            V[:, j] = -V[:, j]
    return U, s, V


def classify_definiteness(X, tol=1e-10):
    """Classify a symmetric matrix as PD/PSD/INDEFINITE/NSD/ND.

    Eigenvalues within the dead band +-tol*max(1, ||X||_2) count as zero;
    the zero matrix classifies as PSD.
    """
    if tol < 0:
        raise DomainError("tol must be >= 0")
    w, _ = sym_eig(X)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    band = tol * scale
    pos = w > band
    neg = w < -band
    if pos.any() and neg.any():
        return INDEFINITE
    if pos.any():
        return PD if pos.all() else PSD
    if neg.any():
        return ND if neg.all() else NSD
    return PSD
