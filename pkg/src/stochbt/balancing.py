"""Contragredient balancing of a Gramian pair and truncation to a
reduced-order system, including the twice-the-truncated-tail error
bound available for type II pairs.

Balancing follows the square-root method: Cholesky (or, for spectra
that decay to roundoff, eigenvalue-based PSD) factors L L' = P and
R'R = Q, an SVD R L = U diag(sigma) V', and S = L V diag(sigma)^-1/2.
When the sigma spectrum spans more than ~13 decades the full
transformation is ill-conditioned and only the truncation maps
S1 = S[:, :r], T1 = S^-1[:r, :] are formed, which touch the kept
(well-conditioned) part of the spectrum only.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import gramians, linalg, lyapunov
from .errors import (
    DomainError,
    NearZeroSigmaError,
    NotPositiveDefiniteError,
    StabilityLostError,
)
from .system import StochasticSystem, require_valid

# sigma ratios below this make diag(sigma)^-1/2 amplification unusable
SIGMA_COND_FLOOR = 1e-13


@dataclass(frozen=True, eq=False)
class BalancedForm:
    """Transformation S with S'QS = S^-1 P S^-T = diag(sigma).

    ``groups`` partitions the (descending) sigma spectrum into runs of
    numerically equal values, as half-open index ranges.  ``S`` and
    ``S_inv`` are None when the spectrum collapses below the
    conditioning floor; truncation remains available through
    :func:`truncate` as long as the kept block is well conditioned.
    """

    sigma: np.ndarray
    groups: list
    S: np.ndarray | None
    S_inv: np.ndarray | None
    L: np.ndarray  # P = L L'
    R: np.ndarray  # Q = R'R
    U: np.ndarray
    V: np.ndarray

    @property
    def n_groups(self):
        return len(self.groups)

    def group_values(self):
        return np.array([self.sigma[a:b].mean() for a, b in self.groups])

    def require_transformation(self):
        if self.S is None:
            raise NearZeroSigmaError(
                f"sigma spectrum spans [{self.sigma[-1]:.3e}, {self.sigma[0]:.3e}]; "
                "the full balancing transformation is ill-conditioned"
            )
        return self.S, self.S_inv


def _gramian_factor(X):
    """Square factor F with F F' = X; falls back to the eigenvalue-based
    PSD factor when the Cholesky pivot tolerance trips."""
    try:
        return linalg.cholesky_pd(X)
    except NotPositiveDefiniteError:
        return linalg.psd_sqrt_factor(X)


def balance(P, Q, group_tol=1e-8):
    """Balancing transformation from a pair of (semi)definite Gramians.

    Raises NotPositiveDefiniteError for indefinite input and
    NearZeroSigmaError when the whole spectrum is numerically zero.
    """
    P = linalg.check_finite(linalg.as_square(P, "P"), "P")
    Q = linalg.check_finite(linalg.as_square(Q, "Q"), "Q")
    if group_tol < 0:
        raise DomainError("group_tol must be >= 0")
    L = _gramian_factor(P)
    R = _gramian_factor(Q).T  # upper-ish factor with R'R = Q
    U, sigma, V = linalg.svd(R @ L)
    if sigma.size == 0 or sigma[0] <= 0.0:
        raise NearZeroSigmaError("sigma spectrum is identically zero")
    if sigma[-1] > SIGMA_COND_FLOOR * sigma[0]:
        inv_sqrt = sigma**-0.5
        S = (L @ V) * inv_sqrt
        S_inv = (U.T @ R) * inv_sqrt[:, None]
    else:
        S = None
        S_inv = None
    groups = []
    start = 0
    for i in range(1, sigma.size):
        if abs(sigma[i - 1] - sigma[i]) > group_tol * sigma[0]:
            groups.append((start, i))
            start = i
    groups.append((start, sigma.size))
    return BalancedForm(
        sigma=sigma, groups=groups, S=S, S_inv=S_inv, L=L, R=R, U=U, V=V
    )


def apply_state_transformation(sys, S, S_inv=None):
    """Similarity transform (A, N, B, C) -> (S^-1 A S, S^-1 N S, S^-1 B, C S)."""
    if S_inv is None:
        S_inv = np.linalg.inv(S)
    return StochasticSystem(
        S_inv @ sys.A @ S,
        tuple(S_inv @ N @ S for N in sys.N_list),
        S_inv @ sys.B,
        sys.C @ S,
        name=sys.name,
    )


@dataclass(eq=False)
class ReductionResult:
    reduced: StochasticSystem
    kind: str | None
    r_groups: int
    r_state: int
    sigma: np.ndarray
    kept_sigma: np.ndarray
    truncated_sigma: np.ndarray
    bound: float | None
    S1: np.ndarray
    T1: np.ndarray
    pair: gramians.GramianPair | None = None
    reduced_stable: bool | None = None


def truncate(sys, form, r_groups, kind=None):
    """Truncate the balanced realization after the first ``r_groups``
    groups of singular values.

    The reduced blocks are T1 A S1, T1 N_j S1, T1 B, C S1 with
    S1 = S[:, :r] and T1 = S^-1[:r, :], formed from the kept part of the
    spectrum only.  The error bound (twice the sum of the distinct
    truncated singular values) is attached for type II pairs.
    """
    require_valid(sys)
    nu = form.n_groups
    if not 1 <= r_groups < nu:
        raise DomainError(
            f"r_groups must satisfy 1 <= r < {nu} (number of sigma groups), got {r_groups}"
        )
    r_state = form.groups[r_groups - 1][1]
    kept = form.sigma[:r_state]
    if kept[-1] <= SIGMA_COND_FLOOR * form.sigma[0]:
        raise NearZeroSigmaError(
            f"kept sigma block reaches {kept[-1]:.3e} (sigma_1 = {form.sigma[0]:.3e}); "
            "truncation maps are ill-conditioned at this order"
        )
    inv_sqrt = kept**-0.5
    S1 = (form.L @ form.V[:, :r_state]) * inv_sqrt
    T1 = (form.U[:, :r_state].T @ form.R) * inv_sqrt[:, None]
    reduced = StochasticSystem(
        T1 @ sys.A @ S1,
        tuple(T1 @ N @ S1 for N in sys.N_list),
        T1 @ sys.B,
        sys.C @ S1,
        name=f"{sys.name or 'system'}[r={r_state}]",
    )
    values = form.group_values()
    bound = 2.0 * float(values[r_groups:].sum()) if kind == gramians.TYPE_II else None
    return ReductionResult(
        reduced=reduced,
        kind=kind,
        r_groups=r_groups,
        r_state=r_state,
        sigma=form.sigma.copy(),
        kept_sigma=form.sigma[:r_state].copy(),
        truncated_sigma=form.sigma[r_state:].copy(),
        bound=bound,
        S1=S1,
        T1=T1,
    )


def snap_r_state(form, r_state):
    """Largest group count whose total size does not exceed ``r_state``.

    Warns when the requested state dimension falls inside a sigma group.
    """
    boundaries = [b for _, b in form.groups]
    r_groups = 0
    for g, b in enumerate(boundaries, start=1):
        if b <= r_state:
            r_groups = g
    if r_groups == 0:
        raise DomainError(
            f"requested order {r_state} is smaller than the first sigma group "
            f"(size {boundaries[0]})"
        )
    if boundaries[r_groups - 1] != r_state:
        warnings.warn(
            f"requested order {r_state} splits a sigma group; "
            f"snapping down to {boundaries[r_groups - 1]}",
            stacklevel=2,
        )
    return r_groups


def reduce_from_pair(sys, pair, r_groups=None, r_state=None, group_tol=1e-8):
    """Balance a Gramian pair and truncate; verifies reduced stability.

    Exactly one of ``r_groups`` / ``r_state`` must be given; a raw state
    dimension is snapped down to the nearest group boundary.  Loss of
    mean-square stability in the reduced system contradicts the
    preservation theorems for valid pairs and raises StabilityLostError.
    """
    form = balance(pair.P, pair.Q, group_tol=group_tol)
    if (r_groups is None) == (r_state is None):
        raise DomainError("specify exactly one of r_groups or r_state")
    if r_state is not None:
        r_groups = snap_r_state(form, r_state)
    result = truncate(sys, form, r_groups, kind=pair.kind)
    result.pair = pair
    red = result.reduced
    result.reduced_stable = lyapunov.is_ms_stable(red.A, red.N_list)
    if not result.reduced_stable:
        raise StabilityLostError(
            f"reduced system of order {result.r_state} lost mean-square "
            "stability; the truncation theorems exclude this for separated "
            "sigma groups"
        )
    return result


def reduce_pipeline(
    sys,
    kind,
    r_groups=None,
    r_state=None,
    group_tol=1e-8,
    method="optimize",
    objective=gramians.TRACE_PQ,
    ip_params=None,
    P=None,
):
    """Gramians (per kind), balancing, truncation, stability verdict."""
    if kind == gramians.TYPE_I:
        pair = gramians.type1_gramians(sys)
    elif kind == gramians.TYPE_II:
        pair = gramians.type2_pair(
            sys, method=method, objective=objective, ip_params=ip_params, P=P
        )
    else:
        raise DomainError(f"kind must be 'I' or 'II', got {kind!r}")
    return reduce_from_pair(
        sys, pair, r_groups=r_groups, r_state=r_state, group_tol=group_tol
    )
