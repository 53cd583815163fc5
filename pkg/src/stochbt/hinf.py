"""Stochastic H-infinity norm via bisection over gamma with a
Newton-Kleinman Riccati feasibility oracle, plus the full-vs-reduced
error system whose norm is the truncation error.

Feasibility of

    A'X + XA + sum_j Nj'X Nj + C'C + gamma^-2 X B B' X <= 0,  X >= 0,

certifies that the induced input-output norm is at most gamma (bounded
real lemma).  The norm itself is returned as a certified bracket
[gamma_lo, gamma_hi] rather than a point estimate.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg, lyapunov
from .errors import (
    BracketFailureError,
    DimensionMismatchError,
    DomainError,
    NotPositiveDefiniteError,
    NotStableError,
    NumericalError,
    SingularOperatorError,
)
from .system import StochasticSystem, require_valid

CONVERGED = "converged"
FLOOR_REACHED = "floor_reached"

# gamma^-2 amplifies roundoff catastrophically below this level
GAMMA_FLOOR = 1e-7


@dataclass
class RiccatiProbe:
    feasible: bool
    X: np.ndarray | None
    reason: str
    iterations: int
    residual: float
    iterates: list | None = None


@dataclass
class HinfResult:
    gamma_lo: float
    gamma_hi: float
    X_cert: np.ndarray | None
    iterations: int
    status: str

    @property
    def estimate(self):
        return 0.5 * (self.gamma_lo + self.gamma_hi)


def riccati_residual(sys, X, gamma):
    """R(X) = A'X + XA + sum Nj'X Nj + C'C + gamma^-2 X B B' X."""
    out = sys.A.T @ X + X @ sys.A + sys.C.T @ sys.C
    for N in sys.N_list:
        out += N.T @ X @ N
    XB = X @ sys.B
    out += (XB @ XB.T) / gamma**2
    return linalg.symmetrize(out)


def _require_stable(sys):
    require_valid(sys)
    if not lyapunov.is_ms_stable(sys.A, sys.N_list):
        raise NotStableError(
            f"system {sys.name or ''} is not asymptotically mean-square stable"
        )


def riccati_feasible(sys, gamma, max_iter=100, keep_iterates=False, check_stable=True):
    """Newton-Kleinman probe for the Riccati inequality at level gamma.

    Starting from X = 0, each step solves the generalized Lyapunov
    equation with the closed-loop drift A + gamma^-2 B B' X_k and
    right-hand side -C'C + gamma^-2 X_k B B' X_k.  Feasible once the
    Riccati residual drops below 1e-9 (1 + ||C'C||_F) with X essentially
    PSD; infeasible when the closed loop loses mean-square stability,
    the iterates blow past 1e12 ||C'C||, or the iteration cap is hit.
    """
    if gamma <= 0:
        raise DomainError(f"gamma must be > 0, got {gamma}")
    if check_stable:
        _require_stable(sys)
    n = sys.n
    CtC = sys.C.T @ sys.C
    ctc_norm = float(np.linalg.norm(CtC))
    res_tol = 1e-9 * (1.0 + ctc_norm)
    div_cap = 1e12 * max(1.0, ctc_norm)
    g2 = gamma**-2
    eye = np.eye(n)
    X = np.zeros((n, n))
    trace = [] if keep_iterates else None
    for it in range(max_iter):
        res = riccati_residual(sys, X, gamma)
        res_norm = float(np.linalg.norm(res))
        if res_norm <= res_tol:
            w, _ = linalg.sym_eig(X)
            if w[0] >= -1e-8 * max(1.0, float(abs(w).max(initial=0.0))):
                return RiccatiProbe(
                    feasible=True,
                    X=X,
                    reason="residual below tolerance",
                    iterations=it,
                    residual=res_norm,
                    iterates=trace,
                )
            return RiccatiProbe(
                feasible=False,
                X=None,
                reason="converged to a non-PSD solution",
                iterations=it,
                residual=res_norm,
                iterates=trace,
            )
        XB = X @ sys.B
        A_cl = sys.A + g2 * (sys.B @ XB.T)
        op = lyapunov.GenLyapOperator(A_cl, sys.N_list, lyapunov.PRIMAL)
        try:
            cert = op.solve(-eye)
            linalg.cholesky_pd(cert)
            X_next = op.solve(-CtC + g2 * (XB @ XB.T))
        except (SingularOperatorError, NumericalError, NotPositiveDefiniteError):
            return RiccatiProbe(
                feasible=False,
                X=None,
                reason="closed loop lost mean-square stability",
                iterations=it,
                residual=res_norm,
                iterates=trace,
            )
        X = linalg.symmetrize(X_next)
        if keep_iterates:
            trace.append(X.copy())
        if float(np.linalg.norm(X)) > div_cap:
            return RiccatiProbe(
                feasible=False,
                X=None,
                reason="iterates diverged",
                iterations=it + 1,
                residual=res_norm,
                iterates=trace,
            )
    return RiccatiProbe(
        feasible=False,
        X=None,
        reason=f"no convergence within {max_iter} iterations",
        iterations=max_iter,
        residual=float(np.linalg.norm(riccati_residual(sys, X, gamma))),
        iterates=trace,
    )


def hinf_norm(sys, tol_rel=1e-4, gamma_floor=GAMMA_FLOOR, max_doublings=200):
    """Certified bracket for the stochastic H-infinity norm.

    Bisection over gamma: the lower end is certified infeasible, the
    upper end carries a Riccati certificate.  The initial upper end is
    ||C|| ||B|| / |spectral abscissa|, doubled until feasible.  Levels
    below ``gamma_floor`` are never certified; the bracket is returned
    with status "floor_reached" instead (the norm may be as small as 0).
    """
    if tol_rel <= 0:
        raise DomainError("tol_rel must be > 0")
    _require_stable(sys)
    norm_C = float(np.linalg.norm(sys.C, 2))
    norm_B = float(np.linalg.norm(sys.B, 2))
    iterations = 0

    if norm_C == 0.0 or norm_B == 0.0:
        probe = riccati_feasible(sys, gamma_floor, check_stable=False)
        return HinfResult(0.0, gamma_floor, probe.X, 1, FLOOR_REACHED)

    alpha = lyapunov.spectral_abscissa(sys.A, sys.N_list)
    hi = norm_C * norm_B / max(abs(alpha), 1e-12)
    hi = max(hi, 2.0 * gamma_floor)
    cert = None
    for _ in range(max_doublings):
        probe = riccati_feasible(sys, hi, check_stable=False)
        iterations += 1
        if probe.feasible:
            cert = probe.X
            break
        hi *= 2.0
    else:
        raise BracketFailureError(
            f"no feasible gamma found up to {hi:.3e}; cannot bracket the norm"
        )

    lo = 0.0
    status = CONVERGED
    while hi - lo > tol_rel * hi:
        mid = 0.5 * (lo + hi)
        if mid <= gamma_floor:
            status = FLOOR_REACHED
            break
        probe = riccati_feasible(sys, mid, check_stable=False)
        iterations += 1
        if probe.feasible:
            hi = mid
            cert = probe.X
        else:
            lo = mid
    return HinfResult(lo, hi, cert, iterations, status)


def build_error_system(full, reduced):
    """Compose the system whose output is y - y_r under shared noise.

    Block-diagonal drift and noise, stacked inputs, and output
    [C, -C_r]; order n + r.
    """
    require_valid(full)
    require_valid(reduced)
    if full.m != reduced.m or full.p != reduced.p or full.k != reduced.k:
        raise DimensionMismatchError(
            "full and reduced systems must share input, output and noise "
            f"dimensions; got (m,p,k)=({full.m},{full.p},{full.k}) vs "
            f"({reduced.m},{reduced.p},{reduced.k})"
        )
    n, r = full.n, reduced.n
    A_e = np.zeros((n + r, n + r))
    A_e[:n, :n] = full.A
    A_e[n:, n:] = reduced.A
    N_e = []
    for Nf, Nr in zip(full.N_list, reduced.N_list):
        N = np.zeros((n + r, n + r))
        N[:n, :n] = Nf
        N[n:, n:] = Nr
        N_e.append(N)
    B_e = np.vstack([full.B, reduced.B])
    C_e = np.hstack([full.C, -reduced.C])
    return StochasticSystem(
        A_e,
        tuple(N_e),
        B_e,
        C_e,
        name=f"error({full.name or 'full'}, {reduced.name or 'reduced'})",
    )


@dataclass
class ErrorNormResult:
    hinf: HinfResult
    bound: float | None
    bound_satisfied: bool | None


def truncation_error_norm(full, reduction, tol_rel=1e-4, gamma_floor=GAMMA_FLOOR):
    """H-infinity norm of the full-vs-reduced error system.

    When the reduction carries a type II bound the result also reports
    whether the certified upper bracket respects it.
    """
    err_sys = build_error_system(full, reduction.reduced)
    res = hinf_norm(err_sys, tol_rel=tol_rel, gamma_floor=gamma_floor)
    bound = reduction.bound
    satisfied = None
    if bound is not None:
        satisfied = bool(res.gamma_hi <= bound + 1e-6)
    return ErrorNormResult(hinf=res, bound=bound, bound_satisfied=satisfied)
