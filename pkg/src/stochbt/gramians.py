"""Dual Gramian pairs for multiplicative-noise systems.

Type I solves the classic pair of generalized Lyapunov equations with
equality.  Type II keeps the observability equation but replaces the
reachability side by the inversion-free inequality, solved here either
by the scaling construction (baseline, always feasible) or by a
self-contained logarithmic-barrier interior-point optimizer over the
equivalent linear matrix inequality.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import linalg, lyapunov
from .errors import (
    DimensionMismatchError,
    DomainError,
    InfeasibleStartError,
    LineSearchStallError,
    MaxIterationsError,
    NotStableError,
    SingularGramianError,
)
from .system import require_valid

TYPE_I = "I"
TYPE_II = "II"

TRACE_P = "trace_p"
TRACE_PQ = "trace_pq"


@dataclass(frozen=True, eq=False)
class GramianPair:
    P: np.ndarray
    Q: np.ndarray
    kind: str
    slack_Q: np.ndarray
    slack_P: np.ndarray


def _require_stable(sys):
    require_valid(sys)
    if not lyapunov.is_ms_stable(sys.A, sys.N_list):
        raise NotStableError(
            f"system {sys.name or ''} is not asymptotically mean-square stable"
        )


def _require_pd(X, label):
    # Gramians of stiff systems decay to roundoff level; only a spectrum
    # that dips significantly below zero flags a genuine failure.
    w, _ = linalg.sym_eig(X)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w[0] < -1e-10 * scale:
        raise SingularGramianError(
            f"{label} is not positive (semi)definite (min eigenvalue {w[0]:.6g}); "
            "the system is not fully reachable/observable",
            min_eigenvalue=float(w[0]),
        )


def observability_gramian(sys):
    """Solve the observability equation A'Q + QA + sum N'QN = -C'C."""
    _require_stable(sys)
    op = lyapunov.GenLyapOperator(sys.A, sys.N_list, lyapunov.PRIMAL)
    Q = op.solve(-sys.C.T @ sys.C)
    return linalg.symmetrize(Q), op


def type1_gramians(sys):
    """Both equations of the classic pair, solved with equality."""
    Q, op = observability_gramian(sys)
    adj = op.adjoint()
    P = linalg.symmetrize(adj.solve(-sys.B @ sys.B.T))
    _require_pd(P, "reachability Gramian P")
    _require_pd(Q, "observability Gramian Q")
    slack_Q = -sys.C.T @ sys.C - op.apply(Q)
    slack_P = -sys.B @ sys.B.T - adj.apply(P)
    return GramianPair(P=P, Q=Q, kind=TYPE_I, slack_Q=slack_Q, slack_P=slack_P)


def type2_q(sys):
    """Observability side of the inversion-free pair (same equation as type I)."""
    Q, _ = observability_gramian(sys)
    return Q


def type2_p_baseline(sys, eps_shrink=0.5):
    """Feasible P for the inversion-free reachability inequality.

    Solves the primal equation with right-hand side -I for Z = P_tilde^-1
    and scales: the largest eps in {1, eps_shrink, eps_shrink^2, ...} with
    eps * lambda_max(Z B B' Z) <= 1 makes P = Z^-1 / eps strictly feasible.
    """
    if not 0.0 < eps_shrink < 1.0:
        raise DomainError("eps_shrink must lie in (0, 1)")
    _require_stable(sys)
    op = lyapunov.GenLyapOperator(sys.A, sys.N_list, lyapunov.PRIMAL)
    Z = linalg.symmetrize(op.solve(-np.eye(sys.n)))
    ZB = Z @ sys.B
    w, _ = linalg.sym_eig(ZB @ ZB.T)
    lam = max(0.0, float(w[-1]))
    eps = 1.0
    while eps * lam > 1.0:
        eps *= eps_shrink
    L = linalg.cholesky_pd(Z)
    Zinv = scipy.linalg.cho_solve((L, True), np.eye(sys.n), check_finite=False)
    return linalg.symmetrize(Zinv) / eps


# ---------------------------------------------------------------------------
# the LMI and its interior-point solve


def lmi_constraint(sys, P):
    """Affine constraint block G(P); feasibility means G(P) <= 0.

    Layout: [[PA' + AP + BB', PN_1', ..., PN_k'],
             [N_1 P, -P,  0, ...],
             [ ...            -P ]]  of size (k+1)n x (k+1)n.
    """
    n, k = sys.n, sys.k
    P = linalg.as_square(P, "P")
    if P.shape[0] != n:
        raise DimensionMismatchError(f"P has shape {P.shape}, expected {(n, n)}")
    K = (k + 1) * n
    G = np.zeros((K, K))
    G[:n, :n] = P @ sys.A.T + sys.A @ P + sys.B @ sys.B.T
    for j, N in enumerate(sys.N_list):
        off = (j + 1) * n
        PNt = P @ N.T
        G[:n, off : off + n] = PNt
        G[off : off + n, :n] = PNt.T
        G[off : off + n, off : off + n] = -P
    return linalg.symmetrize(G)


def _lmi_linear_columns(sys):
    """Linear part of G applied to each packed basis element of P."""
    n, k = sys.n, sys.k
    K = (k + 1) * n
    d = linalg.svec_len(n)
    rows, cols = np.triu_indices(n)
    c = 1.0 / linalg.SQRT2
    stack = np.zeros((d, K, K))
    for idx, (i, j) in enumerate(zip(rows, cols)):
        E = np.zeros((n, n))
        if i == j:
            E[i, i] = 1.0
        else:
            E[i, j] = c
            E[j, i] = c
        G = stack[idx]
        G[:n, :n] = E @ sys.A.T + sys.A @ E
        for jn, N in enumerate(sys.N_list):
            off = (jn + 1) * n
            ENt = E @ N.T
            G[:n, off : off + n] = ENt
            G[off : off + n, :n] = ENt.T
            G[off : off + n, off : off + n] = -E
    return stack


def _svec_batch(W):
    d, K, _ = W.shape
    rows, cols = np.triu_indices(K)
    V = W[:, rows, cols]  # fancy indexing already copies
    V[:, rows != cols] *= linalg.SQRT2
    return V


def _congruence_batch(L, stack):
    """L^-1 S_i L^-T for every symmetric S_i in the stack (L lower-triangular)."""
    d, K, _ = stack.shape
    Y = scipy.linalg.solve_triangular(
        L, stack.transpose(1, 0, 2).reshape(K, d * K), lower=True, check_finite=False
    )
    Y = Y.reshape(K, d, K).transpose(1, 0, 2)
    Z = scipy.linalg.solve_triangular(
        L,
        Y.transpose(0, 2, 1).transpose(1, 0, 2).reshape(K, d * K),
        lower=True,
        check_finite=False,
    )
    Z = Z.reshape(K, d, K).transpose(1, 0, 2)
    return Z.transpose(0, 2, 1)


@dataclass
class IpParams:
    t0: float = 1.0
    mu: float = 10.0
    ip_tol: float = 1e-7
    max_newton: int = 50
    max_stages: int = 60
    armijo_c: float = 0.01
    backtrack: float = 0.5
    newton_tol: float = 1e-10
    min_step: float = 1e-14


@dataclass
class InteriorPointResult:
    P: np.ndarray
    objective: str
    objective_value: float
    stage_objectives: list = field(default_factory=list)
    newton_iterations: int = 0
    barrier_parameter: float = 0.0
    kkt_residual: float = 0.0


def _try_chol(X):
    try:
        return np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return None


def _strictly_feasible(sys, P, G0, lin_stack):
    p = linalg.svec(P)
    G = G0 + np.tensordot(p, lin_stack, axes=(0, 0))
    wG, _ = linalg.sym_eig(G)
    wP, _ = linalg.sym_eig(P)
    return wG[-1] < 0.0 and wP[0] > 0.0


def type2_p_optimize(sys, Q=None, objective=TRACE_PQ, ip_params=None, P0=None):
    """Minimize trace(P) or trace(PQ) over the feasible set of the LMI.

    Logarithmic-barrier path following in packed coordinates of P:
    each stage Newton-centers t*objective - logdet(-G(P)) - logdet(P)
    with backtracking line search, then multiplies t by mu until the
    barrier duality gap ((k+1)n + n)/t falls below ip_tol.
    """
    if objective not in (TRACE_P, TRACE_PQ):
        raise DomainError(f"objective must be {TRACE_P!r} or {TRACE_PQ!r}")
    params = ip_params or IpParams()
    _require_stable(sys)
    n, k = sys.n, sys.k
    K = (k + 1) * n

    if objective == TRACE_PQ:
        if Q is None:
            Q = type2_q(sys)
        cvec = linalg.svec(linalg.symmetrize(Q))
    else:
        cvec = linalg.svec(np.eye(n))

    lin_stack = _lmi_linear_columns(sys)
    G0 = np.zeros((K, K))
    G0[:n, :n] = sys.B @ sys.B.T

    if P0 is None:
        base = type2_p_baseline(sys)
        start = None
        for factor in [0.99] + [2.0**j for j in range(0, 40)]:
            cand = factor * base
            if _strictly_feasible(sys, cand, G0, lin_stack):
                start = cand
                break
        if start is None:
            raise InfeasibleStartError("no strictly feasible start from the baseline")
        P0 = start
    elif not _strictly_feasible(sys, P0, G0, lin_stack):
        raise InfeasibleStartError("supplied start point is not strictly feasible")

    eye_n = np.eye(n)
    eye_K = np.eye(K)
    rows_n, cols_n = np.triu_indices(n)
    basis_stack = np.zeros((linalg.svec_len(n), n, n))
    cfac = 1.0 / linalg.SQRT2
    for idx, (i, j) in enumerate(zip(rows_n, cols_n)):
        if i == j:
            basis_stack[idx, i, i] = 1.0
        else:
            basis_stack[idx, i, j] = cfac
            basis_stack[idx, j, i] = cfac
    lin_svec = _svec_batch(lin_stack)  # rows: svec of the LMI image of each basis element

    def chol_state(p):
        P = linalg.smat(p)
        G = G0 + np.tensordot(p, lin_stack, axes=(0, 0))
        Ls = _try_chol(-G)
        if Ls is None:
            return None
        Lp = _try_chol(P)
        if Lp is None:
            return None
        return P, Ls, Lp

    def phi(p, t, state):
        _, Ls, Lp = state
        return (
            t * float(cvec @ p)
            - 2.0 * float(np.log(np.diag(Ls)).sum())
            - 2.0 * float(np.log(np.diag(Lp)).sum())
        )

    def gradient(p, state, t):
        _, Ls, Lp = state
        Sinv = scipy.linalg.cho_solve((Ls, True), eye_K, check_finite=False)
        Pinv = scipy.linalg.cho_solve((Lp, True), eye_n, check_finite=False)
        g = t * cvec + lin_svec @ linalg.svec(linalg.symmetrize(Sinv))
        g -= linalg.svec(linalg.symmetrize(Pinv))
        return g

    def hessian(state):
        _, Ls, Lp = state
        M = _svec_batch(_congruence_batch(Ls, lin_stack))
        H = M @ M.T
        Mp = _svec_batch(_congruence_batch(Lp, basis_stack))
        H += Mp @ Mp.T
        return H

    def newton_step(H, grad):
        for jitter in (0.0, 1e-12, 1e-9, 1e-6):
            Hj = H
            if jitter:
                Hj = H + jitter * np.trace(H) / H.shape[0] * np.eye(H.shape[0])
            try:
                cf = scipy.linalg.cho_factor(Hj, check_finite=False)
                return scipy.linalg.cho_solve(cf, -grad, check_finite=False)
            except scipy.linalg.LinAlgError:
                continue
        raise MaxIterationsError("Newton system could not be factored")

    p = linalg.svec(P0)
    t = params.t0
    stage_objectives = []
    newton_total = 0
    converged = False
    state = chol_state(p)
    if state is None:
        raise InfeasibleStartError("start point left the feasible cone")
    for _ in range(params.max_stages):
        for _ in range(params.max_newton):
            grad = gradient(p, state, t)
            step = newton_step(hessian(state), grad)
            decrement2 = float(-grad @ step)
            if decrement2 / 2.0 <= params.newton_tol:
                break
            newton_total += 1

            f0 = phi(p, t, state)
            slope = float(grad @ step)
            noise = 1e-14 * (1.0 + abs(f0))
            quadratic_phase = -slope <= noise  # Armijo unmeasurable at this scale
            alpha = 1.0
            stagnated = False
            while True:
                cand = p + alpha * step
                cand_state = chol_state(cand)
                if cand_state is not None:
                    f_new = phi(cand, t, cand_state)
                    if quadratic_phase or f_new <= f0 + params.armijo_c * alpha * slope:
                        p = cand
                        state = cand_state
                        stagnated = not quadratic_phase and f0 - f_new <= noise
                        break
                alpha *= params.backtrack
                if alpha < params.min_step:
                    raise LineSearchStallError(
                        f"line search stalled at step {alpha:.3e}"
                    )
            if stagnated:
                # phi no longer moves at working precision
                break
        stage_objectives.append(float(cvec @ p))
        if (K + n) / t <= params.ip_tol:
            converged = True
            break
        t *= params.mu
    if not converged:
        raise MaxIterationsError(
            f"barrier stages exhausted ({params.max_stages}) before gap tolerance"
        )

    # final centering: the Armijo test is blind below the roundoff floor of
    # phi ~ t*objective, so finish with pure feasibility-guarded Newton steps
    # and keep the iterate with the smallest gradient norm
    best_p, best_state = p, state
    best_norm = float(np.linalg.norm(gradient(p, state, t)))
    stale = 0
    for _ in range(params.max_newton):
        grad = gradient(p, state, t)
        step = newton_step(hessian(state), grad)
        alpha = 1.0
        cand_state = None
        while alpha >= params.min_step:
            cand_state = chol_state(p + alpha * step)
            if cand_state is not None:
                break
            alpha *= params.backtrack
        if cand_state is None:
            break
        p = p + alpha * step
        state = cand_state
        newton_total += 1
        gnorm = float(np.linalg.norm(gradient(p, state, t)))
        if gnorm < best_norm:
            best_p, best_state, best_norm = p, state, gnorm
            stale = 0
        else:
            stale += 1
            if stale >= 3:
                break
    p, state = best_p, best_state

    kkt = best_norm / t
    P = linalg.symmetrize(linalg.smat(p))
    return InteriorPointResult(
        P=P,
        objective=objective,
        objective_value=float(cvec @ p),
        stage_objectives=stage_objectives,
        newton_iterations=newton_total,
        barrier_parameter=t,
        kkt_residual=kkt,
    )


def type2_pair(sys, method="optimize", objective=TRACE_PQ, ip_params=None, P=None):
    """Assemble the inversion-free pair (P, Q) with its slack matrices.

    ``method`` selects how P is produced: "optimize" (interior point),
    "baseline" (scaling construction), or "given" with an explicit P.
    """
    Q = type2_q(sys)
    if P is not None:
        method = "given"
    if method == "optimize":
        P = type2_p_optimize(sys, Q=Q, objective=objective, ip_params=ip_params).P
    elif method == "baseline":
        P = type2_p_baseline(sys)
    elif method == "given":
        P = linalg.as_square(P, "P")
    else:
        raise DomainError(f"unknown type II method {method!r}")
    op = lyapunov.GenLyapOperator(sys.A, sys.N_list, lyapunov.PRIMAL)
    slack_Q = -sys.C.T @ sys.C - op.apply(Q)
    slack_P = -lmi_constraint(sys, P)
    _require_pd(P, "type II P")
    _require_pd(Q, "type II Q")
    return GramianPair(P=P, Q=Q, kind=TYPE_II, slack_Q=slack_Q, slack_P=slack_P)


# ---------------------------------------------------------------------------
# verification


@dataclass
class CheckReport:
    kind: str
    p_pd: bool
    q_pd: bool
    slack_q_class: str
    slack_p_class: str
    q_margin: float
    p_margin: float
    passed: bool
    messages: list = field(default_factory=list)


def check_pair(sys, pair, tol=1e-7):
    """Recompute both inequality slacks and classify them.

    For type II the reachability side is checked in the inversion-free
    LMI form, so no explicit inverse of P is formed.  Report-based;
    never raises on a failing pair.
    """
    require_valid(sys)
    messages = []

    def pd_ok(X, label):
        # same scale-relative floor as the Gramian computations: spectra
        # that decay to roundoff still count, indefiniteness does not
        w, _ = linalg.sym_eig(X)
        scale = max(1.0, float(np.abs(w).max(initial=0.0)))
        if w[0] < -1e-10 * scale:
            messages.append(f"{label} not PD: min eigenvalue {w[0]:.6g}")
            return False
        return True

    p_pd = pd_ok(pair.P, "P")
    q_pd = pd_ok(pair.Q, "Q")

    op = lyapunov.GenLyapOperator(sys.A, sys.N_list, lyapunov.PRIMAL)
    slack_Q = -sys.C.T @ sys.C - op.apply(linalg.symmetrize(pair.Q))
    if pair.kind == TYPE_I:
        adj = op.adjoint()
        slack_P = -sys.B @ sys.B.T - adj.apply(linalg.symmetrize(pair.P))
    elif pair.kind == TYPE_II:
        slack_P = -lmi_constraint(sys, pair.P)
    else:
        raise DomainError(f"unknown Gramian kind {pair.kind!r}")

    q_class = linalg.classify_definiteness(slack_Q, tol=tol)
    p_class = linalg.classify_definiteness(slack_P, tol=tol)
    wq, _ = linalg.sym_eig(slack_Q)
    wp, _ = linalg.sym_eig(slack_P)
    ok_q = q_class in (linalg.PD, linalg.PSD)
    ok_p = p_class in (linalg.PD, linalg.PSD)
    if not ok_q:
        messages.append(f"observability slack classified {q_class}")
    if not ok_p:
        messages.append(f"reachability slack classified {p_class}")
    return CheckReport(
        kind=pair.kind,
        p_pd=p_pd,
        q_pd=q_pd,
        slack_q_class=q_class,
        slack_p_class=p_class,
        q_margin=float(wq[0]),
        p_margin=float(wp[0]),
        passed=p_pd and q_pd and ok_q and ok_p,
        messages=messages,
    )
