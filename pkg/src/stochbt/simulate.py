"""Time-domain validation: Euler-Maruyama Monte-Carlo under shared
Wiener increments, second-moment propagation, and empirical
mean-square-stability estimation.

Wiener increments come from a counter-based generator (Philox) keyed by
(seed, step); within a step, the value for a given (path, channel) pair
sits at a fixed position of the raw counter stream and is mapped to a
normal deviate by the inverse CDF.  Full and reduced systems therefore
see bit-identical noise, and runs are reproducible for a fixed
configuration regardless of scheduling.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import linalg
from .errors import DimensionMismatchError, DomainError, StepInstabilityError
from .system import require_valid

BLOWUP_NORM = 1e12

_INITIAL_STATE_TAG = 0xFFFFFFFFFFFFFFFF  # reserved step key for initial draws


def _resolve_input(u, m):
    """Normalize the input spec to a callable t -> vector of length m."""
    if u is None or (isinstance(u, str) and u == "zero"):
        zero = np.zeros(m)
        return lambda t: zero
    if callable(u):
        return lambda t: np.asarray(u(t), dtype=float).reshape(m)
    vec = np.asarray(u, dtype=float).reshape(-1)
    if vec.size != m:
        raise DimensionMismatchError(
            f"constant input has {vec.size} entries, expected {m}"
        )
    return lambda t: vec


@dataclass(frozen=True)
class SimConfig:
    t_final: float = 20.0
    dt: float = 1e-3
    n_paths: int = 10_000
    seed: int = 0
    u: object = None  # None/"zero", constant vector, or callable t -> vector
    record_stride: int = 0  # 0 = choose automatically (~2000 recorded points)

    def __post_init__(self):
        if self.dt <= 0:
            raise DomainError("dt must be > 0")
        if self.t_final < self.dt:
            raise DomainError("t_final must be >= dt")
        if self.n_paths < 1:
            raise DomainError("n_paths must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def stride(self):
        if self.record_stride > 0:
            return self.record_stride
        return max(1, self.n_steps // 2000)


def wiener_increments(seed, step, n_paths, k, dt):
    """Normal(0, dt) increments for every (path, channel) at one step."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(step)], dtype=np.uint64)
    bg = np.random.Philox(key=key)
    raw = bg.random_raw(n_paths * k)
    u = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53 + 2.0**-54
    return ndtri(u).reshape(n_paths, k) * np.sqrt(dt)


@dataclass
class SimResult:
    t: np.ndarray
    mean_err: np.ndarray
    q05: np.ndarray
    q50: np.ndarray
    q95: np.ndarray
    u_l2: float
    err_l2: float
    err_l2_halfwidth: float
    err_l2_sq_mean: float
    err_l2_sq_se: float
    n_paths: int
    n_diverged: int
    diverged_paths: list = field(default_factory=list)


def simulate_pair(full, reduced, cfg):
    """Euler-Maruyama on the full and reduced systems under shared noise.

    Both start from the zero state.  Records the cross-path mean and
    5/50/95% quantiles of ||y - y_r|| on the (strided) time grid and
    trapezoid estimates of the squared L2 norms of u and y - y_r over
    [0, t_final], with a one-standard-error half-width for the latter.
    """
    require_valid(full)
    require_valid(reduced)
    if full.m != reduced.m or full.p != reduced.p or full.k != reduced.k:
        raise DimensionMismatchError(
            "full and reduced systems must share input/output/noise dimensions"
        )
    n, r, m, k = full.n, reduced.n, full.m, full.k
    u_fun = _resolve_input(cfg.u, m)
    steps = cfg.n_steps
    stride = cfg.stride
    dt = cfg.dt
    paths = cfg.n_paths

    x = np.zeros((paths, n))
    xr = np.zeros((paths, r))
    At, Bt, Ct = full.A.T, full.B.T, full.C.T
    Art, Brt, Crt = reduced.A.T, reduced.B.T, reduced.C.T
    Nt = [N.T for N in full.N_list]
    Nrt = [N.T for N in reduced.N_list]

    rec_t, rec_mean, rec_q = [], [], []

    def record(t_now, err_now):
        rec_t.append(t_now)
        rec_mean.append(float(err_now.mean()))
        rec_q.append(np.percentile(err_now, [5.0, 50.0, 95.0]))

    err_now = np.zeros(paths)
    record(0.0, err_now)

    acc_err2 = np.zeros(paths)  # trapezoid accumulators
    acc_u2 = 0.0
    prev_err2 = np.zeros(paths)
    prev_u2 = float(u_fun(0.0) @ u_fun(0.0))
    alive = np.ones(paths, dtype=bool)
    diverged = []

    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(steps):
            t_now = i * dt
            u_now = u_fun(t_now)
            dW = wiener_increments(cfg.seed, i, paths, k, dt)
            dx = dt * (x @ At + u_now @ Bt)
            dxr = dt * (xr @ Art + u_now @ Brt)
            for j in range(k):
                w = dW[:, j : j + 1]
                dx += w * (x @ Nt[j])
                dxr += w * (xr @ Nrt[j])
            x = x + dx
            xr = xr + dxr

            if alive.any():
                norms = np.linalg.norm(x, axis=1)
                blow = alive & ~((norms <= BLOWUP_NORM) & np.isfinite(norms))
                if blow.any():
                    diverged.extend(np.flatnonzero(blow).tolist())
                    alive &= ~blow

            diff = x @ Ct - xr @ Crt
            err2 = np.einsum("ij,ij->i", diff, diff)
            acc_err2 += 0.5 * dt * (prev_err2 + err2)
            prev_err2 = err2
            t_next = (i + 1) * dt
            u_next = u_fun(t_next)
            u2 = float(u_next @ u_next)
            acc_u2 += 0.5 * dt * (prev_u2 + u2)
            prev_u2 = u2
            if (i + 1) % stride == 0 or i + 1 == steps:
                record(t_next, np.sqrt(err2))

    mean_I = float(np.mean(acc_err2))
    se_I = (
        float(np.std(acc_err2, ddof=1) / np.sqrt(paths)) if paths > 1 else 0.0
    )
    err_l2 = float(np.sqrt(max(mean_I, 0.0)))
    halfwidth = se_I / (2.0 * err_l2) if err_l2 > 0 else float(np.sqrt(se_I))
    quant = np.array(rec_q) if rec_q else np.zeros((0, 3))
    return SimResult(
        t=np.array(rec_t),
        mean_err=np.array(rec_mean),
        q05=quant[:, 0],
        q50=quant[:, 1],
        q95=quant[:, 2],
        u_l2=float(np.sqrt(acc_u2)),
        err_l2=err_l2,
        err_l2_halfwidth=halfwidth,
        err_l2_sq_mean=mean_I,
        err_l2_sq_se=se_I,
        n_paths=paths,
        n_diverged=len(diverged),
        diverged_paths=sorted(set(diverged)),
    )


@dataclass
class MomentTrajectory:
    t: np.ndarray
    trace: np.ndarray
    P_final: np.ndarray


def moment_propagate(A, N_list, P0, t_final, dt, check_step=True):
    """Propagate the second-moment matrix dP/dt = AP + PA' + sum N P N'.

    Classical RK4 on the matrix ODE; returns E||x(t)||^2 = trace P(t)
    on the step grid.  With ``check_step`` the run is compared against a
    halved-step rerun and a relative trace mismatch above 1% raises
    StepInstabilityError.
    """
    A = linalg.as_square(A, "A")
    P = linalg.symmetrize(linalg.as_square(P0, "P0")).copy()
    if dt <= 0 or t_final < dt:
        raise DomainError("need dt > 0 and t_final >= dt")
    steps = int(round(t_final / dt))

    def rhs(M):
        out = A @ M + M @ A.T
        for N in N_list:
            out += N @ M @ N.T
        return out

    traces = np.empty(steps + 1)
    traces[0] = np.trace(P)
    for i in range(steps):
        k1 = rhs(P)
        k2 = rhs(P + 0.5 * dt * k1)
        k3 = rhs(P + 0.5 * dt * k2)
        k4 = rhs(P + dt * k3)
        P = linalg.symmetrize(P + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
        traces[i + 1] = np.trace(P)
    t = np.arange(steps + 1) * dt
    if check_step:
        fine = moment_propagate(A, N_list, P0, t_final, dt / 2.0, check_step=False)
        coarse_at_fine = traces
        fine_at_coarse = fine.trace[::2][: steps + 1]
        scale = max(1.0, float(np.abs(fine_at_coarse).max()))
        if not np.all(np.isfinite(traces)) or (
            np.abs(coarse_at_fine - fine_at_coarse).max() > 1e-2 * scale
        ):
            raise StepInstabilityError(
                "moment propagation inconsistent under step halving; reduce dt"
            )
    return MomentTrajectory(t=t, trace=traces, P_final=P)


@dataclass
class EmpiricalStability:
    verdict: str  # "stable", "unstable", or "inconclusive"
    decay_rate: float
    r_squared: float
    t: np.ndarray
    mean_square: np.ndarray
    mean_square_se: np.ndarray  # cross-path standard error of the mean


def empirical_ms_stable(A, N_list, cfg):
    """Monte-Carlo mean-square trajectory from random unit initial states.

    Fits log E||x(t)||^2 linearly in t; the slope sign gives the verdict
    and R^2 < 0.5 (or a slope indistinguishable from zero) is reported
    as inconclusive.
    """
    A = linalg.as_square(A, "A")
    n = A.shape[0]
    k = len(N_list)
    paths = cfg.n_paths
    dt = cfg.dt
    steps = cfg.n_steps
    stride = cfg.stride

    key = np.array(
        [np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF), np.uint64(_INITIAL_STATE_TAG)],
        dtype=np.uint64,
    )
    raw = np.random.Philox(key=key).random_raw(paths * n)
    uni = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53 + 2.0**-54
    x = ndtri(uni).reshape(paths, n)
    x /= np.linalg.norm(x, axis=1, keepdims=True)

    At = A.T
    Nt = [np.asarray(N, dtype=float).T for N in N_list]

    def record_point(x):
        sq = np.einsum("ij,ij->i", x, x)
        se = float(np.std(sq, ddof=1) / np.sqrt(paths)) if paths > 1 else 0.0
        return float(sq.mean()), se

    m0, se0 = record_point(x)
    ts, msq, ses = [0.0], [m0], [se0]
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(steps):
            dW = wiener_increments(cfg.seed, i, paths, k, dt)
            dx = dt * (x @ At)
            for j in range(k):
                dx += dW[:, j : j + 1] * (x @ Nt[j])
            x = x + dx
            if (i + 1) % stride == 0 or i + 1 == steps:
                mi, sei = record_point(x)
                ts.append((i + 1) * dt)
                msq.append(mi)
                ses.append(sei)
    t = np.array(ts)
    m = np.array(msq)
    good = np.isfinite(m) & (m > 0)
    if good.sum() < 3:
        return EmpiricalStability("unstable", np.inf, 1.0, t, m, np.array(ses))
    logm = np.log(m[good])
    tt = t[good]
    slope, intercept = np.polyfit(tt, logm, 1)
    fit = slope * tt + intercept
    ss_res = float(np.sum((logm - fit) ** 2))
    ss_tot = float(np.sum((logm - logm.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if r2 < 0.5:
        verdict = "inconclusive"
    elif slope < 0:
        verdict = "stable"
    else:
        verdict = "unstable"
    return EmpiricalStability(verdict, float(slope), float(r2), t, m, np.array(ses))
