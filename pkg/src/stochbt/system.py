"""State-space model for linear systems driven by multiplicative white
noise, builtin benchmark generators, and a JSON file format.

A system is the tuple (A, N_1..N_k, B, C) of the Ito dynamics

    dx = A x dt + sum_j N_j x dw_j + B u dt,    y = C x,

with n states, k independent scalar noise channels, m inputs and p
outputs.
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SystemFormatError


def _as_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    return M


@dataclass(frozen=True, eq=False)
class StochasticSystem:
    A: np.ndarray
    N_list: tuple
    B: np.ndarray
    C: np.ndarray
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A))
        object.__setattr__(self, "N_list", tuple(_as_matrix(N) for N in self.N_list))
        object.__setattr__(self, "B", _as_matrix(self.B))
        object.__setattr__(self, "C", _as_matrix(self.C))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def k(self):
        return len(self.N_list)

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    def renamed(self, name):
        return StochasticSystem(self.A, self.N_list, self.B, self.C, name=name)


@dataclass
class ValidationReport:
    ok: bool
    errors: list
    n: int = 0
    k: int = 0
    m: int = 0
    p: int = 0


def validate(sys):
    """Check shapes and finiteness.  Returns a report, never raises."""
    errs = []
    A, B, C = sys.A, sys.B, sys.C
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        errs.append(f"A must be square, got shape {A.shape}")
    n = A.shape[0]
    if n < 1:
        errs.append("state dimension must be >= 1")
    if len(sys.N_list) < 1:
        errs.append("at least one noise channel is required")
    for j, N in enumerate(sys.N_list):
        if N.shape != (n, n):
            errs.append(f"N[{j}] has shape {N.shape}, expected {(n, n)}")
    if B.ndim != 2 or B.shape[0] != n:
        errs.append(f"B has shape {B.shape}, expected ({n}, m)")
    if B.size and B.shape[1] < 1:
        errs.append("input dimension must be >= 1")
    if C.ndim != 2 or C.shape[1] != n:
        errs.append(f"C has shape {C.shape}, expected (p, {n})")
    for label, M in [("A", A), ("B", B), ("C", C)] + [
        (f"N[{j}]", N) for j, N in enumerate(sys.N_list)
    ]:
        if not np.all(np.isfinite(M)):
            errs.append(f"{label} contains non-finite entries")
    ok = not errs
    return ValidationReport(
        ok=ok,
        errors=errs,
        n=n if ok else 0,
        k=sys.k if ok else 0,
        m=B.shape[1] if ok else 0,
        p=C.shape[0] if ok else 0,
    )


def require_valid(sys):
    rep = validate(sys)
    if not rep.ok:
        raise DomainError("invalid system: " + "; ".join(rep.errors))
    return rep


@dataclass(frozen=True, eq=False)
class PartitionedSystem:
    """Blocks of a system split after the first `r_state` states."""

    parent: StochasticSystem
    r_state: int
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    N11: tuple
    N12: tuple
    N21: tuple
    N22: tuple
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray

    def reassemble(self):
        A = np.block([[self.A11, self.A12], [self.A21, self.A22]])
        N_list = tuple(
            np.block([[n11, n12], [n21, n22]])
            for n11, n12, n21, n22 in zip(self.N11, self.N12, self.N21, self.N22)
        )
        B = np.vstack([self.B1, self.B2])
        C = np.hstack([self.C1, self.C2])
        return StochasticSystem(A, N_list, B, C, name=self.parent.name)


def partition(sys, r_state):
    require_valid(sys)
    n = sys.n
    if not 1 <= r_state < n:
        raise DomainError(f"split index must satisfy 1 <= r < {n}, got {r_state}")
    r = r_state
    return PartitionedSystem(
        parent=sys,
        r_state=r,
        A11=sys.A[:r, :r].copy(),
        A12=sys.A[:r, r:].copy(),
        A21=sys.A[r:, :r].copy(),
        A22=sys.A[r:, r:].copy(),
        N11=tuple(N[:r, :r].copy() for N in sys.N_list),
        N12=tuple(N[:r, r:].copy() for N in sys.N_list),
        N21=tuple(N[r:, :r].copy() for N in sys.N_list),
        N22=tuple(N[r:, r:].copy() for N in sys.N_list),
        B1=sys.B[:r, :].copy(),
        B2=sys.B[r:, :].copy(),
        C1=sys.C[:, :r].copy(),
        C2=sys.C[:, r:].copy(),
    )


# ---------------------------------------------------------------------------
# builtin benchmark systems


def example1_system(a):
    """Two-state diagonal benchmark with a tunable spectral gap a > 1.

    The classic pair of Lyapunov equations has the closed-form solutions
    P = diag(1/2, 1/(4 a^2)) and Q = diag(1/(4 a^2), 1/(2 a^2)), and the
    ratio between the truncation error and the smallest singular value
    grows like 2a, so no fixed error-bound constant can exist for the
    classic ("type I") reduction.
    """
    a = float(a)
    if not a > 1.0:
        raise DomainError(f"parameter a must be > 1, got {a}")
    A = -np.diag([1.0, a * a])
    N = np.array([[0.0, 0.0], [1.0, 0.0]])
    B = np.array([[1.0], [0.0]])
    C = np.array([[0.0, 1.0]])
    return StochasticSystem(A, (N,), B, C, name=f"example1(a={a:g})")


def example2_system(a=2.0):
    """Same plant as example1; used with the analytic family of
    inversion-free ("type II") reachability solutions below."""
    return example1_system(a).renamed(f"example2(a={a:g})")


def example2_gramian(p, a=2.0):
    """Analytic feasible P = diag(1 + sqrt(1-p), p)^-1 for 0 < p <= 1.

    Satisfies the type II reachability inequality for the example2 plant;
    the induced bound 2*sigma_2 becomes sharp as p -> 0.
    """
    p = float(p)
    if not 0.0 < p <= 1.0:
        raise DomainError(f"parameter p must lie in (0, 1], got {p}")
    if not float(a) > 1.0:
        raise DomainError(f"parameter a must be > 1, got {a}")
    return np.diag([1.0 / (1.0 + math.sqrt(1.0 - p)), 1.0 / p])


def sec4a_system():
    """Two-state benchmark where type II truncation beats type I."""
    A = np.array([[-1.0, 1.0], [0.0, -1.0]])
    N = np.array([[0.0, 0.0], [1.0, 0.0]])
    B = np.array([[0.0], [3.0]])
    C = np.array([[3.0, 0.0]])
    return StochasticSystem(A, (N,), B, C, name="sec4a")


def sec4a_type2_reference():
    """Hand-picked feasible type II pair (P, Q) for :func:`sec4a_system`."""
    P = np.diag([8.0, 12.0])
    Q = np.array([[6.0, 3.0], [3.0, 3.0]])
    return P, Q


def ladder_system(n, R=0.1, Ltil=0.1, Ctil=0.1, Rtil=1.0):
    """RLC ladder network of n/2 sections with noisy inductances.

    The inverse inductance carries white noise, so N repeats the rows of
    A that contain 1/L factors with 1/L replaced by 1.  The drift A has
    lower bandwidth 1 and upper bandwidth <= 2; the band pattern of the
    interior sections is repeated periodically and the final row keeps
    the short [1/L, -Rtil/L] tail.
    """
    n = int(n)
    if n < 4 or n % 2 != 0:
        raise DomainError(f"ladder order must be even and >= 4, got {n}")
    for label, val in [("R", R), ("Ltil", Ltil), ("Ctil", Ctil), ("Rtil", Rtil)]:
        if not val > 0:
            raise DomainError(f"ladder parameter {label} must be > 0")

    a_cr = 1.0 / (Ctil * R)
    a_c = 1.0 / Ctil
    a_l = 1.0 / Ltil
    a_ind_d = R * Rtil / (Ltil * (R + Rtil))
    a_ind_u = Rtil / (Ltil * (R + Rtil))
    a_cap_l = Rtil / (Ctil * (R + Rtil))
    a_cap_d = 1.0 / (Ctil * (R + Rtil))
    n_ind_d = R * Rtil / (R + Rtil)
    n_ind_u = Rtil / (R + Rtil)

    A = np.zeros((n, n))
    N = np.zeros((n, n))
    A[0, 0] = -a_cr
    A[0, 1] = -a_c
    for i in range(1, n, 2):  # inductor rows
        if i < n - 1:
            A[i, i - 1] = a_l
            A[i, i] = -a_ind_d
            A[i, i + 1] = -a_ind_u
            N[i, i - 1] = 1.0
            N[i, i] = -n_ind_d
            N[i, i + 1] = -n_ind_u
        else:  # last section closes on the terminating resistor
            A[i, i - 1] = a_l
            A[i, i] = -Rtil / Ltil
            N[i, i - 1] = 1.0
            N[i, i] = -Rtil
    for i in range(2, n - 1, 2):  # interior capacitor rows
        A[i, i - 1] = a_cap_l
        A[i, i] = -a_cap_d
        A[i, i + 1] = -a_c

    B = np.zeros((n, 1))
    B[0, 0] = a_cr
    C = np.zeros((1, n))
    C[0, 0] = -1.0 / R
    return StochasticSystem(A, (N,), B, C, name=f"ladder(n={n})")


def heat_system(grid, robin_mean=0.5, noise_intensity=1.0):
    """Heat diffusion on the unit square with a noisy Robin edge.

    5-point finite differences on a grid x grid mesh of interior nodes
    with spacing h = 1/(grid+1).  Three edges hold Dirichlet inputs
    u1, u2, u3 (each B column collects the 1/h^2 couplings of its edge);
    the fourth edge has the stochastic Robin condition, folding
    robin_mean/h into the diagonal of A and noise_intensity/h into the
    diagonal of N for the edge-adjacent nodes.  Output is the mean
    temperature.
    """
    g = int(grid)
    if g < 3:
        raise DomainError(f"grid must be >= 3, got {g}")
    n = g * g
    h = 1.0 / (g + 1)
    ih2 = 1.0 / (h * h)

    def node(row, col):
        return row * g + col

    A = np.zeros((n, n))
    N = np.zeros((n, n))
    B = np.zeros((n, 3))
    for r in range(g):
        for c in range(g):
            i = node(r, c)
            A[i, i] = -4.0 * ih2
            if c > 0:
                A[i, node(r, c - 1)] = ih2
            else:
                B[i, 0] += ih2  # left edge, input u1
            if r > 0:
                A[i, node(r - 1, c)] = ih2
            else:
                B[i, 1] += ih2  # bottom edge, input u2
            if c < g - 1:
                A[i, node(r, c + 1)] = ih2
            else:
                B[i, 2] += ih2  # right edge, input u3
            if r < g - 1:
                A[i, node(r + 1, c)] = ih2
            else:  # top edge carries the stochastic Robin condition
                A[i, i] += robin_mean / h
                N[i, i] = noise_intensity / h
    C = np.full((1, n), 1.0 / n)
    return StochasticSystem(A, (N,), B, C, name=f"heat(grid={g})")


BUILTIN_IDS = ("example1", "example2", "sec4a", "ladder", "heat")


def builtin(name, **params):
    """Instantiate a builtin benchmark system by id."""
    if name == "example1":
        return example1_system(params.get("a", 2.0))
    if name == "example2":
        return example2_system(params.get("a", 2.0))
    if name == "sec4a":
        return sec4a_system()
    if name == "ladder":
        return ladder_system(params.get("n", 20))
    if name == "heat":
        return heat_system(
            params.get("grid", 10),
            robin_mean=params.get("robin_mean", 0.5),
            noise_intensity=params.get("noise_intensity", 1.0),
        )
    raise DomainError(f"unknown builtin system {name!r}; choose from {BUILTIN_IDS}")


# ---------------------------------------------------------------------------
# serialization: one JSON document per system, decimals at 17 significant
# digits so floats round-trip exactly


def _fmt_float(x):
    return format(float(x), ".17g")


def _ser(obj, indent=0):
    pad = "  " * indent
    if isinstance(obj, dict):
        items = ",\n".join(
            f'{pad}  "{key}": {_ser(val, indent + 1).lstrip()}'
            for key, val in obj.items()
        )
        return f"{pad}{{\n{items}\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        flat = all(isinstance(x, (int, float)) for x in obj)
        if flat:
            return pad + "[" + ", ".join(
                _fmt_float(x) if isinstance(x, float) else str(x) for x in obj
            ) + "]"
        items = ",\n".join(_ser(x, indent + 1) for x in obj)
        return f"{pad}[\n{items}\n{pad}]"
    if isinstance(obj, str):
        return pad + json.dumps(obj)
    if isinstance(obj, float):
        return pad + _fmt_float(obj)
    return pad + str(obj)


def _matrix_rows(M):
    return [[float(x) for x in row] for row in np.asarray(M, dtype=float)]


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_system(sys, path):
    """Write a system file (UTF-8 JSON, 17 significant digits)."""
    doc = {
        "n": sys.n,
        "k": sys.k,
        "m": sys.m,
        "p": sys.p,
        "A": _matrix_rows(sys.A),
        "N": [_matrix_rows(N) for N in sys.N_list],
        "B": _matrix_rows(sys.B),
        "C": _matrix_rows(sys.C),
    }
    if sys.name is not None:
        doc["name"] = sys.name
    atomic_write_text(path, _ser(doc) + "\n")


def _require_field(doc, key):
    if key not in doc:
        raise SystemFormatError(f"system file is missing field {key!r}", field=key)
    return doc[key]


def _parse_matrix(doc, key, shape):
    raw = _require_field(doc, key)
    try:
        M = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SystemFormatError(f"field {key!r} is not a numeric matrix: {exc}", field=key)
    if M.shape != shape:
        raise SystemFormatError(
            f"field {key!r} has shape {M.shape}, expected {shape}", field=key
        )
    return M


def load_system(path):
    """Load a system file written by :func:`save_system`."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemFormatError(f"not valid JSON (line {exc.lineno}): {exc.msg}")
    if not isinstance(doc, dict):
        raise SystemFormatError("top-level value must be an object")
    dims = {}
    for key in ("n", "k", "m", "p"):
        val = _require_field(doc, key)
        if not isinstance(val, int) or val < 1:
            raise SystemFormatError(f"field {key!r} must be a positive integer", field=key)
        dims[key] = val
    n, k, m, p = dims["n"], dims["k"], dims["m"], dims["p"]
    A = _parse_matrix(doc, "A", (n, n))
    raw_N = _require_field(doc, "N")
    if not isinstance(raw_N, list) or len(raw_N) != k:
        raise SystemFormatError(f"field 'N' must be a list of {k} matrices", field="N")
    N_list = []
    for j, entry in enumerate(raw_N):
        try:
            N = np.asarray(entry, dtype=float)
        except (TypeError, ValueError) as exc:
            raise SystemFormatError(f"N[{j}] is not a numeric matrix: {exc}", field="N")
        if N.shape != (n, n):
            raise SystemFormatError(
                f"N[{j}] has shape {N.shape}, expected {(n, n)}", field="N"
            )
        N_list.append(N)
    B = _parse_matrix(doc, "B", (n, m))
    C = _parse_matrix(doc, "C", (p, n))
    name = doc.get("name")
    if name is not None and not isinstance(name, str):
        raise SystemFormatError("field 'name' must be a string", field="name")
    return StochasticSystem(A, tuple(N_list), B, C, name=name)
