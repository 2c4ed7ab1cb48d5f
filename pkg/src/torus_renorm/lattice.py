"""Multidimensional continued fractions from the lattice flow.

A frequency vector ``omega = (alpha, 1)`` defines the unimodular matrix
``M_omega = [[I, alpha], [0, 1]]``.  The diagonal flow
``E^t = diag(e^-t, ..., e^-t, e^{(d-1)t})`` acting on the right, followed
by a deterministic lattice reduction ``P(t)`` on the left, produces a
piecewise constant family of integer matrices.  Its jump times are the
stopping times of the expansion and the jumps ``T_n = P_n P_{n-1}^{-1}``
are the continued fraction steps.

Row vectors ``k^T M_omega E^t = (k_hat e^{-t}, (k . omega) e^{(d-1)t})`` are
computed with ``k . omega`` in exact rational arithmetic and only then
rounded, so stopping times do not depend on cancellation error.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import (
    DomainError,
    EmptyExpansionError,
    FlowOverflowError,
    InvariantViolation,
    MalformedScheduleError,
    PrecisionError,
    RationalInputError,
    ResonanceError,
)

LOGGER = logging.getLogger(__name__)

REDUCTION_CONVENTION = "l2-pairwise-size-reduction/l1-sort/first-positive/last-row-det/v1"
_INT64_SAFE = 2 ** 62
_SHRINK = 1.0 - 1e-12


# --------------------------------------------------------------------------
# integer linear algebra helpers
# --------------------------------------------------------------------------

def op_norm(mat) -> float:
    """Operator norm induced by the l1 vector norm (max column abs sum)."""
    a = np.abs(np.asarray(mat, dtype=float))
    return float(a.sum(axis=0).max())


def _to_int64(rows) -> np.ndarray:
    arr = np.array(rows, dtype=object)
    if arr.size and max(abs(int(v)) for v in arr.flat) >= _INT64_SAFE:
        raise FlowOverflowError(float("nan"), "integer matrix entries exceed int64 range")
    return arr.astype(np.int64)


def int_matmul(a, b) -> np.ndarray:
    """Exact product of integer matrices (object arithmetic, int64 result)."""
    a = np.asarray(a, dtype=object)
    b = np.asarray(b, dtype=object)
    return _to_int64(a.dot(b))


def int_det(mat) -> int:
    """Exact determinant of an integer matrix (Bareiss elimination)."""
    m = [[int(v) for v in row] for row in np.asarray(mat)]
    n = len(m)
    sign = 1
    prev = 1
    for i in range(n - 1):
        if m[i][i] == 0:
            swap = next((r for r in range(i + 1, n) if m[r][i] != 0), None)
            if swap is None:
                return 0
            m[i], m[swap] = m[swap], m[i]
            sign = -sign
        for r in range(i + 1, n):
            for c in range(i + 1, n):
                m[r][c] = (m[r][c] * m[i][i] - m[r][i] * m[i][c]) // prev
        prev = m[i][i]
    return sign * m[n - 1][n - 1]


def int_inverse(mat) -> np.ndarray:
    """Exact inverse of a unimodular integer matrix."""
    det = int_det(mat)
    if abs(det) != 1:
        raise DomainError(f"matrix is not unimodular (det={det})")
    n = len(mat)
    aug = [[Fraction(int(v)) for v in row] + [Fraction(int(i == j)) for j in range(n)]
           for i, row in enumerate(np.asarray(mat))]
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return _to_int64([[int(v) for v in row[n:]] for row in aug])


def is_unimodular(mat) -> bool:
    arr = np.asarray(mat)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            return False
        arr = np.round(arr).astype(np.int64)
    return abs(int_det(arr)) == 1


# --------------------------------------------------------------------------
# types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyVector:
    """A frequency ``omega = (alpha, 1)`` with exact rational components.

    Attributes
    ----------
    exact : tuple of Fraction
        Components as exact rationals; floats are converted exactly.
    resonance_floor : float
        ``min |k . omega|`` over nonzero ``k`` with ``||k||_1 <= k_check``.
    k_check : int
        Radius of the resonance check.
    """

    exact: tuple
    resonance_floor: float
    k_check: int

    def __post_init__(self):
        if len(self.exact) < 2:
            raise DomainError("frequency vectors need dimension d >= 2")
        if self.exact[-1] != 1:
            raise InvariantViolation("last component of omega must be exactly 1")
        if not self.resonance_floor > 0:
            raise ResonanceError(
                f"omega is resonant within ||k||_1 <= {self.k_check}")

    @classmethod
    def from_alpha(cls, alpha, k_check: int = 64) -> "FrequencyVector":
        """Build ``(alpha, 1)`` from one or more reals or rationals."""
        if np.ndim(alpha) == 0:
            alpha = [alpha]
        exact = tuple(Fraction(a) for a in alpha) + (Fraction(1),)
        floats = np.array([float(v) for v in exact])
        floor, _ = kernels.min_abs_dot_l1(floats, k_check)
        if floor == 0.0:
            floor = _exact_resonance_floor(exact, k_check)
        if not floor > 0:
            raise ResonanceError(f"omega is resonant within ||k||_1 <= {k_check}")
        return cls(exact, floor, k_check)

    @classmethod
    def preset(cls, name: str, k_check: int = 64) -> "FrequencyVector":
        """Named frequencies: ``golden`` and ``liouville`` (d=2)."""
        if name == "golden":
            return cls.from_alpha(golden_alpha(), k_check)
        if name == "liouville":
            return cls.from_alpha(liouville_alpha(3), k_check)
        raise DomainError(f"unknown omega preset {name!r}")

    @property
    def dim(self) -> int:
        return len(self.exact)

    @property
    def components(self) -> np.ndarray:
        return np.array([float(v) for v in self.exact])

    def dot(self, k) -> Fraction:
        return sum((int(a) * b for a, b in zip(k, self.exact)), Fraction(0))


def _exact_resonance_floor(exact, k_check):
    # the float dot product hit zero; settle it with rationals
    _, arg = kernels.min_abs_dot_l1(np.array([float(v) for v in exact]), k_check)
    return float(abs(sum(int(a) * b for a, b in zip(arg, exact))))


def golden_alpha(index: int = 80) -> Fraction:
    """``(sqrt(5) - 1) / 2`` as a ratio of consecutive Fibonacci numbers."""
    a, b = 1, 1
    for _ in range(index):
        a, b = b, a + b
    return Fraction(a, b)


def liouville_alpha(terms: int = 3) -> Fraction:
    """Truncated Liouville number ``sum_{n=1}^{terms} 10^{-n!}``."""
    return sum((Fraction(1, 10 ** math.factorial(n)) for n in range(1, terms + 1)), Fraction(0))


def omega_matrix(omega: FrequencyVector) -> np.ndarray:
    """``M_omega = [[I, alpha], [0, 1]]`` as a float matrix."""
    d = omega.dim
    m = np.eye(d)
    m[:-1, -1] = omega.components[:-1]
    return m


def flow_matrix(d: int, t: float) -> np.ndarray:
    """``E^t = diag(e^-t, ..., e^-t, e^{(d-1)t})``."""
    return np.diag([math.exp(-t)] * (d - 1) + [math.exp((d - 1) * t)])


def _unimodular_tol(mat) -> float:
    scale = float(np.prod(np.linalg.norm(mat, axis=1)))
    return 1e-9 * max(1.0, scale)


@dataclass(frozen=True, eq=False)
class LatticeState:
    """A unimodular real matrix together with the flow time reached."""

    matrix: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DomainError("lattice matrix must be square")
        if self.time < 0:
            raise DomainError("flow time must be nonnegative")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def is_unimodular(self) -> bool:
        return abs(np.linalg.det(self.matrix) - 1.0) <= _unimodular_tol(self.matrix)


def flow_advance(state: LatticeState, dt: float) -> LatticeState:
    """Apply ``M -> M E^{dt}`` and advance the clock."""
    if dt < 0:
        raise DomainError("dt must be nonnegative")
    try:
        e = flow_matrix(state.dim, dt)
    except OverflowError:
        raise FlowOverflowError(state.time + dt) from None
    with np.errstate(over="ignore", invalid="ignore"):
        mat = state.matrix @ e
    if not np.all(np.isfinite(mat)) or np.abs(mat).max() > 1e300:
        raise FlowOverflowError(state.time + dt)
    return LatticeState(mat, state.time + dt)


# --------------------------------------------------------------------------
# reduction convention
# --------------------------------------------------------------------------

def _reduce_core(p0: np.ndarray, rows_of: Callable[[list], np.ndarray], max_sweeps: int = 10_000):
    """Greedy pairwise size reduction, then sort, sign and determinant fix.

    ``rows_of(P)`` returns the float rows of ``P M`` for integer rows ``P``
    (a list of lists of Python ints).
    """
    d = len(p0)
    prow = [[int(v) for v in row] for row in p0]
    b = rows_of(prow)
    for _ in range(max_sweeps):
        changed = False
        for i in range(d):
            for j in range(d):
                if i == j:
                    continue
                nj = float(b[j] @ b[j])
                if nj == 0.0:
                    raise InvariantViolation("degenerate lattice row")
                r = round(float(b[i] @ b[j]) / nj)
                if r == 0:
                    continue
                cand = [x - r * y for x, y in zip(prow[i], prow[j])]
                bc = rows_of([cand])[0]
                if float(bc @ bc) < float(b[i] @ b[i]) * _SHRINK:
                    prow[i] = cand
                    b[i] = bc
                    changed = True
        if not changed:
            break
    else:
        raise PrecisionError("size reduction did not terminate")
    order = np.argsort(np.abs(b).sum(axis=1), kind="stable")
    prow = [prow[i] for i in order]
    b = b[order]
    for i in range(d):
        nz = np.flatnonzero(b[i])
        if nz.size and b[i, nz[0]] < 0:
            prow[i] = [-x for x in prow[i]]
            b[i] = -b[i]
    if int_det(prow) < 0:
        prow[-1] = [-x for x in prow[-1]]
        b[-1] = -b[-1]
    return _to_int64(prow), b


def reduce(state: LatticeState):
    """Reduce a unimodular lattice basis under the documented convention.

    Returns
    -------
    P : ndarray of int64
        Unimodular integer matrix.
    reduced : LatticeState
        ``P @ state.matrix`` at the same time.
    """
    if not state.is_unimodular():
        raise InvariantViolation(
            f"lattice matrix is not unimodular (det={np.linalg.det(state.matrix):.12g})")
    mat = state.matrix

    def rows_of(prows):
        return np.array(prows, dtype=float) @ mat

    p, b = _reduce_core(np.eye(state.dim, dtype=np.int64), rows_of)
    return p, LatticeState(b, state.time)


# --------------------------------------------------------------------------
# shortest vector
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShortestVector:
    delta: float
    argmin: np.ndarray
    certified: bool
    required_radius: int

    def __iter__(self):
        # allow ``delta, argmin = shortest_vector(...)``
        return iter((self.delta, self.argmin))


def certified_radius(mat) -> int:
    """Box radius that provably contains every shortest vector of ``k^T M``.

    If ``k^T M = v`` then ``|k_i| <= ||v||_1 max_j |M^{-1}_{ji}|``, and a
    minimizer satisfies ``||v||_1 <= min_i ||row_i||_1``.
    """
    mat = np.asarray(mat, dtype=float)
    bound = np.abs(mat).sum(axis=1).min() * np.abs(np.linalg.inv(mat)).max()
    return max(1, int(math.floor(bound * (1 + 1e-9) + 1e-9)))


def default_radius_cap(d: int, max_candidates: int = 10_000) -> int:
    return max(1, int((max_candidates ** (1.0 / d) - 1) // 2))


def shortest_vector(state: LatticeState, radius: Optional[int] = None, cap: Optional[int] = None) -> ShortestVector:
    """``delta(M) = min ||k^T M||_1`` over nonzero ``k`` with ``||k||_inf <= radius``.

    With ``radius=None`` the certified radius is used, capped at ``cap``
    (default: about 10^4 candidates).  The result states whether the radius
    actually used covers the certified one.
    """
    need = certified_radius(state.matrix)
    if radius is None:
        cap = default_radius_cap(state.dim) if cap is None else cap
        radius = min(need, cap)
    if radius < 1:
        raise DomainError("radius must be >= 1")
    delta, arg = kernels.min_l1_box(state.matrix, radius)
    nz = np.flatnonzero(arg)
    if nz.size and arg[nz[0]] < 0:
        arg = -arg
    certified = radius >= need
    if not certified:
        warnings.warn(
            f"shortest vector radius {radius} below certified radius {need}", RuntimeWarning)
    return ShortestVector(delta, arg, certified, need)


# --------------------------------------------------------------------------
# sigma schedules
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GapRule:
    """Resonance widths ``sigma_n = exp(-d (t_{n+1} - t_n))``.

    With ``recursive=True`` the stopping times are thinned to the sequence
    ``t_{n+1} >= exp((1 - theta - xi) t_n)``, taking the first detected
    change at or after the target.  With ``recursive=False`` every change
    of ``P(t)`` is a stopping time.
    """

    beta: float = 0.0
    xi: float = 0.5
    recursive: bool = False
    name: str = "gap"

    def theta(self, d: int) -> float:
        return self.beta / (d + self.beta)

    def select(self, times: Sequence[float], d: int) -> list:
        if not self.recursive:
            return list(range(len(times)))
        rate = 1.0 - self.theta(d) - self.xi
        if not 0 < rate < 1:
            raise DomainError("GapRule needs 0 < xi < 1 - theta")
        keep = [0]
        target = math.exp(rate * times[0])
        for i in range(1, len(times)):
            if times[i] >= target:
                keep.append(i)
                target = math.exp(rate * times[i])
        return keep

    def sigmas(self, times: Sequence[float], d: int) -> list:
        return [math.exp(-d * (times[n + 1] - times[n])) for n in range(len(times) - 1)]

    def to_dict(self):
        return {"name": self.name, "beta": self.beta, "xi": self.xi, "recursive": self.recursive}


@dataclass(frozen=True)
class ExplicitRule:
    """A user-supplied list of resonance widths; all stopping times kept."""

    values: tuple
    name: str = "explicit"

    def select(self, times, d):
        return list(range(len(times)))

    def sigmas(self, times, d):
        n = len(times) - 1
        vals = list(self.values[:n])
        return vals + [None] * (n - len(vals))

    def to_dict(self):
        return {"name": self.name, "values": list(self.values)}


def sigma_rule_from_dict(spec: dict):
    spec = dict(spec)
    name = spec.pop("name", "gap")
    if name == "gap":
        return GapRule(**spec)
    if name == "explicit":
        return ExplicitRule(tuple(float(v) for v in spec.pop("values")), **spec)
    raise DomainError(f"unknown sigma rule {name!r}")


# --------------------------------------------------------------------------
# expansion
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GainResult:
    A: float
    boundary_growth: bool
    empty_cone: bool
    count: int

    def __float__(self):
        return self.A


@dataclass(frozen=True, eq=False)
class CFStep:
    """One step of the expansion; see the module docstring for notation."""

    n: int
    t: float
    P: np.ndarray
    T: np.ndarray
    omega: np.ndarray
    gamma: float
    lam: float
    eta: float
    delta: float
    delta_certified: bool
    Delta: np.ndarray
    beta: np.ndarray
    M: np.ndarray
    sigma: Optional[float] = None
    A: Optional[float] = None
    A_boundary: bool = False
    A_empty: bool = False

    @property
    def omega_norm(self) -> float:
        return float(np.abs(self.omega).sum())

    @property
    def P_inv(self) -> np.ndarray:
        return int_inverse(self.P)


@dataclass(frozen=True, eq=False)
class CFExpansion:
    omega: FrequencyVector
    steps: tuple
    reduction_convention: str = REDUCTION_CONVENTION
    sigma_rule: object = None

    def __len__(self):
        return len(self.steps)

    def __getitem__(self, n) -> CFStep:
        return self.steps[n]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.steps])


class _ExactRows:
    """Rows of ``P M_omega E^t`` with ``P omega`` evaluated exactly."""

    def __init__(self, omega: FrequencyVector):
        self.exact = omega.exact
        self.d = omega.dim

    def __call__(self, prows, t):
        d = self.d
        out = np.empty((len(prows), d))
        shrink = math.exp(-t)
        grow = math.exp((d - 1) * t)
        for i, row in enumerate(prows):
            out[i, :-1] = np.array(row[:-1], dtype=float) * shrink
            dot = sum((int(a) * b for a, b in zip(row, self.exact)), Fraction(0))
            out[i, -1] = float(dot) * grow
        if not np.all(np.isfinite(out)):
            raise FlowOverflowError(t)
        return out


def _row_key(p):
    rows = []
    for row in np.asarray(p):
        r = tuple(int(v) for v in row)
        nz = next((v for v in r if v != 0), 0)
        rows.append(r if nz > 0 else tuple(-v for v in r))
    return frozenset(rows)


def _reduced_at(p_start, rows, t):
    return _reduce_core(p_start, lambda pr: rows(pr, t))[0]


def _scan_changes(omega, t_max, scan_step, tol):
    """All times in ``(0, t_max]`` where the reduced basis changes as a set."""
    rows = _ExactRows(omega)
    p_cur = _reduced_at(np.eye(omega.dim, dtype=np.int64), rows, 0.0)
    key = _row_key(p_cur)
    found = []
    lo = 0.0
    while lo < t_max:
        hi = min(lo + scan_step, t_max)
        p_hi = _reduced_at(p_cur, rows, hi)
        while _row_key(p_hi) != key:
            a, b = lo, hi
            while b - a > tol:
                mid = 0.5 * (a + b)
                if mid <= a or mid >= b:
                    raise PrecisionError("bisection stalled", (a, b))
                if _row_key(_reduced_at(p_cur, rows, mid)) == key:
                    a = mid
                else:
                    b = mid
            p_new = _reduced_at(p_cur, rows, b)
            if _row_key(p_new) == key:
                raise PrecisionError("bisection lost the change", (a, b))
            found.append((b, p_new))
            p_cur, key, lo = p_new, _row_key(p_new), b
            p_hi = _reduced_at(p_cur, rows, hi)
        lo = hi
    return found


def expand(omega: FrequencyVector, t_max: float, scan_step: float = 0.05, sigma_rule=None,
           tol: float = 1e-9, enum_radius: int = 50) -> CFExpansion:
    """Continued fraction expansion of ``omega`` from the lattice flow.

    Parameters
    ----------
    omega : FrequencyVector
    t_max : float
        Flow horizon; every change of the reduced basis in ``(0, t_max]``
        is located by scanning and bisection.
    scan_step : float
        Scan spacing.
    sigma_rule : GapRule or ExplicitRule, optional
        Selects stopping times and assigns ``sigma_n``.  Default
        :class:`GapRule`.
    tol : float
        Bisection tolerance on stopping times.
    enum_radius : int
        Box radius for the resonance-gain enumeration.

    Returns
    -------
    CFExpansion
        Step 0 is ``t_0 = 0, P_0 = I``; ``sigma_n`` and ``A_n`` are set for
        every step that has a successor.
    """
    if not t_max > 0:
        raise EmptyExpansionError("t_max must be positive")
    if not scan_step > 0:
        raise DomainError("scan_step must be positive")
    sigma_rule = GapRule() if sigma_rule is None else sigma_rule
    d = omega.dim
    changes = _scan_changes(omega, float(t_max), float(scan_step), tol)
    if not changes:
        raise EmptyExpansionError(f"no stopping time in [0, {t_max}]")
    times = [0.0] + [c[0] for c in changes]
    mats = [np.eye(d, dtype=np.int64)] + [c[1] for c in changes]
    keep = sigma_rule.select(times, d)
    times = [times[i] for i in keep]
    mats = [mats[i] for i in keep]
    if len(times) < 2:
        raise EmptyExpansionError(f"sigma rule kept no stopping time in [0, {t_max}]")
    sigmas = sigma_rule.sigmas(times, d)
    rows = _ExactRows(omega)
    steps = []
    omega_prev = None
    lam_prev = None
    p_prev = None
    for n, (t, p) in enumerate(zip(times, mats)):
        pw = [sum((int(a) * b for a, b in zip(row, omega.exact)), Fraction(0)) for row in p]
        if pw[-1] == 0:
            raise ResonanceError(f"(P_{n} omega)_d vanishes")
        omega_n = np.array([float(v / pw[-1]) for v in pw])
        lam = float(1 / pw[-1])
        grow = math.exp((d - 1) * t)
        gamma = float(pw[-1]) * grow
        if n == 0:
            tmat = np.eye(d, dtype=np.int64)
            eta = 1.0
        else:
            tmat = int_matmul(p, int_inverse(p_prev))
            eta = lam / lam_prev
            check = eta * (tmat @ omega_prev)
            if np.abs(check - omega_n).max() > 1e-9 * max(1.0, np.abs(omega_n).max()):
                raise InvariantViolation(f"omega_{n} recursion mismatch")
        mn = rows([list(map(int, r)) for r in p], t)
        sv = shortest_vector(LatticeState(mn, t))
        beta = mn[-1, :-1].copy()
        delta_mat = mn[:-1, :-1] - np.outer(omega_n[:-1], beta)
        steps.append(CFStep(
            n=n, t=t, P=p, T=tmat, omega=omega_n, gamma=gamma, lam=lam, eta=eta,
            delta=sv.delta, delta_certified=sv.certified, Delta=delta_mat, beta=beta, M=mn,
            sigma=sigmas[n] if n < len(sigmas) else None,
        ))
        omega_prev, lam_prev, p_prev = omega_n, lam, p
    out = []
    for n, st in enumerate(steps):
        if st.sigma is not None:
            if not st.sigma < st.omega_norm:
                raise MalformedScheduleError(n, "sigma_n must be below ||omega_n||_1")
            if n + 1 < len(steps):
                g = resonance_gain(st, steps[n + 1].T, enum_radius)
                st = replace(st, A=g.A, A_boundary=g.boundary_growth, A_empty=g.empty_cone)
        out.append(st)
    LOGGER.info("expansion: %d steps up to t=%.4g", len(out), out[-1].t)
    return CFExpansion(omega, tuple(out), REDUCTION_CONVENTION, sigma_rule)


def resonance_gain(step: CFStep, next_T, enum_radius: int = 50) -> GainResult:
    """``A_n = sup ||T_{n+1}^{-T} k||_1 / ||k||_1`` over the resonant cone.

    The sup is taken over ``0 < ||k||_inf <= enum_radius``; ``boundary_growth``
    is set when the sup still grows on the outermost layer of the box.
    """
    if step.sigma is None:
        raise DomainError(f"sigma_{step.n} is not set")
    if enum_radius < 1:
        raise DomainError("enum_radius must be >= 1")
    tinv_t = int_inverse(np.asarray(next_T)).T.astype(float)
    sup, inner, count = kernels.cone_gain(step.omega, step.sigma, tinv_t, enum_radius)
    if count == 0:
        return GainResult(0.0, False, True, 0)
    return GainResult(sup, sup > inner, False, count)


def mn_bounds(exp: CFExpansion) -> dict:
    """Measured ``||M_n|| delta_n^{d-1}`` and ``||M_n^{-1}|| delta_n`` per step."""
    d = exp.omega.dim
    upper = [op_norm(s.M) * s.delta ** (d - 1) for s in exp.steps]
    lower = [op_norm(np.linalg.inv(s.M)) * s.delta for s in exp.steps]
    return {"M_delta": upper, "Minv_delta": lower,
            "max_M_delta": max(upper), "max_Minv_delta": max(lower)}


# --------------------------------------------------------------------------
# arithmetic diagnostics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ArithmeticReport:
    theta: float
    dioph_ok: Optional[bool] = None
    c_prime: Optional[float] = None
    c_prime_refined: Optional[float] = None
    y_series_terms: tuple = ()
    y_partial_sums: tuple = ()
    y_limit_terms: tuple = ()
    brjuno_sum: Optional[float] = None
    notes: tuple = field(default_factory=tuple)


def delta_along_flow(omega: FrequencyVector, times) -> np.ndarray:
    """``delta(Phi^t M_omega)`` at each time, with certified enumeration."""
    rows = _ExactRows(omega)
    p = np.eye(omega.dim, dtype=np.int64)
    out = np.empty(len(times))
    for i, t in enumerate(times):
        p, b = _reduce_core(p, lambda pr, t=t: rows(pr, t))
        sv = shortest_vector(LatticeState(b, t), cap=10 ** 4)
        if not sv.certified:
            raise PrecisionError(f"uncertified shortest vector at t={t}")
        out[i] = sv.delta
    return out


def diophantine_check(omega: FrequencyVector, beta: float, t_max: float, samples: int) -> ArithmeticReport:
    """Best constant ``C'`` with ``delta(t) >= C' e^{-theta t}`` on a grid.

    ``dioph_ok`` requires ``C' > 0`` and a relative change below 10% when the
    grid is refined by a factor two.
    """
    if beta < 0 or not t_max > 0 or samples < 2:
        raise DomainError("need beta >= 0, t_max > 0 and samples >= 2")
    theta = beta / (omega.dim + beta)
    coarse = np.linspace(0.0, t_max, samples)
    fine = np.linspace(0.0, t_max, 2 * samples - 1)
    c1 = float(np.min(delta_along_flow(omega, coarse) * np.exp(theta * coarse)))
    c2 = float(np.min(delta_along_flow(omega, fine) * np.exp(theta * fine)))
    ok = c1 > 0 and abs(c1 - c2) / c1 < 0.1
    return ArithmeticReport(theta=theta, dioph_ok=bool(ok), c_prime=c1, c_prime_refined=c2)


def y_condition(exp: CFExpansion) -> ArithmeticReport:
    """Terms of the series and limit expressions defining the class Y."""
    steps = exp.steps
    if len(steps) < 2 or steps[0].sigma is None or steps[0].A is None:
        raise DomainError("y_condition needs at least two steps with sigma and A set")
    series = []
    prod_a = 1.0
    for n in range(len(steps) - 1):
        s, s1 = steps[n], steps[n + 1]
        if s.A is None or s1.sigma is None:
            break
        prod_a *= s.A
        arg = abs(s1.eta) * op_norm(s1.T) * s.sigma * s1.omega_norm / s1.sigma
        if not arg > 0 or not math.isfinite(arg):
            raise MalformedScheduleError(n, f"log argument {arg!r} is not positive")
        series.append(prod_a * math.log(arg))
    limit = []
    prod_t = 1.0
    for n, s in enumerate(steps):
        if s.sigma is None:
            break
        prod_t *= op_norm(s.T) ** 2
        limit.append(4.0 ** n * s.sigma * op_norm(s.P_inv) * prod_t)
    brj = None
    if exp.omega.dim == 2:
        try:
            brj = brjuno_sum(exp.omega.exact[0], max(1, len(steps)))
        except RationalInputError:
            brj = None
    d = exp.omega.dim
    rule = exp.sigma_rule
    theta = rule.theta(d) if hasattr(rule, "theta") else 0.0
    return ArithmeticReport(theta=theta, y_series_terms=tuple(series),
                            y_partial_sums=tuple(np.cumsum(series).tolist()),
                            y_limit_terms=tuple(limit), brjuno_sum=brj)


def continued_fraction(alpha, terms: int) -> list:
    """Partial quotients ``[a_0; a_1, ...]`` of a real, exactly for rationals."""
    x = Fraction(alpha)
    out = []
    for _ in range(terms):
        a = math.floor(x)
        out.append(int(a))
        frac = x - a
        if frac == 0:
            break
        x = 1 / frac
    return out


def convergents(alpha, terms: int) -> list:
    """Classical convergents ``p_n / q_n`` as ``(p, q)`` pairs."""
    p0, q0, p1, q1 = 1, 0, None, None
    pm, qm = 0, 1  # p_{-2}, q_{-2}
    out = []
    for a in continued_fraction(alpha, terms):
        p = a * p0 + pm
        q = a * q0 + qm
        out.append((p, q))
        pm, qm, p0, q0 = p0, q0, p, q
    return out


def implicit_convergents(exp: CFExpansion) -> list:
    """``(p, q)`` read off the rows of each ``P_n`` for ``d = 2``.

    A row ``(a, b)`` pairs with ``a alpha + b``, small when ``-b / a`` is a
    good approximation; signs are normalized so that ``q > 0``.  Returns one
    pair per row, rows in order, for every step.
    """
    if exp.omega.dim != 2:
        raise DomainError("implicit convergents are defined for d = 2")
    out = []
    for st in exp.steps:
        pairs = []
        for a, b in np.asarray(st.P, dtype=np.int64).tolist():
            sign = -1 if a < 0 else 1
            pairs.append((-sign * b, sign * a))
        out.append(pairs)
    return out


def brjuno_terms(alpha, depth: int) -> list:
    """``log(q_{n+1}) / q_n`` for ``n = 0..depth`` with ``q_0 = 1``."""
    if depth < 0:
        raise DomainError("depth must be >= 0")
    x = Fraction(alpha) - math.floor(Fraction(alpha))
    if x == 0:
        raise RationalInputError("alpha is an integer")
    q = [1]
    q_prev = 0
    for _ in range(depth + 1):
        if x == 0:
            raise RationalInputError(
                f"continued fraction of alpha terminates after {len(q) - 1} denominators")
        y = 1 / x
        a = math.floor(y)
        q_prev, q_cur = q[-1], a * q[-1] + q_prev
        q.append(q_cur)
        x = y - a
    return [math.log(q[n + 1]) / q[n] for n in range(depth + 1)]


def brjuno_sum(alpha, depth: int) -> float:
    """Truncated Brjuno sum ``sum_{n=0}^{depth} log(q_{n+1}) / q_n``."""
    return float(sum(brjuno_terms(alpha, depth)))


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def _frac_str(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


def expansion_to_dict(exp: CFExpansion) -> dict:
    def opt(v):
        return None if v is None else float(v)

    steps = []
    for s in exp.steps:
        steps.append({
            "n": s.n, "t": s.t, "P": s.P.tolist(), "T": s.T.tolist(),
            "omega": s.omega.tolist(), "gamma": s.gamma, "lambda": s.lam, "eta": s.eta,
            "delta": s.delta, "delta_certified": s.delta_certified,
            "Delta": s.Delta.tolist(), "beta": s.beta.tolist(), "M": s.M.tolist(),
            "sigma": opt(s.sigma), "A": opt(s.A),
            "A_boundary": s.A_boundary, "A_empty": s.A_empty,
        })
    rule = exp.sigma_rule.to_dict() if exp.sigma_rule is not None else None
    return {
        "format": "torus-renorm.cf", "version": 1,
        "omega": {"exact": [_frac_str(v) for v in exp.omega.exact],
                  "k_check": exp.omega.k_check, "resonance_floor": exp.omega.resonance_floor},
        "reduction_convention": exp.reduction_convention,
        "sigma_rule": rule,
        "steps": steps,
    }


def expansion_from_dict(data: dict) -> CFExpansion:
    om = data["omega"]
    exact = tuple(Fraction(v) for v in om["exact"])
    omega = FrequencyVector(exact, float(om["resonance_floor"]), int(om["k_check"]))
    steps = []
    for s in data["steps"]:
        steps.append(CFStep(
            n=int(s["n"]), t=float(s["t"]), P=np.array(s["P"], dtype=np.int64),
            T=np.array(s["T"], dtype=np.int64), omega=np.array(s["omega"], dtype=float),
            gamma=float(s["gamma"]), lam=float(s["lambda"]), eta=float(s["eta"]),
            delta=float(s["delta"]), delta_certified=bool(s["delta_certified"]),
            Delta=np.array(s["Delta"], dtype=float), beta=np.array(s["beta"], dtype=float),
            M=np.array(s["M"], dtype=float), sigma=s["sigma"], A=s["A"],
            A_boundary=bool(s["A_boundary"]), A_empty=bool(s["A_empty"]),
        ))
    rule = sigma_rule_from_dict(data["sigma_rule"]) if data.get("sigma_rule") else None
    return CFExpansion(omega, tuple(steps), data["reduction_convention"], rule)
