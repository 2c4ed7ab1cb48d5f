"""Renormalization driver.

One step maps ``X_{n-1}`` to ``X_n = I_n L_n U_{n-1}(X_{n-1})``: elimination
of the far modes with respect to ``(omega_{n-1}, sigma_{n-1})``, the linear
rescaling ``eta_n T_n X o T_n^{-1}`` and a cut-off to the scheduled strip
``rho_n``.  :func:`build_schedule` fixes every constant in advance from the
continued fraction expansion; :func:`run` iterates the step and records the
distances ``dist_n = ||X_n - omega_n||'_{rho_n}`` against the domain radii
``eps_n``.

The strip budget is

``B_n = sum_{i<n} A_0...A_{i-1} (A_i (delta + log phi_{i+1}) + nu)``,
``rho_n = (rho - B_n) / (A_0...A_{n-1})``,

which is evaluated recursively as
``rho_n = (rho_{n-1} - nu) / A_{n-1} - delta - log phi_n``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .elimination import DiagnosticWarning, eliminate, epsilon_radius
from .errors import (
    BoundViolation,
    DomainError,
    MalformedScheduleError,
    NonConvergenceError,
    PreconditionError,
    StepFailure,
    TruncationOverflowError,
)
from .field import (
    TWO_PI,
    FourierField,
    TorusMap,
    cutoff,
    linear_image,
    norm_rho_prime,
    rescale,
)
from .lattice import CFExpansion, FrequencyVector, GapRule, expand, op_norm

LOGGER = logging.getLogger(__name__)

DEFAULT_NU = 0.05
DEFAULT_DELTA = 0.05
DEFAULT_RHO = 10.0
DEFAULT_DEPTH = 6


def expansion_for(omega: FrequencyVector, n_max: int, sigma_rule=None, t_step: float = 2.0,
                  t_limit: float = 200.0, **kwargs) -> CFExpansion:
    """Expand ``omega`` far enough that steps ``0..n_max`` carry ``sigma_n`` and ``A_n``."""
    t = t_step
    while True:
        exp = expand(omega, t, sigma_rule=sigma_rule, **kwargs)
        ready = sum(1 for s in exp.steps if s.A is not None)
        if ready > n_max or t >= t_limit:
            return exp
        t *= 2.0


def propagate_omega(exp: CFExpansion, n: int) -> list:
    """``omega_0 .. omega_n`` by the recursion ``omega_k = eta_k T_k omega_{k-1}``.

    The same arithmetic as :func:`rescale` is used, so a constant field is
    carried along the driver bit for bit.
    """
    out = [np.asarray(exp.omega.components, dtype=float)]
    for k in range(1, n + 1):
        st = exp.steps[k]
        vec = linear_image(st.T, st.eta, out[-1].astype(complex)[None, :])[0]
        out.append(vec.real.copy())
    return out


@dataclass(frozen=True, eq=False)
class Schedule:
    """Constants of a renormalization run, indexed by the step ``n``.

    Lists ``sigma, eps, rho, R, B, omega`` run over every step the
    expansion supports, possibly past ``feasible_depth`` (where ``rho_n``
    turns nonpositive), so that unsafe continuation has its constants;
    ``phi`` and ``L_tilde`` carry a placeholder at ``n = 0`` (``phi_0 = 1``,
    ``L_tilde_0 = 0``); ``A[n]`` is the gain used by step ``n + 1``.
    """

    rho0: float
    nu: float
    delta: float
    sigma: tuple
    eps: tuple
    phi: tuple
    L_tilde: tuple
    rho: tuple
    A: tuple
    R: tuple
    B: tuple
    omega: tuple
    requested_depth: int
    exhausted: bool
    feasible_depth: int
    rho_infeasible: Optional[float] = None
    lemma_N: Optional[int] = None
    lemma_checks: tuple = ()
    auto_raised: bool = False
    notes: tuple = ()

    @property
    def depth(self) -> int:
        return self.feasible_depth

    @property
    def B_limit(self) -> float:
        """Deepest partial sum, the proxy for ``B(omega, sigma)``."""
        return self.B[-1]

    def gain_product(self, n: int) -> float:
        return math.prod(self.A[:n])

    def to_dict(self) -> dict:
        return {
            "format": "torus-renorm.schedule", "version": 1,
            "rho0": self.rho0, "nu": self.nu, "delta": self.delta,
            "sigma": list(self.sigma), "eps": list(self.eps), "phi": list(self.phi),
            "L_tilde": list(self.L_tilde), "rho": list(self.rho), "A": list(self.A),
            "R": list(self.R), "B": list(self.B),
            "omega": [w.tolist() for w in self.omega],
            "requested_depth": self.requested_depth, "exhausted": self.exhausted,
            "feasible_depth": self.feasible_depth, "rho_infeasible": self.rho_infeasible,
            "lemma_N": self.lemma_N, "lemma_checks": list(self.lemma_checks),
            "auto_raised": self.auto_raised, "notes": list(self.notes),
        }


def _l_tilde(step, delta):
    return abs(step.eta) * op_norm(step.T) * (1.0 + TWO_PI / delta)


def _budget(rho, nu, delta, A, phi, depth):
    """``(rho_n, B_n)`` for ``n = 0..depth`` by the recursion."""
    rhos, Bs = [float(rho)], [0.0]
    prod = 1.0
    for n in range(1, depth + 1):
        a = A[n - 1]
        Bs.append(Bs[-1] + prod * (a * (delta + math.log(phi[n])) + nu))
        rhos.append((rhos[-1] - nu) / a - delta - math.log(phi[n]) if a > 0 else math.inf)
        prod *= a
    return rhos, Bs


def build_schedule(exp: CFExpansion, rho: float = DEFAULT_RHO, nu: float = DEFAULT_NU,
                   delta: float = DEFAULT_DELTA, n_max: int = DEFAULT_DEPTH,
                   auto_raise: bool = False) -> Schedule:
    """Schedule of strips, radii and safety factors for ``n_max`` steps.

    Parameters
    ----------
    exp : CFExpansion
        Must carry ``sigma_n`` for ``n <= n_max`` and ``A_n`` for ``n < n_max``.
    rho, nu, delta : float
        Initial strip, elimination strip loss and rescaling margin.
    n_max : int
        Requested number of steps.
    auto_raise : bool
        Raise ``rho`` (with a warning) so that ``rho_{n_max} >= 1`` when the
        requested depth is infeasible.

    Returns
    -------
    Schedule
        ``feasible_depth`` is the last ``n`` with ``rho_n > 0``.
        ``exhausted`` marks a depth below ``n_max``; it is a result, not an
        error.
    """
    if not rho > 0:
        raise DomainError("rho must be positive")
    if not nu > 0 or not delta > 0:
        raise DomainError("nu and delta must be positive")
    if n_max < 0:
        raise DomainError("n_max must be nonnegative")
    steps = exp.steps
    avail = 0
    while (avail < n_max and avail + 1 < len(steps) and steps[avail + 1].sigma is not None
           and steps[avail].A is not None):
        avail += 1
    if steps[0].sigma is None:
        raise MalformedScheduleError(0, "sigma_0 missing from the expansion")
    notes = []
    if avail < n_max:
        notes.append(f"expansion supports only {avail} steps")
    omegas = propagate_omega(exp, avail)
    sig, eps = [], []
    for n in range(avail + 1):
        s = steps[n].sigma
        w = float(np.abs(omegas[n]).sum())
        if s is None or not 0 < s < w:
            raise MalformedScheduleError(n, f"need 0 < sigma_n < ||omega_n||, got {s}")
        sig.append(float(s))
        eps.append(epsilon_radius(s, nu, w))
    d = exp.omega.dim
    lt, phi = [0.0], [1.0]
    for n in range(1, avail + 1):
        lt.append(_l_tilde(steps[n], delta))
        phi.append(max(1.0, 2.0 * (d + 1) * lt[n] * eps[n - 1] / eps[n]))
    A = [float(steps[n].A) for n in range(avail)]
    for n, a in enumerate(A):
        if not a >= 0:
            raise MalformedScheduleError(n, "A_n must be nonnegative")
    rho = float(rho)
    rhos, Bs = _budget(rho, nu, delta, A, phi, avail)
    raised = False
    if auto_raise and rhos[-1] <= 0:
        new = Bs[-1] + math.prod(A)
        warnings.warn(f"rho={rho} is below B_{avail}={Bs[-1]:.6g}; raised to {new:.6g}", UserWarning)
        notes.append(f"rho raised from {rho} to {new}")
        rho, raised = new, True
        rhos, Bs = _budget(rho, nu, delta, A, phi, avail)
    depth = avail
    for n in range(1, avail + 1):
        if not rhos[n] > 0:
            depth = n - 1
            break
    infeasible = rhos[depth + 1] if depth < avail else None
    R = [1.0]
    for n in range(1, avail + 1):
        R.append(R[-1] / (2.0 * op_norm(steps[n].T)))
    checks, lemma_N = _lemma_checks(steps, rhos, eps, sig, R, depth)
    keep = avail + 1
    LOGGER.info("schedule: depth %d of %d, B=%.6g", depth, n_max, Bs[depth])
    return Schedule(
        rho0=rho, nu=float(nu), delta=float(delta), sigma=tuple(sig[:keep]), eps=tuple(eps[:keep]),
        phi=tuple(phi[:keep]), L_tilde=tuple(lt[:keep]), rho=tuple(rhos[:keep]),
        A=tuple(A[:keep]), R=tuple(R), B=tuple(Bs[:keep]), omega=tuple(omegas[:keep]),
        requested_depth=n_max, exhausted=depth < n_max, feasible_depth=depth,
        rho_infeasible=infeasible, lemma_N=lemma_N, lemma_checks=tuple(checks),
        auto_raised=raised, notes=tuple(notes),
    )


def _lemma_checks(steps, rhos, eps, sig, R, depth):
    """``R_n <= rho_n / ||P_n||`` and ``42 ||P_n^{-1}|| eps_n / sigma_n <= (R_{n-1} - R_n) / 2 pi``."""
    checks = []
    for n in range(1, depth + 1):
        st = steps[n]
        a_lhs, a_rhs = R[n], rhos[n] / op_norm(st.P)
        b_lhs = 42.0 * op_norm(st.P_inv) * eps[n] / sig[n]
        b_rhs = (R[n - 1] - R[n]) / TWO_PI
        checks.append({"n": n, "strip_lhs": a_lhs, "strip_rhs": a_rhs, "strip_ok": a_lhs <= a_rhs,
                       "map_lhs": b_lhs, "map_rhs": b_rhs, "map_ok": b_lhs <= b_rhs})
    lemma_N = None
    for i in range(len(checks)):
        if all(c["strip_ok"] and c["map_ok"] for c in checks[i:]):
            lemma_N = checks[i]["n"]
            break
    return checks, lemma_N


def schedule_B_direct(sched: Schedule, n: int) -> float:
    """``B_n`` from its defining sum, independent of the recursion."""
    total = 0.0
    for i in range(n):
        prod = math.prod(sched.A[:i + 1])
        total += prod * math.log(math.exp(sched.delta + sched.nu / sched.A[i]) * sched.phi[i + 1])
    return total


# -------------------------------------------------------------------------- one step

@dataclass(frozen=True, eq=False)
class StepResult:
    field: FourierField
    map: TorusMap
    diagnostics: dict


def renorm_step(X_prev: FourierField, step, sched: Schedule, unsafe: bool = False,
                tol: float = 1e-12, max_iter: int = 30, grid_factor: int = 2) -> StepResult:
    """Step ``n = step.n``: ``X_n = I_n L_n U_{n-1}(X_{n-1})``.

    Parameters
    ----------
    X_prev : FourierField
        ``X_{n-1}`` on the strip ``rho_{n-1}``.
    step : CFStep
        Expansion step ``n``; supplies ``T_n`` and ``eta_n``.
    sched : Schedule
    unsafe : bool
        Continue past domain violations.  Strips below zero are clamped to
        zero and every clamp or failed inequality is listed under
        ``diagnostics["violations"]``.

    Raises
    ------
    StepFailure
        Tagged ``"domain"``, ``"eliminate"``, ``"rescale"`` or ``"cutoff"``.
    """
    n = step.n
    limit = len(sched.omega) - 1 if unsafe else sched.depth
    if not 1 <= n <= limit:
        raise StepFailure("schedule", n, f"step {n} is outside the schedule depth {sched.depth}")
    d = X_prev.dim
    nu, delta = sched.nu, sched.delta
    w_prev, w_next = sched.omega[n - 1], sched.omega[n]
    sigma, eps_prev, a = sched.sigma[n - 1], sched.eps[n - 1], sched.A[n - 1]
    violations = []
    s_prev = max(sched.rho[n - 1], 0.0)
    rho_e = s_prev - nu
    X_in = X_prev
    if rho_e < 0:
        if not unsafe:
            raise StepFailure("domain", n, f"rho_{n - 1} - nu = {rho_e} is not positive")
        violations.append(("strip", f"elimination strip {rho_e:.6g} clamped to 0"))
        rho_e = 0.0
        X_in = X_prev.with_strip(nu)
    dist_in = norm_rho_prime(X_in - w_prev, rho_e + nu)
    if not dist_in < eps_prev:
        if not unsafe:
            raise StepFailure("domain", n, f"||X - omega_{n - 1}||' = {dist_in:.6e} >= eps = {eps_prev:.6e}")
        violations.append(("domain", f"dist {dist_in:.6e} >= eps {eps_prev:.6e}"))
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DiagnosticWarning)
            el = eliminate(X_in, w_prev, sigma, rho_e, nu, tol=tol, max_iter=max_iter,
                           unsafe=unsafe, grid_factor=grid_factor)
        for w in caught:
            violations.append(("elimination-estimate", str(w.message)))
    except (NonConvergenceError, PreconditionError, DomainError, BoundViolation) as exc:
        raise StepFailure("eliminate", n, str(exc), exc) from exc
    rho_r = rho_e / a - delta if a > 0 else math.inf
    checks = dict(delta=delta, A=a)
    if not rho_r > 0:
        if not unsafe:
            raise StepFailure("rescale", n, f"rescaled strip {rho_r} is not positive")
        violations.append(("strip", f"rescaled strip {rho_r:.6g} clamped to 0"))
        rho_r, checks = 0.0, {}
    if math.isinf(rho_r):
        rho_r, checks = max(sched.rho[n], 0.0), {}
    try:
        Y = rescale(el.field, step.T, step.eta, rho_r, cone=(w_prev, sigma), overflow="drop", **checks)
    except (TruncationOverflowError, DomainError, BoundViolation) as exc:
        raise StepFailure("rescale", n, str(exc), exc) from exc
    s_next = max(sched.rho[n], 0.0)
    if sched.phi[n] == 1.0 or s_next == rho_r:
        X_next = Y.with_strip(s_next) if s_next < rho_r else Y
    elif 0 < s_next <= rho_r:
        try:
            X_next = cutoff(Y, s_next)
        except (DomainError, BoundViolation) as exc:
            raise StepFailure("cutoff", n, str(exc), exc) from exc
    else:
        if not unsafe:
            raise StepFailure("cutoff", n, f"rho_{n} = {sched.rho[n]} is not in (0, {rho_r}]")
        violations.append(("strip", f"cut-off strip {sched.rho[n]:.6g} clamped to {s_next}"))
        X_next = Y.with_strip(s_next)
    dist = norm_rho_prime(X_next - w_next, s_next)
    lt, phi = sched.L_tilde[n], sched.phi[n]
    chain_rhs = (d + 1) * (lt / phi) * 2.0 * dist_in
    if not dist <= chain_rhs * (1.0 + 1e-9):
        violations.append(("chain", f"dist_{n} {dist:.6e} > {chain_rhs:.6e}"))
    diag = {
        "n": n,
        "dist_in": dist_in, "eps_in": eps_prev,
        "elim_strip": rho_e, "elim_residual": el.residual, "elim_iterations": el.iterations,
        "elim_field_norm": el.diagnostics["field_norm"], "elim_field_bound": el.diagnostics["field_bound"],
        "elim_map_norm": el.diagnostics["map_norm"], "elim_map_bound": el.diagnostics["map_bound"],
        "rescale_strip": rho_r, "rescale_norm": norm_rho_prime(Y - w_next, rho_r),
        "rescale_tail": Y.tail,
        "cutoff_strip": s_next, "dist": dist, "eps": sched.eps[n],
        "L_tilde": lt, "phi": phi, "chain_rhs": chain_rhs, "chain_ok": bool(dist <= chain_rhs * (1.0 + 1e-9)),
        "recentered_bound": (d + 1) * norm_rho_prime(X_next.nonconstant(), s_next),
        "violations": violations,
    }
    LOGGER.info("step %d: dist %.3e eps %.3e", n, dist, sched.eps[n])
    return StepResult(X_next, el.map, diag)


# -------------------------------------------------------------------------- driver

@dataclass(frozen=True, eq=False)
class TraceStep:
    n: int
    field: FourierField
    omega: np.ndarray
    rho: float
    strip: float
    eps: float
    dist: float
    map: Optional[TorusMap]
    residual: float
    diagnostics: dict

    def to_dict(self, fields: bool = True) -> dict:
        out = {"n": self.n, "omega": self.omega.tolist(), "rho": self.rho, "strip": self.strip,
               "eps": self.eps, "dist": self.dist, "residual": self.residual,
               "diagnostics": _jsonable(self.diagnostics)}
        if fields:
            out["field"] = self.field.to_dict()
            out["map"] = None if self.map is None else self.map.to_dict()
        return out


@dataclass(frozen=True, eq=False)
class RenormTrace:
    """Record of a run; ``steps[0]`` is the input field.

    ``verdict`` is judged by the theorem's conditions even when ``unsafe``
    continuation produced further steps: ``converging`` when every
    completed step satisfies ``dist_n < eps_n``, ``domain-exit`` at the first
    violation and ``stopped`` when the schedule or a step ran out.
    """

    steps: tuple
    verdict: str
    schedule: Schedule
    unsafe: bool
    violations: tuple
    final_map: Optional[TorusMap] = None
    reason: str = ""
    faithful_depth: int = 0
    final_dist: Optional[float] = None

    @property
    def depth(self) -> int:
        return len(self.steps) - 1

    @property
    def maps(self) -> list:
        """``U_0 .. U_{n-1}`` and the final elimination if one was computed."""
        out = [s.map for s in self.steps[1:]]
        if self.final_map is not None:
            out.append(self.final_map)
        return out

    def to_dict(self, fields: bool = True) -> dict:
        return {
            "format": "torus-renorm.trace", "version": 1, "verdict": self.verdict,
            "reason": self.reason, "unsafe": self.unsafe, "faithful_depth": self.faithful_depth,
            "violations": [list(v) for v in self.violations],
            "schedule": self.schedule.to_dict(),
            "steps": [s.to_dict(fields) for s in self.steps],
            "final_map": self.final_map.to_dict() if fields and self.final_map is not None else None,
            "final_dist": self.final_dist,
        }

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "rho_n", "eps_n", "dist_n", "residual"])
        for s in self.steps:
            w.writerow([s.n, repr(s.rho), repr(s.eps), repr(s.dist), repr(s.residual)])
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def run(X: FourierField, exp: CFExpansion, sched: Schedule, n_max: Optional[int] = None,
        enforce: bool = True, final_elimination: bool = True, tol: float = 1e-12,
        grid_factor: int = 2) -> RenormTrace:
    """Iterate :func:`renorm_step` from ``X`` on the strip ``rho_0``.

    Parameters
    ----------
    X : FourierField
        Initial field; its rotation vector is assumed to be ``omega``.
    exp, sched : CFExpansion, Schedule
    n_max : int, optional
        Number of steps (default: the schedule depth).
    enforce : bool
        With ``True`` the precondition ``||(I - E)X||'_rho < eps_0 / (d + 1)``
        raises and the run stops at the first domain exit.  With ``False``
        it continues through violations up to ``n_max`` (strips clamped at
        zero), keeping the faithful verdict.
    final_elimination : bool
        Also eliminate the far modes of the last field, giving the map
        ``U_n`` needed to close the conjugacy chain.

    Raises
    ------
    PreconditionError
        Initial field outside the domain while ``enforce``.
    """
    d = X.dim
    avail = len(sched.omega) - 1
    n_max = sched.depth if n_max is None else n_max
    if enforce and n_max > sched.depth:
        n_max = sched.depth
    if n_max > avail:
        raise DomainError(f"schedule constants exist only for {avail} steps")
    rho0 = sched.rho0
    if rho0 > X.strip * (1.0 + 1e-12):
        raise DomainError(f"X lives on strip {X.strip} < rho_0 = {rho0}")
    X0 = X.with_strip(rho0)
    osc = norm_rho_prime(X0.nonconstant(), rho0)
    gate = sched.eps[0] / (d + 1)
    violations = []
    verdict, reason = None, ""
    if not osc < gate:
        if enforce:
            raise PreconditionError("||(I - E)X||'_rho < eps_0/(d+1)", osc, gate)
        violations.append((0, "precondition", f"{osc:.6e} >= {gate:.6e}"))
        verdict, reason = "domain-exit", f"precondition {osc:.6e} >= eps_0/(d+1) = {gate:.6e}"
    dist0 = norm_rho_prime(X0 - sched.omega[0], rho0)
    trace = [TraceStep(0, X0, sched.omega[0], rho0, rho0, sched.eps[0], dist0, None, 0.0,
                       {"precondition_lhs": osc, "precondition_rhs": gate,
                        "recentered_bound": (d + 1) * osc})]
    faithful = 0
    cur = X0
    for n in range(1, n_max + 1):
        try:
            res = renorm_step(cur, exp.steps[n], sched, unsafe=not enforce, tol=tol, grid_factor=grid_factor)
        except StepFailure as exc:
            tag = "domain-exit" if exc.stage == "domain" else "stopped"
            verdict = verdict or tag
            reason = reason or f"step {n} ({exc.stage}): {exc}"
            LOGGER.warning("run stopped at step %d: %s", n, exc)
            break
        diag = res.diagnostics
        for kind, msg in diag["violations"]:
            violations.append((n, kind, msg))
        dist, eps = diag["dist"], sched.eps[n]
        bad = [v for v in diag["violations"] if v[0] in ("domain", "strip")]
        if not dist < eps:
            bad.append(("domain", f"dist_{n} {dist:.6e} >= eps_{n} {eps:.6e}"))
            violations.append((n, "domain", bad[-1][1]))
        if n > sched.depth:
            bad.append(("schedule", f"rho_{n} = {sched.rho[n]:.6g} <= 0"))
            violations.append((n, "schedule", bad[-1][1]))
        if bad and verdict is None:
            verdict = "stopped" if bad[0][0] == "schedule" else "domain-exit"
            reason = f"step {n}: {bad[0][1]}"
        if verdict is None:
            faithful = n
        trace.append(TraceStep(n, res.field, sched.omega[n], sched.rho[n], diag["cutoff_strip"], eps, dist,
                               res.map, res.diagnostics["elim_residual"], diag))
        cur = res.field
        if bad and enforce:
            break
    if verdict is None and n_max < sched.requested_depth and sched.exhausted:
        verdict, reason = "stopped", f"schedule exhausted after {sched.depth} steps"
    final, final_dist = None, None
    if final_elimination and (not enforce or verdict is None):
        final, final_dist = _final_map(trace[-1], sched, not enforce, tol, grid_factor)
    verdict = verdict or "converging"
    return RenormTrace(tuple(trace), verdict, sched, not enforce, tuple(violations), final, reason,
                       faithful, final_dist)


def _final_map(last: TraceStep, sched, unsafe, tol, grid_factor):
    """``U_n`` for the last field and ``||U_n*X_n - omega_n||'`` of its resonant part."""
    n = last.n
    rho_e = max(last.strip - sched.nu, 0.0)
    X = last.field if last.strip >= rho_e + sched.nu else last.field.with_strip(rho_e + sched.nu)
    try:
        el = eliminate(X, sched.omega[n], sched.sigma[n], rho_e, sched.nu, tol=tol,
                       unsafe=unsafe, grid_factor=grid_factor)
    except (NonConvergenceError, PreconditionError, DomainError) as exc:
        LOGGER.warning("final elimination failed: %s", exc)
        return None, None
    return el.map, norm_rho_prime(el.field - sched.omega[n], rho_e)


# -------------------------------------------------------------------------- small strips

@dataclass(frozen=True, eq=False)
class PreRenormResult:
    field: FourierField
    rho_N: float
    B_shifted: float
    ok: bool
    maps: tuple
    strips: tuple


def pre_renormalize(X: FourierField, exp: CFExpansion, N: int, sched: Schedule,
                    unsafe: bool = False, strict: bool = False, tol: float = 1e-12,
                    grid_factor: int = 2) -> PreRenormResult:
    """``L_N U_{N-1} ... L_1 U_0 (X)`` without cut-offs, starting on ``X.strip``.

    The strips follow ``rho_n = (rho_{n-1} - nu) / A_{n-1} - delta``.  The
    result ``ok`` records ``rho_N > (B - B_N) / (A_0...A_{N-1})`` with ``B``
    the deepest partial sum of ``sched``; ``strict`` turns a failure into
    :class:`BoundViolation`.

    Raises
    ------
    StepFailure
        As :func:`renorm_step`, or tagged ``"strip"`` when some ``rho_n <= 0``.
    """
    if N < 0:
        raise DomainError("N must be nonnegative")
    if N > len(sched.omega) - 1:
        raise DomainError(f"schedule constants exist only for {len(sched.omega) - 1} steps")
    nu, delta = sched.nu, sched.delta
    cur = X
    strips = [X.strip]
    maps = []
    for n in range(1, N + 1):
        st = exp.steps[n]
        w_prev, sigma, a = sched.omega[n - 1], sched.sigma[n - 1], sched.A[n - 1]
        rho_e = strips[-1] - nu
        if not rho_e > 0:
            raise StepFailure("strip", n, f"strip {strips[-1]} leaves nothing after nu = {nu}")
        try:
            el = eliminate(cur.with_strip(strips[-1]), w_prev, sigma, rho_e, nu, tol=tol,
                           unsafe=unsafe, grid_factor=grid_factor)
        except (NonConvergenceError, PreconditionError, DomainError) as exc:
            raise StepFailure("eliminate", n, str(exc), exc) from exc
        new = rho_e / a - delta if a > 0 else math.inf
        if not new > 0:
            raise StepFailure("strip", n, f"rho_{n} = {new} is not positive")
        try:
            cur = rescale(el.field, st.T, st.eta, new, delta=delta, cone=(w_prev, sigma), A=a,
                          overflow="drop")
        except (TruncationOverflowError, DomainError, BoundViolation) as exc:
            raise StepFailure("rescale", n, str(exc), exc) from exc
        strips.append(new)
        maps.append(el.map)
    prod = math.prod(sched.A[:N])
    shifted = (sched.B_limit - sched.B[min(N, len(sched.B) - 1)]) / prod if prod > 0 else 0.0
    ok = strips[-1] > shifted
    if not ok:
        msg = f"rho_N = {strips[-1]:.6g} does not exceed the shifted budget {shifted:.6g}"
        if strict:
            raise BoundViolation("pre-renormalization strip", strips[-1], shifted)
        warnings.warn(msg, DiagnosticWarning)
    return PreRenormResult(cur, strips[-1], shifted, bool(ok), tuple(maps), tuple(strips))


def pre_renormalized_strip(rho: float, sched: Schedule, N: int) -> float:
    """Closed form ``(rho - sum_i A_0..A_{i-1} (A_i delta + nu)) / (A_0...A_{N-1})``."""
    total = 0.0
    for i in range(N):
        total += math.prod(sched.A[:i]) * (sched.A[i] * sched.delta + sched.nu)
    return (rho - total) / math.prod(sched.A[:N])


def default_expansion(omega: FrequencyVector, n_max: int = DEFAULT_DEPTH, sigma_rule=None) -> CFExpansion:
    return expansion_for(omega, n_max + 1, sigma_rule or GapRule())
