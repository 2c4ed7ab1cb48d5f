"""Elimination of far-from-resonance modes by a near-identity coordinate change.

Given ``X`` close to the constant field ``omega``, :func:`eliminate` builds
``U = id + u`` such that the pull-back ``U*X`` has no modes in the far set
``|k . omega| > sigma ||k||_1``.  The construction is a Newton scheme.  Each
sweep solves the linearized equation ``(omega . grad) u = F`` for the
current far part ``F`` by Fourier division, with ``u_0 = 0``.  Every divisor
is bounded below by ``sigma ||k||_1`` by construction.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonConvergenceError, PreconditionError
from .field import (
    TWO_PI,
    FourierField,
    TorusMap,
    compose,
    evaluate,
    grid_points,
    norm_rho,
    norm_rho_prime,
    project_far,
    project_resonant,
    pull_back,
    resonant_mask,
    translate,
)

LOGGER = logging.getLogger(__name__)


class DiagnosticWarning(UserWarning):
    """A soft runtime check of a theoretical estimate failed."""


def epsilon_formula(sigma: float, nu: float, v_norm: float) -> float:
    """``(sigma / 42) min(nu / (4 pi), sigma / (72 v_norm))`` without range checks."""
    return sigma / 42.0 * min(nu / (4.0 * math.pi), sigma / (72.0 * v_norm))


def epsilon_radius(sigma: float, nu: float, v_norm: float) -> float:
    """Radius of the elimination domain around a constant field ``v``.

    Raises
    ------
    DomainError
        Unless ``0 < sigma < v_norm`` and ``nu > 0``.
    """
    if not 0 < sigma < v_norm:
        raise DomainError(f"need 0 < sigma < ||v||, got sigma={sigma}, ||v||={v_norm}")
    if not nu > 0:
        raise DomainError("nu must be positive")
    return epsilon_formula(sigma, nu, v_norm)


@dataclass(frozen=True, eq=False)
class EliminationResult:
    """Outcome of :func:`eliminate`.

    ``field`` is the resonant part of ``U*X`` (for ``t = 1``) on strip
    ``rho``; ``residual`` is the far-mode norm left in ``U*X``.
    """

    map: TorusMap
    field: FourierField
    residual: float
    iterations: int
    epsilon_used: float
    history: tuple = ()
    distance: float = 0.0
    unsafe: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": "torus-renorm.elimination", "version": 1,
            "map": self.map.to_dict(), "field": self.field.to_dict(),
            "residual": self.residual, "iterations": self.iterations,
            "epsilon_used": self.epsilon_used, "history": list(self.history),
            "distance": self.distance, "unsafe": self.unsafe,
            "diagnostics": self.diagnostics,
        }


def solve_linearized(F: FourierField, omega, sigma: float) -> FourierField:
    """Fourier division ``u_k = F_k / (2 pi i k.omega)`` on far modes; ``u_k = 0`` elsewhere."""
    omega = np.asarray(omega, dtype=float)
    far = ~resonant_mask(F.ks, omega, sigma)
    ks = F.ks[far]
    dots = ks.astype(float) @ omega
    floor = sigma * np.abs(ks).sum(axis=1) * (1.0 - 1e-12)
    if np.any(np.abs(dots) < floor):
        raise AssertionError("small divisor below the cone floor")
    coef = F.coef[far] / (1j * TWO_PI * dots)[:, None]
    return FourierField(ks, coef, F.strip, F.K)


def eliminate(X: FourierField, omega, sigma: float, rho: float, nu: float, tol: float = 1e-12,
              max_iter: int = 30, unsafe: bool = False, grid_factor: int = 2, t: float = 1.0
              ) -> EliminationResult:
    """Remove the far modes of ``X`` (or a fraction ``t`` of them).

    Parameters
    ----------
    X : FourierField
        Field on a strip of width at least ``rho + nu``.
    omega : array_like
        Reference constant field.
    sigma : float
        Cone width.
    rho, nu : float
        Output strip and strip loss.
    tol : float
        Target for the far residual in ``||.||_rho``.
    max_iter : int
    unsafe : bool
        Skip the domain precondition ``||X - omega||'_{rho+nu} < eps``.
    grid_factor : int
        Padding factor of the pseudo-spectral pull-backs.
    t : float
        Homotopy parameter; the far part of the result targets ``(1-t)`` times
        the far part of ``X``.

    Returns
    -------
    EliminationResult
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError("t must lie in [0, 1]")
    omega = np.asarray(omega, dtype=float)
    d = X.dim
    v_norm = float(np.abs(omega).sum())
    eps = epsilon_radius(sigma, nu, v_norm)
    if rho + nu > X.strip * (1.0 + 1e-12):
        raise DomainError(f"rho + nu = {rho + nu} exceeds the strip {X.strip}")
    dist = norm_rho_prime(X - omega, rho + nu)
    if not dist < eps and not unsafe:
        raise PreconditionError("elimination domain ||X - omega||'", dist, eps)
    far0 = project_far(X, omega, sigma)
    target = far0 * (1.0 - t)
    Y = X
    U = TorusMap.identity(d, X.K, rho)
    history = []
    iterations = 0
    while True:
        F = project_far(Y, omega, sigma) - target
        F = F.prune()
        r = norm_rho(F, rho) if F.n_modes else 0.0
        history.append(r)
        if r <= tol:
            break
        if iterations >= max_iter:
            raise NonConvergenceError(
                f"far residual {r:.3e} above tol {tol:.1e} after {iterations} sweeps", history)
        if len(history) > 1 and r >= history[-2]:
            raise NonConvergenceError(
                f"far residual stopped decreasing at {r:.3e} (tol {tol:.1e})", history)
        u = solve_linearized(F, omega, sigma).with_strip(rho)
        psi = TorusMap(FourierField(u.ks, u.coef, rho, X.K))
        U = compose(U, psi, grid_factor, K=X.K)
        Y = pull_back(Y, psi, grid_factor)
        iterations += 1
    if t == 1.0:
        out = project_resonant(Y, omega, sigma).with_strip(rho)
    else:
        out = Y.with_strip(rho)
    diag = _diagnostics(U, out, far0, dist, omega, sigma, rho, history)
    LOGGER.debug("eliminate: %d sweeps, residual %.3e", iterations, history[-1])
    return EliminationResult(U, out, history[-1], iterations, eps, tuple(history), dist, unsafe, diag)


def _diagnostics(U, out, far0, dist, omega, sigma, rho, history):
    u_norm = norm_rho_prime(U.displacement, rho) if U.displacement.n_modes else 0.0
    u_bound = 42.0 / sigma * (norm_rho(far0, rho) if far0.n_modes else 0.0)
    f_norm = norm_rho(out - omega, rho)
    f_bound = 2.0 * dist
    rates = [history[i + 1] / history[i] ** 2 for i in range(len(history) - 1)
             if history[i] > 0 and history[i + 1] > 0]
    diag = {
        "map_norm": u_norm, "map_bound": u_bound, "map_ok": bool(u_norm <= u_bound * (1 + 1e-12)),
        "field_norm": f_norm, "field_bound": f_bound, "field_ok": bool(f_norm <= f_bound * (1 + 1e-12)),
        "quadratic_constants": rates,
    }
    for name in ("map", "field"):
        if not diag[f"{name}_ok"]:
            msg = f"{name} estimate failed: {diag[name + '_norm']:.6e} > {diag[name + '_bound']:.6e}"
            warnings.warn(msg, DiagnosticWarning)
    return diag


def homotopy_eliminate(X: FourierField, omega, sigma: float, rho: float, nu: float, t: float,
                       tol: float = 1e-12, max_iter: int = 30, unsafe: bool = False,
                       grid_factor: int = 2) -> EliminationResult:
    """Eliminate the fraction ``t`` of the far modes; ``t = 1`` is :func:`eliminate`."""
    return eliminate(X, omega, sigma, rho, nu, tol, max_iter, unsafe, grid_factor, t)


def first_order_map(X: FourierField, omega, sigma: float) -> FourierField:
    """Single small-divisor step ``X_k / (2 pi i k.omega)`` over far modes."""
    return solve_linearized(project_far(X, omega, sigma), omega, sigma)


@dataclass(frozen=True)
class CommutationReport:
    shift: tuple
    map_error: float
    field_error: float
    points: int
    ok: bool
    tol: float


def translation_commutation_check(X: FourierField, x, omega, sigma: float, rho: float, nu: float,
                                  tol: float = 1e-8, grid: int = 10, unsafe: bool = False,
                                  **kwargs) -> CommutationReport:
    """Compare elimination of ``X o R_x`` with ``R_x^{-1} o U(X) o R_x`` on a grid.

    ``R_x^{-1} o U o R_x (y) = y + u(y + x)``, so the displacement of the
    eliminated translated field must equal the translated displacement.
    """
    x = np.asarray(x, dtype=float)
    e1 = eliminate(X, omega, sigma, rho, nu, unsafe=unsafe, **kwargs)
    e2 = eliminate(translate(X, x), omega, sigma, rho, nu, unsafe=unsafe, **kwargs)
    pts = grid_points(grid, X.dim)
    lhs = evaluate(e2.map.displacement, pts)
    rhs = evaluate(e1.map.displacement, pts + x)
    map_err = float(np.abs(lhs - rhs).sum(axis=1).max())
    fl = evaluate(e2.field, pts)
    fr = evaluate(e1.field, pts + x)
    field_err = float(np.abs(fl - fr).sum(axis=1).max())
    ok = map_err <= tol and field_err <= tol
    return CommutationReport(tuple(x.tolist()), map_err, field_err, pts.shape[0], bool(ok), tol)
