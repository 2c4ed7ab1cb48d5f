"""Conjugacy maps assembled from a renormalization trace.

Each elimination map ``U_n`` acts in the coordinates of step ``n``.  In the
original coordinates it becomes ``W_n = P_n^{-1} o U_n o P_n`` and the
compositions ``H_{0,n} = W_0 o ... o W_n`` straighten the field:
``X(H(x)) = DH(x) omega`` up to the distance left at depth ``n``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .field import (
    FourierField,
    TorusMap,
    compose_many,
    evaluate,
    grid_points,
    jacobian_at,
    jacobian_grid,
    norm_rho,
)
from .lattice import int_inverse, is_unimodular, op_norm

LOGGER = logging.getLogger(__name__)

C1_GRID = 256
C1_MAX_POINTS = 256 ** 2


def w_map(U: TorusMap, P) -> TorusMap:
    """``P^{-1} o U o P``: displacement ``P^{-1} u(P x)``.

    The mode ``k`` of ``u`` moves to ``P^T k`` and its vector part is
    multiplied by ``P^{-1}``; both are exact integer operations.
    """
    P = np.asarray(P)
    if not is_unimodular(P):
        raise DomainError("w_map needs a unimodular integer matrix")
    P = np.round(P).astype(np.int64)
    u = U.displacement
    if u.n_modes == 0:
        return TorusMap(FourierField.zeros(u.dim, u.strip, u.K))
    pinv = int_inverse(P).astype(float)
    ks = u.ks @ P
    coef = u.coef @ pinv.T
    K = max(u.K, int(np.abs(ks).sum(axis=1).max()))
    strip = u.strip / op_norm(P)
    return TorusMap(FourierField(ks, coef, strip, K, u.tail))


def compose_chain(maps, grid_factor: int = 2, K: Optional[int] = None):
    """``maps[0] o ... o maps[-1]`` with the dropped mass on ``tail``.

    Returns
    -------
    TorusMap, list of float
        Composition and the minimum Jacobian determinant of each factor
        along the chain.

    Raises
    ------
    NearSingularMapError
        With ``factor`` set to the offending index.
    """
    maps = list(maps)
    if len(maps) == 1:
        return maps[0], [maps[0].min_det()]
    return compose_many(maps, K=K, grid_factor=grid_factor)


def _c1_points(d, grid):
    n = grid or C1_GRID
    while n ** d > C1_MAX_POINTS and n > 8:
        n //= 2
    return n, grid_points(n, d)


def _c1_pointwise(f: TorusMap, g: TorusMap, pts=None, n=None):
    diff = f.displacement - g.displacement
    if pts is None:
        # the uniform grid goes through the exact folded transform
        dv = diff.to_grid(n).reshape(-1, diff.comps).real
        jd = jacobian_grid(diff, n).real
    else:
        dv = evaluate(diff, pts).real
        jd = jacobian_at(diff, pts).real
    val = np.abs(dv).sum(axis=1)
    der = np.abs(jd).sum(axis=1).max(axis=1)
    return val, der


def c1_distance(f: TorusMap, g: TorusMap, grid: Optional[int] = None, refine: bool = True) -> float:
    """``max(sup |f - g|_1, sup ||Df - Dg||)`` on a grid.

    The grid has ``256`` points per axis (fewer in high dimension).  One
    refinement pass samples a finer patch around the coarse maximizers of
    the value and derivative differences.
    """
    if f.dim != g.dim:
        raise DomainError("maps must have a common dimension")
    d = f.dim
    n, pts = _c1_points(d, grid)
    val, der = _c1_pointwise(f, g, n=n)
    best = max(float(val.max()), float(der.max()))
    if not refine or best == 0.0:
        return best
    centers = pts[np.unique([int(np.argmax(val)), int(np.argmax(der))])]
    offs = (np.arange(-4, 5) / (4.0 * n))
    mesh = np.stack(np.meshgrid(*([offs] * d), indexing="ij"), axis=-1).reshape(-1, d)
    patch = (centers[:, None, :] + mesh[None, :, :]).reshape(-1, d)
    v2, d2 = _c1_pointwise(f, g, patch)
    return max(best, float(v2.max()), float(d2.max()))


@dataclass(frozen=True)
class ConjugacyCheck:
    residual: float
    grid: int
    identity_bound: Optional[float] = None

    def to_dict(self) -> dict:
        return {"residual": self.residual, "grid": self.grid, "identity_bound": self.identity_bound}


def verify_conjugacy(H: TorusMap, X: FourierField, omega, grid: int = 256, chunk: int = 1 << 14):
    """Residual of ``X(H(x)) = DH(x) omega`` on a ``grid^d`` lattice.

    Returns
    -------
    float, ndarray
        The maximum and the per-point ``l1`` residuals.
    """
    omega = np.asarray(omega, dtype=float)
    pts = grid_points(grid, H.dim)
    out = np.empty(pts.shape[0])
    u = H.displacement
    img = pts + u.to_grid(grid).reshape(-1, H.dim).real
    jac = np.eye(H.dim) + jacobian_grid(u, grid).real
    rhs = jac @ omega
    for a in range(0, pts.shape[0], chunk):
        lhs = evaluate(X, img[a:a + chunk])
        lhs = lhs.real if X.real_flag else lhs
        out[a:a + chunk] = np.abs(lhs - rhs[a:a + chunk]).sum(axis=1)
    return float(out.max()), out


def proof_identity_bound(lam: float, P, dist: float) -> float:
    """``|lam|^{-1} ||P^{-1}|| dist``, the size predicted for the residual."""
    return op_norm(int_inverse(np.asarray(P))) * dist / abs(lam)


@dataclass(frozen=True)
class WnReport:
    n: int
    lhs: float
    rhs: float
    strip: float
    ok: bool


def wn_norm_check(W: TorusMap, step, dist: float, R: float) -> WnReport:
    """``||W_n - id||_{R_n} <= (42 / sigma_n) ||P_n^{-1}|| dist_n``."""
    u = W.displacement
    lhs = norm_rho(u.with_strip(max(u.strip, R)), R) if u.n_modes else 0.0
    rhs = 42.0 / step.sigma * op_norm(step.P_inv) * dist
    return WnReport(step.n, lhs, rhs, R, bool(lhs <= rhs * (1.0 + 1e-12)))


@dataclass(frozen=True, eq=False)
class ConjugacyChain:
    """``W_0..W_N``, the partial compositions ``H_{0,n}`` and their C^1 increments.

    ``realized_strip`` is the smallest strip label among the factors.
    """

    maps: tuple
    partial: tuple
    c1_deltas: tuple
    strips: tuple
    min_dets: tuple
    realized_strip: float
    check: Optional[ConjugacyCheck] = None

    @property
    def composed(self) -> TorusMap:
        return self.partial[-1]

    def to_dict(self) -> dict:
        return {
            "format": "torus-renorm.chain", "version": 1,
            "maps": [m.to_dict() for m in self.maps],
            "composed": self.composed.to_dict(),
            "verification": {
                "residual": None if self.check is None else self.check.residual,
                "grid": None if self.check is None else self.check.grid,
                "identity_bound": None if self.check is None else self.check.identity_bound,
                "c1_deltas": list(self.c1_deltas),
            },
            "strips": list(self.strips), "min_dets": list(self.min_dets),
            "realized_strip": self.realized_strip,
        }

    @classmethod
    def from_dict(cls, data) -> "ConjugacyChain":
        if data.get("format") != "torus-renorm.chain":
            raise DomainError("not a chain record")
        maps = tuple(TorusMap.from_dict(m) for m in data["maps"])
        ver = data["verification"]
        check = None
        if ver["residual"] is not None:
            check = ConjugacyCheck(ver["residual"], ver["grid"], ver["identity_bound"])
        composed = TorusMap.from_dict(data["composed"])
        return cls(maps, (composed,), tuple(ver["c1_deltas"]), tuple(data["strips"]),
                   tuple(data["min_dets"]), data["realized_strip"], check)


def chain_from_trace(trace, exp, K: Optional[int] = None, grid_factor: int = 2,
                     c1_grid: Optional[int] = None, partials: bool = True) -> ConjugacyChain:
    """Build ``W_n`` from the trace maps and compose ``H_{0,n}`` for every ``n``.

    Parameters
    ----------
    trace : RenormTrace
    exp : CFExpansion
        Supplies ``P_n``.
    K : int, optional
        Degree of the composed maps (default: the largest factor degree).
    partials : bool
        Compose every ``H_{0,n}`` and record the C^1 increments; otherwise
        only the full composition.
    """
    us = trace.maps
    if not us:
        raise DomainError("trace has no elimination maps")
    ws = [w_map(U, exp.steps[n].P) for n, U in enumerate(us)]
    K = max(w.K for w in ws) if K is None else K
    strips = [trace.schedule.R[n] if n < len(trace.schedule.R) else math.nan for n in range(len(ws))]
    partial, dets = [], []
    idx = range(len(ws)) if partials else [len(ws) - 1]
    for n in idx:
        H, md = compose_chain(ws[:n + 1], grid_factor, K)
        partial.append(H)
        dets = md
    deltas = [c1_distance(partial[i], partial[i - 1], c1_grid) for i in range(1, len(partial))]
    realized = min(w.strip for w in ws)
    return ConjugacyChain(tuple(ws), tuple(partial), tuple(deltas), tuple(strips),
                          tuple(float(v) for v in dets), realized)


def check_chain(chain: ConjugacyChain, X: FourierField, omega, grid: int = 256,
                lam: Optional[float] = None, P=None, dist: Optional[float] = None) -> ConjugacyChain:
    """Attach the conjugacy residual and, when given, the proof-identity bound."""
    res, _ = verify_conjugacy(chain.composed, X, omega, grid)
    bound = proof_identity_bound(lam, P, dist) if lam is not None and dist is not None else None
    return ConjugacyChain(chain.maps, chain.partial, chain.c1_deltas, chain.strips, chain.min_dets,
                          chain.realized_strip, ConjugacyCheck(res, grid, bound))


def decreasing_from(values, start: int, strict: bool = False) -> bool:
    """``values[i + 1] <= values[i]`` for every ``i >= start`` (``<`` if ``strict``).

    The default is non-strict: exactly vanishing increments, as produced by
    identity factors, count as decreasing.
    """
    tail = list(values[start:])
    if strict:
        return all(b < a for a, b in zip(tail, tail[1:]))
    return all(b <= a for a, b in zip(tail, tail[1:]))


@dataclass(frozen=True)
class HTranslationReport:
    shift: tuple
    error: float
    tol: float
    ok: bool


def h_translation_check(H: TorusMap, H_shifted: TorusMap, x, tol: float = 1e-7, grid: int = 32) -> HTranslationReport:
    """``H(X o R_x) = R_x^{-1} o H(X) o R_x``: displacements ``u'(y) = u(y + x)``."""
    x = np.asarray(x, dtype=float)
    pts = grid_points(grid, H.dim)
    lhs = evaluate(H_shifted.displacement, pts).real
    rhs = evaluate(H.displacement, pts + x).real
    err = float(np.abs(lhs - rhs).sum(axis=1).max())
    return HTranslationReport(tuple(x.tolist()), err, tol, bool(err <= tol))
