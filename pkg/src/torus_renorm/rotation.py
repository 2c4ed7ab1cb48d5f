"""Rotation vectors of torus flows and checks of their invariance properties.

The rotation vector of a flow is the limit of ``(Phi^T(x) - x) / T`` on the
universal cover.  It is estimated by RK4 integration from a small lattice of
initial conditions.  The checks cover three properties: conjugacy
invariance ``Rot(h*X) = Rot(X)``, the covariance ``Rot(lam T^{-1} X o T) =
lam T^{-1} Rot(X)``, and the mean-mode bound
``||E X - omega|| <= d ||X - E X||_{C^0}``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AccuracyError, DomainError
from .field import FourierField, TorusMap, c0_norm, pull_back
from .lattice import int_inverse, is_unimodular

LOGGER = logging.getLogger(__name__)

_PRUNE_REL = 1e-17


@dataclass(frozen=True)
class IntegrationResult:
    endpoint: np.ndarray
    error_estimate: float
    h: float
    T: float


@dataclass(frozen=True)
class RotationEstimate:
    """Averaged rotation vector with orbit spread and integrator metadata."""

    vector: np.ndarray
    T: float
    samples: int
    spread: float
    h: float
    error_estimate: float
    error_samples: int
    per_orbit: np.ndarray

    def to_dict(self) -> dict:
        return {
            "vector": self.vector.tolist(), "spread": self.spread, "T": self.T,
            "samples": self.samples,
            "integrator": {"h": self.h, "error_estimate": self.error_estimate,
                           "error_samples": self.error_samples, "method": "rk4"},
        }


def _integrable_modes(X: FourierField):
    if X.dim != X.comps:
        raise DomainError("integration needs a vector field")
    if not X.real_flag:
        raise DomainError("integration needs a real field")
    if X.n_modes == 0 or not np.any(X.coef):
        raise DomainError("the zero field has only fixed points")
    scale = float(np.abs(X.coef).sum(axis=1).max())
    f = X.prune(_PRUNE_REL * scale)
    return f.ks, f.coef


def _orbits(X, x0, T, h, error_rows):
    ks, coef = _integrable_modes(X)
    if not h > 0 or not T > 0:
        raise DomainError("need h > 0 and T > 0")
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    coarse = kernels.rk4_orbits(ks, coef, x0, T, h)
    fine = kernels.rk4_orbits(ks, coef, x0[:error_rows], T, h / 2)
    err = float(np.abs(fine - coarse[:error_rows]).sum(axis=1).max()) if error_rows else float("nan")
    end = coarse.copy()
    end[:error_rows] = fine
    if error_rows and err > 1e-6 * T:
        raise AccuracyError(f"step halving disagrees by {err:.3e} > 1e-6 T; use a smaller h")
    return end, err


def integrate(X: FourierField, x0, T: float, h: float = 1e-2) -> IntegrationResult:
    """Lifted endpoint of ``dx/dt = X(x)`` after time ``T`` (RK4, step halving)."""
    x0 = np.asarray(x0, dtype=float)
    end, err = _orbits(X, x0[None, :], T, h, 1)
    return IntegrationResult(end[0], err, h, T)


def lattice_points(samples: int, dim: int) -> np.ndarray:
    """Rank-one lattice ``frac(i g / s)`` with generator ``g = (1, 3, 5, ...)``."""
    gen = np.arange(1, 2 * dim, 2)
    i = np.arange(samples)[:, None]
    return np.mod((i * gen[None, :]) / samples + 0.5 / samples, 1.0)


def rotation_vector(X: FourierField, samples: int = 8, T: float = 1e4, h: float = 1e-2,
                    error_samples: int = None) -> RotationEstimate:
    """Average of ``(Phi^T(x0) - x0) / T`` over a lattice of initial points.

    Parameters
    ----------
    X : FourierField
        Real vector field.
    samples : int
        Number of initial conditions.
    T, h : float
        Horizon and RK4 step.
    error_samples : int, optional
        Orbits rerun at ``h / 2`` for the error estimate (default: all).
    """
    x0 = lattice_points(samples, X.dim)
    rows = samples if error_samples is None else min(samples, error_samples)
    end, err = _orbits(X, x0, T, h, rows)
    per = (end - x0) / T
    vec = per.mean(axis=0)
    diffs = per[:, None, :] - per[None, :, :]
    spread = float(np.abs(diffs).sum(axis=2).max())
    return RotationEstimate(vec, float(T), samples, spread, float(h), err, rows, per)


def mean_mode_check(X: FourierField, omega):
    """``(lhs, rhs, ok)`` for ``||E X - omega||_1 <= d ||X - E X||_{C^0}``."""
    omega = np.asarray(omega, dtype=float)
    lhs = float(np.abs(X.mean().real - omega).sum())
    osc = X.nonconstant()
    rhs = X.dim * (c0_norm(osc).value if osc.n_modes else 0.0)
    return lhs, rhs, bool(lhs <= rhs * (1.0 + 1e-9))


def rescaled_field(X: FourierField, T, lam: float) -> FourierField:
    """``lam T^{-1} X(T x)``: coefficient ``lam T^{-1} X_k`` at index ``T^T k``."""
    T = np.asarray(T)
    if not is_unimodular(T):
        raise DomainError("T must be unimodular")
    T = np.round(T).astype(np.int64)
    tinv = int_inverse(T).astype(float)
    ks = X.ks @ T
    coef = lam * (X.coef @ tinv.T)
    K = int(np.abs(ks).sum(axis=1).max()) if ks.shape[0] else X.K
    return FourierField(ks, coef, X.strip, max(K, X.K))


def random_torus_map(rng, dim: int = 2, degree: int = 3, amplitude: float = 1e-3,
                     strip: float = 1.0, K: int = None) -> TorusMap:
    """Real near-identity map with random modes of degree ``<= degree``."""
    modes = {}
    rng = np.random.default_rng(rng)
    for _ in range(3 + 2 * degree):
        k = tuple(int(v) for v in rng.integers(-degree, degree + 1, dim))
        if not any(k) or sum(abs(v) for v in k) > degree:
            continue
        c = (rng.normal(size=dim) + 1j * rng.normal(size=dim)) * amplitude / 2
        modes[k] = modes.get(k, 0) + c
        neg = tuple(-v for v in k)
        modes[neg] = modes.get(neg, 0) + np.conj(c)
    if not modes:
        modes[(1,) + (0,) * (dim - 1)] = np.full(dim, amplitude / 2)
        modes[(-1,) + (0,) * (dim - 1)] = np.full(dim, amplitude / 2)
    field = FourierField.from_modes(modes, strip, K=K or degree, dim=dim)
    return TorusMap(field)


def conjugated_field(omega, h: TorusMap, K: int, strip: float = 1.0, grid_factor: int = 2) -> FourierField:
    """``h*omega = (Dh)^{-1} omega`` as a truncated field of degree ``K``."""
    w = FourierField.constant(np.asarray(omega, dtype=float), strip=strip, K=K)
    return pull_back(w, h, grid_factor)


@dataclass(frozen=True)
class InvarianceReport:
    rot_X: np.ndarray
    rot_conjugated: np.ndarray
    rot_rescaled: np.ndarray
    expected_rescaled: np.ndarray
    conj_error: float
    rescale_error: float
    tol: float
    ok: bool


def invariance_checks(X: FourierField, h: TorusMap, T_int, lam: float, tol: float = 1e-3,
                      samples: int = 8, T: float = 1e4, step: float = 1e-2,
                      error_samples: int = None) -> InvarianceReport:
    """Estimate ``Rot X``, ``Rot h*X`` and ``Rot lam T^{-1} X o T`` and compare."""
    kw = dict(samples=samples, T=T, h=step, error_samples=error_samples)
    r0 = rotation_vector(X, **kw).vector
    r1 = rotation_vector(pull_back(X, h), **kw).vector
    r2 = rotation_vector(rescaled_field(X, T_int, lam), **kw).vector
    expect = lam * (int_inverse(np.round(np.asarray(T_int)).astype(np.int64)) @ r0)
    e1 = float(np.abs(r1 - r0).sum())
    e2 = float(np.abs(r2 - expect).sum())
    return InvarianceReport(r0, r1, r2, expect, e1, e2, tol, bool(e1 <= tol and e2 <= tol))
