"""Truncated Fourier calculus for vector fields on complex strips.

A :class:`FourierField` stores finitely many modes ``f_k`` (complex
d-vectors) with ``||k||_1 <= K``.  The strip width ``rho`` enters only
through the weights in

    ||f||_rho  = sum_k ||f_k||_1 e^{rho ||k||_1}
    ||f||'_rho = sum_k (1 + 2 pi ||k||_1) ||f_k||_1 e^{rho ||k||_1}.

Grid work uses uniform grids ``x_j = j / N``.  Evaluation on a grid folds
indices modulo ``N`` before an inverse FFT, which is exact for every ``N``.
Maps and pull-backs are computed in difference form so that rounding error
scales with the size of the perturbation rather than the size of the field.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import (
    BoundViolation,
    DomainError,
    NearSingularMapError,
    TruncationOverflowError,
)

LOGGER = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
_REL_SLACK = 1e-12
_REAL_TOL = 1e-12


def _lookup(sorted_ks, queries):
    """Row positions of ``queries`` in lexicographically sorted ``sorted_ks`` (-1 if absent)."""
    if sorted_ks.shape[0] == 0:
        return np.full(queries.shape[0], -1, dtype=np.int64)
    lo = np.minimum(sorted_ks.min(axis=0), queries.min(axis=0))
    span = np.maximum(sorted_ks.max(axis=0), queries.max(axis=0)) - lo + 1
    mult = np.cumprod(np.concatenate([[1], span[::-1][:-1]]))[::-1]
    code = (sorted_ks - lo) @ mult
    qcode = (queries - lo) @ mult
    pos = np.searchsorted(code, qcode)
    pos = np.minimum(pos, code.size - 1)
    return np.where(code[pos] == qcode, pos, -1)


def _l1_rows(ks):
    return np.abs(ks).sum(axis=1)


def _canonical(ks, coef):
    """Sort modes lexicographically and merge duplicates."""
    ks = np.asarray(ks, dtype=np.int64)
    coef = np.asarray(coef, dtype=np.complex128)
    if ks.ndim != 2 or coef.ndim != 2:
        raise DomainError("ks and coef must be two-dimensional arrays")
    if ks.shape[0] == 0:
        return ks.copy(), coef.copy()
    uniq, inv = np.unique(ks, axis=0, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    if uniq.shape[0] == ks.shape[0]:
        order = np.lexsort(ks.T[::-1])
        return ks[order], coef[order]
    out = np.zeros((uniq.shape[0], coef.shape[1]), dtype=np.complex128)
    np.add.at(out, inv, coef)
    return uniq, out


def linear_image(mat, eta, vecs):
    """``eta * (mat @ v)`` for each row ``v``; shared by fields and frequencies.

    Using one routine for both keeps the constant-field renormalization step
    bitwise identical to the frequency recursion.
    """
    vecs = np.asarray(vecs, dtype=np.complex128)
    mat = np.asarray(mat, dtype=np.float64)
    out = np.zeros_like(vecs)
    for a in range(mat.shape[0]):
        acc = np.zeros(vecs.shape[0], dtype=np.complex128)
        for b in range(mat.shape[1]):
            if mat[a, b] != 0.0:
                acc = acc + mat[a, b] * vecs[:, b]
        out[:, a] = eta * acc
    return out


@dataclass(frozen=True, eq=False)
class FourierField:
    """Truncated Fourier series of a vector field on the strip ``D_rho``.

    Attributes
    ----------
    ks : ndarray of int64, shape (m, d)
        Mode indices, lexicographically sorted and unique.
    coef : ndarray of complex128, shape (m, c)
        Coefficients; ``c = d`` for vector fields.
    strip : float
        Analyticity width ``rho`` (weights ``e^{rho ||k||_1}``).
    K : int
        Truncation degree; every stored mode has ``||k||_1 <= K``.
    tail : float
        Accumulated weighted norm of modes dropped by truncating operations
        that produced this field.
    """

    ks: np.ndarray
    coef: np.ndarray
    strip: float
    K: int
    tail: float = 0.0

    def __post_init__(self):
        ks, coef = _canonical(self.ks, self.coef)
        if coef.ndim != 2 or ks.shape[0] != coef.shape[0]:
            raise DomainError("ks and coef must have matching first dimension")
        if ks.shape[0] and int(_l1_rows(ks).max()) > self.K:
            bad = ks[int(np.argmax(_l1_rows(ks)))]
            raise TruncationOverflowError(bad, self.K)
        if not self.strip >= 0:
            raise DomainError("strip must be nonnegative")
        ks.setflags(write=False)
        coef.setflags(write=False)
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "strip", float(self.strip))
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "tail", float(self.tail))

    # ---------------------------------------------------------------- build
    @classmethod
    def zeros(cls, dim, strip, K, comps=None):
        comps = dim if comps is None else comps
        return cls(np.zeros((0, dim), np.int64), np.zeros((0, comps), complex), strip, K)

    @classmethod
    def constant(cls, v, strip=1.0, K=0):
        v = np.asarray(v, dtype=np.complex128).reshape(1, -1)
        return cls(np.zeros((1, v.shape[1]), np.int64), v, strip, K)

    @classmethod
    def from_modes(cls, modes: dict, strip, K=None, dim=None):
        """Build from ``{k: vector}``; ``K`` defaults to the largest degree."""
        if not modes:
            if dim is None:
                raise DomainError("dim is required for an empty field")
            return cls.zeros(dim, strip, K or 0)
        ks = np.array([tuple(k) for k in modes], dtype=np.int64)
        coef = np.array([np.asarray(v, dtype=complex) for v in modes.values()])
        K = int(_l1_rows(ks).max()) if K is None else K
        return cls(ks, coef, strip, K)

    @classmethod
    def from_grid(cls, values, K, strip, real=None, tail=0.0):
        """Coefficients of grid samples, truncated to ``||k||_1 <= K``.

        Parameters
        ----------
        values : ndarray, shape (N,)*d + (c,)
            Samples at ``x_j = j / N``.
        K : int
        strip : float
        real : bool, optional
            Symmetrize to a real field; default is ``isrealobj(values)``.

        Returns
        -------
        FourierField
            ``tail`` holds the incoming ``tail`` plus the weighted norm of
            every resolved mode beyond ``K``.
        """
        values = np.asarray(values)
        d = values.ndim - 1
        n = values.shape[0]
        real = np.isrealobj(values) if real is None else real
        spec = np.fft.fftn(values, axes=tuple(range(d))) / float(n ** d)
        freqs = np.fft.fftfreq(n, 1.0 / n).round().astype(np.int64)
        grids = np.meshgrid(*([freqs] * d), indexing="ij")
        kall = np.stack([g.reshape(-1) for g in grids], axis=1)
        call = spec.reshape(-1, values.shape[-1])
        resolved = (np.abs(kall) < n / 2.0).all(axis=1)
        deg = _l1_rows(kall)
        keep = resolved & (deg <= K)
        # below this level a coefficient is indistinguishable from transform roundoff
        floor = 64.0 * np.finfo(float).eps * float(np.abs(values).max(initial=0.0))
        drop = resolved & (deg > K) & (np.abs(call).sum(axis=1) > floor)
        dropped = float(np.sum(np.abs(call[drop]).sum(axis=1) * np.exp(strip * deg[drop])))
        f = cls(kall[keep], call[keep], strip, K, tail + dropped)
        return f.symmetrized() if real else f

    # ---------------------------------------------------------------- basics
    @property
    def dim(self) -> int:
        return self.ks.shape[1]

    @property
    def comps(self) -> int:
        return self.coef.shape[1]

    @property
    def n_modes(self) -> int:
        return self.ks.shape[0]

    def _index(self):
        return {tuple(k): i for i, k in enumerate(self.ks.tolist())}

    def mode(self, k) -> np.ndarray:
        hits = np.flatnonzero((self.ks == np.asarray(k, dtype=np.int64)).all(axis=1))
        if hits.size == 0:
            return np.zeros(self.comps, dtype=complex)
        return self.coef[hits[0]].copy()

    def mean(self) -> np.ndarray:
        return self.mode(np.zeros(self.dim, dtype=np.int64))

    @property
    def real_flag(self) -> bool:
        return self.realness_defect() <= _REAL_TOL * max(1.0, float(np.abs(self.coef).max(initial=0.0)))

    def realness_defect(self) -> float:
        """``max ||f_{-k} - conj(f_k)||`` over stored modes."""
        if self.n_modes == 0:
            return 0.0
        pos = _lookup(self.ks, -self.ks)
        other = np.where((pos >= 0)[:, None], self.coef[np.maximum(pos, 0)], 0.0)
        return float(np.abs(other - np.conj(self.coef)).max())

    def symmetrized(self) -> "FourierField":
        """Nearest real field: ``(f_k + conj(f_{-k})) / 2``."""
        ks = np.concatenate([self.ks, -self.ks])
        coef = np.concatenate([self.coef, np.conj(self.coef)]) * 0.5
        ks, coef = _canonical(ks, coef)
        return FourierField(ks, coef, self.strip, self.K, self.tail)

    def with_strip(self, strip) -> "FourierField":
        return FourierField(self.ks, self.coef, strip, self.K, self.tail)

    def with_degree(self, K) -> "FourierField":
        keep = _l1_rows(self.ks) <= K
        dropped = _weighted(self.ks[~keep], self.coef[~keep], self.strip)
        return FourierField(self.ks[keep], self.coef[keep], self.strip, K, self.tail + dropped)

    def prune(self, threshold=0.0) -> "FourierField":
        """Drop modes with ``||f_k||_1 <= threshold`` (exact zeros by default)."""
        keep = np.abs(self.coef).sum(axis=1) > threshold
        dropped = _weighted(self.ks[~keep], self.coef[~keep], self.strip)
        return FourierField(self.ks[keep], self.coef[keep], self.strip, self.K, self.tail + dropped)

    def nonconstant(self) -> "FourierField":
        keep = self.ks.any(axis=1)
        return FourierField(self.ks[keep], self.coef[keep], self.strip, self.K, self.tail)

    def _binary(self, other, sign):
        if isinstance(other, FourierField):
            if other.dim != self.dim:
                raise DomainError("dimension mismatch")
            ks = np.concatenate([self.ks, other.ks])
            coef = np.concatenate([self.coef, sign * other.coef])
            return FourierField(ks, coef, min(self.strip, other.strip), max(self.K, other.K),
                                self.tail + other.tail)
        v = np.asarray(other, dtype=complex).reshape(1, -1)
        ks = np.concatenate([self.ks, np.zeros((1, self.dim), np.int64)])
        return FourierField(ks, np.concatenate([self.coef, sign * v]), self.strip, self.K, self.tail)

    def __add__(self, other):
        return self._binary(other, 1.0)

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __neg__(self):
        return FourierField(self.ks, -self.coef, self.strip, self.K, self.tail)

    def __mul__(self, scalar):
        return FourierField(self.ks, self.coef * scalar, self.strip, self.K, abs(scalar) * self.tail)

    __rmul__ = __mul__

    def equals(self, other) -> bool:
        """Field-wise exact equality (modes, coefficients, strip, K, tail)."""
        return (isinstance(other, FourierField) and self.strip == other.strip and self.K == other.K
                and self.tail == other.tail and np.array_equal(self.ks, other.ks)
                and np.array_equal(self.coef, other.coef))

    # ---------------------------------------------------------------- values
    def __call__(self, x):
        return evaluate(self, x)

    def to_grid(self, n) -> np.ndarray:
        """Exact values on the ``n^d`` grid, shape ``(n,)*d + (c,)``."""
        d = self.dim
        arr = np.zeros((n,) * d + (self.comps,), dtype=np.complex128)
        if self.n_modes:
            idx = tuple(np.mod(self.ks[:, j], n) for j in range(d))
            np.add.at(arr, idx, self.coef)
        return np.fft.ifftn(arr, axes=tuple(range(d))) * float(n ** d)

    def to_dict(self) -> dict:
        return {
            "format": "torus-renorm.field", "version": 1,
            "dim": self.dim, "strip": self.strip, "K": self.K, "tail": self.tail,
            "modes": [{"k": k, "re": c.real.tolist(), "im": c.imag.tolist()}
                      for k, c in zip(self.ks.tolist(), self.coef)],
        }

    @classmethod
    def from_dict(cls, data) -> "FourierField":
        dim = int(data["dim"])
        modes = data["modes"]
        ks = np.array([m["k"] for m in modes], dtype=np.int64).reshape(-1, dim)
        coef = np.array([np.array(m["re"]) + 1j * np.array(m["im"]) for m in modes])
        if coef.size == 0:
            coef = np.zeros((0, dim), complex)
        return cls(ks, coef, float(data["strip"]), int(data["K"]), float(data.get("tail", 0.0)))


def grid_points(n, d) -> np.ndarray:
    """Uniform grid ``x_j = j / n`` as ``(n^d, d)`` points in C order."""
    axes = [np.arange(n) / n] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _weighted(ks, coef, rho, prime=False):
    if ks.shape[0] == 0:
        return 0.0
    deg = _l1_rows(ks).astype(float)
    w = np.exp(rho * deg)
    if prime:
        w = w * (1.0 + TWO_PI * deg)
    return math.fsum((np.abs(coef).sum(axis=1) * w).tolist())


def _check_rho(f, rho):
    if rho > f.strip * (1.0 + _REL_SLACK) + 1e-300:
        raise DomainError(f"rho={rho} exceeds the strip {f.strip}")


def norm_rho(f: FourierField, rho: Optional[float] = None) -> float:
    """``sum_k ||f_k||_1 e^{rho ||k||_1}``; ``rho`` defaults to the strip."""
    rho = f.strip if rho is None else rho
    _check_rho(f, rho)
    return _weighted(f.ks, f.coef, rho)


def norm_rho_prime(f: FourierField, rho: Optional[float] = None) -> float:
    """``sum_k (1 + 2 pi ||k||_1) ||f_k||_1 e^{rho ||k||_1}``."""
    rho = f.strip if rho is None else rho
    _check_rho(f, rho)
    return _weighted(f.ks, f.coef, rho, prime=True)


# ---------------------------------------------------------------- projections

def resonant_mask(ks, omega, sigma) -> np.ndarray:
    """``|k . omega| <= sigma ||k||_1`` (``k = 0`` included)."""
    dots = np.abs(ks.astype(float) @ np.asarray(omega, dtype=float))
    return dots <= sigma * _l1_rows(ks)


def project_mean(f: FourierField) -> np.ndarray:
    return f.mean()


def project_resonant(f: FourierField, omega, sigma) -> FourierField:
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    keep = resonant_mask(f.ks, omega, sigma)
    return FourierField(f.ks[keep], f.coef[keep], f.strip, f.K, f.tail)


def project_far(f: FourierField, omega, sigma) -> FourierField:
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    keep = ~resonant_mask(f.ks, omega, sigma)
    return FourierField(f.ks[keep], f.coef[keep], f.strip, f.K, 0.0)


# ---------------------------------------------------------------- cut-off and rescale

def cutoff(f: FourierField, rho_new: float) -> FourierField:
    """Restrict to the smaller strip ``rho_new``; coefficients unchanged.

    The nonconstant part contracts at least by ``e^{-(rho - rho_new)}``,
    which is checked on the result.
    """
    if not rho_new > 0:
        raise DomainError("rho_new must be positive")
    if rho_new > f.strip:
        raise DomainError(f"rho_new={rho_new} exceeds the strip {f.strip}")
    out = f.with_strip(rho_new)
    lhs = norm_rho(out.nonconstant(), rho_new)
    rhs = math.exp(-(f.strip - rho_new)) * norm_rho(f.nonconstant(), f.strip)
    if lhs > rhs * (1.0 + _REL_SLACK):
        raise BoundViolation("cut-off contraction", lhs, rhs)
    return out


def rescale_bound(f: FourierField, T, eta, delta) -> float:
    """``|eta| ||T|| ((1 + 2 pi / delta) ||f - Ef||_rho + ||Ef||)``."""
    tn = float(np.abs(np.asarray(T, dtype=float)).sum(axis=0).max())
    mean_norm = float(np.abs(f.mean()).sum())
    return abs(eta) * tn * ((1.0 + TWO_PI / delta) * norm_rho(f.nonconstant(), f.strip) + mean_norm)


def rescale(f: FourierField, T, eta: float, rho_new: float, delta: float = None,
            cone=None, A: float = None, overflow: str = "raise") -> FourierField:
    """Linear change of coordinates and time ``eta T f(T^{-1} x)``.

    The coefficient ``eta T f_k`` moves to index ``T^{-T} k``.

    Parameters
    ----------
    f : FourierField
    T : integer matrix with ``det T = +-1``
    eta : float
    rho_new : float
        Strip of the result.
    delta : float, optional
        Strip margin; with ``A`` it enforces ``rho_new <= rho / A - delta``.
    cone : tuple (omega, sigma), optional
        When given, every nonzero mode of ``f`` must be resonant and the
        operator bound of the rescaling is checked.
    A : float, optional
        Resonance gain of the cone.
    overflow : {"raise", "drop"}
        What to do with modes whose new index exceeds ``K``.
    """
    from .lattice import int_inverse, is_unimodular

    T = np.asarray(T)
    if not is_unimodular(T):
        raise DomainError("rescale needs a unimodular integer matrix")
    T = np.round(T).astype(np.int64)
    if A is not None and delta is not None and A > 0:
        limit = f.strip / A - delta
        if rho_new > limit * (1.0 + _REL_SLACK) + 1e-15:
            raise DomainError(f"rho_new={rho_new} exceeds rho/A - delta = {limit}")
    if cone is not None:
        omega, sigma = cone
        far = (~resonant_mask(f.ks, omega, sigma)) & (np.abs(f.coef).sum(axis=1) > 0)
        if far.any():
            raise DomainError(f"field has far mode {tuple(f.ks[far][0])} for the supplied cone")
    tinv = int_inverse(T)
    new_ks = f.ks @ tinv
    new_coef = linear_image(T, eta, f.coef)
    deg = _l1_rows(new_ks)
    over = deg > f.K
    tail = abs(eta) * f.tail
    if over.any():
        if overflow == "raise":
            raise TruncationOverflowError(new_ks[over][0], f.K)
        tail += _weighted(new_ks[over], new_coef[over], rho_new)
        new_ks, new_coef = new_ks[~over], new_coef[~over]
    out = FourierField(new_ks, new_coef, rho_new, f.K, tail)
    if cone is not None and A is not None and delta is not None:
        lhs = norm_rho_prime(out, rho_new)
        rhs = rescale_bound(f, T, eta, delta)
        if lhs > rhs * (1.0 + 1e-9):
            raise BoundViolation("rescale operator bound", lhs, rhs)
    return out


def translate(f: FourierField, x) -> FourierField:
    """``f o R_x``: coefficients multiplied by ``e^{2 pi i k.x}``."""
    phase = np.exp(1j * TWO_PI * (f.ks.astype(float) @ np.asarray(x, dtype=float)))
    return FourierField(f.ks, f.coef * phase[:, None], f.strip, f.K, f.tail)


# ---------------------------------------------------------------- evaluation

def evaluate(f: FourierField, x) -> np.ndarray:
    """Direct series evaluation at one point ``(d,)`` or many ``(p, d)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    out = kernels.eval_modes(f.ks, f.coef, pts)
    return out[0] if single else out


def derivative(f: FourierField) -> tuple:
    """Columns ``df/dx_j`` as fields; entry ``(a, j)`` is component ``a`` of column ``j``."""
    cols = []
    for j in range(f.dim):
        coef = f.coef * (1j * TWO_PI * f.ks[:, j].astype(float))[:, None]
        cols.append(FourierField(f.ks, coef, f.strip, f.K, 0.0))
    return tuple(cols)


def derivative_norm(f: FourierField, rho: float) -> float:
    """``sum_k ||2 pi i f_k k^T||_op e^{rho ||k||_1}`` (l1 operator norm)."""
    _check_rho(f, rho)
    if f.n_modes == 0:
        return 0.0
    w = TWO_PI * np.abs(f.ks).max(axis=1) * np.abs(f.coef).sum(axis=1)
    return math.fsum((w * np.exp(rho * _l1_rows(f.ks))).tolist())


def jacobian_at(f: FourierField, pts) -> np.ndarray:
    """``Df`` at points, shape ``(p, c, d)``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    cols = [evaluate(c, pts) for c in derivative(f)]
    return np.stack(cols, axis=2)


def jacobian_grid(f: FourierField, n) -> np.ndarray:
    """``Df`` on the ``n^d`` grid, shape ``(n^d, c, d)``."""
    cols = [c.to_grid(n).reshape(-1, f.comps) for c in derivative(f)]
    return np.stack(cols, axis=2)


@dataclass(frozen=True)
class C0Estimate:
    value: float
    grid: int
    refined_value: float
    refined_grid: int


def c0_norm(f: FourierField, grid: Optional[int] = None, max_points: int = 512 ** 2) -> C0Estimate:
    """``max_x ||f(x)||_1`` by grid maximization with one refinement pass.

    The returned ``value`` is the larger of the two grid maxima and is a
    lower bound of the true sup.
    """
    d = f.dim
    cap = max(4, int(round(max_points ** (1.0 / d))))
    if grid is None:
        grid = min(cap // 2, max(16, 4 * (2 * f.K + 1)))
    fine = min(cap, 2 * grid)
    v1 = float(np.abs(f.to_grid(grid)).sum(axis=-1).max()) if f.n_modes else 0.0
    v2 = float(np.abs(f.to_grid(fine)).sum(axis=-1).max()) if f.n_modes else 0.0
    return C0Estimate(max(v1, v2), grid, v2, fine)


def write_grid_csv(f: FourierField, n: int, path) -> None:
    """Export grid samples as CSV rows ``x..., re..., im...``."""
    pts = grid_points(n, f.dim)
    vals = f.to_grid(n).reshape(-1, f.comps)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(f.dim)] + [f"re{a}" for a in range(f.comps)]
                   + [f"im{a}" for a in range(f.comps)])
        for x, v in zip(pts, vals):
            w.writerow([repr(float(t)) for t in x] + [repr(float(t)) for t in v.real]
                       + [repr(float(t)) for t in v.imag])


# ---------------------------------------------------------------- torus maps

@dataclass(frozen=True, eq=False)
class TorusMap:
    """The map ``x -> x + u(x)`` with periodic displacement ``u``."""

    displacement: FourierField

    @classmethod
    def identity(cls, dim, K=0, strip=1.0):
        return cls(FourierField.zeros(dim, strip, K))

    @property
    def dim(self) -> int:
        return self.displacement.dim

    @property
    def strip(self) -> float:
        return self.displacement.strip

    @property
    def K(self) -> int:
        return self.displacement.K

    @property
    def is_identity(self) -> bool:
        return not np.any(self.displacement.coef)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        u = evaluate(self.displacement, x)
        return x + (u.real if self.displacement.real_flag else u)

    def jacobian(self, x) -> np.ndarray:
        jac = jacobian_at(self.displacement, x)
        jac = jac.real if self.displacement.real_flag else jac
        return np.eye(self.dim) + jac

    def min_det(self, n=None) -> float:
        n = n or max(16, 2 * (2 * self.K + 1))
        jac = np.eye(self.dim) + jacobian_grid(self.displacement, n).real
        return float(np.abs(np.linalg.det(jac)).min())

    def equals(self, other) -> bool:
        return isinstance(other, TorusMap) and self.displacement.equals(other.displacement)

    def to_dict(self) -> dict:
        return {"format": "torus-renorm.map", "version": 1, "displacement": self.displacement.to_dict()}

    @classmethod
    def from_dict(cls, data) -> "TorusMap":
        return cls(FourierField.from_dict(data["displacement"]))


def _grid_size(K, grid_factor):
    if grid_factor < 2:
        raise DomainError("grid_factor must be >= 2")
    return int(grid_factor * (2 * K + 1))


def pull_back(X: FourierField, psi: TorusMap, grid_factor: int = 2) -> FourierField:
    """``(D psi)^{-1} X o psi`` computed pseudo-spectrally in difference form.

    With ``psi = id + u`` and ``J = I + Du`` the increment
    ``J^{-1} [X(x+u) - X(x) - Du X(x)]`` is sampled on the padded grid,
    transformed back and added to ``X``.  The result keeps ``X``'s strip and
    degree; dropped modes are added to ``tail``.
    """
    if psi.is_identity:
        return X
    d = X.dim
    K = max(X.K, psi.K)
    n = _grid_size(K, grid_factor)
    pts = grid_points(n, d)
    u_field = psi.displacement
    real = X.real_flag and u_field.real_flag
    u = u_field.to_grid(n).reshape(-1, d)
    du = jacobian_grid(u_field, n)
    if real:
        u, du = u.real, du.real
    jac = np.eye(d) + du
    det = np.abs(np.linalg.det(jac))
    if det.min() < 0.1:
        raise NearSingularMapError(det.min())
    xt = X.nonconstant()
    x_shift = evaluate(xt, pts + u.real)
    x_here = xt.to_grid(n).reshape(-1, d)
    x_full = x_here + X.mean()[None, :]
    rhs = x_shift - x_here - np.einsum("pij,pj->pi", du, x_full)
    if real:
        rhs = rhs.real
    inc = np.linalg.solve(jac, rhs[..., None])[..., 0]
    inc_field = FourierField.from_grid(inc.reshape((n,) * d + (d,)), X.K, X.strip, real=real)
    out = X + inc_field
    return FourierField(out.ks, out.coef, X.strip, X.K, X.tail + inc_field.tail)


def compose(psi2: TorusMap, psi1: TorusMap, grid_factor: int = 2, K: Optional[int] = None) -> TorusMap:
    """``psi2 o psi1``: displacement ``u1 + u2 + [u2(x + u1) - u2(x)]``."""
    if psi1.is_identity:
        return psi2
    if psi2.is_identity:
        return psi1
    d = psi1.dim
    K = max(psi1.K, psi2.K) if K is None else K
    n = _grid_size(K, grid_factor)
    u1, u2 = psi1.displacement, psi2.displacement
    real = u1.real_flag and u2.real_flag
    pts = grid_points(n, d)
    g1 = u1.to_grid(n).reshape(-1, d)
    shift = evaluate(u2, pts + g1.real) - u2.to_grid(n).reshape(-1, d)
    if real:
        shift = shift.real
    inc = FourierField.from_grid(shift.reshape((n,) * d + (d,)), K, min(u1.strip, u2.strip), real=real)
    total = (u1 + u2 + inc).with_degree(K)
    return TorusMap(total)


def compose_many(maps, K: Optional[int] = None, grid_factor: int = 2, check_index: bool = True):
    """``maps[0] o maps[1] o ... o maps[-1]`` by nested pointwise evaluation.

    The displacement ``D`` of the composition is accumulated directly,
    ``D <- D + u_i(x + D)`` from the innermost map outwards, so no
    intermediate truncation occurs.  A single transform at the end gives the
    result; its ``tail`` is the dropped mass.

    Returns
    -------
    TorusMap, list of float
        The composition and the minimum ``|det|`` of each factor's Jacobian
        along the chain.
    """
    maps = list(maps)
    if not maps:
        raise DomainError("need at least one map")
    d = maps[0].dim
    K = max(m.K for m in maps) if K is None else K
    n = _grid_size(K, grid_factor)
    pts = grid_points(n, d)
    disp = np.zeros_like(pts)
    min_dets = [math.inf] * len(maps)
    real = all(m.displacement.real_flag for m in maps)
    for i in range(len(maps) - 1, -1, -1):
        u = maps[i].displacement
        if u.n_modes == 0:
            continue
        at = pts + disp
        if check_index:
            jac = np.eye(d) + jacobian_at(u, at).real
            det = np.abs(np.linalg.det(jac))
            min_dets[i] = float(det.min())
            if min_dets[i] < 0.1:
                raise NearSingularMapError(min_dets[i], factor=i)
        val = evaluate(u, at)
        disp = disp + val.real
    strip = min(m.strip for m in maps)
    field = FourierField.from_grid(disp.reshape((n,) * d + (d,)), K, strip, real=real)
    return TorusMap(field), min_dets


def inverse_map(h: TorusMap, grid_factor: int = 2, K: Optional[int] = None,
                tol: float = 1e-15, max_iter: int = 200) -> TorusMap:
    """Inverse of a near-identity map by fixed-point iteration on a grid.

    The inverse is ``y -> y + v(y)`` with ``v(y) = -u(y + v(y))``.
    """
    d = h.dim
    K = h.K if K is None else K
    n = _grid_size(K, grid_factor)
    pts = grid_points(n, d)
    v = np.zeros_like(pts)
    for _ in range(max_iter):
        new = -evaluate(h.displacement, pts + v).real
        step = float(np.abs(new - v).max())
        v = new
        if step <= tol:
            break
    field = FourierField.from_grid(v.reshape((n,) * d + (d,)), K, h.strip, real=True)
    return TorusMap(field)
