"""Randomized checks of the norm estimates.

The norm estimates are compared on random trigonometric fields:

* cut-off: ``||I f - E f||_{rho'} <= e^{-(rho - rho')} ||f - E f||_rho``;
* rescale: ``||L f||'_{rho'} <= |eta| ||T|| ((1 + 2 pi / delta) ||f - E f||_rho + ||E f||)``
  for resonant ``f`` and ``rho' <= rho / A - delta``;
* Cauchy: ``||f||'_{rho - delta} <= (1 + 2 pi / delta) ||f||_rho``;
* chain: ``sup |f| <= ||f||_0 <= ||f||_rho <= ||f||'_rho`` and monotonicity in ``rho``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolation
from .field import (
    TWO_PI,
    FourierField,
    c0_norm,
    norm_rho,
    norm_rho_prime,
    rescale,
    rescale_bound,
    resonant_mask,
)

_SLACK = 1e-12


def random_field(rng, dim: int = 2, K: int = 8, n_modes: int = 12, strip: float = 1.0,
                 amplitude: float = 1.0, real: bool = True, cone=None, mean=None) -> FourierField:
    """Random field with ``n_modes`` modes of degree ``<= K``.

    ``cone = (omega, sigma)`` keeps only resonant modes.  ``mean`` fixes the
    constant term.
    """
    rng = np.random.default_rng(rng)
    modes = {}
    tries = 0
    while len(modes) < n_modes and tries < 50 * n_modes:
        tries += 1
        k = rng.integers(-K, K + 1, dim)
        if not k.any() or np.abs(k).sum() > K:
            continue
        if cone is not None and not resonant_mask(k[None, :], cone[0], cone[1])[0]:
            continue
        c = amplitude * (rng.normal(size=dim) + 1j * rng.normal(size=dim)) * math.exp(-rng.uniform(0, 2) * np.abs(k).sum())
        key = tuple(int(v) for v in k)
        modes[key] = modes.get(key, 0) + c
        if real:
            neg = tuple(-v for v in key)
            modes[neg] = modes.get(neg, 0) + np.conj(c)
    m = np.asarray(mean if mean is not None else rng.normal(size=dim), dtype=complex)
    modes[(0,) * dim] = modes.get((0,) * dim, 0) + m
    return FourierField.from_modes(modes, strip, K=K, dim=dim)


@dataclass
class LemmaTally:
    name: str
    count: int = 0
    violations: int = 0
    worst_ratio: float = 0.0
    examples: list = field(default_factory=list)

    def add(self, lhs, rhs, note=""):
        self.count += 1
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        self.worst_ratio = max(self.worst_ratio, ratio)
        if lhs > rhs * (1.0 + _SLACK) + 1e-300:
            self.violations += 1
            if len(self.examples) < 5:
                self.examples.append((lhs, rhs, note))

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"name": self.name, "count": self.count, "violations": self.violations,
                "worst_ratio": self.worst_ratio, "examples": [list(e) for e in self.examples]}


def check_cutoff(f: FourierField, rho_new: float, tally: LemmaTally):
    osc = f.nonconstant()
    lhs = norm_rho(osc, rho_new)
    rhs = math.exp(-(f.strip - rho_new)) * norm_rho(osc, f.strip)
    tally.add(lhs, rhs, f"rho'={rho_new}")


def check_rescale(f: FourierField, T, eta, A, delta, tally: LemmaTally):
    rho_new = f.strip / A - delta
    # room for the reindexed modes so nothing is dropped
    wide = f.with_degree(f.K * int(np.abs(np.asarray(T)).sum()))
    out = rescale(wide, T, eta, rho_new)
    tally.add(norm_rho_prime(out, rho_new), rescale_bound(f, T, eta, delta), f"A={A}")


def check_cauchy(f: FourierField, delta: float, tally: LemmaTally):
    rho = f.strip
    lhs = norm_rho_prime(f, rho - delta)
    rhs = (1.0 + TWO_PI / delta) * norm_rho(f, rho)
    tally.add(lhs, rhs, f"delta={delta}")


def check_chain(f: FourierField, tally: LemmaTally, rng):
    rho = f.strip
    sup = c0_norm(f, grid=64).value
    n0 = norm_rho(f, 0.0)
    lo = float(rng.uniform(0, rho))
    tally.add(sup, n0, "sup <= ||.||_0")
    tally.add(n0, norm_rho(f, lo), "||.||_0 <= ||.||_r")
    tally.add(norm_rho(f, lo), norm_rho(f, rho), "monotone in rho")
    tally.add(norm_rho(f, rho), norm_rho_prime(f, rho), "||.|| <= ||.||'")


def lemma_suite(n_fields: int = 1000, seed: int = 0, steps=None) -> dict:
    """Run the four norm checks on ``n_fields`` random fields each.

    ``steps`` is a list of ``(omega, sigma, T_next, eta_next, A)`` cones for
    the rescale check; a golden-mean default is used when omitted.
    """
    rng = np.random.default_rng(seed)
    if steps is None:
        steps = _default_cones()
    tallies = {k: LemmaTally(k) for k in ("cutoff", "rescale", "cauchy", "chain")}
    for i in range(n_fields):
        strip = float(rng.uniform(0.2, 3.0))
        K = int(rng.integers(2, 12))
        f = random_field(rng, 2, K, int(rng.integers(1, 16)), strip)
        check_cutoff(f, float(rng.uniform(0.01, 1.0)) * strip, tallies["cutoff"])
        check_cauchy(f, float(rng.uniform(0.01, 1.0)) * strip, tallies["cauchy"])
        check_chain(f, tallies["chain"], rng)
        omega, sigma, T, eta, A = steps[i % len(steps)]
        g = random_field(rng, 2, K, int(rng.integers(1, 16)), strip, cone=(omega, sigma))
        check_rescale(g, T, eta, A, float(rng.uniform(0.01, 0.9)) * strip / A, tallies["rescale"])
    return tallies


def _default_cones():
    from .lattice import FrequencyVector, expand

    exp = expand(FrequencyVector.preset("golden"), 3.0)
    return [(s.omega, s.sigma, exp.steps[s.n + 1].T, exp.steps[s.n + 1].eta, s.A)
            for s in exp.steps if s.A is not None]


def assert_lemmas(tallies: dict):
    for t in tallies.values():
        if not t.ok:
            lhs, rhs, _ = t.examples[0]
            raise BoundViolation(t.name, lhs, rhs)
