"""Quick invariant suite behind ``torus-renorm check``.

Each entry is a small instance of an oracle or identity from the test
suite, sized to finish in seconds.  ``code`` is the CLI exit code of the
module the check belongs to.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    code: int
    seconds: float = 0.0


def _timed(name, code, func):
    t0 = time.perf_counter()
    try:
        ok, detail = func()
    except Exception as exc:  # noqa: BLE001 - a crash is a failed check
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return CheckResult(name, bool(ok), detail, code, time.perf_counter() - t0)


def _cf_oracle():
    from .lattice import FrequencyVector, convergents, expand, golden_alpha, implicit_convergents

    exp = expand(FrequencyVector.preset("golden"), 6.0)
    classical = {q for _, q in convergents(golden_alpha(), 30)}
    qs = [pairs[-1][1] for pairs in implicit_convergents(exp)[1:]]
    fib = [1, 2]
    while len(fib) < len(qs):
        fib.append(fib[-1] + fib[-2])
    ok = qs == fib[:len(qs)] and all(q in classical for q in qs)
    return ok, f"denominators {qs[:8]}"


def random_lattice(rng, d: int) -> np.ndarray:
    """Random real ``d x d`` matrix scaled to ``det = 1``."""
    m = rng.normal(size=(d, d))
    while abs(np.linalg.det(m)) < 1e-3:
        m = rng.normal(size=(d, d))
    if np.linalg.det(m) < 0:
        m[-1] = -m[-1]
    return m / np.linalg.det(m) ** (1.0 / d)


def _shortest_vector(seed):
    from .lattice import LatticeState, reduce, shortest_vector
    from . import kernels

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        m = random_lattice(rng, 2)
        _, st = reduce(LatticeState(m, 0.0))
        sv = shortest_vector(st)
        brute, _ = kernels.min_l1_box(st.matrix, 2 * sv.required_radius)
        worst = max(worst, abs(sv.delta - brute))
    return worst == 0.0, f"max |delta - brute| = {worst}"


def _fixed_point():
    from .field import FourierField
    from .lattice import FrequencyVector
    from .renorm import build_schedule, expansion_for, run

    omega = FrequencyVector.preset("golden")
    exp = expansion_for(omega, 5)
    sched = build_schedule(exp, rho=60.0, n_max=4)
    trace = run(FourierField.constant(omega.components, strip=60.0, K=8), exp, sched)
    dists = [s.dist for s in trace.steps]
    exact = all(np.array_equal(s.field.mean().real, s.omega) for s in trace.steps)
    return max(dists) == 0.0 and exact and trace.verdict == "converging", f"dist {dists}"


def _schedule_consistency():
    from .lattice import FrequencyVector
    from .renorm import build_schedule, expansion_for, schedule_B_direct

    exp = expansion_for(FrequencyVector.preset("golden"), 6)
    sched = build_schedule(exp, rho=60.0, n_max=5)
    err = max(abs(schedule_B_direct(sched, n) - sched.B[n]) for n in range(len(sched.B)))
    return err <= 1e-12 * max(1.0, sched.B[-1]), f"max |B_n - direct| = {err:.2e}"


def _lemmas(seed):
    from .checks import lemma_suite

    tallies = lemma_suite(100, seed)
    bad = {k: t.violations for k, t in tallies.items() if t.violations}
    return not bad, f"violations {bad or 0} over 100 fields"


def _elimination():
    from .elimination import eliminate
    from .field import FourierField
    from .lattice import FrequencyVector

    w = FrequencyVector.preset("golden").components
    modes = {(1, -1): np.array([0.5e-4, 0]), (-1, 1): np.array([0.5e-4, 0])}
    X = FourierField.constant(w, strip=1.1, K=16) + FourierField.from_modes(modes, 1.1, K=16)
    res = eliminate(X, w, 0.1, 1.0, 0.1, unsafe=True)
    return res.residual < 1e-12 and res.iterations <= 5, f"residual {res.residual:.2e} in {res.iterations} sweeps"


def _conjugacy():
    from .conjugacy import verify_conjugacy
    from .field import FourierField, TorusMap, inverse_map
    from .lattice import FrequencyVector
    from .rotation import conjugated_field

    w = FrequencyVector.preset("golden").components
    h = TorusMap(FourierField.from_modes(
        {(1, -1): np.array([-0.5e-4j, 0]), (-1, 1): np.array([0.5e-4j, 0])}, 1.0, K=24))
    X = conjugated_field(w, h, 24)
    res, _ = verify_conjugacy(inverse_map(h, K=24), X, w, grid=64)
    ident, _ = verify_conjugacy(TorusMap.identity(2, 4), FourierField.constant(w, K=4), w, grid=16)
    return res < 1e-8 and ident == 0.0, f"residual {res:.2e}, identity {ident}"


def _rotation():
    from .field import FourierField, TorusMap
    from .lattice import FrequencyVector
    from .rotation import conjugated_field, rotation_vector

    w = FrequencyVector.preset("golden").components
    h = TorusMap(FourierField.from_modes(
        {(1, -1): np.array([-0.5e-6j, 0]), (-1, 1): np.array([0.5e-6j, 0])}, 1.0, K=16))
    est = rotation_vector(conjugated_field(w, h, 16), samples=2, T=500.0, error_samples=1)
    err = float(np.abs(est.vector - w).sum())
    return err < 1e-4, f"|Rot - omega| = {err:.2e} at T = 500"


def invariant_suite(seed: int = 0) -> list:
    """Run every quick check and return :class:`CheckResult` records."""
    return [
        _timed("cf-fibonacci", 2, _cf_oracle),
        _timed("shortest-vector", 2, lambda: _shortest_vector(seed)),
        _timed("constant-fixed-point", 3, _fixed_point),
        _timed("schedule-consistency", 3, _schedule_consistency),
        _timed("norm-lemmas", 3, lambda: _lemmas(seed)),
        _timed("elimination", 3, _elimination),
        _timed("conjugacy-identity", 4, _conjugacy),
        _timed("rotation", 5, _rotation),
    ]
