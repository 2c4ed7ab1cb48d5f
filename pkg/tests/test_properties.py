import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from torus_renorm.checks import random_field
from torus_renorm.elimination import epsilon_radius
from torus_renorm.field import (
    TorusMap,
    cutoff,
    inverse_map,
    norm_rho,
    rescale,
    translate,
)
from torus_renorm.lattice import LatticeState, flow_matrix, is_unimodular, reduce, shortest_vector

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

seeds = st.integers(0, 2**32 - 1)
strips = st.floats(0.2, 2.0)


def _unimodular(rng, d=2, steps=6):
    U = np.eye(d, dtype=np.int64)
    for _ in range(steps):
        i, j = rng.choice(d, 2, replace=False)
        E = np.eye(d, dtype=np.int64)
        E[i, j] = rng.integers(-2, 3)
        U = U @ E
    return U


@SETTINGS
@given(seeds, strips, st.floats(0.0, 1.0))
def test_norm_monotone_in_strip(seed, rho, frac):
    f = random_field(seed, 2, 6, 8, rho)
    assert norm_rho(f, frac * rho) <= norm_rho(f, rho) * (1 + 1e-14)


@SETTINGS
@given(seeds, strips, st.floats(0.05, 0.95))
def test_cutoff_contraction(seed, rho, frac):
    f = random_field(seed, 2, 6, 8, rho)
    new = frac * rho
    g = cutoff(f, new)
    lhs = norm_rho(g.nonconstant(), new)
    assert lhs <= math.exp(-(rho - new)) * norm_rho(f.nonconstant(), rho) * (1 + 1e-12)


@SETTINGS
@given(seeds, st.floats(0.1, 10.0))
def test_rescale_identity_matrix_scales(seed, eta):
    f = random_field(seed, 2, 5, 8, 1.0)
    out = rescale(f, np.eye(2, dtype=np.int64), eta, 1.0)
    assert np.array_equal(out.ks, f.ks)
    assert np.allclose(out.coef, eta * f.coef, rtol=1e-15, atol=0)


@SETTINGS
@given(seeds, st.tuples(st.floats(-3, 3), st.floats(-3, 3)), st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_translate_composes(seed, x, y):
    f = random_field(seed, 2, 5, 8, 1.0)
    a = translate(translate(f, x), y)
    b = translate(f, np.add(x, y))
    assert np.abs(a.coef - b.coef).max() <= 1e-11 * np.abs(f.coef).max()


@settings(max_examples=10, deadline=None)
@given(seeds, st.floats(1e-4, 5e-3))
def test_inverse_map_roundtrip(seed, amp):
    h = TorusMap(random_field(seed, 2, 2, 3, 1.0, amplitude=amp, mean=np.zeros(2)))
    inv = inverse_map(h, K=16)
    pts = np.random.default_rng(seed).uniform(0, 1, (20, 2))
    # truncation error of the inverse is second order in the amplitude
    assert np.abs(h(inv(pts)) - pts).max() < 1e-3 * amp**2


@SETTINGS
@given(seeds, st.floats(0.0, 8.0))
def test_reduce_is_unimodular(seed, t):
    rng = np.random.default_rng(seed)
    M = _unimodular(rng) @ flow_matrix(2, t)
    P, red = reduce(LatticeState(M, t))
    assert is_unimodular(P)
    assert np.allclose(red.matrix, P @ M, rtol=0, atol=1e-9 * max(1.0, np.abs(M).max()))


@SETTINGS
@given(seeds, st.floats(0.0, 4.0), st.integers(1, 4))
def test_shortest_vector_matches_brute(seed, t, radius):
    rng = np.random.default_rng(seed)
    M = _unimodular(rng, steps=3) @ flow_matrix(2, t)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sv = shortest_vector(LatticeState(M, t), radius=radius)
    brute = min(np.abs(np.array(k, float) @ M).sum()
                for k in itertools.product(range(-radius, radius + 1), repeat=2) if any(k))
    assert sv.delta == pytest.approx(brute, rel=1e-12)


@SETTINGS
@given(st.floats(1e-3, 1.0), st.floats(1e-3, 10.0), st.floats(1.0, 10.0))
def test_epsilon_positive(frac, nu, v):
    sigma = frac * v * 0.999
    eps = epsilon_radius(sigma, nu, v)
    assert 0 < eps < sigma
