import numpy as np
import pytest

from torus_renorm.conjugacy import (
    ConjugacyChain,
    c1_distance,
    check_chain,
    compose_chain,
    decreasing_from,
    h_translation_check,
    proof_identity_bound,
    verify_conjugacy,
    w_map,
    wn_norm_check,
)
from torus_renorm.errors import DomainError, NearSingularMapError
from torus_renorm.field import TWO_PI, FourierField, TorusMap, grid_points, inverse_map
from torus_renorm.lattice import op_norm
from torus_renorm.rotation import conjugated_field, random_torus_map

from conftest import shear_map


def test_w_map_trivial():
    ident = TorusMap.identity(2, 4)
    assert w_map(ident, np.array([[1, 1], [0, 1]])).is_identity
    U = shear_map(1e-3, K=8)
    same = w_map(U, np.eye(2, dtype=np.int64))
    assert np.array_equal(same.displacement.coef, U.displacement.coef)
    with pytest.raises(DomainError):
        w_map(U, np.array([[2, 0], [0, 1]]))


def test_w_map_pointwise():
    P = np.array([[1, 1], [0, 1]])
    U = shear_map(1e-2, K=8)
    W = w_map(U, P)
    pts = np.random.default_rng(40).uniform(0, 1, (100, 2))
    pinv = np.linalg.inv(P)
    want = (pinv @ (U(pts @ P.T) - pts @ P.T).T).T
    got = W(pts) - pts
    assert np.abs(got - want).max() < 1e-15
    assert W.strip == pytest.approx(U.strip / op_norm(P))


def test_compose_chain_trivial_and_oracle():
    ident = TorusMap.identity(2, 4)
    H, _ = compose_chain([ident, ident])
    assert H.is_identity
    f = shear_map(1e-2, K=24)
    single, dets = compose_chain([f])
    assert single is f and len(dets) == 1
    g = TorusMap(shear_map(2e-2, k=(0, 1), K=24).displacement)
    H, _ = compose_chain([f, g], K=24)
    pts = np.random.default_rng(41).uniform(0, 1, (100, 2))
    assert np.abs(H(pts) - f(g(pts))).max() < 1e-8


def test_compose_chain_singular_factor():
    bad = shear_map(1.0 / TWO_PI, k=(1, 0), K=4)
    with pytest.raises(NearSingularMapError) as info:
        compose_chain([shear_map(1e-3, K=4), bad])
    assert info.value.factor == 1


def test_c1_distance_cases():
    f = shear_map(1e-2, K=8)
    assert c1_distance(f, f) == 0.0
    c = np.array([1e-3, -2e-3])
    g = TorusMap(f.displacement + FourierField.constant(c, strip=f.strip, K=8))
    assert c1_distance(f, g) == pytest.approx(np.abs(c).sum(), rel=1e-12)


def test_c1_distance_fine_grid_oracle():
    rng = np.random.default_rng(42)
    f = random_torus_map(rng, 2, 4, 1e-2, 1.0, 8)
    g = random_torus_map(rng, 2, 4, 1e-2, 1.0, 8)
    coarse = c1_distance(f, g, grid=64)
    fine = c1_distance(f, g, grid=256, refine=False)
    assert abs(coarse - fine) <= 0.01 * fine


def test_verify_conjugacy_identity_and_inverse(golden):
    w = golden.components
    res, per = verify_conjugacy(TorusMap.identity(2, 4), FourierField.constant(w, K=4), w, grid=32)
    assert res == 0.0 and per.shape == (32 * 32,)
    h = shear_map(1e-3, K=24)
    X = conjugated_field(w, h, 24)
    res, _ = verify_conjugacy(inverse_map(h, K=24), X, w, grid=64)
    assert res < 1e-8


def test_wn_norm_check_trivial(raised_golden):
    exp, sched = raised_golden
    rep = wn_norm_check(TorusMap.identity(2, 4), exp.steps[1], 0.0, sched.R[1])
    assert rep.lhs == 0.0 and rep.ok


@pytest.fixture(scope="module")
def raised_golden(deep_exp):
    import warnings

    from torus_renorm.renorm import build_schedule

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return deep_exp, build_schedule(deep_exp, auto_raise=True)


def test_constant_trace_chain(golden, raised_golden):
    from torus_renorm.conjugacy import chain_from_trace
    from torus_renorm.renorm import run

    exp, sched = raised_golden
    X = FourierField.constant(sched.omega[0], strip=sched.rho0, K=4)
    trace = run(X, exp, sched, n_max=3)
    chain = chain_from_trace(trace, exp)
    assert chain.composed.is_identity and all(v == 0.0 for v in chain.c1_deltas)
    st = exp.steps[3]
    chain = check_chain(chain, X, golden.components, 32, st.lam, st.P, 0.0)
    assert chain.check.residual == 0.0 and chain.check.identity_bound == 0.0
    for n in range(3):
        rep = wn_norm_check(chain.maps[n], exp.steps[n], 0.0, sched.R[n])
        assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.ok


def test_unsafe_chain_wn_and_roundtrip(golden, deep_exp, unsafe_instance, unsafe_chain):
    X, sched, trace = unsafe_instance
    for n in range(4):
        rep = wn_norm_check(unsafe_chain.maps[n], deep_exp.steps[n], trace.steps[n].dist, sched.R[n])
        assert rep.ok, rep
    chain = check_chain(unsafe_chain, X, golden.components, 64)
    back = ConjugacyChain.from_dict(chain.to_dict())
    pts = grid_points(8, 2)
    assert np.array_equal(back.composed(pts), chain.composed(pts))
    assert back.c1_deltas == chain.c1_deltas and back.check.residual == chain.check.residual
    with pytest.raises(DomainError):
        ConjugacyChain.from_dict({"format": "other"})


def test_proof_identity_bound():
    P = np.array([[1, 1], [1, 2]])
    assert proof_identity_bound(2.0, P, 1e-3) == pytest.approx(op_norm(np.array([[2, -1], [-1, 1]])) * 5e-4)


def test_decreasing_from():
    assert decreasing_from([5, 1, 3, 2, 2, 0], 2)
    assert not decreasing_from([5, 1, 3, 2, 2, 0], 2, strict=True)
    assert not decreasing_from([1, 2], 0)
    assert decreasing_from([3.0], 0)


def test_h_translation_exact_shift():
    H = shear_map(1e-3, K=8)
    x = np.array([0.3, 0.7])
    from torus_renorm.field import translate

    shifted = TorusMap(translate(H.displacement, x))
    assert h_translation_check(H, shifted, x).ok
    assert not h_translation_check(H, H, x, tol=1e-12).ok
