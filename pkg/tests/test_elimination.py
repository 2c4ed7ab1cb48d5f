import math

import numpy as np
import pytest

from torus_renorm.elimination import (
    eliminate,
    epsilon_formula,
    epsilon_radius,
    first_order_map,
    homotopy_eliminate,
    solve_linearized,
    translation_commutation_check,
)
from torus_renorm.errors import DomainError, NonConvergenceError, PreconditionError
from torus_renorm.field import FourierField, norm_rho, project_far

W = np.array([(math.sqrt(5) - 1) / 2, 1.0])


def cos_field(amp, k=(1, -1), strip=1.1, K=16, axis=0):
    e = np.zeros(2, dtype=complex)
    e[axis] = amp / 2
    neg = tuple(-v for v in k)
    return FourierField.constant(W, strip=strip, K=K) + FourierField.from_modes({k: e, neg: e}, strip, K=K)


def test_epsilon_radius_example():
    assert epsilon_radius(0.1, 0.1, 1.6180339887) == pytest.approx(2.0437e-6, rel=1e-4)
    inner = min(0.1 / (4 * math.pi), 0.1 / (72 * 1.6180339887))
    assert inner == pytest.approx(8.5837e-4, rel=1e-4)


def test_epsilon_degenerate_equality():
    # both arguments of the min equal 1 when nu = 4 pi and sigma = 72 v
    v = 0.5
    sigma = 72 * v
    assert epsilon_formula(sigma, 4 * math.pi, v) == pytest.approx(sigma / 42.0)


def test_epsilon_radius_errors():
    with pytest.raises(DomainError):
        epsilon_radius(2.0, 0.1, 1.6)
    with pytest.raises(DomainError):
        epsilon_radius(0.1, 0.0, 1.6)


def test_constant_and_resonant_are_untouched():
    const = FourierField.constant(W, strip=1.1, K=8)
    res = eliminate(const, W, 0.1, 1.0, 0.1)
    assert res.map.is_identity and res.iterations == 0
    # (1, -1) is resonant at sigma = 0.2
    X = cos_field(1e-9, K=8)
    res = eliminate(X, W, 0.2, 1.0, 0.1)
    assert res.map.is_identity and res.iterations == 0
    assert np.array_equal(res.field.coef, X.coef)


def test_precondition_enforced():
    with pytest.raises(PreconditionError):
        eliminate(cos_field(1e-4), W, 0.1, 1.0, 0.1)


def test_strip_checked():
    with pytest.raises(DomainError):
        eliminate(cos_field(1e-9, strip=1.0), W, 0.1, 1.0, 0.1)


def test_far_modes_removed_and_quadratic():
    X = cos_field(1e-4)
    res = eliminate(X, W, 0.1, 1.0, 0.1, unsafe=True)
    assert res.residual < 1e-12 and res.iterations <= 5
    assert project_far(res.field, W, 0.1).n_modes == 0
    h = res.history
    assert h[1] < h[0] ** 1.5


def test_solve_linearized_divides():
    F = project_far(cos_field(1e-4), W, 0.1)
    u = solve_linearized(F, W, 0.1)
    k = np.array([1, -1])
    got = u.mode(k)
    want = F.mode(k) / (2j * math.pi * (k @ W))
    assert np.allclose(got, want, rtol=1e-15)
    assert np.allclose(first_order_map(cos_field(1e-4), W, 0.1).coef, u.coef)


def test_homotopy_endpoints():
    X = cos_field(1e-6)
    zero = homotopy_eliminate(X, W, 0.1, 1.0, 0.1, 0.0, unsafe=True)
    assert zero.map.is_identity and norm_rho(zero.field - X.with_strip(1.0), 1.0) == 0.0
    one = homotopy_eliminate(X, W, 0.1, 1.0, 0.1, 1.0, unsafe=True)
    ref = eliminate(X, W, 0.1, 1.0, 0.1, unsafe=True)
    assert norm_rho(one.field - ref.field, 1.0) == 0.0
    half = homotopy_eliminate(X, W, 0.1, 1.0, 0.1, 0.5, unsafe=True)
    far_half = norm_rho(project_far(half.field, W, 0.1), 1.0)
    far_full = norm_rho(project_far(X.with_strip(1.0), W, 0.1), 1.0)
    assert far_half == pytest.approx(0.5 * far_full, rel=1e-6)
    with pytest.raises(DomainError):
        homotopy_eliminate(X, W, 0.1, 1.0, 0.1, 1.5)


def test_non_convergence_reports_history():
    with pytest.raises(NonConvergenceError) as info:
        eliminate(cos_field(1e-4), W, 0.1, 1.0, 0.1, unsafe=True, max_iter=1)
    assert len(info.value.history) >= 2


def test_result_serializes():
    res = eliminate(cos_field(1e-6), W, 0.1, 1.0, 0.1, unsafe=True)
    d = res.to_dict()
    assert d["iterations"] == res.iterations and d["unsafe"]


@pytest.mark.parametrize("x", [(0.0, 0.0), (1.0, -2.0), (0.3, 0.7)])
def test_translation_commutation(x):
    rep = translation_commutation_check(cos_field(1e-5), np.array(x), W, 0.1, 1.0, 0.1, unsafe=True)
    assert rep.ok
    if x == (0.0, 0.0):
        assert rep.map_error == 0.0 and rep.field_error == 0.0


def test_translation_commutation_steps_of_run(unsafe_instance):
    X, sched, trace = unsafe_instance
    for n in (0, 1):
        Xn = trace.steps[n].field
        strip = max(trace.steps[n].strip, sched.nu)
        rep = translation_commutation_check(Xn.with_strip(strip), np.array([0.3, 0.7]), sched.omega[n],
                                            sched.sigma[n], strip - sched.nu, sched.nu, unsafe=True)
        assert rep.ok
