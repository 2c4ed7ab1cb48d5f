import math
from fractions import Fraction

import numpy as np
import pytest

from torus_renorm import kernels
from torus_renorm.errors import (
    DomainError,
    EmptyExpansionError,
    FlowOverflowError,
    InvariantViolation,
    MalformedScheduleError,
    RationalInputError,
    ResonanceError,
)
from torus_renorm.lattice import (
    CFExpansion,
    ExplicitRule,
    FrequencyVector,
    LatticeState,
    GapRule,
    brjuno_sum,
    brjuno_terms,
    certified_radius,
    continued_fraction,
    convergents,
    delta_along_flow,
    diophantine_check,
    expand,
    expansion_from_dict,
    expansion_to_dict,
    flow_advance,
    flow_matrix,
    golden_alpha,
    int_det,
    int_inverse,
    is_unimodular,
    liouville_alpha,
    mn_bounds,
    omega_matrix,
    op_norm,
    reduce,
    resonance_gain,
    shortest_vector,
    y_condition,
)

PHI = (1 + math.sqrt(5)) / 2


# ---------------------------------------------------------------- flow and reduction

def test_flow_identity_cases():
    st = LatticeState(np.eye(2))
    assert np.array_equal(flow_advance(st, 0.0).matrix, np.eye(2))
    one = flow_advance(st, 1.0)
    assert np.allclose(one.matrix, np.diag([math.exp(-1), math.e]))
    assert one.time == 1.0
    assert np.linalg.det(one.matrix) == pytest.approx(1.0)


def test_flow_golden_half_step(golden):
    m = omega_matrix(golden)
    out = flow_advance(LatticeState(m), 0.5).matrix
    assert np.allclose(out, m @ np.diag([math.exp(-0.5), math.exp(0.5)]), rtol=1e-15, atol=0)


def test_flow_overflow_and_negative_dt():
    with pytest.raises(FlowOverflowError) as info:
        flow_advance(LatticeState(np.eye(2)), 800.0)
    assert info.value.time == 800.0
    with pytest.raises(DomainError):
        flow_advance(LatticeState(np.eye(2)), -1.0)


def test_flow_matrix_three_dim():
    e = flow_matrix(3, 0.4)
    assert np.allclose(np.diag(e), [math.exp(-0.4), math.exp(-0.4), math.exp(0.8)])


def test_reduce_idempotent_and_swap():
    m = np.array([[1.0, 0.1], [0.05, 1.005]])
    m = m / math.sqrt(np.linalg.det(m))
    p, st = reduce(LatticeState(m))
    p2, st2 = reduce(st)
    assert np.array_equal(p2, np.eye(2, dtype=np.int64))
    assert np.array_equal(st2.matrix, st.matrix)
    swapped = st.matrix[::-1].copy()
    swapped[-1] *= -1
    q, st3 = reduce(LatticeState(swapped))
    assert abs(int_det(q)) == 1
    assert np.allclose(st3.matrix, st.matrix)


def test_reduce_rejects_non_unimodular():
    with pytest.raises(InvariantViolation):
        reduce(LatticeState(2 * np.eye(2)))


def test_reduce_golden_t2_is_fibonacci(golden):
    st = flow_advance(LatticeState(omega_matrix(golden)), 2.0)
    p, _ = reduce(st)
    qs = sorted(abs(int(r[0])) for r in p)
    fib = {1, 2, 3, 5, 8, 13}
    assert set(qs) <= fib


# ---------------------------------------------------------------- shortest vector

def test_shortest_vector_trivial_cases():
    sv = shortest_vector(LatticeState(np.eye(2)), radius=1)
    assert sv.delta == 1.0
    assert np.abs(sv.argmin).sum() == 1
    sv = shortest_vector(LatticeState(np.diag([math.exp(-1), math.e])), radius=1)
    assert sv.delta == pytest.approx(math.exp(-1), rel=1e-15)
    assert tuple(sv.argmin) == (1, 0)


def test_shortest_vector_golden_t3_double_radius(golden):
    st = flow_advance(LatticeState(omega_matrix(golden)), 3.0)
    # radius 34 is far below the certified 250; the double-radius oracle still agrees
    with pytest.warns(RuntimeWarning, match="below certified radius"):
        sv = shortest_vector(st, radius=34)
    brute, _ = kernels.min_l1_box_np(st.matrix, 68)
    assert sv.delta == brute


def test_shortest_vector_uncertified_warns():
    m = np.array([[1.0, 100.0], [0.0, 1.0]])
    need = certified_radius(m)
    assert need > 1
    with pytest.warns(RuntimeWarning):
        sv = shortest_vector(LatticeState(m), radius=1)
    assert not sv.certified
    delta, arg = sv
    assert delta == sv.delta


# ---------------------------------------------------------------- integer helpers

def test_integer_helpers():
    m = np.array([[2, 1], [1, 1]])
    assert int_det(m) == 1
    assert np.array_equal(int_inverse(m) @ m, np.eye(2))
    assert is_unimodular(m) and not is_unimodular(np.array([[2, 0], [0, 1]]))
    assert op_norm(np.array([[1, 2], [3, -4]])) == 6.0


# ---------------------------------------------------------------- expansion

def test_expand_golden_convergents(golden, golden_exp):
    assert golden_exp.steps[0].lam == 1.0
    assert np.array_equal(golden_exp.steps[0].omega, golden.components)
    assert np.array_equal(golden_exp.steps[0].P, np.eye(2, dtype=np.int64))
    times = golden_exp.times
    assert np.all(np.diff(times) > 0)
    for st in golden_exp.steps[1:]:
        assert abs(int_det(st.P)) == 1
    # from step 3 on every jump is a single Fibonacci step
    for st in golden_exp.steps[3:]:
        assert op_norm(st.T) == 2.0
        assert abs(st.eta) == pytest.approx(PHI, rel=1e-9)


def test_expand_baseline_values(golden):
    exp = expand(golden, 6.0)
    assert len(exp.steps) == 14
    assert exp.steps[1].t == pytest.approx(0.1203, abs=1e-4)
    sig = [s.sigma for s in exp.steps[:4]]
    assert sig[:3] == pytest.approx([0.786, 0.419, 0.378], abs=1e-3)
    assert exp.steps[6].sigma == pytest.approx(0.38197, abs=1e-4)
    assert [s.A for s in exp.steps[:3]] == pytest.approx([1.6, 0.923, 0.762], abs=1e-3)


def test_expand_t_transfer_consistency(golden_exp):
    prev = golden_exp.steps[0]
    for st in golden_exp.steps[1:]:
        assert np.array_equal(st.T @ prev.P, st.P)
        prev = st


def test_expand_rejects_rational_and_empty():
    with pytest.raises(DomainError):
        FrequencyVector.from_alpha([Fraction(1, 2)])
    with pytest.raises(EmptyExpansionError):
        expand(FrequencyVector.preset("golden"), 0.0)


def test_liouville_expansion_hits_resonance():
    om = FrequencyVector.from_alpha([liouville_alpha(3)])
    with pytest.raises(ResonanceError):
        expand(om, 15.0)


def test_expansion_roundtrip(golden_exp):
    data = expansion_to_dict(golden_exp)
    back = expansion_from_dict(data)
    assert len(back.steps) == len(golden_exp.steps)
    for a, b in zip(back.steps, golden_exp.steps):
        assert np.array_equal(a.P, b.P) and a.t == b.t and a.sigma == b.sigma and a.A == b.A
    assert expansion_to_dict(back) == data


def test_three_dimensional_expansion():
    alpha = [Fraction(2 ** 0.5).limit_denominator(10 ** 12), Fraction(3 ** 0.5).limit_denominator(10 ** 12)]
    exp = expand(FrequencyVector.from_alpha(alpha), 2.0)
    assert exp.steps[0].P.shape == (3, 3)
    for st in exp.steps:
        assert abs(int_det(st.P)) == 1


# ---------------------------------------------------------------- resonance gain

def test_resonance_gain_identity_transfer(golden_exp):
    st = golden_exp.steps[2]
    g = resonance_gain(st, np.eye(2, dtype=np.int64))
    assert g.A == pytest.approx(1.0)
    assert not g.empty_cone


def test_resonance_gain_empty_cone(golden_exp):
    st = golden_exp.steps[2]
    from dataclasses import replace

    tiny = replace(st, sigma=1e-12)
    g = resonance_gain(tiny, golden_exp.steps[3].T, enum_radius=3)
    assert g.empty_cone and g.A == 0.0


def test_mn_bounds_keys(golden_exp):
    b = mn_bounds(golden_exp)
    assert isinstance(b, dict) and b


# ---------------------------------------------------------------- sigma rules

def test_gap_rule_sigmas_and_recursive_thinning():
    times = [0.0, 0.5, 1.0, 2.0, 3.0]
    rule = GapRule()
    assert rule.sigmas(times, 2) == pytest.approx([math.exp(-1.0), math.exp(-1.0), math.exp(-2.0), math.exp(-2.0)])
    assert rule.select(times, 2) == [0, 1, 2, 3, 4]
    assert GapRule(recursive=True).select(times, 2) == [0, 2, 3, 4]
    with pytest.raises(DomainError):
        GapRule(xi=1.5, recursive=True).select(times, 2)


def test_explicit_rule_pads():
    r = ExplicitRule((0.1,))
    assert r.sigmas([0, 1, 2], 2) == [0.1, None]


# ---------------------------------------------------------------- arithmetic

def test_delta_at_time_zero(golden):
    assert delta_along_flow(golden, [0.0])[0] == pytest.approx(1.0)


def test_diophantine_golden_positive(golden):
    rep = diophantine_check(golden, 0.0, 6.0, 121)
    assert rep.dioph_ok and rep.c_prime > 0.5


def test_diophantine_liouville_collapses():
    om = FrequencyVector.from_alpha([liouville_alpha(3)])
    short = diophantine_check(om, 0.0, 3.0, 31).c_prime
    long = diophantine_check(om, 0.0, 12.0, 121).c_prime
    assert long < short / 3


def test_diophantine_bad_args(golden):
    with pytest.raises(DomainError):
        diophantine_check(golden, -1.0, 5.0, 10)


def test_y_condition_one_step_by_hand(golden):
    exp = expand(golden, 6.0)
    short = CFExpansion(exp.omega, exp.steps[:2], sigma_rule=exp.sigma_rule)
    rep = y_condition(short)
    s0, s1 = exp.steps[0], exp.steps[1]
    term = s0.A * math.log(abs(s1.eta) * op_norm(s1.T) * s0.sigma * s1.omega_norm / s1.sigma)
    assert rep.y_series_terms[0] == pytest.approx(term, rel=1e-15)


def test_y_condition_log_one(golden):
    from dataclasses import replace

    exp = expand(golden, 6.0)
    s0, s1 = exp.steps[0], exp.steps[1]
    s1 = replace(s1, eta=1.0, T=np.eye(2, dtype=np.int64), sigma=s0.sigma * s1.omega_norm)
    rep = y_condition(CFExpansion(exp.omega, (s0, s1), sigma_rule=exp.sigma_rule))
    assert rep.y_series_terms[0] == pytest.approx(0.0, abs=1e-15)


def test_y_condition_malformed(golden):
    from dataclasses import replace

    exp = expand(golden, 6.0)
    s1 = replace(exp.steps[1], eta=0.0)
    with pytest.raises(MalformedScheduleError):
        y_condition(CFExpansion(exp.omega, (exp.steps[0], s1), sigma_rule=exp.sigma_rule))


def test_y_terms_baseline(golden_exp):
    rep = y_condition(golden_exp)
    assert rep.y_series_terms[:4] == pytest.approx([3.654, 4.018, 2.396, 1.835], abs=1e-3)
    tail = rep.y_series_terms[4:]
    assert all(b < a for a, b in zip(tail, tail[1:]))


# ---------------------------------------------------------------- classical continued fractions

def test_continued_fraction_and_convergents():
    assert continued_fraction(Fraction(415, 93), 10) == [4, 2, 6, 7]
    assert continued_fraction(golden_alpha(), 6) == [0, 1, 1, 1, 1, 1]
    assert convergents(golden_alpha(), 6) == [(0, 1), (1, 1), (1, 2), (2, 3), (3, 5), (5, 8)]


def test_brjuno_golden_fibonacci():
    terms = brjuno_terms(golden_alpha(), 10)
    fib = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144]
    assert terms == pytest.approx([math.log(fib[n + 1]) / fib[n] for n in range(11)], rel=1e-15)
    assert brjuno_sum(golden_alpha(), 0) == pytest.approx(terms[0])
    assert math.isfinite(brjuno_sum(golden_alpha(), 10))


def test_brjuno_rational_raises():
    with pytest.raises(RationalInputError):
        brjuno_sum(Fraction(1, 3), 5)
    with pytest.raises(RationalInputError):
        brjuno_sum(Fraction(2), 1)
