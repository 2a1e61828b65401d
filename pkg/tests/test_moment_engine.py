import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freecirc.errors import ValidationError
from freecirc.moment_engine import (StarWord, moment, moment_bruteforce, nested_power, nested_powers,
                                    pairing_term, parse_word, trace_moment)
from freecirc.nc_partitions import PairPartition
from freecirc.step_algebra import (BlockDensity, CovariancePair, StepFunction, alpha_apply,
                                   beta_apply, make_preset, operator_norms)
from oracles import dt_discrete_trace, moment_by_pairings


def _rand_word(rng, n, m, lead=True):
    sym = tuple(rng.choice(["1", "*"], n))
    co = tuple(StepFunction(rng.standard_normal(m) + 1j * rng.standard_normal(m)) for _ in range(n))
    b0 = StepFunction(rng.standard_normal(m) + 1j * rng.standard_normal(m)) if lead else None
    return StarWord(sym, co, b0)


def test_parse_word():
    w = parse_word("b0 z b1 z* 2", 3, {"b0": [1, 2, 3], "b1": 0.5})
    assert w.symbols == ("1", "*")
    assert np.allclose(w.lead.values, [1, 2, 3])
    assert np.allclose(w.coeffs[0].values, 0.5) and np.allclose(w.coeffs[1].values, 2)
    with pytest.raises(ValidationError):
        parse_word("z q z*", 3)


def test_triangle_zzstar_is_beta_of_one():
    cov = CovariancePair.from_density(make_preset("upper_triangle", 8))
    f = moment(cov, parse_word("z z*", 8))
    # beta(1)(x) = int_x^1 dt on the grid, diagonal block counted fully
    assert f.allclose((8 - np.arange(8)) / 8, atol=1e-15)


def test_odd_unbalanced_and_trivial_words():
    cov = CovariancePair.from_density(make_preset("square", 4))
    assert moment(cov, parse_word("z z* z", 4)).allclose(0)
    assert moment(cov, parse_word("z z", 4)).allclose(0)
    assert moment_bruteforce(cov, parse_word("z z", 4)).allclose(0)
    b0 = StepFunction([1, 2, 3, 4])
    assert moment(cov, StarWord((), (), b0)) == b0


def test_brute_force_length_guard():
    cov = CovariancePair.from_density(make_preset("square", 2))
    with pytest.raises(ValidationError):
        moment_bruteforce(cov, StarWord.from_symbols(["1", "*"] * 9, 2))


def test_worked_example_bracket():
    rng = np.random.default_rng(11)
    H = rng.random((5, 5))
    cov = CovariancePair.from_density(BlockDensity(H))
    pi = PairPartition(((1, 4), (2, 3), (5, 6)))
    b = [StepFunction(rng.standard_normal(5)) for _ in range(6)]
    w = StarWord(("1", "*", "1", "*", "*", "1"), tuple(b))
    want = beta_apply(cov, b[0] * alpha_apply(cov, b[1]) * b[2]) * b[3] * alpha_apply(cov, b[4]) * b[5]
    assert pairing_term(cov, pi, w).allclose(want, atol=1e-13)


@pytest.mark.parametrize("n,cat", [(1, 1), (2, 2), (3, 5), (4, 14), (5, 42), (6, 132), (7, 429)])
def test_square_catalan(n, cat):
    cov = CovariancePair.from_density(make_preset("square", 4))
    w = StarWord.from_symbols(["*", "1"] * n, 4)
    assert abs(trace_moment(cov, w) - cat) < 1e-10


def test_nested_power_matches_moment_and_closed_form():
    m = 16
    cov = CovariancePair.from_density(make_preset("upper_triangle", m))
    fs = nested_powers(cov, 6)
    assert fs[0].allclose(1)
    for n in range(1, 7):
        w = StarWord.from_symbols(["1"] * n + ["*"] * n, m)
        assert nested_power(cov, n).allclose(moment(cov, w), atol=1e-13)
        assert fs[n].trace().real == pytest.approx(float(dt_discrete_trace(m, n)), rel=1e-12)
    with pytest.raises(ValidationError):
        nested_power(cov, 2, 0.3)


def test_nested_power_cutoff():
    cov = CovariancePair.from_density(make_preset("upper_triangle", 8))
    f0 = nested_powers(cov, 0, 0.5)[0]
    assert f0 == StepFunction.indicator(8, 0.5, 1.0)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 5), st.integers(1, 6))
def test_dp_matches_pairing_oracle(seed, half, m):
    rng = np.random.default_rng(seed)
    H_a, H_b = rng.random((m, m)), rng.random((m, m))
    cov = CovariancePair(H_a, H_b)
    w = _rand_word(rng, 2 * half, m)
    ref = moment_by_pairings(H_a, H_b, list(w.symbols), [c.values for c in w.coeffs] or [np.ones(m)],
                             w.lead.values) if half else w.lead.values
    assert np.abs(moment(cov, w).values - ref).max() < 1e-12
    assert moment(cov, w).allclose(moment_bruteforce(cov, w), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5), st.integers(1, 5))
def test_tracial_cyclic_and_adjoint_invariance(seed, half, m):
    rng = np.random.default_rng(seed)
    cov = CovariancePair.from_density(BlockDensity(rng.random((m, m))))
    w = _rand_word(rng, 2 * half, m, lead=False)
    t = trace_moment(cov, w)
    for k in range(1, 2 * half):
        assert abs(trace_moment(cov, w.cyclic_shift(k)) - t) < 1e-12 * max(1, abs(t))
    # tau(E(x*)) = conj(tau(E(x)))
    adj = trace_moment(cov, w.adjoint())
    assert abs(adj - np.conj(t)) < 1e-12 * max(1, abs(t))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5))
def test_unbalanced_words_vanish(seed, m):
    rng = np.random.default_rng(seed)
    cov = CovariancePair.from_density(BlockDensity(rng.random((m, m))))
    n = 4
    w = StarWord(("1", "1", "1", "*"), tuple(StepFunction(rng.random(m)) for _ in range(n)))
    assert moment(cov, w).allclose(0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6))
def test_catalan_norm_bound(seed, m):
    rng = np.random.default_rng(seed)
    cov = CovariancePair.from_density(BlockDensity(3 * rng.random((m, m))))
    K = max(operator_norms(cov))
    for n in range(1, 7):
        f = moment(cov, StarWord.from_symbols(["*", "1"] * n, m))
        assert f.sup_norm() <= K**n * math.comb(2 * n, n) / (n + 1) * (1 + 1e-12)
