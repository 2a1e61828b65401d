import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from hypothesis import given, settings, strategies as st

from freecirc.errors import ConvergenceError, ValidationError
from freecirc.moment_engine import StarWord, trace_moment
from freecirc.step_algebra import (BlockDensity, CovariancePair, StepFunction, adjoint, alpha_apply,
                                   make_preset)
from freecirc.transforms import (TransformQuery, cauchy_scalar, gt_fixed_point, gt_series, k_map,
                                 moments_from_cauchy, r_transform, series_guard, spectral_density)
from oracles import marchenko_pastur_G, marchenko_pastur_density

SQ = CovariancePair.from_density(make_preset("square", 8))
UT = CovariancePair.from_density(make_preset("upper_triangle", 8))


def test_series_trivial_cases():
    assert gt_series(TransformQuery(SQ, 1.0, 0.0)).value.allclose(0)
    assert gt_series(TransformQuery(SQ, 1.0, 0.3, series_order=0)).value.allclose(0.3)


def test_series_catalan_scalar():
    res = gt_series(TransformQuery(SQ, 1.0, 0.1, series_order=25))
    want = sum(math.comb(2 * n, n) / (n + 1) * 0.1 ** (n + 1) for n in range(26))
    assert res.value.allclose(want, atol=1e-14)
    assert res.guard_ok and not res.diverging
    assert gt_series(TransformQuery(SQ, 1.0, 0.5, series_order=3)).diverging


def test_fixed_point_matches_series_and_zero():
    q = TransformQuery(SQ, 1.0, 0.05)
    assert gt_fixed_point(q).value.allclose(gt_series(q).value, atol=1e-10)
    res = gt_fixed_point(TransformQuery(SQ, 1.0, 0.0))
    assert res.value.allclose(0) and res.iterations == 1
    with pytest.raises(ValidationError):
        gt_fixed_point(TransformQuery(SQ, 1.0, 0.5))


def test_fixed_point_iteration_cap():
    with pytest.raises(ConvergenceError):
        gt_fixed_point(TransformQuery(SQ, 1.0, 0.2, fp_max_iter=2))


def test_r_transform_closed_forms():
    c = StepFunction.constant(8)
    assert r_transform(SQ, c, StepFunction.constant(8, 0.0)).allclose(alpha_apply(SQ, c))
    for t in (0.1, -0.3, 0.2 + 0.1j):
        assert r_transform(SQ, c, StepFunction.constant(8, t)).allclose(1 / (1 - t), atol=1e-14)


def test_cauchy_marchenko_pastur():
    assert abs(cauchy_scalar(SQ, 5.0) - (5 - math.sqrt(5)) / 10) < 1e-12
    for z in (2 + 0.5j, 0.3 + 0.01j, 6 - 1j):
        assert abs(cauchy_scalar(SQ, z) - marchenko_pastur_G(z)) < 1e-9
    assert abs(1e6 * cauchy_scalar(SQ, 1e6) - 1) < 1e-5
    with pytest.raises(ValidationError):
        cauchy_scalar(SQ, 2.0)


def test_cauchy_triangle_matches_moment_series():
    zeta = 5.0
    series = sum(trace_moment(UT, StarWord.from_symbols(["*", "1"] * n, 8)) / zeta ** (n + 1)
                 for n in range(0, 60))
    assert abs(cauchy_scalar(UT, zeta) - series) < 1e-8


def test_spectral_density_square_is_free_poisson():
    x = np.linspace(0.0005, 4.2, 3001)
    out = spectral_density(SQ, x, 1e-3)
    total = trapezoid(out[:, 1], x)
    assert abs(total - 1) < 0.02
    inner = (x > 0.2) & (x < 3.8)
    assert np.abs(out[inner, 1] - marchenko_pastur_density(x[inner])).max() < 0.01
    with pytest.raises(ValidationError):
        spectral_density(SQ, x, 0.0)


def test_zero_density_concentrates_at_origin():
    zero = CovariancePair.from_density(BlockDensity(np.zeros((4, 4))))
    out = spectral_density(zero, np.array([0.0, 0.1]), 1e-3)
    assert out[0, 1] > 100 * out[1, 1]


def test_moments_from_cauchy():
    got = moments_from_cauchy(UT, 6, 50.0, points=64)
    for n in range(7):
        want = trace_moment(UT, StarWord.from_symbols(["*", "1"] * n, 8))
        assert abs(got[n] - want) < 1e-6


def _small(rng, m, scale):
    return StepFunction(scale * (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / math.sqrt(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6))
def test_k_inverse_identity(seed, m):
    rng = np.random.default_rng(seed)
    cov = CovariancePair.from_density(BlockDensity(rng.random((m, m))))
    c = StepFunction(rng.random(m) + 0.5)
    b = _small(rng, m, 0.05)
    if np.any(np.abs(b.values) < 1e-3):
        return
    kb = k_map(cov, c, b)
    q = TransformQuery(cov, c, kb)
    assert gt_fixed_point(q, check_guard=False).value.allclose(b, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6))
def test_adjoint_form_consistency(seed, m):
    # g = b (1 - b alpha(Gt_{z b z*}(c)))^{-1}, the inner transform taken for z*
    rng = np.random.default_rng(seed)
    cov = CovariancePair.from_density(BlockDensity(rng.random((m, m))))
    b, c = _small(rng, m, 0.1), _small(rng, m, 0.1) + 1.0
    g = gt_fixed_point(TransformQuery(cov, c, b)).value
    inner = gt_fixed_point(TransformQuery(adjoint(cov), b, c), check_guard=False).value
    rhs = b * (1.0 - b * alpha_apply(cov, inner)).inverse()
    assert g.allclose(rhs, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 8), st.floats(0.01, 3), st.integers(0, 10**6))
def test_herglotz(x, y, seed):
    rng = np.random.default_rng(seed)
    cov = CovariancePair.from_density(BlockDensity(rng.random((4, 4))))
    assert cauchy_scalar(cov, complex(x, y)).imag < 0


def test_guard_value():
    assert series_guard(SQ, StepFunction.constant(8, 0.1), StepFunction.constant(8)) == pytest.approx(0.4)
