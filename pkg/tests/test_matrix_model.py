import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freecirc.errors import ValidationError
from freecirc.matrix_model import (block_mask, compression_inequality_check, discretize,
                                   empirical_conditional_expectation, empirical_trace_moment,
                                   max_abs_eigenvalue, mean_trace_moments, operator_norm, run_trials,
                                   sample, singular_numbers, sniady_check, spectral_radius_estimate,
                                   word_matrix)
from freecirc.moment_engine import nested_power
from freecirc.step_algebra import BlockDensity, CovariancePair, make_preset, norm_bounds


def test_sample_reproducible_and_divisibility():
    d = make_preset("square", 4)
    a, b = sample(d, 64, 5), sample(d, 64, 5)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, sample(d, 64, 6).data)
    with pytest.raises(ValidationError):
        sample(d, 30, 0)


def test_zero_density_and_block_support():
    assert not np.any(sample(BlockDensity(np.zeros((2, 2))), 8, 0).data)
    d = make_preset("corner_box", 8, dict(c=0.25, d=0.5, a=0.75, fill=1.0))
    A = sample(d, 64, 1).data
    r = 8
    for i in range(8):
        for j in range(8):
            blk = A[i * r:(i + 1) * r, j * r:(j + 1) * r]
            assert np.any(blk) == bool(d.H[i, j] > 0)


def test_triangle_one_cell_per_entry_has_no_lower_part():
    A = sample(make_preset("upper_triangle", 64), 64, 2).data
    assert not np.any(np.tril(A, -1))
    assert np.all(np.abs(A[np.triu_indices(64)]) > 0)


def test_entry_scale():
    H = np.array([[4.0, 1.0], [0.25, 0.0]])
    smp = sample(BlockDensity(H), 400, 3)
    r = 200
    for i in range(2):
        for j in range(2):
            blk = smp.data[i * r:(i + 1) * r, j * r:(j + 1) * r]
            want = math.sqrt(H[i, j]) / math.sqrt(400)
            assert np.sqrt(np.mean(np.abs(blk) ** 2)) == pytest.approx(want, rel=0.02, abs=1e-15)


def test_square_mass_trace():
    d = make_preset("square", 4)
    vals = run_trials(lambda s: empirical_trace_moment(sample(d, 512, s), "z* z").real, 20, 0)
    assert all(0.9 <= v <= 1.1 for v in vals)


def test_trace_moments_square():
    mom = mean_trace_moments(make_preset("square", 4), 512, 2, 10, 1)
    assert mom[0] == pytest.approx(1, rel=0.03) and mom[1] == pytest.approx(2, rel=0.05)


def test_odd_words_and_traceless():
    smp = sample(make_preset("square", 4), 256, 4)
    assert abs(empirical_trace_moment(smp, "z")) < 3 / math.sqrt(256)
    assert abs(empirical_trace_moment(smp, "z z* z")) < 5 / math.sqrt(256)
    assert np.allclose(word_matrix(smp.data, "z* z"), word_matrix(smp.data, ["*", "1"]))


def test_conditional_expectation_triangle():
    m, N = 8, 2048
    smp = sample(make_preset("upper_triangle", m), N, 9)
    cov = CovariancePair.from_density(make_preset("upper_triangle", m))
    ident = empirical_conditional_expectation(smp, [])
    assert ident.allclose(1)
    f = empirical_conditional_expectation(smp, "z z*")
    want = nested_power(cov, 1).values.real
    assert np.all(np.abs(f.values.real[1:-1] / want[1:-1] - 1) < 0.10)
    for n in (2, 3, 4):
        f = empirical_conditional_expectation(smp, ["1"] * n + ["*"] * n).values.real
        want = nested_power(cov, n).values.real
        # relative to the cell scale; deep cells are tiny and noisy
        assert np.abs(f - want).max() <= 0.15 * want.max()


def test_discretize():
    assert np.allclose(discretize(np.full((16, 16), 2.0), 4).H, 4.0)
    tri = lambda x, y: (x <= y).astype(float)
    d = discretize(tri, 2, resolution=64)
    # diagonal blocks: average of w = indicator over a half-filled block
    assert d.H[0, 1] == 1.0 and d.H[1, 0] == 0.0
    assert d.H[0, 0] == pytest.approx((33 / 64) ** 2, rel=1e-12)
    with pytest.raises(ValidationError):
        discretize(np.ones((10, 10)), 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([2, 4, 8]))
def test_discretize_never_raises_marginals(seed, m):
    w = np.random.default_rng(seed).random((32, 32)) ** 3
    H = w**2
    coarse = discretize(w, m)
    assert coarse.marginal_1.max() <= H.mean(axis=1).max() + 1e-12
    assert coarse.marginal_2.max() <= H.mean(axis=0).max() + 1e-12


def test_singular_numbers():
    assert singular_numbers(np.eye(4), 0.7) == 1.0
    D = np.diag([3.0, 2.0, 1.0])
    assert [singular_numbers(D, t) for t in (0, 1 / 3, 2 / 3)] == [3.0, 2.0, 1.0]
    with pytest.raises(ValidationError):
        singular_numbers(D, 1.0)
    A = np.random.default_rng(0).standard_normal((20, 20))
    s = [singular_numbers(A, t) for t in np.linspace(0, 0.95, 20)]
    assert all(x >= y for x, y in zip(s, s[1:]))


def test_compression_known_cases():
    D = np.diag([4.0, 3.0, 2.0, 1.0])
    full = compression_inequality_check(D, np.ones(4, dtype=bool), 0.5)
    assert full.holds and full.lhs == full.rhs == 2.0
    top = compression_inequality_check(D, block_mask(4, 2, [0]), 0.25)
    assert top.holds and (top.lhs, top.rhs) == (3.0, 3.0)
    bottom = compression_inequality_check(D, block_mask(4, 2, [1]), 0.25)
    assert bottom.holds and (bottom.lhs, bottom.rhs) == (3.0, 1.0)
    with pytest.raises(ValidationError):
        compression_inequality_check(D, block_mask(4, 2, [1]), 0.5)


def test_operator_norm_matches_dense():
    A = sample(make_preset("square", 4), 200, 3).data
    assert operator_norm(A) == pytest.approx(np.linalg.norm(A, 2), rel=1e-8)


@pytest.mark.parametrize("name,params", [("square", {}), ("upper_triangle", {}),
                                         ("band", {"epsilon": 0.25}),
                                         ("strict_lower_triangle", {})])
def test_norm_upper_bound(name, params):
    d = make_preset(name, 8, params)
    hi = norm_bounds(CovariancePair.from_density(d))[1]
    N = 256
    norms = run_trials(lambda s: operator_norm(sample(d, N, s).data), 20, 0)
    assert max(norms) <= hi + 5 / math.sqrt(N)


def test_eigen_shortcut_matches_dense():
    smp = sample(make_preset("upper_triangle", 16), 128, 8)
    assert max_abs_eigenvalue(smp) == pytest.approx(np.abs(np.linalg.eigvals(smp.data)).max(), rel=1e-8)


def test_spectral_radius_estimate_zero_density():
    rows = spectral_radius_estimate(BlockDensity(np.zeros((2, 2))), 16, 3, 2, 0)
    assert all(r == 0 and e == 0 for _, r, e in rows)


def test_sniady_n1_identical():
    res = sniady_check(128, 1, 2, 0)
    assert res.relative_gap < 1e-12


def test_worker_count_does_not_change_results(monkeypatch):
    d = make_preset("square", 4)
    monkeypatch.setenv("FREECIRC_THREADS", "1")
    a = mean_trace_moments(d, 64, 2, 4, 3)
    monkeypatch.setenv("FREECIRC_THREADS", "3")
    b = mean_trace_moments(d, 64, 2, 4, 3)
    assert np.array_equal(a, b)
