import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from graphcpd.errors import DomainError, GridMismatchError, InvalidParameterError
from graphcpd.fdata import (
    DistanceMatrix,
    FunctionalSample,
    PriceSample,
    cidr_transform,
    distance_matrix,
    lp_distance,
    trapezoid_weights,
    uniform_grid,
)

from .oracles import naive_distance_matrix, naive_lp

M = 12
finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
curve = arrays(np.float64, M, elements=finite)
orders = st.sampled_from([1.0, 1.5, 2.0, 3.0])


@pytest.mark.parametrize("p", [1, 2, 3.5])
@pytest.mark.parametrize("c", [0.0, 2.5, -4.0])
def test_constant_difference_equals_level(p, c):
    grid = np.r_[0.0, np.sort(np.random.default_rng(1).uniform(0, 1, 15)), 1.0]
    assert lp_distance(np.zeros(17), np.full(17, c), grid, p) == pytest.approx(abs(c), abs=1e-12)


def test_identity_curve_l2_and_l1():
    grid = uniform_grid(1001)
    assert abs(lp_distance(grid, np.zeros_like(grid), grid, 2) - 1 / math.sqrt(3)) < 1e-6
    assert abs(lp_distance(grid, np.zeros_like(grid), grid, 1) - 0.5) < 1e-6


def test_fine_grid_agrees_with_coarse_closed_form():
    fine = uniform_grid(20001)
    coarse = uniform_grid(1001)
    a = lp_distance(fine, 0 * fine, fine, 2)
    b = lp_distance(coarse, 0 * coarse, coarse, 2)
    assert abs(a - b) < 1e-6


def test_two_identical_curves_give_zero_matrix():
    s = FunctionalSample.on_uniform_grid(np.ones((2, 5)))
    assert np.array_equal(distance_matrix(s).d, np.zeros((2, 2)))


def test_constant_levels_l1():
    s = FunctionalSample.on_uniform_grid(np.array([[0.0] * 6, [1.0] * 6, [3.0] * 6]))
    d = distance_matrix(s, p=1).d
    np.testing.assert_allclose(d, [[0, 1, 3], [1, 0, 2], [3, 2, 0]], atol=1e-12)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_matrix_matches_naive_double_loop(p):
    rng = np.random.default_rng(3)
    grid = np.sort(rng.uniform(0, 1, 9))
    curves = rng.normal(size=(5, 9))
    got = distance_matrix(FunctionalSample(curves, grid), p).d
    np.testing.assert_allclose(got, naive_distance_matrix(curves, grid, p), rtol=0, atol=1e-12)


def test_matrix_is_exactly_symmetric_with_zero_diagonal():
    rng = np.random.default_rng(4)
    d = distance_matrix(FunctionalSample.on_uniform_grid(rng.normal(size=(30, 20))), 1.7).d
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)


def test_l2_uniform_grid_matches_scaled_euclidean_norm():
    rng = np.random.default_rng(5)
    m = 41
    grid = uniform_grid(m)
    x, y = rng.normal(size=(2, m))
    w = np.full(m, 1.0)
    w[[0, -1]] = 0.5
    direct = math.sqrt(grid[1] * np.sum(w * (x - y) ** 2))
    assert lp_distance(x, y, grid, 2) == pytest.approx(direct, rel=1e-13)


def test_trapezoid_weights_sum_to_grid_span():
    grid = np.array([0.1, 0.15, 0.4, 0.9])
    assert trapezoid_weights(grid).sum() == pytest.approx(0.8)


@settings(max_examples=200, deadline=None)
@given(curve, curve, curve, orders)
def test_pseudometric_axioms(x, y, z, p):
    grid = uniform_grid(M)
    dxy = lp_distance(x, y, grid, p)
    assert dxy >= 0
    assert dxy == lp_distance(y, x, grid, p)
    assert lp_distance(x, x, grid, p) == 0
    assert dxy <= lp_distance(x, z, grid, p) + lp_distance(z, y, grid, p) + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 9), st.integers(0, 2**32 - 1), orders)
def test_relabeling_permutes_rows_and_columns(n, seed, p):
    rng = np.random.default_rng(seed)
    s = FunctionalSample.on_uniform_grid(rng.normal(size=(n, 7)))
    order = rng.permutation(n)
    d = distance_matrix(s, p)
    assert np.array_equal(distance_matrix(s.reordered(order), p).d, d.permuted(order).d)


def test_naive_lp_oracle_itself():
    grid = uniform_grid(5)
    assert naive_lp(np.ones(5), np.zeros(5), grid, 2) == pytest.approx(1.0)


class TestValidation:
    def test_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            lp_distance(np.zeros(3), np.zeros(4), uniform_grid(3))

    def test_p_below_one(self):
        with pytest.raises(InvalidParameterError):
            lp_distance(np.zeros(3), np.zeros(3), uniform_grid(3), 0.5)

    def test_infinite_p_rejected(self):
        with pytest.raises(InvalidParameterError):
            lp_distance(np.zeros(3), np.zeros(3), uniform_grid(3), math.inf)

    def test_nan_curves_rejected(self):
        with pytest.raises(InvalidParameterError):
            FunctionalSample.on_uniform_grid([[0.0, np.nan], [1.0, 2.0]])

    def test_grid_must_increase(self):
        with pytest.raises(InvalidParameterError):
            FunctionalSample(np.zeros((2, 3)), np.array([0.0, 0.5, 0.5]))

    def test_grid_inside_unit_interval(self):
        with pytest.raises(InvalidParameterError):
            FunctionalSample(np.zeros((2, 2)), np.array([0.0, 1.5]))

    def test_single_curve_rejected(self):
        with pytest.raises(InvalidParameterError):
            FunctionalSample.on_uniform_grid(np.zeros((1, 4)))

    def test_sample_is_read_only(self):
        s = FunctionalSample.on_uniform_grid(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            s.curves[0, 0] = 1.0

    def test_asymmetric_distance_matrix_rejected(self):
        with pytest.raises(InvalidParameterError):
            DistanceMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]), 2.0)


class TestCidr:
    def test_constant_price_gives_zero(self):
        r = cidr_transform(PriceSample(np.full((3, 6), 100.0), uniform_grid(6)))
        assert np.all(r.curves == 0)

    def test_single_percent_log_return(self):
        prices = np.array([[100.0, 100 * math.exp(0.01), 100 * math.exp(0.01)]] * 2)
        r = cidr_transform(PriceSample(prices, uniform_grid(3)))
        np.testing.assert_allclose(r.curves[:, 1:], 1.0, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (4, 6), elements=st.floats(0.01, 1e4)))
    def test_first_column_is_exactly_zero(self, prices):
        r = cidr_transform(PriceSample(prices, uniform_grid(6)))
        assert np.all(r.curves[:, 0] == 0.0)

    def test_nonpositive_price_is_domain_error(self):
        with pytest.raises(DomainError):
            PriceSample(np.array([[1.0, 0.0], [1.0, 2.0]]), uniform_grid(2))
