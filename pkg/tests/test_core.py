import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from transient_scan.core import (Asymmetric, ChartSpec, DimensionMismatch, EstimateWithError,
                                 InvalidSpec, NotPositiveDefinite, ScenarioSpec,
                                 build_whitener, identity_model, whiten)


def test_identity_whitener_is_identity():
    model = build_whitener(np.eye(3))
    assert model.identity
    np.testing.assert_array_equal(model.whitener, np.eye(3))


def test_two_by_two_mahalanobis_matches_hand_inverse():
    # inv([[1, .5], [.5, 1]]) = [[1, -.5], [-.5, 1]] / 0.75, so x'inv x = 1 / 0.75
    model = build_whitener([[1, 0.5], [0.5, 1]])
    y = whiten(model, [1, 1])
    assert y @ y == pytest.approx(4 / 3, rel=1e-12)
    assert np.allclose(np.tril(model.whitener), model.whitener)


def test_rank_deficient_rejected():
    with pytest.raises(NotPositiveDefinite):
        build_whitener([[1, 1], [1, 1]])


def test_asymmetric_rejected():
    with pytest.raises(Asymmetric):
        build_whitener([[1, 0.5], [0.5 + 1e-6, 1]])


def test_whiten_identity_and_wrong_length():
    model = identity_model(2)
    np.testing.assert_array_equal(whiten(model, [2, 3]), [2, 3])
    with pytest.raises(DimensionMismatch):
        whiten(model, [1, 2, 3])


def _spd(draw_matrix):
    a = np.asarray(draw_matrix)
    return a @ a.T + 0.5 * np.eye(len(a))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(
    arrays(float, (n, n), elements=st.floats(-2, 2)),
    arrays(float, n, elements=st.floats(-10, 10)))))
def test_whitened_norm_equals_mahalanobis(data):
    a, x = data
    sigma = _spd(a)
    model = build_whitener(sigma)
    y = model.whiten(x)
    expected = float(x @ np.linalg.solve(sigma, x))
    assert y @ y == pytest.approx(expected, rel=1e-10, abs=1e-12)
    assert y @ y >= 0


def test_whitened_norm_zero_only_at_origin():
    model = build_whitener([[2.0, 0.3], [0.3, 1.0]])
    assert model.mahalanobis_sq([0.0, 0.0]) == 0.0
    assert model.mahalanobis_sq([1e-6, 0.0]) > 0.0


def test_whitened_samples_have_identity_covariance(rng):
    sigma = np.array([[2.0, 0.8, 0.1], [0.8, 1.0, -0.3], [0.1, -0.3, 0.5]])
    model = build_whitener(sigma)
    raw = rng.multivariate_normal(np.zeros(3), sigma, size=200_000)
    cov = np.cov(model.whiten_rows(raw), rowvar=False)
    np.testing.assert_allclose(cov, np.eye(3), atol=0.02)


def test_spec_requires_kind_fields():
    with pytest.raises(InvalidSpec):
        ChartSpec("ewma", 2.95)
    with pytest.raises(InvalidSpec):
        ChartSpec("mglrt", 6.0, dimension=20, window_lo=50, window_hi=20)
    with pytest.raises(InvalidSpec):
        ChartSpec("ma", 0.5, dimension=3, window=10)


def test_alarm_levels():
    assert ChartSpec("ewma", 2.95, beta=0.05).alarm_level == pytest.approx(0.472378, abs=1e-6)
    assert ChartSpec("mewma", 6.5, dimension=20, beta=0.05).alarm_level == pytest.approx(
        6.5**2 * 0.05 / 1.95)
    assert ChartSpec("mglrt", 6.0, dimension=2, window_lo=1, window_hi=3).alarm_level == 36.0
    assert ChartSpec("cusum", 10.8, ref_strength=0.5).alarm_level == 10.8


def test_spec_round_trip_through_dict():
    spec = ChartSpec("mcusum", 20.3, dimension=20, window_lo=20, window_hi=50,
                     ref_strength=1.118)
    assert ChartSpec(**spec.to_dict()) == spec


def test_scenario_validation():
    with pytest.raises(InvalidSpec):
        ScenarioSpec(0, 0, [1.0])
    s = ScenarioSpec.one_channel(1.5, 4, 20)
    np.testing.assert_array_equal(s.mean, [1.5, 0, 0, 0])
    assert ScenarioSpec.all_channels(0.0, 3, 5).is_null


def test_binomial_standard_error():
    est = EstimateWithError.proportion(105, 10_000, seed=7)
    assert est.std_error == pytest.approx(math.sqrt(0.0105 * 0.9895 / 10_000))
    lo, hi = est.ci95()
    assert lo < 0.0105 < hi
