import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from banditmc.variance import (
    PairedVarianceEstimate,
    coverage_bound,
    paired_variance_estimate,
    running_vbar,
    variance_confidence_interval,
)


class TestEstimate:
    def test_example(self):
        est = paired_variance_estimate([0, 1, 1, 0], [1, 1])
        assert est.vbar == 0.5
        assert est.t == 4

    def test_zero_q(self):
        assert paired_variance_estimate([0, 1, 0.3, 0.9], [0, 0]).vbar == 0.0

    def test_constant_y(self):
        assert paired_variance_estimate([0.4] * 6, [1, 0.5, 0.2]).vbar == 0.0

    def test_shapes_checked(self):
        with pytest.raises(ValueError):
            paired_variance_estimate([0, 1, 0], [1, 1])
        with pytest.raises(ValueError):
            paired_variance_estimate([0, 2], [1])

    def test_running(self):
        y = np.array([0.0, 1.0, 1.0, 0.0, 0.5])
        q = np.array([1.0, 0.5])
        np.testing.assert_allclose(running_vbar(y, q), [0.0, 0.5, 0.5, 0.375, 0.375])

    def test_expectation_oracle(self):
        rng = np.random.default_rng(0)
        m = 10**6
        y = rng.random(2 * m)
        q = rng.random(m)
        s = q * (y[1::2] - y[0::2]) ** 2
        # E[Q (Y2 - Y1)^2] = 2 E[Q] Var[Y] = 2 * 0.5 / 12
        assert abs(s.mean() - 1 / 12) <= 3 * s.std(ddof=1) / math.sqrt(m)


class TestInterval:
    def test_zero_budget(self):
        lo, hi = variance_confidence_interval(PairedVarianceEstimate(10, 0.2, 0.0))
        assert lo == hi == pytest.approx(0.2)

    def test_inverse_of_kl_example(self):
        # t = 4 gives budget delta / 2
        est = PairedVarianceEstimate(4, 0.125, 2 * 0.130812035)
        _, hi = variance_confidence_interval(est)
        assert hi == pytest.approx(0.25, abs=1e-8)

    def test_before_first_pair(self):
        assert variance_confidence_interval(PairedVarianceEstimate(1, 0.0, 1.0)) == (0.0, 0.5)

    @given(st.integers(2, 10**6), st.floats(0.0, 0.5), st.floats(0.0, 20.0))
    def test_contains_point(self, t, vbar, delta):
        lo, hi = variance_confidence_interval(PairedVarianceEstimate(t, vbar, delta))
        assert lo - 1e-12 <= vbar <= hi + 1e-12

    @given(st.floats(0.01, 0.49), st.floats(0.1, 10.0), st.integers(2, 5000))
    def test_width_shrinks_with_t(self, vbar, delta, t):
        a = variance_confidence_interval(PairedVarianceEstimate(t, vbar, delta))
        b = variance_confidence_interval(PairedVarianceEstimate(2 * t, vbar, delta))
        assert b[1] - b[0] <= a[1] - a[0] + 1e-12


def test_coverage_bound():
    assert coverage_bound(5.0, 1000) == 0.0
    expected = 1 - 2 * math.e * math.ceil(30 * math.log(500)) * math.exp(-30)
    assert coverage_bound(30.0, 1000) == pytest.approx(expected)
