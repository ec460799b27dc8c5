from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from iminer.metrics import (REFERENCE_RESULTS, EvalReport, compare, corr_coef, polyfit_trend, prediction_csv,
                            read_predictions, read_reports, rmse, scaled_abscissa)

vec = hnp.arrays(np.float64, st.integers(2, 30), elements=st.floats(-1e3, 1e3))


class TestRmse:
    def test_identical(self, rng):
        x = rng.normal(size=9)
        assert rmse(x, x) == 0.0

    def test_substitution(self):
        assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), abs=1e-15)
        assert rmse([0, 0], [3, 4]) == pytest.approx(3.5355, abs=1e-4)

    def test_reference_constant(self):
        assert REFERENCE_RESULTS[("i-Miner", "daily")][1] == 0.0053

    @pytest.mark.parametrize("a,b", [([1.0], [1.0, 2.0]), ([], [])])
    def test_errors(self, a, b):
        with pytest.raises(ValueError):
            rmse(a, b)

    @given(vec, st.floats(0.01, 100))
    def test_symmetric_and_scaling(self, x, k):
        y = x[::-1].copy()
        assert rmse(x, y) == rmse(y, x)
        assert rmse(k * x, k * y) == pytest.approx(k * rmse(x, y), rel=1e-9, abs=1e-12)


class TestCorr:
    def test_perfect(self, rng):
        p = rng.normal(size=10)
        assert corr_coef(p, 2 * p + 1) == pytest.approx(1.0, abs=1e-15)
        assert corr_coef(p, -p) == pytest.approx(-1.0, abs=1e-15)

    def test_textbook_oracle(self, rng):
        for _ in range(20):
            p, a = rng.normal(size=15), rng.normal(size=15)
            cov = sum((p[i] - p.mean()) * (a[i] - a.mean()) for i in range(15)) / 14
            expect = cov / (np.std(p, ddof=1) * np.std(a, ddof=1))
            assert corr_coef(p, a) == pytest.approx(expect, abs=1e-12)

    @pytest.mark.parametrize("a,b", [([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]), ([1.0], [2.0]), ([1, 2], [1, 2, 3])])
    def test_errors(self, a, b):
        with pytest.raises(ValueError):
            corr_coef(a, b)

    @given(vec, vec, st.floats(0.1, 10), st.floats(-10, 10))
    def test_bounded_and_affine_invariant(self, x, y, k, c):
        n = min(len(x), len(y))
        x, y = x[:n], y[:n]
        if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
            return
        r = corr_coef(x, y)
        assert -1.0 <= r <= 1.0
        assert corr_coef(k * x + c, y) == pytest.approx(r, abs=1e-9)


class TestTrend:
    def test_constant(self):
        assert np.allclose(polyfit_trend(np.full(20, 5.0)).fitted, 5.0, atol=1e-9)

    def test_known_sextic(self):
        x = np.arange(1, 41, dtype=float)
        y = np.polynomial.Polynomial([3.0, -2.0, 0.5, 1e-2, -1e-3, 2e-5, -1e-7])(x)
        assert np.max(np.abs(polyfit_trend(y).fitted - y)) <= 1e-6

    def test_linear(self):
        y = 0.3 * np.arange(1, 31) - 4.0
        assert np.allclose(polyfit_trend(y).fitted, y, atol=1e-8)

    def test_too_few(self):
        with pytest.raises(ValueError):
            polyfit_trend(np.ones(6))

    def test_rescaled_coefficients(self, rng):
        y = rng.normal(size=25)
        fit = polyfit_trend(y)
        assert np.allclose(np.polynomial.polynomial.polyval(scaled_abscissa(25), fit.coefficients), fit.fitted,
                           atol=1e-10)

    @given(hnp.arrays(np.float64, st.integers(7, 60), elements=st.floats(-100, 100)))
    def test_residual_orthogonal(self, y):
        fit = polyfit_trend(y)
        V = np.vander(scaled_abscissa(y.size), 7, increasing=True)
        scale = max(1.0, np.abs(y).max())
        assert np.abs(V.T @ (y - fit.fitted)).max() <= 1e-8 * scale * y.size


class TestReports:
    def rep(self, name, test):
        return EvalReport(name, "daily", 0.1, test, 0.9, 40, 5)

    def test_one_row(self):
        lines = compare([self.rep("a", 0.2)]).splitlines()
        assert lines[0] == "method,horizon,rmse_train,rmse_test,cc_test,rules,clusters"
        assert len(lines) == 2

    def test_sorted(self):
        text = compare([self.rep("a", 0.3), self.rep("b", 0.1), self.rep("c", 0.2)])
        assert [r.method for r in read_reports(text)] == ["b", "c", "a"]

    def test_round_trip(self):
        reps = [self.rep("b", 0.1), EvalReport("a", "hourly", 0.0, 0.2, -0.5)]
        assert read_reports(compare(reps)) == reps

    @pytest.mark.parametrize("kw", [dict(train_rmse=-1.0), dict(test_cc=1.5)])
    def test_invariants(self, kw):
        base = dict(method="m", horizon="daily", train_rmse=0.1, test_rmse=0.1, test_cc=0.5)
        base.update(kw)
        with pytest.raises(ValueError):
            EvalReport(**base)


def test_prediction_dump(rng):
    a, p = rng.normal(size=12), rng.normal(size=12)
    text = prediction_csv(a, p)
    assert text.splitlines()[0] == "t,actual,predicted,trend"
    back_a, back_p = read_predictions(text)
    assert np.array_equal(back_a, a) and np.array_equal(back_p, p)
    assert "nan" in prediction_csv(a[:3], p[:3])
