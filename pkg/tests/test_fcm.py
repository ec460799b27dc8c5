from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from iminer.fcm import (ClusterModel, DegenerateCentersError, assign, assign_many, fcm_objective, fcm_run,
                        memberships_for, update_centers, update_memberships)
from oracles import naive_fcm

DATA_1D = np.array([[0.0], [1.0], [9.0], [10.0]])


class TestObjective:
    def test_zero_when_crisp_on_centers(self):
        data = np.array([[0.0, 0.0], [1.0, 1.0]])
        U = np.eye(2)
        assert fcm_objective(U, data, data, 2.0) == 0.0

    def test_single_term(self):
        assert fcm_objective([[1.0]], [[2.0]], [[0.0]], 2.0) == 4.0

    def test_matches_double_sum(self, rng):
        data, centers = rng.normal(size=(7, 3)), rng.normal(size=(3, 3))
        U = rng.random((3, 7))
        U /= U.sum(axis=0)
        expect = sum(U[i, j] ** 2.5 * np.sum((centers[i] - data[j]) ** 2) for i in range(3) for j in range(7))
        assert fcm_objective(U, centers, data, 2.5) == pytest.approx(expect, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fcm_objective(np.ones((2, 3)), np.zeros((2, 2)), np.zeros((3, 3)), 2.0)


class TestMemberships:
    def test_equidistant(self):
        U = update_memberships([[0.0], [2.0]], [[1.0]], 2.0)
        assert U[:, 0].tolist() == [0.5, 0.5]

    def test_point_on_center(self):
        U = update_memberships([[0.0], [2.0]], [[2.0]], 2.0)
        assert U[:, 0].tolist() == [0.0, 1.0]

    def test_closed_form_oracle(self):
        centers = np.array([[1.0], [9.0]])
        U = update_memberships(centers, DATA_1D, 2.0)
        for j, x in enumerate(DATA_1D[:, 0]):
            d = np.abs(centers[:, 0] - x)
            if np.any(d == 0):
                expect = (d == 0).astype(float)
            else:
                expect = [1.0 / sum((d[i] / d[k]) ** 2 for k in range(2)) for i in range(2)]
            assert np.allclose(U[:, j], expect, atol=1e-15)

    def test_degenerate(self):
        with pytest.raises(DegenerateCentersError):
            update_memberships([[1.0], [1.0]], [[1.0]], 2.0)

    def test_bad_fuzzifier(self):
        with pytest.raises(ValueError):
            update_memberships([[0.0], [1.0]], [[0.5]], 1.0)

    @given(hnp.arrays(np.float64, (9, 2), elements=st.floats(-100, 100, allow_subnormal=False)),
           hnp.arrays(np.float64, (3, 2), elements=st.floats(-100, 100, allow_subnormal=False)),
           st.floats(1.1, 4.0))
    def test_column_stochastic(self, data, centers, m):
        gaps = [np.abs(centers[i] - centers[k]).max() for i in range(3) for k in range(i)]
        if min(gaps) < 1e-3:
            return
        U = update_memberships(centers, data, m)
        assert np.all((U >= 0) & (U <= 1))
        assert np.allclose(U.sum(axis=0), 1.0, atol=1e-9)


class TestCenters:
    def test_crisp_means(self):
        data = np.array([[0.0], [2.0], [10.0], [14.0]])
        U = np.array([[1, 1, 0, 0], [0, 0, 1, 1]], dtype=float)
        assert update_centers(U, data, 2.0)[:, 0].tolist() == [1.0, 12.0]

    def test_uniform_global_mean(self, rng):
        data = rng.normal(size=(6, 2))
        c = update_centers(np.full((3, 6), 1 / 3), data, 2.0)
        assert np.allclose(c, data.mean(axis=0), atol=1e-14)

    def test_weighted_mean_oracle(self, rng):
        data, U = rng.normal(size=(8, 3)), rng.random((2, 8))
        c = update_centers(U, data, 2.0)
        for i in range(2):
            w = U[i] ** 2
            assert np.allclose(c[i], (w[:, None] * data).sum(axis=0) / w.sum(), atol=1e-12)

    def test_zero_mass(self):
        with pytest.raises(ValueError):
            update_centers(np.array([[1.0, 1.0], [0.0, 0.0]]), np.zeros((2, 1)), 2.0)


class TestRun:
    def test_two_blobs(self, rng):
        a = rng.normal(0, 0.1, (20, 2))
        b = rng.normal(5, 0.1, (20, 2))
        model = fcm_run(np.vstack([a, b]), [[1.0, 1.0], [4.0, 4.0]])
        lo, hi = sorted(model.centers.tolist())
        assert np.all(lo >= a.min(axis=0)) and np.all(lo <= a.max(axis=0))
        assert np.all(hi >= b.min(axis=0)) and np.all(hi <= b.max(axis=0))

    def test_symmetric_1d(self):
        model = fcm_run(DATA_1D, [[2.0], [7.0]])
        c1, c2 = sorted(model.centers[:, 0])
        assert c1 + c2 == pytest.approx(10.0, abs=1e-6)
        assert 0 < c1 < 1.5
        centers, J, _ = naive_fcm(DATA_1D, [[2.0], [7.0]])
        assert model.objective == pytest.approx(J, abs=1e-6)

    def test_infinite_tol_single_iteration(self):
        model = fcm_run(DATA_1D, [[2.0], [7.0]], tol=np.inf)
        assert model.n_iter == 1
        assert np.isfinite(model.objective)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fcm_run([[0.0], [1.0]], [[0.0], [0.5], [1.0]])

    def test_duplicate_init(self):
        with pytest.raises(DegenerateCentersError):
            fcm_run(DATA_1D, [[1.0], [1.0]])

    def test_deterministic(self, rng):
        data = rng.normal(size=(15, 2))
        a = fcm_run(data, data[:3])
        b = fcm_run(data, data[:3])
        assert np.array_equal(a.centers, b.centers) and a.history == b.history

    def test_monotone_and_stochastic(self, rng):
        data = rng.normal(size=(40, 2))
        model = fcm_run(data, data[:4], tol=1e-10)
        h = np.array(model.history)
        assert np.all(np.diff(h) <= 1e-12)
        assert np.allclose(model.memberships.sum(axis=0), 1.0, atol=1e-9)
        assert model.objective >= 0

    def test_translation_equivariance(self, rng):
        data = rng.normal(size=(12, 2))
        v = np.array([3.5, -7.25])
        a = fcm_run(data, data[:3])
        b = fcm_run(data + v, data[:3] + v)
        assert np.allclose(b.centers, a.centers + v, atol=1e-9)
        assert b.objective == pytest.approx(a.objective, abs=1e-9)
        assert np.allclose(a.memberships, b.memberships, atol=1e-9)

    def test_centers_inside_bounding_box(self, rng):
        data = rng.uniform(-1, 3, size=(30, 3))
        model = fcm_run(data, data[:4])
        assert np.all(model.centers >= data.min(axis=0)) and np.all(model.centers <= data.max(axis=0))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_naive_oracle(self, seed):
        r = np.random.default_rng(seed)
        n, d, c = r.integers(4, 21), r.integers(1, 4), r.integers(2, 5)
        c = min(c, n)
        data = r.normal(size=(n, d))
        init = data[r.choice(n, size=c, replace=False)] + r.normal(0, 0.01, size=(c, d))
        model = fcm_run(data, init)
        _, J, _ = naive_fcm(data, init)
        assert model.objective == pytest.approx(J, abs=1e-6)


class TestAssign:
    def test_point_at_center(self):
        model = fcm_run(DATA_1D, [[2.0], [7.0]])
        assert assign(model, model.centers[1]) == 1

    def test_tie_goes_low(self):
        model = ClusterModel(np.array([[0.0], [2.0]]), 2.0, 0.0, np.empty((2, 0)))
        assert assign(model, [1.0]) == 0

    def test_matches_argmax(self, rng):
        data = rng.normal(size=(25, 2))
        model = fcm_run(data, data[:3])
        pts = rng.normal(size=(10, 2))
        assert np.array_equal(assign_many(model, pts), np.argmax(memberships_for(model, pts), axis=0))


def test_json_round_trip():
    model = fcm_run(DATA_1D, [[2.0], [7.0]])
    data = json.loads(model.to_json())
    assert set(data) == {"fuzzifier", "centers", "objective"}
    back = ClusterModel.from_dict(data)
    assert np.array_equal(back.centers, model.centers) and back.m == 2.0
