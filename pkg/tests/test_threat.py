import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advcheck.numerics import Rng
from advcheck.threat import ThreatModel, distance, parse_norm, project, sample_in_ball

vectors = st.lists(st.floats(-2, 3), min_size=2, max_size=6)
norms = st.sampled_from(["inf", "1", "2"])


def _tm(p, eps):
    return ThreatModel(p, eps)


class TestParseNorm:
    def test_known_names(self):
        assert parse_norm("inf") == np.inf
        assert parse_norm("2") == 2

    def test_rejects_unknown(self):
        with pytest.raises(ValueError):
            parse_norm("3")


class TestDistance:
    def test_linf_is_max_abs(self):
        tm = _tm("inf", 1)
        assert distance(tm, np.array([0.0, 0.0]), np.array([0.3, -0.5])) == 0.5

    def test_l0_counts_changes(self):
        tm = _tm("0", 1)
        assert distance(tm, np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.5, 2.0])) == 1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            distance(_tm("2", 1), np.zeros(2), np.zeros(3))


class TestProject:
    @given(vectors, vectors, norms, st.floats(0.01, 1.0))
    @settings(max_examples=120, deadline=None)
    def test_result_is_feasible(self, o, x, p, eps):
        if len(o) != len(x):
            x = (x * len(o))[: len(o)]
        origin = np.clip(np.array(o), 0, 1)
        tm = ThreatModel(p, eps)
        z = project(tm, origin, np.array(x))
        assert distance(tm, origin, z) <= eps + 1e-8
        assert np.all(z >= tm.box_lo - 1e-12) and np.all(z <= tm.box_hi + 1e-12)

    @given(vectors, vectors, norms, st.floats(0.01, 1.0))
    @settings(max_examples=80, deadline=None)
    def test_idempotent(self, o, x, p, eps):
        if len(o) != len(x):
            x = (x * len(o))[: len(o)]
        origin = np.clip(np.array(o), 0, 1)
        tm = ThreatModel(p, eps)
        z = project(tm, origin, np.array(x))
        z2 = project(tm, origin, z)
        assert np.allclose(z, z2, atol=1e-8)

    def test_noop_when_feasible(self):
        tm = _tm("2", 0.5)
        origin = np.array([0.5, 0.5])
        x = np.array([0.6, 0.55])
        assert np.array_equal(project(tm, origin, x), x)

    def test_linf_analytic(self):
        tm = _tm("inf", 0.1)
        origin = np.array([0.5, 0.5])
        z = project(tm, origin, np.array([0.9, 0.45]))
        assert np.allclose(z, [0.6, 0.45])

    def test_l2_pure_radial_when_box_inactive(self):
        tm = ThreatModel("2", 0.1, -10, 10)
        origin = np.zeros(3)
        x = np.array([3.0, 4.0, 0.0])
        z = project(tm, origin, x)
        assert np.allclose(z, x * (0.1 / 5.0), atol=1e-9)

    def test_l1_analytic_simplex(self):
        tm = ThreatModel("1", 1.0, -10, 10)
        origin = np.zeros(2)
        z = project(tm, origin, np.array([2.0, 0.0]))
        assert np.allclose(z, [1.0, 0.0], atol=1e-9)

    def test_l0_keeps_largest_coordinates(self):
        tm = _tm("0", 1)
        origin = np.array([0.5, 0.5, 0.5])
        x = np.array([0.6, 0.9, 0.5])
        z = project(tm, origin, x)
        assert np.array_equal(z, [0.5, 0.9, 0.5])

    def test_l2_optimality_against_grid(self):
        # brute-force the feasible set in 2-D and confirm nothing is closer
        tm = ThreatModel("2", 0.3, 0.0, 1.0)
        origin = np.array([0.1, 0.2])
        x = np.array([1.5, -0.8])
        z = project(tm, origin, x)
        grid = np.linspace(0, 1, 201)
        gx, gy = np.meshgrid(grid, grid)
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        feas = pts[np.linalg.norm(pts - origin, axis=1) <= 0.3]
        best = feas[np.argmin(np.linalg.norm(feas - x, axis=1))]
        assert np.linalg.norm(z - x) <= np.linalg.norm(best - x) + 1e-3


class TestSampleInBall:
    @given(norms, st.floats(0.01, 0.5), st.integers(0, 50))
    @settings(max_examples=60, deadline=None)
    def test_samples_feasible(self, p, eps, seed):
        tm = ThreatModel(p, eps)
        origin = np.full(4, 0.5)
        z = sample_in_ball(tm, origin, Rng(seed))
        assert distance(tm, origin, z) <= eps + 1e-9
        assert np.all(z >= 0) and np.all(z <= 1)

    def test_zero_budget_returns_origin(self):
        tm = _tm("2", 0.0)
        origin = np.array([0.3, 0.7])
        z = sample_in_ball(tm, origin, Rng(0))
        assert np.array_equal(z, origin)
        assert z is not origin

    def test_l0_changes_at_most_k_coordinates(self):
        tm = _tm("0", 2)
        origin = np.full(6, 0.5)
        z = sample_in_ball(tm, origin, Rng(3))
        assert np.count_nonzero(z != origin) <= 2


class TestThreatModelConfig:
    def test_round_trip(self):
        tm = ThreatModel("inf", 0.3, 0.0, 1.0)
        assert ThreatModel.from_config(tm.to_config()) == tm

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ValueError):
            ThreatModel("2", -0.1)
