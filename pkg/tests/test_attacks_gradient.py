import numpy as np
import pytest

from advcheck.attacks import AttackConfig, AttackGoal, check_result, fgsm, min_distortion, pgd
from advcheck.errors import AttackInapplicable
from advcheck.models import QuantizeWrapper, binary_linear
from advcheck.numerics import Rng
from advcheck.threat import ThreatModel, distance

WIDE_BOX = ThreatModel("inf", 0.3, -100.0, 100.0)
GOAL = AttackGoal("untargeted")


def _margin_instance(seed, dim=3):
    """Random linear binary model plus a point classified as class 0."""
    rng = Rng(seed)
    w = rng.normal(size=dim)
    w /= np.linalg.norm(w)
    x = rng.uniform(-1, 1, dim)
    b = -float(w @ x) + 0.5  # margin = w.x + b = 0.5 exactly
    return binary_linear(w, b), x, 0.5, w


class TestFgsm:
    def test_linf_only(self, mlp_clf):
        with pytest.raises(AttackInapplicable):
            fgsm(mlp_clf, ThreatModel("2", 0.3), GOAL, np.array([0.5, 0.5]), 0, rng=Rng(0))

    def test_crosses_linear_boundary_when_budget_allows(self):
        clf, x, margin, w = _margin_instance(1)
        eps_star = margin / np.sum(np.abs(w))
        tm = ThreatModel("inf", eps_star * 1.1, -100, 100)
        res = fgsm(clf, tm, GOAL, x, 0, rng=Rng(2))
        assert res.success
        assert res.queries <= 2
        assert distance(tm, x, res.final_x) <= tm.epsilon + 1e-9

    def test_fails_inside_margin(self):
        clf, x, margin, w = _margin_instance(1)
        eps_star = margin / np.sum(np.abs(w))
        tm = ThreatModel("inf", eps_star * 0.9, -100, 100)
        res = fgsm(clf, tm, GOAL, x, 0, rng=Rng(2))
        assert not res.success

    def test_zero_gradient_flag_stays_at_origin(self, mlp_clf):
        q = QuantizeWrapper(mlp_clf, 256)
        x = np.array([0.4, 0.6])
        res = fgsm(q, ThreatModel("inf", 0.3), GOAL, x, mlp_clf.predict(x), rng=Rng(3))
        assert "zero_gradient" in res.flags
        assert np.array_equal(res.final_x, x)


class TestPgd:
    def test_deterministic_given_rng(self, mlp_clf, gauss2):
        tm = ThreatModel("inf", 0.3)
        x, y = gauss2.inputs[0], int(gauss2.labels[0])
        a = pgd(mlp_clf, tm, GOAL, x, y, AttackConfig(iterations=20), Rng(9))
        b = pgd(mlp_clf, tm, GOAL, x, y, AttackConfig(iterations=20), Rng(9))
        assert np.array_equal(a.final_x, b.final_x)
        assert a.queries == b.queries

    def test_result_respects_constraint(self, mlp_clf, gauss2):
        tm = ThreatModel("inf", 0.1)
        for i in range(10):
            x, y = gauss2.inputs[i], int(gauss2.labels[i])
            res = pgd(mlp_clf, tm, GOAL, x, y, AttackConfig(iterations=20), Rng(i))
            ok, verified = check_result(mlp_clf, tm, GOAL, x, y, res)
            assert ok
            assert verified == res.success

    def test_restarts_echoed_and_used(self, mlp_clf, gauss2):
        tm = ThreatModel("inf", 0.3)
        x, y = gauss2.inputs[0], int(gauss2.labels[0])
        res = pgd(mlp_clf, tm, GOAL, x, y, AttackConfig(iterations=10, restarts=3), Rng(4))
        assert res.hyperparams["restarts"] == 3
        assert res.queries >= 3 * 10

    def test_l2_variant_succeeds_on_linear(self):
        clf, x, margin, w = _margin_instance(5)
        eps_star = margin / np.linalg.norm(w)
        tm = ThreatModel("2", eps_star * 1.2, -100, 100)
        res = pgd(clf, tm, GOAL, x, 0, AttackConfig(iterations=30), Rng(6))
        assert res.success

    def test_targeted_goal(self, mlp_clf, gauss2):
        tm = ThreatModel("inf", 0.4)
        x, y = gauss2.inputs[0], int(gauss2.labels[0])
        goal = AttackGoal("targeted", target=1 - y)
        res = pgd(mlp_clf, tm, goal, x, y, AttackConfig(iterations=30), Rng(7))
        assert res.success
        assert mlp_clf.predict(res.final_x) == 1 - y


class TestMinDistortion:
    def test_matches_linear_analytic_linf(self):
        clf, x, margin, w = _margin_instance(8)
        eps_star = margin / np.sum(np.abs(w))
        tm = ThreatModel("inf", 1.0, -100, 100)
        res = min_distortion(clf, tm, GOAL, x, 0, AttackConfig(iterations=30, eps_tol=1e-4), Rng(9))
        assert res.success
        assert abs(res.distortion - eps_star) < 1e-3

    def test_zero_for_already_misclassified(self):
        clf, x, _, _ = _margin_instance(10)
        res = min_distortion(clf, ThreatModel("inf", 1.0, -100, 100), GOAL, x, 1, rng=Rng(11))
        assert res.success and res.distortion == 0.0

    def test_ceiling_insufficient_flagged(self):
        clf, x, margin, w = _margin_instance(12)
        eps_star = margin / np.sum(np.abs(w))
        tm = ThreatModel("inf", eps_star * 0.5, -100, 100)
        res = min_distortion(clf, tm, GOAL, x, 0, AttackConfig(iterations=30), Rng(13))
        assert not res.success
        assert res.distortion == float("inf")
        assert "ceiling_insufficient" in res.flags

    def test_requires_finite_ceiling(self, mlp_clf):
        with pytest.raises(ValueError):
            min_distortion(
                mlp_clf,
                ThreatModel("inf", 0.0),
                GOAL,
                np.array([0.5, 0.5]),
                0,
                rng=Rng(14),
            )
