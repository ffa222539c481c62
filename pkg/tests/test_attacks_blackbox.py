import numpy as np
import pytest

from advcheck.attacks import (
    AttackConfig,
    AttackGoal,
    boundary_attack,
    fd_gradient,
    nes,
    nes_gradient,
    random_search,
    spsa,
    spsa_gradient,
    zoo_fd,
)
from advcheck.errors import InitFailure
from advcheck.models import binary_linear
from advcheck.numerics import Rng
from advcheck.threat import ThreatModel

GOAL = AttackGoal("untargeted")


def _quadratic():
    A = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, -0.3], [0.0, -0.3, 3.0]])

    def f(x):
        return float(x @ A @ x)

    def grad(x):
        return (A + A.T) @ x

    return f, grad


class TestEstimators:
    def test_fd_matches_analytic(self):
        f, grad = _quadratic()
        x = np.array([0.3, -0.2, 0.5])
        g = fd_gradient(f, x, 1e-5)
        assert np.allclose(g, grad(x), atol=1e-6)

    def test_fd_respects_coordinate_subset(self):
        f, _ = _quadratic()
        x = np.array([0.3, -0.2, 0.5])
        g = fd_gradient(f, x, 1e-5, coords=[1])
        assert g[0] == 0 and g[2] == 0 and g[1] != 0

    def test_spsa_converges_with_batch(self):
        f, grad = _quadratic()
        x = np.array([0.3, -0.2, 0.5])
        g = spsa_gradient(f, x, 1e-4, 4000, Rng(0))
        cos = g @ grad(x) / (np.linalg.norm(g) * np.linalg.norm(grad(x)))
        assert cos > 0.98

    def test_nes_converges_with_batch(self):
        f, grad = _quadratic()
        x = np.array([0.3, -0.2, 0.5])
        g = nes_gradient(f, x, 1e-3, 4000, Rng(1))
        cos = g @ grad(x) / (np.linalg.norm(g) * np.linalg.norm(grad(x)))
        assert cos > 0.98


class TestEstimatedAttacks:
    @pytest.mark.parametrize("attack", [spsa, nes, zoo_fd])
    def test_succeeds_on_smooth_mlp(self, attack, mlp_clf, gauss2):
        tm = ThreatModel("inf", 0.3)
        cfg = AttackConfig(iterations=15, batch_size=32)
        wins = 0
        for i in range(10):
            x, y = gauss2.inputs[i], int(gauss2.labels[i])
            if mlp_clf.predict(x) != y:
                continue
            res = attack(mlp_clf, tm, GOAL, x, y, cfg, Rng(100 + i))
            wins += res.success
        assert wins >= 8

    def test_deterministic_given_rng(self, mlp_clf, gauss2):
        tm = ThreatModel("inf", 0.3)
        cfg = AttackConfig(iterations=5, batch_size=16)
        x, y = gauss2.inputs[0], int(gauss2.labels[0])
        a = spsa(mlp_clf, tm, GOAL, x, y, cfg, Rng(5))
        b = spsa(mlp_clf, tm, GOAL, x, y, cfg, Rng(5))
        assert np.array_equal(a.final_x, b.final_x)

    def test_query_accounting_scales_with_batch(self, mlp_clf, gauss2):
        tm = ThreatModel("inf", 0.3)
        x, y = gauss2.inputs[0], int(gauss2.labels[0])
        res = spsa(mlp_clf, tm, GOAL, x, y, AttackConfig(iterations=3, batch_size=8), Rng(6))
        # per iteration: 1 trace eval + 2 per spsa sample; final verification adds 1
        assert res.queries == 3 * (1 + 2 * 8) + 1


class TestBoundaryAttack:
    def test_approaches_linear_optimum(self):
        rng = Rng(7)
        w = rng.normal(size=4)
        w /= np.linalg.norm(w)
        x = rng.uniform(0.3, 0.7, 4)
        b = -float(w @ x) + 0.4
        clf = binary_linear(w, b)
        eps_star = 0.4  # margin / ||w||_2 with unit w
        tm = ThreatModel("2", 1.0, -5, 5)
        res = boundary_attack(
            clf, tm, GOAL, x, 0, AttackConfig(iterations=3000, init_trials=200), Rng(8)
        )
        assert res.success
        assert res.distortion <= 1.15 * eps_star

    def test_zero_distortion_when_already_adversarial(self, mlp_clf, gauss2):
        x = gauss2.inputs[0]
        wrong = 1 - mlp_clf.predict(x)
        res = boundary_attack(mlp_clf, ThreatModel("2", 0.5), GOAL, x, wrong, rng=Rng(9))
        assert res.success and res.distortion == 0.0

    def test_init_failure_when_no_adversarial_region(self):
        clf = binary_linear(np.array([0.0, 0.0]), 1.0)  # constant class 0
        with pytest.raises(InitFailure):
            boundary_attack(
                clf,
                ThreatModel("2", 0.5),
                GOAL,
                np.array([0.5, 0.5]),
                0,
                AttackConfig(iterations=10, init_trials=20),
                Rng(10),
            )

    def test_init_pool_rescues_initialization(self, mlp_clf, gauss2):
        x, y = gauss2.inputs[0], int(gauss2.labels[0])
        pool = [xi for xi, yi in zip(gauss2.inputs, gauss2.labels) if yi != y]
        res = boundary_attack(
            mlp_clf,
            ThreatModel("2", 1.0),
            GOAL,
            x,
            y,
            AttackConfig(iterations=500, init_trials=1),
            Rng(11),
            init_pool=pool,
        )
        assert res.success


class TestRandomSearch:
    def test_shrinks_distortion_over_successes(self, mlp_clf, gauss2):
        tm = ThreatModel("inf", 0.4)
        x, y = gauss2.inputs[0], int(gauss2.labels[0])
        res = random_search(mlp_clf, tm, GOAL, x, y, AttackConfig(samples=500), Rng(12))
        assert res.success
        assert res.distortion < 0.4

    def test_reports_inf_on_failure(self):
        clf = binary_linear(np.array([0.0, 0.0]), 1.0)
        res = random_search(
            clf, ThreatModel("inf", 0.1), GOAL, np.array([0.5, 0.5]), 0, AttackConfig(samples=50), Rng(13)
        )
        assert not res.success
        assert res.distortion == float("inf")
