import numpy as np
import pytest

from advcheck.attacks import AttackConfig, AttackGoal, bpda_wrap, eot_wrap, pgd, transfer_attack
from advcheck.models import NoiseWrapper, QuantizeWrapper
from advcheck.numerics import Rng, softmax_xent
from advcheck.threat import ThreatModel

GOAL = AttackGoal("untargeted")


class TestEot:
    def test_requires_randomized_model(self, mlp_clf):
        with pytest.raises(ValueError):
            eot_wrap(mlp_clf, 10)

    def test_mean_logits_have_lower_variance(self, mlp_clf):
        noisy = NoiseWrapper(mlp_clf, 0.25)
        eot = eot_wrap(noisy, 30)
        x = np.array([0.5, 0.5])
        single = np.array([noisy.logits(x, rng=Rng(i))[0] for i in range(40)])
        averaged = np.array([eot.logits(x, rng=Rng(i))[0] for i in range(40)])
        assert averaged.std() < single.std()

    def test_query_cost_multiplies(self, mlp_clf):
        noisy = NoiseWrapper(mlp_clf, 0.25)
        eot = eot_wrap(noisy, 30)
        assert eot.cost_per_query == 30

    def test_gradient_is_mean_of_draw_gradients(self, mlp_clf):
        # with sigma=0 inside a still-randomized wrapper the estimate is exact
        noisy = NoiseWrapper(mlp_clf, 1e-12)
        eot = eot_wrap(noisy, 5)
        x = np.array([0.45, 0.55])
        _, g_eot = eot.forward_backward(x, lambda z: softmax_xent(z, 0)[1], rng=Rng(1))
        _, g_true = mlp_clf.forward_backward(x, lambda z: softmax_xent(z, 0)[1])
        assert np.allclose(g_eot, g_true, atol=1e-6)

    def test_eot_pgd_runs_on_noisy_model(self, mlp_clf, gauss2):
        noisy = NoiseWrapper(mlp_clf, 0.25)
        eot = eot_wrap(noisy, 10)
        tm = ThreatModel("inf", 0.3)
        x, y = gauss2.inputs[0], int(gauss2.labels[0])
        res = pgd(eot, tm, GOAL, x, y, AttackConfig(iterations=10), Rng(2))
        assert res.queries >= 10 * 10


class TestBpda:
    def test_requires_preprocessor_boundary(self, mlp_clf):
        with pytest.raises(ValueError):
            bpda_wrap(mlp_clf)

    def test_forward_is_exact(self, mlp_clf):
        q = QuantizeWrapper(mlp_clf, 256)
        b = bpda_wrap(q)
        x = np.array([0.41, 0.63])
        assert np.array_equal(b.logits(x), q.logits(x))

    def test_backward_uses_inner_gradient(self, mlp_clf):
        q = QuantizeWrapper(mlp_clf, 256)
        b = bpda_wrap(q)
        x = np.array([0.41, 0.63])
        _, g = b.forward_backward(x, lambda z: softmax_xent(z, 0)[1])
        assert np.max(np.abs(g)) > 0  # quantize alone returns exactly zero

    def test_bpda_pgd_beats_plain_pgd_on_quantized(self, mlp_clf, gauss2):
        q = QuantizeWrapper(mlp_clf, 256)
        b = bpda_wrap(q)
        tm = ThreatModel("inf", 0.3)
        cfg = AttackConfig(iterations=20)
        plain_wins = bpda_wins = 0
        for i in range(20):
            x, y = gauss2.inputs[i], int(gauss2.labels[i])
            if q.predict(x) != y:
                continue
            plain_wins += pgd(q, tm, GOAL, x, y, cfg, Rng(50 + i)).success
            bpda_wins += pgd(b, tm, GOAL, x, y, cfg, Rng(50 + i)).success
        assert bpda_wins > plain_wins


class TestTransfer:
    def test_single_target_query(self, mlp_clf, gauss2):
        q = QuantizeWrapper(mlp_clf, 256)
        tm = ThreatModel("inf", 0.3)
        x, y = gauss2.inputs[0], int(gauss2.labels[0])
        res = transfer_attack(mlp_clf, q, tm, GOAL, x, y, AttackConfig(iterations=30), Rng(3))
        assert res.queries == 1
        assert res.hyperparams["substitute_queries"] >= 1

    def test_transfers_to_similar_model(self, mlp_clf, gauss2):
        q = QuantizeWrapper(mlp_clf, 256)
        tm = ThreatModel("inf", 0.3)
        wins = 0
        tried = 0
        for i in range(15):
            x, y = gauss2.inputs[i], int(gauss2.labels[i])
            if q.predict(x) != y:
                continue
            tried += 1
            res = transfer_attack(mlp_clf, q, tm, GOAL, x, y, AttackConfig(iterations=30), Rng(60 + i))
            wins += res.success
        assert tried > 0 and wins / tried >= 0.7
