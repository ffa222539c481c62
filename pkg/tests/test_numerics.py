import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advcheck.errors import FormatError, TrainingDiverged
from advcheck.numerics import (
    FD_STEP,
    MlpParams,
    Rng,
    gradient_check,
    init_mlp,
    load_params,
    mlp_forward_backward,
    mlp_logits,
    mlp_mean_loss,
    save_params,
    sgd_train,
    softmax,
    softmax_xent,
)


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(42).normal(size=10)
        b = Rng(42).normal(size=10)
        assert np.array_equal(a, b)

    def test_forks_are_disjoint(self):
        parent = Rng(7)
        c1, c2 = parent.fork(), parent.fork()
        assert not np.array_equal(c1.normal(size=10), c2.normal(size=10))

    def test_fork_deterministic(self):
        a = Rng(7).fork().normal(size=5)
        b = Rng(7).fork().normal(size=5)
        assert np.array_equal(a, b)

    def test_fork_many_matches_sequential_spawn_order(self):
        kids = Rng(3).fork_many(4)
        draws = [k.normal() for k in kids]
        assert len(set(draws)) == 4


class TestSoftmaxXent:
    def test_softmax_sums_to_one(self):
        p = softmax(np.array([1.0, 2.0, 3.0]))
        assert abs(p.sum() - 1.0) < 1e-12

    def test_stable_for_huge_logits(self):
        loss, d = softmax_xent(np.array([1e4, 0.0]), 0)
        assert np.isfinite(loss) and np.all(np.isfinite(d))
        assert loss < 1e-10

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=6))
    @settings(max_examples=50, deadline=None)
    def test_gradient_matches_finite_differences(self, vals):
        logits = np.array(vals, dtype=np.float64)
        label = 0
        _, d = softmax_xent(logits, label)
        err = gradient_check(lambda z: softmax_xent(z, label)[0], logits, d)
        assert err < 1e-6

    def test_rejects_bad_label(self):
        with pytest.raises(ValueError):
            softmax_xent(np.zeros(3), 5)


class TestMlp:
    def test_input_gradient_matches_finite_differences(self):
        rng = Rng(5)
        for _ in range(20):
            params = init_mlp([4, 8, 3], rng.fork())
            x = rng.uniform(0, 1, 4)
            _, _, dx, _ = mlp_forward_backward(params, x, 1)
            err = gradient_check(lambda z: _xent_at(params, z, 1), x, dx)
            assert err < 1e-4

    def test_parameter_gradients_match_finite_differences(self):
        rng = Rng(6)
        params = init_mlp([3, 5, 2], rng.fork(), activation="sigmoid")
        x = rng.uniform(0, 1, 3)
        _, _, _, (dw, db) = mlp_forward_backward(params, x, 0)
        h = FD_STEP
        for layer in range(2):
            w = params.weights[layer]
            i, j = 0, 0
            w[i, j] += h
            up = _xent_at(params, x, 0)
            w[i, j] -= 2 * h
            down = _xent_at(params, x, 0)
            w[i, j] += h
            fd = (up - down) / (2 * h)
            assert abs(fd - dw[layer][i, j]) < 1e-6

    def test_shape_chain_validated(self):
        with pytest.raises(ValueError):
            MlpParams([np.zeros((3, 2)), np.zeros((2, 5))], [np.zeros(3), np.zeros(2)])

    def test_single_layer_is_linear(self):
        W = np.array([[1.0, -1.0], [0.5, 2.0]])
        b = np.array([0.1, -0.2])
        params = MlpParams([W], [b])
        x = np.array([0.3, 0.7])
        assert np.allclose(mlp_logits(params, x), W @ x + b)


def _xent_at(params, x, label):
    loss, _ = softmax_xent(mlp_logits(params, x), label)
    return loss


class TestSgd:
    def test_training_reduces_loss(self, gauss2):
        init = init_mlp([2, 8, 2], Rng(11))
        before = mlp_mean_loss(init, gauss2.inputs, gauss2.labels)
        trained = sgd_train(init, gauss2.inputs, gauss2.labels, 10, 0.5, Rng(12))
        after = mlp_mean_loss(trained, gauss2.inputs, gauss2.labels)
        assert after < before

    def test_deterministic_given_seed(self, gauss2):
        init = init_mlp([2, 4, 2], Rng(11))
        a = sgd_train(init, gauss2.inputs, gauss2.labels, 3, 0.5, Rng(12))
        b = sgd_train(init, gauss2.inputs, gauss2.labels, 3, 0.5, Rng(12))
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_zero_epochs_returns_copy(self, gauss2):
        init = init_mlp([2, 4, 2], Rng(11))
        out = sgd_train(init, gauss2.inputs, gauss2.labels, 0, 0.5, Rng(12))
        assert out is not init
        assert np.array_equal(out.weights[0], init.weights[0])

    @pytest.mark.filterwarnings("ignore:invalid value encountered")
    def test_divergence_names_epoch(self, gauss2):
        init = init_mlp([2, 4, 2], Rng(11), scale=10.0)
        with pytest.raises(TrainingDiverged) as exc:
            sgd_train(init, gauss2.inputs, gauss2.labels, 50, float("inf"), Rng(12))
        assert exc.value.epoch >= 0

    def test_never_returns_worse_than_init(self, gauss2):
        init = init_mlp([2, 8, 2], Rng(11))
        before = mlp_mean_loss(init, gauss2.inputs, gauss2.labels)
        trained = sgd_train(init, gauss2.inputs, gauss2.labels, 2, 3.0, Rng(12))
        after = mlp_mean_loss(trained, gauss2.inputs, gauss2.labels)
        assert after <= before + 1e-12


class TestGradientCheck:
    def test_quadratic_oracle(self):
        # f(x) = x.Ax has gradient (A + A.T) x; exact up to fd truncation
        rng = Rng(20)
        A = rng.normal(size=(4, 4))
        x = rng.normal(size=4)
        analytic = (A + A.T) @ x
        assert gradient_check(lambda z: z @ A @ z, x, analytic) < 1e-7

    def test_detects_wrong_gradient(self):
        x = np.array([0.5, 0.5])
        wrong = np.zeros(2)
        assert gradient_check(lambda z: float(z.sum()), x, wrong) > 0.5


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = Rng(30)
        params = init_mlp([3, 7, 2], rng, activation="sigmoid")
        path = tmp_path / "model.agmp"
        save_params(params, path)
        loaded = load_params(path)
        assert loaded.activation == "sigmoid"
        for w, lw in zip(params.weights, loaded.weights):
            assert np.array_equal(w, lw)
        for b, lb in zip(params.biases, loaded.biases):
            assert np.array_equal(b, lb)

    def test_bad_magic_reports_offset(self, tmp_path):
        path = tmp_path / "bad.agmp"
        path.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(FormatError) as exc:
            load_params(path)
        assert exc.value.offset == 0

    def test_truncated_payload_reports_offset(self, tmp_path):
        rng = Rng(31)
        params = init_mlp([3, 4, 2], rng)
        path = tmp_path / "model.agmp"
        save_params(params, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 10])
        with pytest.raises(FormatError) as exc:
            load_params(path)
        assert exc.value.offset > 0
