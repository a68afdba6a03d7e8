import os
import unittest
from tempfile import TemporaryDirectory

import numpy as np

from endonav.exceptions import CheckpointError, ShapeMismatchError
from endonav.nn import (
    AdamState,
    LstmParams,
    MlpParams,
    adam_update,
    add_grads,
    grad_check,
    load_checkpoint,
    lstm_unroll,
    lstm_unroll_backward,
    mlp_backward,
    mlp_forward,
    polyak,
    prefixed,
    save_checkpoint,
)


class TestMlp(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.mlp = MlpParams.init((5, 7, 3), ["tanh", "softplus"], rng)
        self.x = rng.standard_normal((4, 5))
        self.weights = rng.standard_normal((4, 3))

    def loss(self, params):
        y, cache = mlp_forward(self.mlp, self.x)
        _, grads = mlp_backward(self.mlp, cache, self.weights)
        return float(np.sum(y * self.weights)), grads

    def test_gradients(self):
        self.assertLess(grad_check(self.loss, self.mlp.parameters()), 1e-6)

    def test_input_gradient(self):
        y, cache = mlp_forward(self.mlp, self.x)
        dx, _ = mlp_backward(self.mlp, cache, self.weights)
        h = 1e-6
        shifted = self.x.copy()
        shifted[1, 2] += h
        plus = np.sum(mlp_forward(self.mlp, shifted)[0] * self.weights)
        shifted[1, 2] -= 2 * h
        minus = np.sum(mlp_forward(self.mlp, shifted)[0] * self.weights)
        self.assertAlmostEqual((plus - minus) / (2 * h), dx[1, 2], places=6)

    def test_single_vector(self):
        y, cache = mlp_forward(self.mlp, self.x[0])
        self.assertEqual((3,), y.shape)
        _, grads = mlp_backward(self.mlp, cache, self.weights[0])
        self.assertEqual((7, 5), grads["W0"].shape)

    def test_relu(self):
        mlp = MlpParams.init((3, 6, 2), ["relu", "identity"], np.random.default_rng(1))
        x = np.random.default_rng(2).standard_normal((5, 3))

        def loss(params):
            y, cache = mlp_forward(mlp, x)
            return float(np.sum(y)), mlp_backward(mlp, cache, np.ones_like(y))[1]

        self.assertLess(grad_check(loss, mlp.parameters()), 1e-5)

    def test_shapes(self):
        with self.assertRaises(ShapeMismatchError):
            mlp_forward(self.mlp, np.zeros(4))
        with self.assertRaises(ShapeMismatchError):
            weights = [np.zeros((3, 2)), np.zeros((1, 4))]
            MlpParams(weights, [np.zeros(3), np.zeros(1)], ["tanh"] * 2)
        with self.assertRaises(ShapeMismatchError):
            MlpParams([np.zeros((3, 2))], [np.zeros(3)], ["sigmoid"])

    def test_copy(self):
        copy = self.mlp.copy()
        copy.weights[0][0, 0] += 1
        self.assertNotEqual(copy.weights[0][0, 0], self.mlp.weights[0][0, 0])


class TestLstm(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(3)
        self.lstm = LstmParams.init(5, 4, rng)
        self.xs = rng.standard_normal((6, 3, 5))
        self.weights = rng.standard_normal((6, 3, 4))

    def loss(self, params):
        hs, _, caches = lstm_unroll(self.lstm, self.xs)
        _, grads = lstm_unroll_backward(self.lstm, caches, self.weights)
        return float(np.sum(hs * self.weights)), grads

    def test_gradients(self):
        self.assertLess(grad_check(self.loss, self.lstm.parameters()), 1e-4)

    def test_forget_bias(self):
        self.assertTrue(np.array_equal(np.ones(4), self.lstm.biases["f"]))
        self.assertEqual(5, self.lstm.input_size)
        self.assertEqual(4, self.lstm.hidden_size)

    def test_zero_state(self):
        hs, c, _ = lstm_unroll(self.lstm, self.xs)
        self.assertEqual((6, 3, 4), hs.shape)
        self.assertEqual((3, 4), c.shape)
        first, _, _ = lstm_unroll(self.lstm, self.xs[:1])
        self.assertTrue(np.allclose(hs[0], first[0]))

    def test_gate_shapes(self):
        weights = {g: np.zeros((4, 9)) for g in "ifgo"}
        biases = {g: np.zeros(4) for g in "ifgo"}
        biases["o"] = np.zeros(3)
        with self.assertRaises(ShapeMismatchError):
            LstmParams(weights, biases)


class TestOptim(unittest.TestCase):
    def test_adam_converges(self):
        params = {"p": np.array([0.0, 10.0])}
        state = AdamState(lr=0.05)
        for _ in range(1000):
            adam_update(state, params, {"p": 2 * (params["p"] - 3)})
        self.assertTrue(np.allclose([3, 3], params["p"], atol=0.05))
        self.assertEqual(1000, state.step)

    def test_adam_checks(self):
        params = {"p": np.zeros(2)}
        with self.assertRaises(ShapeMismatchError):
            adam_update(AdamState(), params, {"q": np.zeros(2)})
        with self.assertRaises(ShapeMismatchError):
            adam_update(AdamState(), params, {"p": np.zeros(3)})

    def test_adam_skips_missing(self):
        params = {"p": np.zeros(2), "q": np.ones(2)}
        adam_update(AdamState(), params, {"p": np.ones(2)})
        self.assertTrue(np.array_equal(np.ones(2), params["q"]))

    def test_polyak(self):
        target = {"w": np.zeros(3)}
        polyak(target, {"w": np.ones(3)}, 0.25)
        self.assertTrue(np.allclose(0.25, target["w"]))

    def test_grad_helpers(self):
        grads = prefixed({"W0": 1.0}, "q1.")
        self.assertEqual({"q1.W0": 1.0}, grads)
        total = add_grads(grads, {"q1.W0": 2.0, "b": 1.0})
        self.assertEqual({"q1.W0": 3.0, "b": 1.0}, total)


class TestCheckpoint(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(4)
        self.tensors = {"a.W0": rng.standard_normal((2, 3)), "b": rng.standard_normal(4)}

    def test_round_trip(self):
        with TemporaryDirectory() as d:
            path = os.path.join(d, "ckpt", "step_7")
            save_checkpoint(path, "sac", self.tensors, step=7, hyper={"x": 1})
            checkpoint = load_checkpoint(path, {"a.W0": (2, 3), "b": (4,)})
        self.assertEqual("sac", checkpoint.kind)
        self.assertEqual(7, checkpoint.step)
        self.assertEqual({"x": 1}, checkpoint.hyper)
        for name, value in self.tensors.items():
            self.assertTrue(np.array_equal(value, checkpoint.tensors[name]))

    def test_float32(self):
        with TemporaryDirectory() as d:
            path = os.path.join(d, "step_1")
            save_checkpoint(path, "sac", self.tensors, dtype="float32")
            checkpoint = load_checkpoint(path)
        loaded = checkpoint.tensors["b"]
        self.assertTrue(np.allclose(self.tensors["b"], loaded, atol=1e-6))
        self.assertEqual(np.float64, checkpoint.tensors["b"].dtype)

    def test_truncated(self):
        with TemporaryDirectory() as d:
            path = os.path.join(d, "step_1")
            save_checkpoint(path, "sac", self.tensors)
            with open(path, "rb") as f:
                data = f.read()
            with open(path, "wb") as f:
                f.write(data[:-8])
            with self.assertRaises(CheckpointError):
                load_checkpoint(path)

    def test_not_a_checkpoint(self):
        with TemporaryDirectory() as d:
            path = os.path.join(d, "step_1")
            with open(path, "w") as f:
                f.write('{"format": "other"}\n')
            with self.assertRaises(CheckpointError):
                load_checkpoint(path)

    def test_unexpected_shapes(self):
        with TemporaryDirectory() as d:
            path = os.path.join(d, "step_1")
            save_checkpoint(path, "sac", self.tensors)
            with self.assertRaises(ShapeMismatchError):
                load_checkpoint(path, {"a.W0": (3, 2), "b": (4,)})
            with self.assertRaises(ShapeMismatchError):
                load_checkpoint(path, {"a.W0": (2, 3)})

    def test_dtype(self):
        with TemporaryDirectory() as d:
            with self.assertRaises(CheckpointError):
                save_checkpoint(os.path.join(d, "x"), "sac", self.tensors, dtype="int8")
