import numpy as np
import pytest

from kgan.errors import InvalidInputError, InvalidStateError
from kgan.generator import (
    MAGIC, GeneratorParams, NoiseSource, backward, default_sizes, draw_noise,
    flat_gradients, forward, init_params, read_checkpoint, write_checkpoint,
)
from kgan.rff import build_feature_map, features, features_vjp

# recorded once from init_params((2, 16, 16, 1), default_rng(2024))
GOLDEN_Z = np.array([[0.5, -1.0], [1.5, 0.25]])
GOLDEN_OUT = [-0.22971787234022562, -0.09426996073407168]


def fd_flat(fn, vec, h=1e-5):
    out = np.zeros_like(vec)
    for i in range(vec.size):
        e = np.zeros_like(vec)
        e[i] = h
        out[i] = (fn(vec + e) - fn(vec - e)) / (2 * h)
    return out


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))


class TestForward:
    def test_zero_parameters_give_zero(self):
        g = GeneratorParams((3, 4, 2), [np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)])
        x, _ = forward(g, np.array([1.0, -2.0, 3.0]))
        np.testing.assert_array_equal(x, [0.0, 0.0])

    def test_identity_layer(self):
        g = GeneratorParams((3, 3), [np.eye(3)], [np.zeros(3)])
        z = np.array([0.3, -1.2, 4.0])
        np.testing.assert_array_equal(forward(g, z)[0], z)

    def test_golden_output(self):
        g = init_params((2, 16, 16, 1), np.random.default_rng(2024))
        np.testing.assert_allclose(forward(g, GOLDEN_Z)[0].ravel(), GOLDEN_OUT, rtol=1e-12)

    def test_batch_matches_single(self):
        g = init_params((2, 16, 16, 3), np.random.default_rng(0))
        z = np.random.default_rng(1).normal(size=(5, 2))
        batch, _ = forward(g, z)
        for i in range(5):
            np.testing.assert_allclose(forward(g, z[i])[0], batch[i], atol=1e-15)

    def test_dimension_mismatch(self):
        g = init_params((2, 4, 1), np.random.default_rng(0))
        with pytest.raises(InvalidInputError):
            forward(g, np.zeros(3))

    def test_deterministic_init(self):
        a = init_params((2, 16, 16, 1), np.random.default_rng(9))
        b = init_params((2, 16, 16, 1), np.random.default_rng(9))
        assert np.array_equal(a.flat(), b.flat())

    def test_glorot_bounds_and_zero_bias(self):
        g = init_params((2, 16, 16, 1), np.random.default_rng(0))
        for w, b in zip(g.weights, g.biases):
            assert np.abs(w).max() <= np.sqrt(6.0 / sum(w.shape))
            assert not b.any()

    def test_default_architecture(self):
        assert default_sizes(2, 1) == (2, 16, 16, 1)

    def test_bad_shapes_rejected(self):
        with pytest.raises(InvalidInputError):
            GeneratorParams((2, 3), [np.zeros((2, 3))], [np.zeros(3)])
        with pytest.raises(InvalidInputError):
            GeneratorParams((2, 3), [np.full((3, 2), np.nan)], [np.zeros(3)])


class TestBackward:
    def test_zero_output_gradient(self):
        g = init_params((2, 5, 3), np.random.default_rng(0))
        _, tape = forward(g, np.ones((4, 2)))
        grads, gz = backward(g, tape, np.zeros((4, 3)))
        assert not flat_gradients(grads).any() and not gz.any()

    def test_linear_layer_outer_product(self):
        rng = np.random.default_rng(3)
        g = GeneratorParams((3, 2), [rng.normal(size=(2, 3))], [rng.normal(size=2)])
        z, og = np.array([1.0, -2.0, 0.5]), np.array([0.7, -0.1])
        _, tape = forward(g, z)
        grads, gz = backward(g, tape, og)
        np.testing.assert_allclose(grads.weights[0], np.outer(og, z))
        np.testing.assert_allclose(grads.biases[0], og)
        np.testing.assert_allclose(gz, g.weights[0].T @ og)

    def test_stale_tape(self):
        g = init_params((2, 4, 1), np.random.default_rng(0))
        _, tape = forward(g, np.ones(2))
        grads, _ = backward(g, tape, np.ones(1))
        g.ascend(grads, 0.1)
        with pytest.raises(InvalidStateError):
            backward(g, tape, np.ones(1))

    def test_tape_from_other_params(self):
        g = init_params((2, 4, 1), np.random.default_rng(0))
        _, tape = forward(g.copy(), np.ones(2))
        with pytest.raises(InvalidStateError):
            backward(g, tape, np.ones(1))

    @pytest.mark.parametrize("seed", range(50))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        g = init_params((2, 6, 5, 2), rng)
        g = g.with_flat(g.flat() + 0.1 * rng.normal(size=g.size))
        z, og = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        _, tape = forward(g, z)
        grads, gz = backward(g, tape, og)
        fd = fd_flat(lambda p: np.sum(og * forward(g.with_flat(p), z)[0]), g.flat())
        assert rel_err(flat_gradients(grads), fd) <= 1e-4
        fdz = fd_flat(lambda zz: np.sum(og * forward(g, zz.reshape(3, 2))[0]), z.ravel())
        assert rel_err(gz.ravel(), fdz) <= 1e-4

    @pytest.mark.parametrize("seed", range(10))
    def test_chain_through_features(self, seed):
        rng = np.random.default_rng(seed)
        g = init_params((2, 8, 1), rng)
        fmap = build_feature_map(1, 16, 1.5, rng)
        z, c = rng.normal(size=(4, 2)), rng.normal(size=(4, 32))
        x, tape = forward(g, z)
        grads, _ = backward(g, tape, features_vjp(fmap, x, c))
        fd = fd_flat(lambda p: np.sum(c * features(fmap, forward(g.with_flat(p), z)[0])), g.flat())
        assert rel_err(flat_gradients(grads), fd) <= 1e-4


class TestNoise:
    def test_atoms_in_order(self):
        atoms = np.array([[1.0], [2.0], [3.0]])
        src = NoiseSource.discrete(atoms)
        np.testing.assert_array_equal(draw_noise(src, np.random.default_rng(0), 3), atoms)

    def test_single_atom_constant(self):
        src = NoiseSource.discrete([[0.5, -0.5]])
        out = draw_noise(src, np.random.default_rng(0), 17)
        assert out.shape == (17, 2) and np.all(out == [0.5, -0.5])

    def test_gaussian_mean(self):
        z = draw_noise(NoiseSource.gaussian(2), np.random.default_rng(7), 100_000)
        assert np.abs(z.mean(axis=0)).max() <= 0.02

    def test_sampling_by_probability(self):
        src = NoiseSource.discrete([[0.0], [1.0]], [0.9, 0.1])
        out = draw_noise(src, np.random.default_rng(0), 10_000)
        assert out.mean() == pytest.approx(0.1, abs=0.01)

    def test_probabilities_validated(self):
        with pytest.raises(InvalidInputError):
            NoiseSource.discrete([[0.0], [1.0]], [0.5, 0.6])
        with pytest.raises(InvalidInputError):
            draw_noise(NoiseSource.gaussian(1), np.random.default_rng(0), 0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        g = init_params((2, 16, 16, 1), np.random.default_rng(5))
        path = tmp_path / "g.ckpt"
        write_checkpoint(path, g)
        back, dual = read_checkpoint(path)
        assert dual is None
        assert back.sizes == g.sizes
        assert np.array_equal(back.flat(), g.flat())

    def test_dual_section(self, tmp_path):
        class State:
            u = np.array([-0.25, -1.0])
            v = np.array([-0.5])
            iteration = 12

        g = init_params((1, 2), np.random.default_rng(0))
        path = tmp_path / "g.ckpt"
        write_checkpoint(path, g, State)
        _, dual = read_checkpoint(path)
        assert dual["iteration"] == 12
        np.testing.assert_array_equal(dual["u"], State.u)
        np.testing.assert_array_equal(dual["v"], State.v)

    def test_header(self, tmp_path):
        path = tmp_path / "g.ckpt"
        write_checkpoint(path, init_params((1, 1), np.random.default_rng(0)))
        assert path.read_text().splitlines()[:2] == [MAGIC, "layers 1 1"]

    def test_bad_files(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_text("NOTACKPT\n")
        with pytest.raises(InvalidInputError):
            read_checkpoint(path)
        write_checkpoint(path, init_params((2, 3), np.random.default_rng(0)))
        path.write_text(path.read_text().replace("end\n", ""))
        with pytest.raises(InvalidInputError):
            read_checkpoint(path)
