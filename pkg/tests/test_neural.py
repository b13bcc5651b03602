import numpy as np
import pytest

import oracles
from repcap import neural
from repcap.neural import Activation, AdamState, MlpAutoencoder
from repcap.metrics import kmeans


def finite_difference_grads(model: MlpAutoencoder, batch: np.ndarray, h: float = 1e-5):
    params = [p.copy() for p in model.parameters()]
    out = []
    for k, p in enumerate(params):
        def f(x, k=k):
            trial = list(params)
            trial[k] = x
            recon, _ = neural.forward(model.with_parameters(trial), batch)
            return neural.mse_loss(recon, batch)

        out.append(oracles.central_difference(f, p.copy(), h))
    return out


@pytest.mark.parametrize("activation", list(Activation))
def test_backprop_matches_finite_differences(activation):
    rng = np.random.default_rng(1)
    model = MlpAutoencoder.initialize((6, 4, 2, 4, 6), seed=3, activation=activation)
    model = model.with_parameters([p + rng.normal(0, 0.1, p.shape) for p in model.parameters()])
    batch = rng.normal(size=(8, 6))
    _, grads = neural.backward(model, batch)
    for g, fd in zip(grads, finite_difference_grads(model, batch)):
        assert oracles.relative_error(g, fd, floor=1e-6) < 1e-4


def test_zero_model_reconstructs_zero():
    dims = (5, 3, 2, 3, 5)
    model = MlpAutoencoder(
        dims,
        [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
        [np.zeros(b) for b in dims[1:]],
        Activation.IDENTITY,
    )
    recon, code = neural.forward(model, np.ones((4, 5)))
    assert not recon.any() and not code.any()


def test_identity_layers_reproduce_input():
    dims = (3, 3, 3, 3, 3)
    model = MlpAutoencoder(dims, [np.eye(3)] * 4, [np.zeros(3)] * 4, Activation.IDENTITY)
    x = np.random.default_rng(0).normal(size=(7, 3))
    assert np.allclose(neural.forward(model, x)[0], x)


def test_zero_everything_gives_zero_gradient():
    dims = (4, 3, 2, 3, 4)
    model = MlpAutoencoder(
        dims,
        [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
        [np.zeros(b) for b in dims[1:]],
    )
    _, grads = neural.backward(model, np.zeros((5, 4)))
    assert all(not g.any() for g in grads)


def test_shape_mismatch():
    model = MlpAutoencoder.initialize((4, 3, 2, 3, 4))
    with pytest.raises(ValueError):
        neural.forward(model, np.zeros((2, 5)))
    with pytest.raises(ValueError):
        neural.mse_loss(np.zeros(3), np.zeros(4))


def test_mse_values():
    a = np.random.default_rng(0).normal(size=(3, 4))
    assert neural.mse_loss(a, a) == 0
    assert neural.mse_loss(a + 1, a) == pytest.approx(1.0)
    assert neural.mse_loss(np.array([[3.0]]), np.array([[5.0]])) == 4.0


def test_gradient_step_descends():
    rng = np.random.default_rng(5)
    model = MlpAutoencoder.initialize((6, 4, 2, 4, 6), seed=1)
    batch = rng.normal(size=(10, 6))
    loss, grads = neural.backward(model, batch)
    stepped = model.with_parameters([p - 1e-3 * g for p, g in zip(model.parameters(), grads)])
    assert neural.backward(stepped, batch)[0] < loss


def test_adam_scalar_quadratic():
    x = [np.array([0.0])]
    state = AdamState(lr=0.01)
    for _ in range(2000):
        x, state = neural.adam_step(x, [2.0 * (x[0] - 3.0)], state)
    assert abs(x[0][0] - 3.0) < 1e-2


def test_adam_zero_gradient():
    p = [np.array([1.0, -2.0])]
    out, state = neural.adam_step(p, [np.zeros(2)], AdamState())
    assert np.array_equal(out[0], p[0]) and state.t == 1


def test_adam_first_step_magnitude():
    p = [np.array([0.0, 0.0])]
    out, _ = neural.adam_step(p, [np.array([0.5, -7.0])], AdamState(lr=1e-3))
    assert np.allclose(out[0], [-1e-3, 1e-3], rtol=1e-6)


def test_training_deterministic_and_decreasing():
    X = np.random.default_rng(2).random((40, 12))
    a = neural.train_autoencoder(X, z=3, epochs=30, batch_size=8, seed=4)
    b = neural.train_autoencoder(X, z=3, epochs=30, batch_size=8, seed=4)
    assert np.array_equal(a.codes, b.codes)
    assert a.losses[-1] <= a.losses[0]
    drops = np.diff(a.losses) <= 0
    assert drops.mean() >= 0.9


def test_identical_rows_memorized():
    X = np.tile(np.linspace(-1, 1, 10), (32, 1))
    fit = neural.train_autoencoder(X, z=2, epochs=50, batch_size=8, seed=0, standardize_inputs=False,
                                   lr=1e-2)
    assert fit.losses[-1] < 1e-3


def test_bottleneck_separates_clusters():
    rng = np.random.default_rng(0)
    proto = rng.integers(0, 4, (3, 20))
    rows, labels = [], []
    for c in range(3):
        for _ in range(30):
            seq = proto[c].copy()
            hit = rng.random(20) < 0.05
            seq[hit] = rng.integers(0, 4, hit.sum())
            onehot = np.zeros((20, 4))
            onehot[np.arange(20), seq] = 1
            rows.append(onehot.ravel())
            labels.append(c)
    fit = neural.train_autoencoder(np.array(rows), z=2, epochs=50, batch_size=16, seed=1)
    assign = kmeans(fit.codes, 3, seed=0).assignments
    labels = np.array(labels)
    purity = sum(np.bincount(labels[assign == c]).max() for c in np.unique(assign)) / len(labels)
    assert purity > 0.8


def test_checkpoint_roundtrip(tmp_path):
    model = MlpAutoencoder.initialize((5, 4, 2, 4, 5), seed=9, activation=Activation.RELU)
    path = tmp_path / "m.bin"
    neural.save_checkpoint(model, path)
    back = neural.load_checkpoint(path)
    assert back.layer_dims == model.layer_dims and back.activation is Activation.RELU
    assert all(np.array_equal(a, b) for a, b in zip(back.parameters(), model.parameters()))
