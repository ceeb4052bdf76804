import struct

import numpy as np
import pytest

from midivae.exceptions import CheckpointError, InvalidParameter, ShapeMismatch
from midivae.nn.checkpoint import dump_checkpoint, load_checkpoint, parse_checkpoint, save_checkpoint
from midivae.nn.functional import (
    kl_diag_gaussian,
    kl_diag_gaussian_backward,
    kl_from_logvar,
    kl_from_logvar_backward,
    mse,
    mse_backward,
    reparameterize,
    reparameterize_backward,
    sigmoid,
    softmax,
    softmax_cross_entropy,
)
from midivae.nn.gradcheck import grad_check
from midivae.nn.layers import LINEAR, SIGMOID, TANH, GRULayer, GRUStack, dense, dense_backward, gru_step, gru_step_backward
from midivae.nn.optim import adam_step
from midivae.nn.params import FLOAT64, ParamStore

TOLERANCE = 1e-4


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.mark.parametrize('activation', [TANH, SIGMOID, LINEAR])
def test_dense_gradients(rng, activation):
    p = {'W': rng.normal(size=(4, 3)), 'b': rng.normal(size=4), 'x': rng.normal(size=(5, 3))}
    R = rng.normal(size=(5, 4))

    def f():
        y = dense(p['W'], p['b'], p['x'], activation)
        dx, dW, db = dense_backward(p['W'], p['x'], y, R, activation)
        return float(np.sum(y * R)), {'W': dW, 'b': db, 'x': dx}

    assert grad_check(f, p) < TOLERANCE


def test_gru_step_gradients(rng):
    H, n_in = 3, 4
    p = {
        'W': rng.normal(size=(3 * H, n_in)) * 0.5,
        'U': rng.normal(size=(3 * H, H)) * 0.5,
        'b': rng.normal(size=3 * H) * 0.1,
        'x': rng.normal(size=(2, n_in)),
        'h': rng.normal(size=(2, H)) * 0.5,
    }
    R = rng.normal(size=(2, H))

    def f():
        h_new, cache = gru_step(p['W'], p['U'], p['b'], p['x'], p['h'])
        dx, dh, dW, dU, db = gru_step_backward(p['W'], p['U'], cache, R)
        return float(np.sum(h_new * R)), {'W': dW, 'U': dU, 'b': db, 'x': dx, 'h': dh}

    assert grad_check(f, p) < TOLERANCE


def test_gru_layer_matches_repeated_steps(rng):
    store = ParamStore(dtype=FLOAT64)
    layer = GRULayer(store, 'gru', 3, 4, rng)
    X = rng.normal(size=(2, 5, 3))
    h = rng.normal(size=(2, 4))
    hs, _ = layer.forward(X, h)
    W, U, b = layer.params()
    for t in range(5):
        h, _ = gru_step(W, U, b, X[:, t], h)
        np.testing.assert_allclose(hs[:, t], h, rtol=1e-12, atol=1e-12)


def test_gru_layer_backpropagation_through_time(rng):
    store = ParamStore(dtype=FLOAT64)
    layer = GRULayer(store, 'gru', 3, 4, rng)
    inputs = {'X': rng.normal(size=(2, 5, 3)), 'h0': rng.normal(size=(2, 4)) * 0.5}
    R = rng.normal(size=(2, 5, 4))
    params = dict(store.values())
    params.update(inputs)

    def f():
        hs, cache = layer.forward(inputs['X'], inputs['h0'])
        grads = store.zeros_like()
        dX, dh0 = layer.backward(R, cache, grads)
        grads.update({'X': dX, 'h0': dh0})
        return float(np.sum(hs * R)), grads

    assert grad_check(f, params) < TOLERANCE


def test_gru_stack_with_final_state_gradients(rng):
    store = ParamStore(dtype=FLOAT64)
    stack = GRUStack(store, 'stack', 3, 4, 2, rng)
    X = rng.normal(size=(2, 4, 3))
    h0 = [rng.normal(size=(2, 4)) * 0.5 for _ in range(2)]
    R_top = rng.normal(size=(2, 4, 4))
    R_final = rng.normal(size=(2, 4))
    params = dict(store.values())
    params.update({'X': X, 'h0_0': h0[0], 'h0_1': h0[1]})

    def f():
        top, finals, caches = stack.forward(X, h0)
        grads = store.zeros_like()
        dX, dh0s = stack.backward(R_top, caches, grads, [R_final, None])
        grads.update({'X': dX, 'h0_0': dh0s[0], 'h0_1': dh0s[1]})
        return float(np.sum(top * R_top) + np.sum(finals[0] * R_final)), grads

    assert grad_check(f, params) < TOLERANCE


def test_gru_stack_rejects_wrong_state_count(rng):
    stack = GRUStack(ParamStore(dtype=FLOAT64), 'stack', 3, 4, 2, rng)
    with pytest.raises(ShapeMismatch):
        stack.forward(np.zeros((1, 2, 3)), stack.zero_state(1, np.float64)[:1])


def test_softmax_cross_entropy_gradients(rng):
    p = {'logits': rng.normal(size=(3, 4, 5))}
    target = rng.integers(0, 5, size=(3, 4))

    def f():
        loss, _, dlogits = softmax_cross_entropy(p['logits'], target)
        return loss, {'logits': dlogits}

    assert grad_check(f, p) < TOLERANCE


def test_softmax_and_sigmoid_are_stable():
    assert np.allclose(softmax(np.array([[1000.0, 1000.0]])), 0.5)
    values = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(values))
    assert values.tolist() == [0.0, 0.5, 1.0]


def test_mse_gradients(rng):
    p = {'a': rng.normal(size=(4, 3))}
    b = rng.normal(size=(4, 3))
    assert grad_check(lambda: (mse(p['a'], b), {'a': mse_backward(p['a'], b)}), p) < TOLERANCE


def test_kl_gradients(rng):
    p = {'mu': rng.normal(size=(3, 4)), 'sigma': rng.uniform(0.3, 2.0, size=(3, 4))}

    def f():
        dmu, dsigma = kl_diag_gaussian_backward(p['mu'], p['sigma'])
        return float(np.sum(kl_diag_gaussian(p['mu'], p['sigma']))), {'mu': dmu, 'sigma': dsigma}

    assert grad_check(f, p) < TOLERANCE


def test_kl_logvar_form_agrees(rng):
    mu = rng.normal(size=(3, 4))
    logvar = rng.normal(size=(3, 4))
    np.testing.assert_allclose(kl_from_logvar(mu, logvar), kl_diag_gaussian(mu, np.exp(0.5 * logvar)), rtol=1e-12)
    p = {'mu': mu, 'logvar': logvar}

    def f():
        dmu, dlogvar = kl_from_logvar_backward(p['mu'], p['logvar'])
        return float(np.sum(kl_from_logvar(p['mu'], p['logvar']))), {'mu': dmu, 'logvar': dlogvar}

    assert grad_check(f, p) < TOLERANCE


def test_kl_is_zero_for_the_prior():
    assert abs(float(kl_diag_gaussian(np.zeros(8), np.ones(8)))) < 1e-9


def test_kl_rejects_non_positive_sigma():
    with pytest.raises(InvalidParameter):
        kl_diag_gaussian(np.zeros(2), np.array([1.0, 0.0]))


def test_kl_matches_monte_carlo(rng):
    for _ in range(20):
        mu = rng.uniform(0.5, 2.0, size=3) * rng.choice([-1.0, 1.0], size=3)
        sigma = rng.uniform(0.3, 1.5, size=3)
        x = mu + sigma * rng.standard_normal((1_000_000, 3))
        log_ratio = np.sum(-0.5 * ((x - mu) / sigma) ** 2 - np.log(sigma) + 0.5 * x ** 2, axis=-1)
        estimate = float(np.mean(log_ratio))
        exact = float(kl_diag_gaussian(mu, sigma))
        assert abs(estimate - exact) / exact < 0.01


def test_reparameterize_gradients_and_noise_scale(rng):
    p = {'mu': rng.normal(size=(2, 3)), 'sigma': rng.uniform(0.5, 1.5, size=(2, 3))}
    R = rng.normal(size=(2, 3))

    def f():
        z, eps = reparameterize(p['mu'], p['sigma'], np.random.default_rng(0), sigma_eps=0.01)
        dmu, dsigma = reparameterize_backward(R, eps)
        return float(np.sum(z * R)), {'mu': dmu, 'sigma': dsigma}

    assert grad_check(f, p) < TOLERANCE
    _, eps = reparameterize(np.zeros(200_000), np.ones(200_000), rng, sigma_eps=0.01)
    assert np.var(eps) == pytest.approx(0.01, rel=0.02)


def test_reparameterize_with_zero_variance_returns_mu(rng):
    mu = rng.normal(size=4)
    z, _ = reparameterize(mu, np.ones(4), rng, sigma_eps=0.0)
    assert np.array_equal(z, mu)


def test_adam_matches_the_update_rule():
    store = ParamStore(dtype=FLOAT64)
    store.add('w', np.array([1.0, -2.0]))
    g1 = {'w': np.array([0.5, -1.0])}
    g2 = {'w': np.array([0.1, 0.3])}
    adam_step(store, g1, lr=0.1)
    adam_step(store, g2, lr=0.1)

    w = np.array([1.0, -2.0])
    m = np.zeros(2)
    v = np.zeros(2)
    for t, g in enumerate([g1['w'], g2['w']], start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(store['w'], w, rtol=1e-12)
    assert store.t == 2


def test_adam_rejects_missing_or_misshaped_gradients():
    store = ParamStore(dtype=FLOAT64)
    store.add('w', np.zeros(2))
    with pytest.raises(ShapeMismatch):
        adam_step(store, {}, lr=0.1)
    with pytest.raises(ShapeMismatch):
        adam_step(store, {'w': np.zeros(3)}, lr=0.1)


def test_param_store_contract():
    store = ParamStore(dtype=FLOAT64)
    store.add('a', np.ones((2, 2)))
    with pytest.raises(InvalidParameter):
        store.add('a', np.ones(1))
    with pytest.raises(ShapeMismatch):
        store['a'] = np.ones(3)
    clone = store.copy()
    clone['a'] = np.zeros((2, 2))
    assert store['a'].sum() == 4
    with pytest.raises(ShapeMismatch):
        store.load({}, strict=True)
    assert store.n_parameters == 4
    with pytest.raises(InvalidParameter):
        ParamStore(dtype=np.int32)


def test_grad_check_requires_float64():
    x = {'x': np.ones(2, dtype=np.float32)}
    with pytest.raises(InvalidParameter):
        grad_check(lambda: (0.0, {'x': np.zeros(2)}), x)


def test_grad_check_detects_wrong_gradients():
    x = {'x': np.array([3.0])}
    assert grad_check(lambda: (float(x['x'][0] ** 2), {'x': 2 * x['x']}), x) < 1e-8
    assert grad_check(lambda: (float(x['x'][0] ** 2), {'x': 3 * x['x']}), x) > 0.3


def test_checkpoint_layout_and_round_trip(tmp_path):
    tensors = {'b.W': np.arange(6, dtype=np.float32).reshape(2, 3), 'a': np.array(1.5, dtype=np.float32)}
    meta = {'kind': 'test', 'z': [1, 2], 'a': None}
    data = dump_checkpoint(tensors, meta)
    assert data[:4] == b"MVAE"
    assert struct.unpack('<II', data[4:12]) == (1, 2)
    (name_length,) = struct.unpack('<H', data[12:14])
    assert data[14:14 + name_length] == b"b.W"
    assert data.endswith(b'{"a":null,"kind":"test","z":[1,2]}')

    path = save_checkpoint(tmp_path / 'deep' / 'x.mvae', tensors, meta)
    loaded, loaded_meta = load_checkpoint(path)
    assert list(loaded) == ['b.W', 'a']
    assert np.array_equal(loaded['b.W'], tensors['b.W'])
    assert loaded['a'].shape == ()
    assert loaded_meta == meta
    assert dump_checkpoint(loaded, loaded_meta) == data


@pytest.mark.parametrize('mutate', [
    lambda data: b"XXXX" + data[4:],
    lambda data: data[:4] + struct.pack('<I', 99) + data[8:],
    lambda data: data[:-3],
    lambda data: data + b"\x00",
])
def test_corrupt_checkpoints_are_rejected(mutate):
    data = dump_checkpoint({'w': np.ones(3, dtype=np.float32)}, {'kind': 'test'})
    with pytest.raises(CheckpointError):
        parse_checkpoint(mutate(data))


def test_missing_checkpoint_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / 'nope.mvae')
