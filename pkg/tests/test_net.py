#!/usr/bin/env python
# -*- coding: utf-8 -*-

import numpy as np
import pytest

from net import (
    Adam,
    NetworkSpec,
    NumericalFault,
    copy_params,
    expected_value,
    forward,
    gradients,
    batch_loss,
    init_params,
    noise_magnitude,
    resample_noise,
    soft_update,
    zero_noise,
)

SMALL = NetworkSpec(state_dim=4, num_actions=3, hidden=(8, 6), atoms=5, v_min=-1.0, v_max=1.0)


def _batch(spec, rng, size=4):
    states = rng.normal(size=(size, spec.state_dim))
    actions = rng.integers(spec.num_actions, size=size)
    weights = rng.uniform(0.2, 1.0, size=size)
    if spec.distributional:
        targets = rng.dirichlet(np.ones(spec.atoms), size=size)
    else:
        targets = rng.normal(size=size)
    return states, actions, targets, weights


def _numeric_check(spec, loss, seed, checks=100):
    rng = np.random.default_rng(seed)
    params = init_params(spec, rng)
    noise = resample_noise(spec, rng)
    states, actions, targets, weights = _batch(spec, rng)
    result = gradients(spec, params, noise, states, actions, targets, weights, loss=loss, clip_norm=None)
    keys = list(params)
    h = 1e-5
    for _ in range(checks):
        key = keys[rng.integers(len(keys))]
        idx = tuple(rng.integers(n) for n in params[key].shape)
        saved = params[key][idx]
        params[key][idx] = saved + h
        up = batch_loss(spec, params, noise, states, actions, targets, weights, loss)
        params[key][idx] = saved - h
        down = batch_loss(spec, params, noise, states, actions, targets, weights, loss)
        params[key][idx] = saved
        numeric = (up - down) / (2 * h)
        assert result.grads[key][idx] == pytest.approx(numeric, rel=1e-4, abs=1e-8), key


def test_forward_shapes_and_distributions():
    spec = NetworkSpec()
    rng = np.random.default_rng(0)
    params = init_params(spec, rng)
    fw = forward(spec, params, resample_noise(spec, rng), rng.normal(size=(5, spec.state_dim)))
    assert fw.logits.shape == (5, 12, 51)
    assert fw.q.shape == (5, 12)
    assert fw.probs.sum(axis=-1) == pytest.approx(np.ones((5, 12)))
    assert np.all(fw.q >= spec.v_min) and np.all(fw.q <= spec.v_max)


def test_init_is_deterministic():
    a = init_params(SMALL, np.random.default_rng(3))
    b = init_params(SMALL, np.random.default_rng(3))
    assert list(a) == [k for k, _ in SMALL.shapes()]
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert np.all(a['value.w_sigma'] == 0.5 / np.sqrt(6))


def test_dueling_ignores_per_atom_shift_of_advantage():
    rng = np.random.default_rng(1)
    params = init_params(SMALL, rng)
    states = rng.normal(size=(3, SMALL.state_dim))
    before = forward(SMALL, params, zero_noise(), states).logits
    shifted = copy_params(params)
    shift = rng.normal(size=SMALL.atoms)
    shifted['advantage.b_mu'] = (shifted['advantage.b_mu'].reshape(SMALL.num_actions, SMALL.atoms)
                                 + shift).reshape(-1)
    after = forward(SMALL, shifted, zero_noise(), states).logits
    assert after == pytest.approx(before, abs=1e-12)


@pytest.mark.parametrize('dist, support, expected', [
    ([0.5, 0.5], [0.0, 400.0], 200.0),
    ([0.25, 0.75], [20.0, 120.0], 95.0),
])
def test_expected_value(dist, support, expected):
    assert expected_value(dist, support) == pytest.approx(expected)


def test_zero_noise_equals_zero_sigma():
    rng = np.random.default_rng(2)
    params = init_params(SMALL, rng)
    states = rng.normal(size=(2, SMALL.state_dim))
    quiet = copy_params(params)
    for key in quiet:
        if key.endswith('_sigma'):
            quiet[key][...] = 0.0
    noise = resample_noise(SMALL, rng)
    assert forward(SMALL, params, zero_noise(), states).q == pytest.approx(
        forward(SMALL, quiet, noise, states).q, abs=1e-15)
    assert noise_magnitude(SMALL, quiet, noise) == 0.0
    assert noise_magnitude(SMALL, params, noise) > 0.0
    assert resample_noise(NetworkSpec(noisy=False), rng) == {}


def test_nonfinite_output_raises():
    params = init_params(SMALL, np.random.default_rng(0))
    params['fc1.b'][0] = np.nan
    with pytest.raises(NumericalFault):
        forward(SMALL, params, zero_noise(), np.ones((1, SMALL.state_dim)))


# ============================================
# ГРАДИЕНТЫ
# ============================================

def test_gradient_check_huber():
    _numeric_check(SMALL, 'huber', seed=10)


def test_gradient_check_cross_entropy():
    _numeric_check(SMALL, 'cross_entropy', seed=11)


def test_gradient_check_scalar_head():
    spec = NetworkSpec(state_dim=4, num_actions=3, hidden=(8, 6), atoms=1, noisy=False)
    _numeric_check(spec, 'huber', seed=12)


def test_gradient_check_plain_head():
    spec = NetworkSpec(state_dim=4, num_actions=3, hidden=(8, 6), atoms=5, v_min=-1.0, v_max=1.0,
                       dueling=False, noisy=False)
    _numeric_check(spec, 'huber', seed=13)


def test_zero_loss_gives_zero_gradients():
    rng = np.random.default_rng(4)
    params = init_params(SMALL, rng)
    noise = resample_noise(SMALL, rng)
    states, actions, _, weights = _batch(SMALL, rng)
    fw = forward(SMALL, params, noise, states)
    targets = fw.probs[np.arange(len(actions)), actions]
    result = gradients(SMALL, params, noise, states, actions, targets, weights)
    assert result.loss == 0.0
    assert result.grad_norm == 0.0


def test_doubling_weights_doubles_grad_norm():
    rng = np.random.default_rng(5)
    params = init_params(SMALL, rng)
    states, actions, targets, weights = _batch(SMALL, rng)
    one = gradients(SMALL, params, {}, states, actions, targets, weights, clip_norm=None)
    two = gradients(SMALL, params, {}, states, actions, targets, 2 * weights, clip_norm=None)
    assert two.grad_norm == pytest.approx(2 * one.grad_norm, rel=1e-12)


def test_gradient_clipping():
    rng = np.random.default_rng(6)
    params = init_params(SMALL, rng)
    states, actions, targets, weights = _batch(SMALL, rng)
    result = gradients(SMALL, params, {}, states, actions, targets, 1e4 * weights, clip_norm=5.0)
    assert result.grad_norm > 5.0
    clipped = np.sqrt(sum(np.sum(g * g) for g in result.grads.values()))
    assert clipped <= 5.0 + 1e-9


# ============================================
# ОПТИМИЗАТОР
# ============================================

def test_adam_keeps_sigma_nonnegative():
    params = init_params(SMALL, np.random.default_rng(7))
    params['value.w_sigma'][...] = 1e-6
    grads = {k: np.ones_like(v) for k, v in params.items()}
    Adam(params, lr=0.1).step(params, grads)
    assert np.all(params['value.w_sigma'] == 0.0)
    assert np.all(params['fc1.w'] < init_params(SMALL, np.random.default_rng(7))['fc1.w'])


@pytest.mark.parametrize('tau', [0.0, 1.0, 0.25])
def test_soft_update(tau):
    online = init_params(SMALL, np.random.default_rng(8))
    target = init_params(SMALL, np.random.default_rng(9))
    expected = {k: (1 - tau) * target[k] + tau * online[k] for k in target}
    soft_update(target, online, tau)
    for key in target:
        assert target[key] == pytest.approx(expected[key], abs=1e-15)
    if tau == 1.0:
        assert all(np.array_equal(target[k], online[k]) for k in target)


def test_noise_resample_breaks_near_ties():
    spec = NetworkSpec(state_dim=2, num_actions=2, hidden=(4,), atoms=1, dueling=False, noisy=True)
    params = init_params(spec, np.random.default_rng(0))
    params['head.w_mu'][...] = 0.0
    params['head.b_mu'][...] = [0.0, 1e-6]
    state = np.ones((1, 2))
    assert int(np.argmax(forward(spec, params, zero_noise(), state).q[0])) == 1
    greedy = {int(np.argmax(forward(spec, params, resample_noise(spec, np.random.default_rng(seed)), state).q[0]))
              for seed in range(50)}
    assert greedy == {0, 1}
