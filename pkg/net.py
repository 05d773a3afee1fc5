#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Q-сеть на numpy: три плотных блока с ReLU, дуэльная распределённая
голова из зашумлённых слоёв, аналитические градиенты и Adam.

Параметры хранятся словарём имя -> массив, порядок ключей фиксирован
спецификацией сети (он же порядок в файле чекпоинта). Веса имеют форму
(fan_in, fan_out), вход - батч строк.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

STATE_DIM = 12
NUM_ACTIONS = 12
HIDDEN = (256, 128, 64)

Params = Dict[str, np.ndarray]
Noise = Dict[str, Tuple[np.ndarray, np.ndarray]]


class NumericalFault(FloatingPointError):
    """Неконечное значение в выходе сети или градиенте"""


@dataclass(frozen=True)
class NetworkSpec:
    state_dim: int = STATE_DIM
    num_actions: int = NUM_ACTIONS
    hidden: tuple = HIDDEN
    atoms: int = 51
    v_min: float = -10.0
    v_max: float = 200.0
    dueling: bool = True
    noisy: bool = True

    @classmethod
    def from_train(cls, train):
        return cls(atoms=train.num_atoms, v_min=train.v_min, v_max=train.v_max,
                   dueling=train.dueling, noisy=train.noisy)

    @property
    def distributional(self) -> bool:
        return self.atoms > 1

    @property
    def support(self) -> np.ndarray:
        return np.linspace(self.v_min, self.v_max, self.atoms)

    def trunk_layers(self):
        sizes = (self.state_dim,) + tuple(self.hidden)
        return [(f'fc{i + 1}', sizes[i], sizes[i + 1]) for i in range(len(self.hidden))]

    def head_layers(self):
        feat = self.hidden[-1]
        if self.dueling:
            return [('value', feat, self.atoms), ('advantage', feat, self.num_actions * self.atoms)]
        return [('head', feat, self.num_actions * self.atoms)]

    def shapes(self):
        """Манифест параметров: [(имя, форма), ...] в фиксированном порядке"""
        out = []
        for name, fan_in, fan_out in self.trunk_layers():
            out += [(f'{name}.w', (fan_in, fan_out)), (f'{name}.b', (fan_out,))]
        for name, fan_in, fan_out in self.head_layers():
            if self.noisy:
                out += [(f'{name}.w_mu', (fan_in, fan_out)), (f'{name}.w_sigma', (fan_in, fan_out)),
                        (f'{name}.b_mu', (fan_out,)), (f'{name}.b_sigma', (fan_out,))]
            else:
                out += [(f'{name}.w', (fan_in, fan_out)), (f'{name}.b', (fan_out,))]
        return out


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> Params:
    """μ ~ U(±1/√fan_in), σ = 0.5/√fan_in для зашумлённых слоёв"""
    params = {}
    fan_in_of = {}
    for name, fan_in, _ in spec.trunk_layers() + spec.head_layers():
        fan_in_of[name] = fan_in
    for key, shape in spec.shapes():
        layer, kind = key.split('.')
        bound = 1.0 / np.sqrt(fan_in_of[layer])
        if kind.endswith('sigma'):
            params[key] = np.full(shape, 0.5 * bound)
        else:
            params[key] = rng.uniform(-bound, bound, size=shape)
    return params


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


def param_count(spec: NetworkSpec) -> int:
    return int(sum(np.prod(shape) for _, shape in spec.shapes()))


# ============================================
# ШУМ
# ============================================

def _scale_noise(x):
    return np.sign(x) * np.sqrt(np.abs(x))


def resample_noise(spec: NetworkSpec, rng: np.random.Generator) -> Noise:
    """Свежий факторизованный гауссов шум для каждого зашумлённого слоя"""
    if not spec.noisy:
        return {}
    return {
        name: (_scale_noise(rng.standard_normal(fan_in)), _scale_noise(rng.standard_normal(fan_out)))
        for name, fan_in, fan_out in spec.head_layers()
    }


def zero_noise() -> Noise:
    """Режим без шума: σ-слагаемые опускаются"""
    return {}


def noise_magnitude(spec: NetworkSpec, params: Params, noise: Noise) -> float:
    """‖σ⊙ε‖ по всем зашумлённым слоям"""
    total = 0.0
    for name, _, _ in spec.head_layers():
        if name not in noise:
            continue
        eps_in, eps_out = noise[name]
        total += float(np.sum((params[f'{name}.w_sigma'] * np.outer(eps_in, eps_out)) ** 2))
        total += float(np.sum((params[f'{name}.b_sigma'] * eps_out) ** 2))
    return float(np.sqrt(total))


def _effective(spec, params, noise, name):
    if not spec.noisy:
        return params[f'{name}.w'], params[f'{name}.b']
    w, b = params[f'{name}.w_mu'], params[f'{name}.b_mu']
    if name in noise:
        eps_in, eps_out = noise[name]
        w = w + params[f'{name}.w_sigma'] * np.outer(eps_in, eps_out)
        b = b + params[f'{name}.b_sigma'] * eps_out
    return w, b


# ============================================
# ПРЯМОЙ ПРОХОД
# ============================================

@dataclass
class Forward:
    logits: np.ndarray          # (B, A, K)
    probs: Optional[np.ndarray]  # (B, A, K), None для скалярной головы
    q: np.ndarray               # (B, A)
    cache: dict


def softmax(logits, axis=-1):
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def forward(spec: NetworkSpec, params: Params, noise: Noise, states) -> Forward:
    x = np.atleast_2d(np.asarray(states, dtype=float))
    batch = x.shape[0]
    trunk = []
    h = x
    for name, _, _ in spec.trunk_layers():
        z = h @ params[f'{name}.w'] + params[f'{name}.b']
        trunk.append((h, z))
        h = np.maximum(z, 0.0)
    feat = h

    heads = {}
    for name, _, _ in spec.head_layers():
        w, b = _effective(spec, params, noise, name)
        heads[name] = (w, feat @ w + b)

    shape = (batch, spec.num_actions, spec.atoms)
    if spec.dueling:
        value = heads['value'][1]
        adv = heads['advantage'][1].reshape(shape)
        logits = value[:, None, :] + adv - adv.mean(axis=1, keepdims=True)
    else:
        logits = heads['head'][1].reshape(shape)

    if spec.distributional:
        probs = softmax(logits)
        q = probs @ spec.support
    else:
        probs = None
        q = logits[..., 0]

    if not np.all(np.isfinite(q)):
        raise NumericalFault("неконечный выход сети")
    return Forward(logits, probs, q, {'trunk': trunk, 'feat': feat, 'heads': heads})


def expected_value(distribution, support) -> np.ndarray:
    return np.asarray(distribution) @ np.asarray(support)


# ============================================
# ПОТЕРИ И ГРАДИЕНТЫ
# ============================================

def _huber(x):
    a = np.abs(x)
    return np.where(a <= 1.0, 0.5 * x * x, a - 0.5)


def _loss_terms(spec, fw, actions, targets, loss, projection):
    """
    Поэлементные потери и их производные по логитам выбранного действия.

    targets - спроецированные целевые распределения (B, K) либо скалярные
    цели (B,). projection (B, K, K), если задан, проецирует предсказание
    на сдвинутую сетку целей перед сравнением.
    """
    rows = np.arange(len(actions))
    if not spec.distributional:
        diff = fw.q[rows, actions] - targets
        return _huber(diff), np.clip(diff, -1.0, 1.0)[:, None]

    logits = fw.logits[rows, actions]
    p = fw.probs[rows, actions]
    if loss == 'cross_entropy':
        per_sample = -(targets * log_softmax(logits)).sum(axis=1)
        return per_sample, p - targets

    pred = p if projection is None else np.einsum('bj,bjk->bk', p, projection)
    diff = pred - targets
    per_sample = _huber(diff).sum(axis=1)
    grad = np.clip(diff, -1.0, 1.0)
    if projection is not None:
        grad = np.einsum('bk,bjk->bj', grad, projection)
    # якобиан softmax
    dlogits = p * (grad - (p * grad).sum(axis=1, keepdims=True))
    return per_sample, dlogits


def batch_loss(spec, params, noise, states, actions, targets, weights, loss='huber', projection=None) -> float:
    """Взвешенная средняя потеря батча (для проверки градиентов)"""
    fw = forward(spec, params, noise, states)
    per_sample, _ = _loss_terms(spec, fw, np.asarray(actions), np.asarray(targets), loss, projection)
    return float(np.mean(np.asarray(weights) * per_sample))


@dataclass
class GradientResult:
    grads: Params
    per_sample: np.ndarray
    loss: float
    grad_norm: float
    q_taken: np.ndarray
    max_q: float


def gradients(spec: NetworkSpec, params: Params, noise: Noise, states, actions, targets, weights,
              loss: str = 'huber', projection=None, clip_norm: Optional[float] = 5.0) -> GradientResult:
    """
    Аналитические градиенты взвешенной потери по всем параметрам.
    Норма градиента считается по всему набору и обрезается до clip_norm
    (None - без обрезки). grad_norm в результате - норма до обрезки.
    """
    actions = np.asarray(actions)
    weights = np.asarray(weights, dtype=float)
    fw = forward(spec, params, noise, states)
    batch = len(actions)
    rows = np.arange(batch)

    per_sample, dlogits = _loss_terms(spec, fw, actions, np.asarray(targets), loss, projection)
    dlogits = dlogits * (weights / batch)[:, None]

    g_out = np.zeros_like(fw.logits)
    g_out[rows, actions] = dlogits

    grads = {}
    feat = fw.cache['feat']
    if spec.dueling:
        d_heads = {
            'value': g_out.sum(axis=1),
            'advantage': (g_out - g_out.mean(axis=1, keepdims=True)).reshape(batch, -1),
        }
    else:
        d_heads = {'head': g_out.reshape(batch, -1)}

    d_feat = np.zeros_like(feat)
    for name, _, _ in spec.head_layers():
        w_eff, _ = fw.cache['heads'][name]
        d_out = d_heads[name]
        d_w = feat.T @ d_out
        d_b = d_out.sum(axis=0)
        d_feat += d_out @ w_eff.T
        if spec.noisy:
            grads[f'{name}.w_mu'] = d_w
            grads[f'{name}.b_mu'] = d_b
            if name in noise:
                eps_in, eps_out = noise[name]
                grads[f'{name}.w_sigma'] = d_w * np.outer(eps_in, eps_out)
                grads[f'{name}.b_sigma'] = d_b * eps_out
            else:
                grads[f'{name}.w_sigma'] = np.zeros_like(d_w)
                grads[f'{name}.b_sigma'] = np.zeros_like(d_b)
        else:
            grads[f'{name}.w'] = d_w
            grads[f'{name}.b'] = d_b

    d_h = d_feat
    for (name, _, _), (h_in, z) in reversed(list(zip(spec.trunk_layers(), fw.cache['trunk']))):
        d_z = d_h * (z > 0)
        grads[f'{name}.w'] = h_in.T @ d_z
        grads[f'{name}.b'] = d_z.sum(axis=0)
        d_h = d_z @ params[f'{name}.w'].T

    grads = {key: grads[key] for key, _ in spec.shapes()}
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if not np.isfinite(norm):
        raise NumericalFault("неконечный градиент")
    if clip_norm is not None and norm > clip_norm:
        scale = clip_norm / norm
        grads = {k: g * scale for k, g in grads.items()}

    return GradientResult(
        grads=grads,
        per_sample=per_sample,
        loss=float(np.mean(weights * per_sample)),
        grad_norm=norm,
        q_taken=fw.q[rows, actions],
        max_q=float(fw.q.max(axis=1).mean()),
    )


class Adam:
    """Adam с L2-регуляризацией в градиенте; σ после шага обрезаются снизу нулём"""

    def __init__(self, params: Params, lr: float, weight_decay: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Params, grads: Params):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for key, grad in grads.items():
            g = grad + self.weight_decay * params[key]
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            params[key] -= self.lr * (self.m[key] / c1) / (np.sqrt(self.v[key] / c2) + self.eps)
            if key.endswith('_sigma'):
                np.maximum(params[key], 0.0, out=params[key])


def soft_update(target: Params, online: Params, tau: float):
    """θ⁻ ← (1−τ)θ⁻ + τθ"""
    for key in target:
        target[key] = (1.0 - tau) * target[key] + tau * online[key]
