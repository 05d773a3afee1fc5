#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Цикл обучения Rainbow: выбор действия с маской, распределённые цели
double-DQN, шаг Adam, приоритеты, мягкое обновление целевой сети,
расписания и учебный план (curriculum).
"""

import os
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from artifacts import append_jsonl, checkpoint_path, save_checkpoint, write_json
from env import PegInHoleEnv, curriculum_update
from net import (
    Adam,
    NetworkSpec,
    NumericalFault,
    copy_params,
    forward,
    gradients,
    init_params,
    noise_magnitude,
    resample_noise,
    soft_update,
    zero_noise,
)
from replay import NStepQueue, PrioritizedBuffer, RawTransition

logger = logging.getLogger(__name__)


# ============================================
# ВЫБОР ДЕЙСТВИЯ
# ============================================

def masked_argmax(q, mask) -> np.ndarray:
    """argmax по строкам; недопустимые действия получают −∞, ничьи - меньший индекс"""
    q = np.atleast_2d(q)
    mask = np.atleast_2d(mask)
    return np.argmax(np.where(mask, q, -np.inf), axis=1)


def select_action(spec: NetworkSpec, params, noise, state, mask) -> int:
    q = forward(spec, params, noise, state).q
    return int(masked_argmax(q, mask)[0])


# ============================================
# ЦЕЛИ
# ============================================

def projection_matrix(values, lo, hi, atoms: int) -> np.ndarray:
    """
    Веса распределения масс из точек values (B, S) на равномерную сетку
    из atoms узлов на [lo, hi] (по строке). Результат (B, S, atoms):
    масса точки делится между двумя соседними узлами пропорционально
    близости, точки вне сетки прижимаются к краям.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    batch, sources = values.shape
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (batch,))[:, None]
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (batch,))[:, None]
    spacing = (hi - lo) / (atoms - 1)

    b = (np.clip(values, lo, hi) - lo) / spacing
    lower = np.floor(b).astype(np.int64)
    upper = np.ceil(b).astype(np.int64)
    lower = np.clip(lower, 0, atoms - 1)
    upper = np.clip(upper, 0, atoms - 1)
    same = lower == upper

    weights = np.zeros((batch, sources, atoms))
    bi, si = np.meshgrid(np.arange(batch), np.arange(sources), indexing='ij')
    np.add.at(weights, (bi, si, lower), np.where(same, 1.0, upper - b))
    np.add.at(weights, (bi, si, upper), np.where(same, 0.0, b - lower))
    return weights


def project_distribution(probs, rewards, dones, discounts, support) -> np.ndarray:
    """Категориальная проекция r̃ + (1−d̃)·γᵏ·z на опору"""
    support = np.asarray(support, dtype=float)
    probs = np.atleast_2d(probs)
    scale = ((1.0 - np.asarray(dones, dtype=float)) * np.asarray(discounts, dtype=float))[:, None]
    shifted = np.asarray(rewards, dtype=float)[:, None] + scale * support[None, :]
    weights = projection_matrix(shifted, support[0], support[-1], len(support))
    return np.einsum('bj,bjk->bk', probs, weights)


@dataclass
class TargetBatch:
    targets: np.ndarray
    expected: np.ndarray
    next_actions: np.ndarray
    projection: Optional[np.ndarray] = None


def build_target(spec: NetworkSpec, online, target, batch, gamma: float, double: bool = True,
                 loss: str = 'huber') -> TargetBatch:
    """
    Цели для батча n-шаговых переходов. Действие в s′ выбирает онлайн-сеть
    без шума (или целевая при double=False), оценивает целевая сеть.
    """
    next_states = batch['next_state']
    rewards = np.asarray(batch['reward'], dtype=float)
    dones = np.asarray(batch['done'], dtype=float)
    discounts = gamma ** np.asarray(batch['horizon'], dtype=float)
    rows = np.arange(len(rewards))

    target_out = forward(spec, target, zero_noise(), next_states)
    selector = forward(spec, online, zero_noise(), next_states) if double else target_out
    # пустая маска бывает только у терминальных переходов, там выбор не важен
    next_actions = masked_argmax(selector.q, batch['next_mask'])

    if not spec.distributional:
        y = rewards + (1.0 - dones) * discounts * target_out.q[rows, next_actions]
        return TargetBatch(y, y, next_actions)

    support = spec.support
    next_probs = target_out.probs[rows, next_actions]
    projected = project_distribution(next_probs, rewards, dones, discounts, support)
    expected = projected @ support
    if loss != 'huber_pred_proj':
        return TargetBatch(projected, expected, next_actions)

    # проекция предсказания на сдвинутую сетку цели; при вырожденной сетке - обычная цель
    scale = (1.0 - dones) * discounts
    lo = rewards + scale * support[0]
    hi = rewards + scale * support[-1]
    degenerate = scale <= 0.0
    safe_hi = np.where(degenerate, lo + 1.0, hi)
    pred_projection = projection_matrix(np.broadcast_to(support, (len(rewards), spec.atoms)),
                                        lo, safe_hi, spec.atoms)
    pred_projection[degenerate] = np.eye(spec.atoms)
    targets = np.where(degenerate[:, None], projected, next_probs)
    return TargetBatch(targets, expected, next_actions, pred_projection)


# ============================================
# АГЕНТ
# ============================================

@dataclass
class TrainDiagnostics:
    loss: float
    max_q: float
    grad_norm: float
    td_errors: np.ndarray


class RainbowAgent:
    """Онлайн- и целевая сети, оптимизатор, буфер и генераторы случайных чисел"""

    def __init__(self, train):
        self.cfg = train
        self.spec = NetworkSpec.from_train(train)
        seeds = np.random.SeedSequence(train.seed).spawn(5)
        self.params = init_params(self.spec, np.random.default_rng(seeds[0]))
        self.target_params = copy_params(self.params)
        self.noise_rng = np.random.default_rng(seeds[1])
        self.replay_rng = np.random.default_rng(seeds[2])
        self.explore_rng = np.random.default_rng(seeds[3])
        self.env_seed = int(seeds[4].generate_state(1)[0])

        self.optimizer = Adam(self.params, train.lr, train.weight_decay)
        self.buffer = PrioritizedBuffer(train.buffer_capacity, train.priority_exponent, train.per_eps)
        self.nstep = NStepQueue(train.horizon, train.gamma)
        self.lr = train.lr
        self.total_steps = 0
        self.train_steps = 0

    @property
    def beta(self) -> float:
        """Линейный отжиг β по бюджету шагов среды"""
        total = max(1, self.cfg.total_steps)
        frac = min(1.0, self.total_steps / total)
        return self.cfg.beta_start + frac * (self.cfg.beta_end - self.cfg.beta_start)

    @property
    def epsilon(self) -> float:
        """ε-жадное исследование есть только у ванильного DQN"""
        if not self.cfg.vanilla:
            return 0.0
        frac = min(1.0, self.total_steps / self.cfg.eps_decay_steps)
        return self.cfg.eps_start + frac * (self.cfg.eps_end - self.cfg.eps_start)

    def act(self, state, mask):
        """Возвращает (действие, ‖σ⊙ε‖ шума действия)"""
        if self.cfg.noisy:
            noise = resample_noise(self.spec, self.noise_rng)
            magnitude = noise_magnitude(self.spec, self.params, noise)
        else:
            noise, magnitude = zero_noise(), 0.0
            if self.cfg.vanilla and self.explore_rng.random() < self.epsilon:
                valid = np.flatnonzero(mask)
                return int(self.explore_rng.choice(valid)), magnitude
        return select_action(self.spec, self.params, noise, state, mask), magnitude

    def observe(self, state, action, reward, next_state, next_mask, done):
        raw = RawTransition(state, action, reward, next_state, next_mask, done)
        for transition in self.nstep.push_raw(raw):
            self.buffer.insert(transition)

    def ready(self) -> bool:
        return len(self.buffer) >= max(self.cfg.warmup, self.cfg.batch_size)

    def train_step(self) -> TrainDiagnostics:
        cfg = self.cfg
        indices, batch, weights = self.buffer.sample(cfg.batch_size, self.beta, self.replay_rng)
        targets = build_target(self.spec, self.params, self.target_params, batch, cfg.gamma,
                               cfg.double, cfg.loss)

        noise = resample_noise(self.spec, self.noise_rng)
        loss = 'cross_entropy' if cfg.loss == 'cross_entropy' else 'huber'
        result = gradients(self.spec, self.params, noise, batch['state'], batch['action'],
                           targets.targets, weights, loss=loss, projection=targets.projection,
                           clip_norm=cfg.grad_clip)
        if not np.isfinite(result.loss):
            raise NumericalFault("неконечная потеря")

        self.optimizer.lr = self.lr
        self.optimizer.step(self.params, result.grads)
        td_errors = result.q_taken - targets.expected
        if cfg.per:
            self.buffer.update_priorities(indices, td_errors)
        soft_update(self.target_params, self.params, cfg.tau)
        self.train_steps += 1
        return TrainDiagnostics(result.loss, result.max_q, result.grad_norm, td_errors)

    def decay_lr(self):
        self.lr = max(self.cfg.lr_min, self.lr * self.cfg.lr_decay)


# ============================================
# ПОЛНЫЙ ЦИКЛ
# ============================================

@dataclass
class TrainingResult:
    spec: NetworkSpec
    params: dict
    episodes: List[dict] = field(default_factory=list)
    diagnostics: List[tuple] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def steps_to_threshold(episodes, window: int = 20, threshold: float = 0.75) -> Optional[int]:
    """Шаг среды, на котором скользящая доля успехов впервые превысила порог"""
    successes = []
    for record in episodes:
        successes.append(bool(record['success']))
        if len(successes) >= window and sum(successes[-window:]) / window > threshold:
            return int(record['total_steps'])
    return None


def _mean(values):
    return float(np.mean(values)) if values else None


def _dump_fault(out_dir, agent, episode, error, cfg):
    if not out_dir:
        return
    try:
        write_json(os.path.join(out_dir, 'fault_dump.json'), {
            'error': str(error),
            'episode': episode,
            'total_steps': agent.total_steps,
            'train_steps': agent.train_steps,
            'lr': agent.lr,
            'config_hash': cfg.config_hash(),
            'param_norms': {k: float(np.linalg.norm(v)) for k, v in agent.params.items()},
        })
    except Exception as e:
        logger.error(f"Не удалось записать fault_dump.json: {e}")


def run_training(cfg, out_dir: Optional[str] = None, env: Optional[PegInHoleEnv] = None) -> TrainingResult:
    """
    Эпизоды до исчерпания бюджета шагов. Пишет episodes.jsonl,
    чекпоинты и train_summary.json в out_dir, если он задан.
    """
    train, task = cfg.train, cfg.task
    agent = RainbowAgent(train)
    env = env or PegInHoleEnv(cfg, stage='C0', seed=agent.env_seed)
    result = TrainingResult(agent.spec, agent.params)

    episodes_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        episodes_path = os.path.join(out_dir, 'episodes.jsonl')
        open(episodes_path, 'w').close()

    logger.info(f"🚀 Обучение: бюджет {train.total_steps} шагов, seed {train.seed}, "
                f"компоненты: {', '.join(f for f in ('double', 'dueling', 'per', 'nstep', 'noisy', 'distributional') if getattr(train, f)) or 'нет'}")

    history = []
    episode = 0
    while agent.total_steps < train.total_steps:
        state = env.reset()
        obs = env.normalize_state(state)
        mask = env.last_mask
        total_reward = 0.0
        losses, max_qs, noise_mags = [], [], []
        outcome = None
        while True:
            action, magnitude = agent.act(obs, mask)
            noise_mags.append(magnitude)
            outcome = env.step(action)
            next_obs = env.normalize_state(outcome.state)
            next_mask = env.last_mask
            agent.observe(obs, action, outcome.reward, next_obs, next_mask, outcome.done)
            agent.total_steps += 1
            total_reward += outcome.reward

            if agent.ready():
                try:
                    diag = agent.train_step()
                except NumericalFault as e:
                    logger.error(f"❌ Неконечные значения при обучении на шаге {agent.total_steps}: {e}")
                    _dump_fault(out_dir, agent, episode, e, cfg)
                    raise
                losses.append(diag.loss)
                max_qs.append(diag.max_q)
                result.diagnostics.append((diag.loss, diag.max_q, diag.grad_norm))

            if out_dir and train.checkpoint_every and agent.total_steps % train.checkpoint_every == 0:
                path = checkpoint_path(out_dir, f"{agent.total_steps:07d}")
                save_checkpoint(path, agent.spec, agent.params)
                logger.info(f"Чекпоинт сохранён: {path}")

            obs, mask = next_obs, next_mask
            if outcome.done or agent.total_steps >= train.total_steps:
                break

        truncated = not outcome.done
        if truncated:
            agent.nstep.reset()
        success = len(env.insertions) > 0
        record = {
            'episode': episode,
            'steps': env.steps,
            'total_steps': agent.total_steps,
            'reward': total_reward,
            'duration_s': env.steps * task.dt,
            'holes': env.holes_filled,
            'success': success,
            'violations': env.violations,
            'dead_end': env.dead_end,
            'stage': env.stage,
            'loss': _mean(losses),
            'max_q': _mean(max_qs),
            'lr': agent.lr,
            'noise_mag': _mean(noise_mags),
            'epsilon': agent.epsilon,
            'truncated': truncated,
        }
        result.episodes.append(record)
        if episodes_path:
            append_jsonl(episodes_path, record)
        logger.debug(f"Эпизод {episode}: награда {total_reward:.2f}, отверстий {env.holes_filled}")

        history.append(success)
        if task.curriculum:
            stage = curriculum_update(history, env.stage, task.curriculum_window, task.curriculum_threshold)
            if stage != env.stage:
                logger.info(f"📈 Учебный план: переход {env.stage} → {stage} после эпизода {episode}")
                env.set_stage(stage)
        agent.decay_lr()

        episode += 1
        if episode % train.log_every == 0:
            recent = result.episodes[-train.log_every:]
            logger.info(
                f"Эпизоды {episode - len(recent)}–{episode - 1}: средняя награда "
                f"{np.mean([r['reward'] for r in recent]):.2f}, успех "
                f"{100 * np.mean([r['success'] for r in recent]):.0f}%, шагов {agent.total_steps}"
            )

    window = result.episodes[-task.curriculum_window:]
    result.summary = {
        'total_steps': agent.total_steps,
        'train_steps': agent.train_steps,
        'episodes': len(result.episodes),
        'final_stage': env.stage,
        'final_lr': agent.lr,
        'success_rate_recent': _mean([float(r['success']) for r in window]),
        'mean_reward': _mean([r['reward'] for r in result.episodes]),
        'violations': int(sum(r['violations'] for r in result.episodes)),
        'dead_ends': int(sum(r['dead_end'] for r in result.episodes)),
        'steps_to_threshold': steps_to_threshold(result.episodes, task.curriculum_window,
                                                 task.curriculum_threshold),
        'config_hash': cfg.config_hash(),
    }
    if out_dir:
        path = checkpoint_path(out_dir, 'final')
        save_checkpoint(path, agent.spec, agent.params)
        logger.info(f"Чекпоинт сохранён: {path}")
        write_json(os.path.join(out_dir, 'train_summary.json'), result.summary)
    logger.info(f"✅ Обучение завершено: {len(result.episodes)} эпизодов, {agent.total_steps} шагов")
    return result
