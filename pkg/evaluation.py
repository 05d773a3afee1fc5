#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Оценка политик после обучения, базовый планировщик, проверка
устойчивости к шуму наблюдений и набор абляций.
"""

import math
import logging
import dataclasses
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from artifacts import load_checkpoint
from atlas import (
    from_dimensionless,
    grid_from_config,
    initial_design_from_config,
    optimize_design,
)
from config import ABLATION_FLAGS, ConfigError
from env import PegInHoleEnv, collision_count, energy_proxy, rms_path_error
from net import NetworkSpec, zero_noise
from trainer import run_training, select_action

logger = logging.getLogger(__name__)

METRICS = ('success_rate', 'completion_time_s', 'alignment_error_deg', 'collisions', 'energy', 'rms_error_mm')

# ActionId по оси решётки: (плюс, минус)
AXIS_ACTIONS = ((0, 1), (2, 3), (4, 5))
ROLL_ACTIONS = (6, 7)
PITCH_ACTIONS = (8, 9)
APPROACH_STEPS = 3
SCRIPTED_ACTION = 4


@dataclass(frozen=True)
class EvalProtocol:
    episodes: int = 100
    seeds: tuple = (0, 1, 2, 3, 4)
    noise_sigma: float = 0.0
    policy: str = 'checkpoint'
    checkpoint: Optional[str] = None
    stage: str = 'C0'
    record_trace: bool = False

    def __post_init__(self):
        if self.episodes < 1 or len(self.seeds) < 1:
            raise ValueError("число эпизодов и сидов должно быть >= 1")
        if self.noise_sigma < 0:
            raise ValueError("σ шума не может быть отрицательной")

    @classmethod
    def from_config(cls, cfg, checkpoint: Optional[str] = None):
        return cls(
            episodes=cfg.eval.episodes,
            seeds=tuple(cfg.eval.seeds),
            noise_sigma=cfg.eval.noise_sigma,
            policy=cfg.eval.policy,
            checkpoint=checkpoint,
            stage='C1' if cfg.task.curriculum else 'C0',
        )


class RunningStat:
    """Потоковые среднее и СКО (Велфорд)"""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def push(self, value):
        if value is None:
            return
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (value - self.mean)

    @property
    def std(self) -> float:
        return math.sqrt(self._m2 / self.count) if self.count else 0.0

    def result(self) -> dict:
        if not self.count:
            return {'mean': None, 'std': None, 'n': 0}
        return {'mean': self.mean, 'std': self.std, 'n': self.count}


@dataclass
class MetricsTable:
    episodes: List[dict] = field(default_factory=list)
    per_seed: List[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)


# ============================================
# ПОЛИТИКИ
# ============================================

class CheckpointPolicy:
    """Жадная политика обученной сети без шума"""

    def __init__(self, spec: NetworkSpec, params):
        self.spec = spec
        self.params = params

    def reset(self, env):
        pass

    def act(self, env, obs, mask):
        return select_action(self.spec, self.params, zero_noise(), obs, mask)


class RandomPolicy:
    def __init__(self, rng):
        self.rng = rng

    def reset(self, env):
        pass

    def act(self, env, obs, mask):
        valid = np.flatnonzero(mask)
        if not len(valid):
            return None
        return int(self.rng.choice(valid))


class ScriptedPolicy:
    """Всегда поднимает Delta вверх: после верхней границы каждое действие - нарушение"""

    def reset(self, env):
        pass

    def act(self, env, obs, mask):
        return SCRIPTED_ACTION


def nominal_alignment_tilt(normal, rot_step: float):
    """
    Индексы (roll, pitch), номинально переводящие нормаль отверстия в ẑ:
    R_x(roll)·R_y(pitch)·n = ẑ решается аналитически и округляется до
    решётки. Допустимость позы 3-RRS не проверяется.
    """
    nx, ny, nz = (float(v) for v in normal)
    roll = math.atan2(ny, math.hypot(nx, nz))
    pitch = math.atan2(-nx, nz)
    return int(round(roll / rot_step)), int(round(pitch / rot_step))


def _line_moves(start, goal) -> List[int]:
    """Единичные шаги решётки вдоль отрезка start → goal"""
    delta = np.asarray(goal) - np.asarray(start)
    total = int(np.abs(delta).sum())
    moved = np.zeros(3)
    actions = []
    for i in range(1, total + 1):
        deficit = np.abs(delta) * i / total - moved
        axis = int(np.argmax(deficit))
        moved[axis] += 1
        actions.append(AXIS_ACTIONS[axis][0 if delta[axis] > 0 else 1])
    return actions


def planner_baseline(env) -> List[int]:
    """
    Разомкнутый план на весь эпизод, построенный по начальному состоянию.
    Отверстия обходятся в порядке удалённости от начального кончика штыря
    при исходной позе 3-RRS. Для каждого: отвод вверх (кроме первого),
    номинальный наклон 3-RRS, прямая Delta к точке над вершиной купола и
    вставка вдоль оси. Используется только номинальная раскладка купола:
    фактические позы отверстий, маска и ответы среды не читаются.
    """
    home = env.platform_center(env.rrs_config(np.zeros(3, dtype=np.int64)))
    tip = env.pin_tip()
    order = sorted(env.active, key=lambda h: float(np.linalg.norm(home + env.hole_positions[h] - tip)))

    # совмещённое отверстие при исходной высоте оказывается в вершине купола
    apex = home + np.array([0.0, 0.0, env.task.dome_radius + env.delta.pin_length])
    goal = np.rint((apex - env.anchor) / env.task.delta_step).astype(np.int64)
    above = goal + np.array([0, 0, APPROACH_STEPS])

    actions = []
    delta_k = env.delta_k.copy()
    tilt = (int(env.rrs_k[0]), int(env.rrs_k[1]))
    for i, hole in enumerate(order):
        if i > 0:
            actions += [AXIS_ACTIONS[2][0]] * APPROACH_STEPS
            delta_k = above
        target = nominal_alignment_tilt(env.hole_normals[hole], env.task.rot_step)
        for index, (plus, minus) in ((0, ROLL_ACTIONS), (1, PITCH_ACTIONS)):
            change = target[index] - tilt[index]
            actions += [plus if change > 0 else minus] * abs(change)
        tilt = target
        actions += _line_moves(delta_k, above)
        actions += [AXIS_ACTIONS[2][1]] * APPROACH_STEPS
        delta_k = goal
    return actions


class PlannerPolicy:
    """Исполняет план planner_baseline, построенный один раз при сбросе"""

    def reset(self, env):
        self.plan = deque(planner_baseline(env))

    def act(self, env, obs, mask):
        if not self.plan:
            return None
        return self.plan.popleft()


def load_network(cfg, protocol: EvalProtocol):
    """(spec, params) из чекпоинта протокола; CheckpointError при несовпадении"""
    if protocol.checkpoint is None:
        raise ConfigError("для политики 'checkpoint' нужен путь к чекпоинту", source='--checkpoint')
    return load_checkpoint(protocol.checkpoint, NetworkSpec.from_train(cfg.train))


def make_policy(name: str, network, rng):
    if name == 'checkpoint':
        return CheckpointPolicy(*network)
    if name == 'planner':
        return PlannerPolicy()
    if name == 'random':
        return RandomPolicy(rng)
    if name == 'scripted':
        return ScriptedPolicy()
    raise ValueError(f"неизвестная политика: {name}")


# ============================================
# ОЦЕНКА
# ============================================

def run_episode(env, policy, noise_sigma: float = 0.0, noise_rng=None) -> dict:
    """Один эпизод: шум добавляется только к нормированному наблюдению политики"""
    state = env.reset()
    policy.reset(env)
    mask = env.last_mask
    reward = 0.0
    while not env.done:
        obs = env.normalize_state(state)
        if noise_sigma > 0:
            obs = obs + noise_rng.normal(0.0, noise_sigma, size=obs.shape)
        action = policy.act(env, obs, mask)
        if action is None:
            break
        outcome = env.step(int(action))
        reward += outcome.reward
        state, mask = outcome.state, env.last_mask

    success = len(env.insertions) > 0
    record = {
        'success': success,
        'holes': env.holes_filled,
        'insertions': [int(h) for _, h, _ in env.insertions],
        'completion_time_s': env.insertions[0][0] + env.task.dt if success else None,
        'alignment_error_deg': float(np.mean([e for _, _, e in env.insertions])) if success else None,
        'collisions': collision_count(env.trajectory),
        'energy': energy_proxy(env.trajectory),
        'rms_error_mm': 1000.0 * rms_path_error(env.trajectory),
        'steps': env.steps,
        'reward': reward,
        'violations': env.violations,
        'dead_end': env.dead_end,
    }
    if env.record_trace:
        record['trace'] = list(env.trace)
    return record


def _evaluate_seed(cfg, protocol: EvalProtocol, seed: int, network) -> tuple:
    policy_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    env = PegInHoleEnv(cfg, stage=protocol.stage, seed=seed, record_trace=protocol.record_trace)
    policy = make_policy(protocol.policy, network, np.random.default_rng(policy_seq))
    noise_rng = np.random.default_rng(noise_seq)

    records = []
    stats = {name: RunningStat() for name in METRICS}
    for episode in range(protocol.episodes):
        record = run_episode(env, policy, protocol.noise_sigma, noise_rng)
        record = {'seed': seed, 'episode': episode, **record}
        records.append(record)
        stats['success_rate'].push(100.0 * record['success'])
        for name in METRICS[1:]:
            stats[name].push(record[name])

    row = {'seed': seed}
    for name, stat in stats.items():
        row[name] = stat.result()['mean']
        row[f"{name}_std"] = stat.result()['std']
    return records, row


def evaluate(cfg, protocol: EvalProtocol, network=None, workers: int = 1) -> MetricsTable:
    """
    Жадные прогоны без шума сети по всем сидам протокола. Сиды
    независимы и при workers > 1 идут в отдельных процессах; итог
    собирается в порядке сидов, поэтому от числа процессов не зависит.
    """
    if protocol.policy == 'checkpoint' and network is None:
        network = load_network(cfg, protocol)
    logger.info(f"🚀 Оценка политики '{protocol.policy}': {protocol.episodes} эпизодов × "
                f"{len(protocol.seeds)} сидов, σ = {protocol.noise_sigma}")

    if workers > 1 and len(protocol.seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_evaluate_seed, cfg, protocol, int(s), network) for s in protocol.seeds]
            results = [f.result() for f in futures]
    else:
        results = [_evaluate_seed(cfg, protocol, int(s), network) for s in protocol.seeds]

    table = MetricsTable()
    for records, row in results:
        table.episodes.extend(records)
        table.per_seed.append(row)
        logger.info(f"Сид {row['seed']}: успех {row['success_rate']:.1f}%")

    for name in METRICS:
        stat = RunningStat()
        for row in table.per_seed:
            stat.push(row[name])
        table.aggregate[name] = stat.result()
    logger.info(f"✅ Оценка завершена: успех {table.aggregate['success_rate']['mean']:.1f} ± "
                f"{table.aggregate['success_rate']['std']:.1f}%")
    return table


# ============================================
# АБЛЯЦИИ
# ============================================

def ablation_cells(cfg, optimized_rrs=None, initial_rrs=None) -> List[tuple]:
    """(имя, конфиг) ячеек: полный Rainbow, шесть удалений, ванильный DQN, две геометрии"""
    cells = [('full', cfg)]
    for flag in ABLATION_FLAGS:
        cells.append((f"no_{flag}", cfg.replace(train=cfg.train.without(flag))))
    cells.append(('vanilla', cfg.replace(train=cfg.train.without(*ABLATION_FLAGS))))
    if initial_rrs is not None:
        cells.append(('geometry_initial', cfg.replace(rrs=initial_rrs)))
    if optimized_rrs is not None:
        cells.append(('geometry_optimized', cfg.replace(rrs=optimized_rrs)))
    return cells


def geometry_pair(cfg):
    """Начальная и оптимизированная геометрии 3-RRS для абляции геометрии"""
    initial, distal_ratio = initial_design_from_config(cfg)
    h_min, h_max = cfg.rrs.h_min, cfg.rrs.h_max
    grid = grid_from_config(cfg.eval, cfg.rrs, seed=0)
    result = optimize_design(initial, grid, cfg.eval.sigma_threshold, distal_ratio, h_min, h_max)
    return from_dimensionless(initial, distal_ratio, h_min, h_max), result.geometry


def _run_cell(name, cfg, seed, episodes, stage):
    """Обучение и оценка одной ячейки на одном сиде"""
    cell_cfg = cfg.replace(train=dataclasses.replace(cfg.train, seed=seed))
    trained = run_training(cell_cfg)
    protocol = EvalProtocol(episodes=episodes, seeds=(seed,), policy='checkpoint', stage=stage)
    table = evaluate(cell_cfg, protocol, network=(trained.spec, trained.params))
    return {
        'cell': name,
        'seed': seed,
        'success_rate': table.aggregate['success_rate']['mean'],
        'steps_to_threshold': trained.summary['steps_to_threshold'],
        'violations': trained.summary['violations'],
        'dead_ends': trained.summary['dead_ends'],
    }


def _summarize_cell(name, runs, error=None) -> dict:
    row = {'cell': name, 'error': error}
    for key in ('success_rate', 'steps_to_threshold', 'violations', 'dead_ends'):
        stat = RunningStat()
        for run in runs:
            if run[key] is not None:
                stat.push(float(run[key]))
        result = stat.result()
        row[f"{key}_mean"] = result['mean']
        row[f"{key}_std"] = result['std']
    row['seeds'] = [run['seed'] for run in runs]
    return row


def run_ablation_suite(cfg, cells=None, workers: int = 1) -> List[dict]:
    """
    Каждая ячейка обучается и оценивается на одних и тех же сидах и
    бюджете. Сбой ячейки логируется, а строка таблицы остаётся с пропусками.
    """
    if cells is None:
        initial_rrs, optimized_rrs = geometry_pair(cfg)
        cells = ablation_cells(cfg, optimized_rrs, initial_rrs)
    seeds = [int(s) for s in cfg.eval.seeds]
    stage = 'C1' if cfg.task.curriculum else 'C0'
    jobs = [(name, cell_cfg, seed) for name, cell_cfg in cells for seed in seeds]
    logger.info(f"🚀 Абляции: {len(cells)} ячеек × {len(seeds)} сидов")

    outcomes = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {(name, seed): pool.submit(_run_cell, name, c, seed, cfg.eval.episodes, stage)
                       for name, c, seed in jobs}
            for key, future in futures.items():
                try:
                    outcomes[key] = future.result()
                except Exception as e:
                    outcomes[key] = e
    else:
        for name, c, seed in jobs:
            try:
                outcomes[(name, seed)] = _run_cell(name, c, seed, cfg.eval.episodes, stage)
            except Exception as e:
                outcomes[(name, seed)] = e

    rows = []
    for name, _ in cells:
        runs, errors = [], []
        for seed in seeds:
            outcome = outcomes[(name, seed)]
            if isinstance(outcome, Exception):
                logger.error(f"❌ Ячейка {name}, сид {seed} завершилась ошибкой: {outcome}")
                errors.append(f"seed {seed}: {outcome}")
            else:
                runs.append(outcome)
        rows.append(_summarize_cell(name, runs, '; '.join(errors) or None))
    logger.info("✅ Абляции завершены")
    return rows
