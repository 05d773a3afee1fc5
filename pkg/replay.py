#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Приоритетный буфер опыта (sum-tree) и очередь n-шаговых переходов
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import List

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class RawTransition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    next_mask: np.ndarray
    done: bool


@dataclass
class NStepTransition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    next_mask: np.ndarray
    done: bool
    horizon: int


class NStepQueue:
    """
    Очередь из не более чем n сырых переходов.

    Как только очередь прогрета, на каждый сырой шаг выдаётся ровно один
    n-шаговый переход. В конце эпизода очередь сбрасывается целиком:
    хвостовые переходы получают укороченный горизонт.
    """

    def __init__(self, n: int, gamma: float):
        if n < 1:
            raise ValueError("n должен быть >= 1")
        self.n = n
        self.gamma = gamma
        self.queue = deque()

    def __len__(self):
        return len(self.queue)

    def _emit(self) -> NStepTransition:
        first, last = self.queue[0], self.queue[-1]
        reward = 0.0
        for i, raw in enumerate(self.queue):
            reward += (self.gamma ** i) * raw.reward
        self.queue.popleft()
        return NStepTransition(
            state=first.state,
            action=first.action,
            reward=reward,
            next_state=last.next_state,
            next_mask=last.next_mask,
            done=last.done,
            horizon=len(self.queue) + 1,
        )

    def push_raw(self, transition: RawTransition) -> List[NStepTransition]:
        self.queue.append(transition)
        emitted = []
        if len(self.queue) == self.n:
            emitted.append(self._emit())
        if transition.done:
            while self.queue:
                emitted.append(self._emit())
        return emitted

    def reset(self):
        """Отбрасывает незавершённые переходы (обрыв эпизода по бюджету)"""
        self.queue.clear()


class SumTree:
    """
    Дерево сумм в виде массива: узел i имеет детей 2i и 2i+1, корень в 1,
    листья занимают [capacity, 2·capacity). Ёмкость округляется вверх до
    степени двойки; лишние листья всегда нулевые.
    """

    def __init__(self, size: int):
        capacity = 1
        while capacity < size:
            capacity *= 2
        self.size = size
        self.capacity = capacity
        self.nodes = np.zeros(2 * capacity)

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    def leaf(self, data_idx):
        return self.nodes[np.asarray(data_idx) + self.capacity]

    def update(self, data_idx: int, value: float):
        idx = int(data_idx) + self.capacity
        self.nodes[idx] = value
        idx //= 2
        # родитель всегда пересчитывается как сумма детей: без накопления ошибки
        while idx >= 1:
            self.nodes[idx] = self.nodes[2 * idx] + self.nodes[2 * idx + 1]
            idx //= 2

    def find(self, cumsum) -> np.ndarray:
        """Спуск от корня для массива префиксных сумм"""
        cumsum = np.minimum(np.asarray(cumsum, dtype=float), self.total)
        idx = np.ones(cumsum.shape, dtype=np.int64)
        while idx[0] < self.capacity:
            left = 2 * idx
            left_sum = self.nodes[left]
            go_left = cumsum < left_sum
            cumsum = np.where(go_left, cumsum, cumsum - left_sum)
            idx = np.where(go_left, left, left + 1)
        return np.minimum(idx - self.capacity, self.size - 1)


class PrioritizedBuffer:
    """Буфер с пропорциональной приоритизацией и FIFO-вытеснением"""

    def __init__(self, capacity: int, alpha: float = 0.6, eps: float = 1e-3):
        self.capacity = capacity
        self.alpha = alpha
        self.eps = eps
        self.tree = SumTree(capacity)
        self.max_priority = 1.0
        self.pointer = 0
        self.count = 0
        self._storage = None
        self._allocated = 0

    def __len__(self):
        return self.count

    def _reserve(self, state_dim, action_dim):
        """Хранилище растёт удвоением до ёмкости буфера"""
        needed = min(self.capacity, max(1024, 2 * self._allocated))
        if self._storage is None:
            self._storage = {
                'state': np.zeros((needed, state_dim)),
                'action': np.zeros(needed, dtype=np.int64),
                'reward': np.zeros(needed),
                'next_state': np.zeros((needed, state_dim)),
                'next_mask': np.zeros((needed, action_dim), dtype=bool),
                'done': np.zeros(needed, dtype=bool),
                'horizon': np.zeros(needed, dtype=np.int64),
            }
        else:
            for key, array in self._storage.items():
                grown = np.zeros((needed,) + array.shape[1:], dtype=array.dtype)
                grown[:self._allocated] = array
                self._storage[key] = grown
        self._allocated = needed

    def insert(self, transition: NStepTransition, priority=None):
        if self._storage is None or (self.pointer >= self._allocated and self._allocated < self.capacity):
            self._reserve(len(transition.state), len(transition.next_mask))
        i = self.pointer
        self._storage['state'][i] = transition.state
        self._storage['action'][i] = transition.action
        self._storage['reward'][i] = transition.reward
        self._storage['next_state'][i] = transition.next_state
        self._storage['next_mask'][i] = transition.next_mask
        self._storage['done'][i] = transition.done
        self._storage['horizon'][i] = transition.horizon

        # новые переходы входят с текущим максимальным приоритетом
        p = self.max_priority if priority is None else priority
        self.tree.update(i, p ** self.alpha)
        self.pointer = (self.pointer + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def probabilities(self, indices) -> np.ndarray:
        return self.tree.leaf(indices) / self.tree.total

    def sample(self, batch_size: int, beta: float, rng: np.random.Generator):
        """
        Стратифицированная выборка: [0, total) делится на batch_size
        равных отрезков, из каждого берётся одна точка.

        Возвращает (indices, batch, weights); веса нормированы на максимум
        в батче и лежат в (0, 1].
        """
        if self.count == 0:
            raise RuntimeError("выборка из пустого буфера")
        segment = self.tree.total / batch_size
        points = (np.arange(batch_size) + rng.random(batch_size)) * segment
        indices = self.tree.find(points)

        probs = self.probabilities(indices)
        weights = (self.count * probs) ** (-beta)
        weights = weights / weights.max()

        batch = {key: array[indices] for key, array in self._storage.items()}
        return indices, batch, weights

    def update_priorities(self, indices, td_errors):
        priorities = np.abs(np.asarray(td_errors, dtype=float)) + self.eps
        for idx, p in zip(indices, priorities):
            self.tree.update(int(idx), p ** self.alpha)
        # глобальный максимум, вытеснение его не уменьшает
        self.max_priority = max(self.max_priority, float(priorities.max()))
