#!/usr/bin/env python
# -*- coding: utf-8 -*-

import numpy as np
import pytest
from scipy import stats

from replay import NStepQueue, NStepTransition, PrioritizedBuffer, RawTransition, SumTree


def _raw(reward, done=False, tag=0):
    return RawTransition(state=np.full(2, tag, dtype=float), action=tag, reward=reward,
                         next_state=np.full(2, tag + 1, dtype=float), next_mask=np.ones(3, dtype=bool),
                         done=done)


def _transition(action=0):
    return NStepTransition(state=np.zeros(3), action=action, reward=0.0, next_state=np.zeros(3),
                           next_mask=np.ones(2, dtype=bool), done=False, horizon=1)


def _filled(priorities, alpha=1.0):
    buffer = PrioritizedBuffer(len(priorities), alpha=alpha)
    for k, p in enumerate(priorities):
        buffer.insert(_transition(k), priority=p)
    return buffer


# ============================================
# N-ШАГОВАЯ ОЧЕРЕДЬ
# ============================================

def test_nstep_return_of_three_unit_rewards():
    queue = NStepQueue(3, 0.99)
    assert queue.push_raw(_raw(1.0, tag=0)) == []
    assert queue.push_raw(_raw(1.0, tag=1)) == []
    out = queue.push_raw(_raw(1.0, tag=2))
    assert len(out) == 1
    assert out[0].reward == pytest.approx(2.9701, abs=1e-12)
    assert out[0].horizon == 3
    assert out[0].action == 0
    assert out[0].next_state == pytest.approx(np.full(2, 3.0))
    assert not out[0].done


def test_nstep_flushes_tail_on_episode_end():
    queue = NStepQueue(3, 0.5)
    for k in range(3):
        queue.push_raw(_raw(1.0, tag=k))
    out = queue.push_raw(_raw(2.0, done=True, tag=3))
    assert [t.horizon for t in out] == [3, 2, 1]
    assert all(t.done for t in out)
    assert [t.action for t in out] == [1, 2, 3]
    assert out[0].reward == pytest.approx(1.0 + 0.5 + 0.25 * 2.0)
    assert out[-1].reward == pytest.approx(2.0)
    assert len(queue) == 0


def test_nstep_matches_brute_force():
    rng = np.random.default_rng(4)
    gamma, n = 0.9, 4
    rewards = rng.normal(size=11)
    queue = NStepQueue(n, gamma)
    out = []
    for t, r in enumerate(rewards):
        out += queue.push_raw(_raw(float(r), done=t == len(rewards) - 1, tag=t))
    assert len(out) == len(rewards)
    for i, transition in enumerate(out):
        h = min(n, len(rewards) - i)
        expected = sum(gamma ** k * rewards[i + k] for k in range(h))
        assert transition.horizon == h
        assert transition.reward == pytest.approx(expected, abs=1e-12)


def test_single_step_queue_passes_through():
    queue = NStepQueue(1, 0.99)
    out = queue.push_raw(_raw(-3.0, tag=5))
    assert len(out) == 1
    assert out[0].reward == -3.0 and out[0].horizon == 1


def test_queue_reset_drops_pending():
    queue = NStepQueue(3, 0.99)
    queue.push_raw(_raw(1.0))
    queue.push_raw(_raw(1.0))
    queue.reset()
    assert len(queue) == 0
    with pytest.raises(ValueError):
        NStepQueue(0, 0.99)


# ============================================
# ДЕРЕВО СУММ
# ============================================

def test_sum_tree_find():
    tree = SumTree(4)
    for i, v in enumerate([1.0, 2.0, 3.0, 4.0]):
        tree.update(i, v)
    assert tree.total == 10.0
    assert tree.find([0.5, 1.0, 2.99, 3.0, 9.99]).tolist() == [0, 1, 1, 2, 3]


def test_sum_tree_consistent_after_many_updates():
    rng = np.random.default_rng(5)
    tree = SumTree(100)
    values = np.zeros(100)
    for _ in range(100_000):
        i = int(rng.integers(100))
        values[i] = rng.random()
        tree.update(i, values[i])
    assert tree.capacity == 128
    assert tree.total == pytest.approx(values.sum(), rel=1e-12)
    internal = np.arange(1, tree.capacity)
    assert np.array_equal(tree.nodes[internal], tree.nodes[2 * internal] + tree.nodes[2 * internal + 1])


# ============================================
# ПРИОРИТЕТНЫЙ БУФЕР
# ============================================

def test_equal_priorities_sample_every_slot():
    buffer = _filled([1.0] * 16)
    indices, batch, weights = buffer.sample(16, 0.4, np.random.default_rng(0))
    assert indices.tolist() == list(range(16))
    assert weights == pytest.approx(np.ones(16))
    assert batch['action'].tolist() == list(range(16))


def test_sampling_ratio_follows_priorities():
    buffer = _filled([3.0, 1.0])
    rng = np.random.default_rng(1)
    hits = sum(int(buffer.sample(1, 0.4, rng)[0][0] == 0) for _ in range(4000))
    assert hits / 4000 == pytest.approx(0.75, abs=0.03)


def test_sampling_distribution_chi_square():
    priorities = np.arange(1.0, 17.0)
    buffer = _filled(priorities)
    rng = np.random.default_rng(2)
    counts = np.zeros(16)
    for _ in range(1563):
        indices, _, _ = buffer.sample(64, 0.4, rng)
        np.add.at(counts, indices, 1)
    expected = priorities / priorities.sum() * counts.sum()
    assert stats.chisquare(counts, expected).pvalue > 0.01


def test_zero_alpha_full_beta_gives_unit_weights():
    buffer = _filled([0.5, 2.0, 7.0, 1.0], alpha=0.0)
    buffer.update_priorities([0, 3], [10.0, 0.1])
    _, _, weights = buffer.sample(8, 1.0, np.random.default_rng(3))
    assert weights == pytest.approx(np.ones(8))


def test_weights_in_unit_interval():
    buffer = _filled(np.linspace(0.1, 5.0, 32), alpha=0.6)
    _, _, weights = buffer.sample(16, 0.7, np.random.default_rng(4))
    assert np.all(weights > 0) and np.all(weights <= 1.0)
    assert weights.max() == pytest.approx(1.0)


def test_empty_buffer_raises():
    with pytest.raises(RuntimeError):
        PrioritizedBuffer(8).sample(4, 0.4, np.random.default_rng(0))


def test_update_priorities_and_global_max():
    buffer = PrioritizedBuffer(4, alpha=0.6, eps=1e-3)
    for k in range(3):
        buffer.insert(_transition(k))
    buffer.update_priorities([2], [-5.0])
    assert buffer.tree.leaf(2) == pytest.approx(5.001 ** 0.6)
    assert buffer.max_priority == pytest.approx(5.001)
    buffer.update_priorities([2], [0.0])
    assert buffer.max_priority == pytest.approx(5.001)
    buffer.insert(_transition(3))
    assert buffer.tree.leaf(3) == pytest.approx(5.001 ** 0.6)
    assert buffer.probabilities(np.arange(4)).sum() == pytest.approx(1.0)


def test_fifo_eviction():
    buffer = PrioritizedBuffer(4, alpha=0.6)
    for k in range(6):
        buffer.insert(_transition(k))
    assert len(buffer) == 4
    indices, batch, _ = buffer.sample(4, 0.4, np.random.default_rng(0))
    assert indices.tolist() == [0, 1, 2, 3]
    assert batch['action'].tolist() == [4, 5, 2, 3]
