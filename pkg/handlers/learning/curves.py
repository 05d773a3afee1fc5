#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import logging

import numpy as np

from artifacts import read_jsonl, write_csv
from config import ConfigError

logger = logging.getLogger(__name__)

CURVE_HEADER = ('episode', 'reward', 'reward_ma10', 'duration_s', 'holes', 'success',
                'loss', 'max_q', 'lr', 'noise_mag')
MOVING_WINDOW = 10


def curve_rows(episodes):
    """Строки кривых обучения со скользящим средним награды по 10 эпизодам"""
    rewards = []
    for record in episodes:
        rewards.append(record['reward'])
        window = rewards[-MOVING_WINDOW:]
        yield (record['episode'], record['reward'], float(np.mean(window)), record['duration_s'],
               record['holes'], int(bool(record['success'])), record['loss'], record['max_q'],
               record['lr'], record['noise_mag'])


def curves_command(run_dir, out=None) -> str:
    """Восстанавливает curves.csv из episodes.jsonl каталога обучения"""
    source = os.path.join(run_dir, 'episodes.jsonl')
    if not os.path.exists(source):
        raise ConfigError(f"не найден журнал эпизодов: {source}", source=run_dir)
    episodes = read_jsonl(source)
    path = os.path.join(out or run_dir, 'curves.csv')
    write_csv(path, CURVE_HEADER, curve_rows(episodes))
    logger.info(f"✅ Кривые обучения записаны: {path} ({len(episodes)} эпизодов)")
    return path
