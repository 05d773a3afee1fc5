#!/usr/bin/env python
# -*- coding: utf-8 -*-

import logging

from manifest_decorator import write_manifest
from trainer import run_training

logger = logging.getLogger(__name__)


@write_manifest('train')
def train_command(ctx, args):
    """Обучение Rainbow: episodes.jsonl, чекпоинты и train_summary.json в каталоге запуска"""
    result = run_training(ctx.cfg, out_dir=ctx.out_dir)
    logger.info(f"Доля успехов в последних эпизодах: {result.summary['success_rate_recent']}")
    return 0
