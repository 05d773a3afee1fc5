#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Декоратор для автоматической записи манифеста запуска после подкоманды
"""

import os
import logging
from functools import wraps
from datetime import datetime

from artifacts import CODE_VERSION, write_json

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'


def build_manifest(ctx, started_at, finished_at):
    cfg = ctx.cfg
    return {
        'subcommand': ctx.subcommand,
        'config_hash': cfg.config_hash() if cfg is not None else None,
        'seeds': {
            'train': cfg.train.seed,
            'eval': list(cfg.eval.seeds),
        } if cfg is not None else None,
        'code_version': CODE_VERSION,
        'out_dir': os.path.abspath(ctx.out_dir),
        'config_source': ctx.source,
        'overrides': list(ctx.overrides),
        'started_at': started_at.isoformat(timespec='seconds'),
        'finished_at': finished_at.isoformat(timespec='seconds'),
        'config': cfg.to_dict() if cfg is not None else None,
    }


def write_manifest(subcommand):
    """
    Декоратор, который после выполнения подкоманды пишет manifest.json
    в каталог запуска. Ошибка записи манифеста не меняет результат.
    """
    def decorator(func):
        @wraps(func)
        def wrapper(ctx, *args, **kwargs):
            started_at = datetime.now()
            # Выполняем основную функцию
            result = func(ctx, *args, **kwargs)

            try:
                ctx.subcommand = ctx.subcommand or subcommand
                manifest = build_manifest(ctx, started_at, datetime.now())
                write_json(os.path.join(ctx.out_dir, MANIFEST_NAME), manifest)
                logger.info(f"Манифест запуска записан: {ctx.out_dir}")
            except Exception as e:
                logger.error(f"Ошибка при записи манифеста: {e}")

            return result
        return wrapper
    return decorator
