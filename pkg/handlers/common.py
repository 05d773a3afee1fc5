#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Общая подготовка подкоманд: конфиг, переопределения, каталог запуска
"""

import os
import logging
import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional

from artifacts import get_artifact_filename
from config import ConfigError, ExperimentConfig, apply_overrides, config, load_experiment

logger = logging.getLogger(__name__)


@dataclass
class RunContext:
    cfg: Optional[ExperimentConfig]
    out_dir: str
    subcommand: str
    source: Optional[str] = None
    overrides: List[str] = field(default_factory=list)


def resolve_out_dir(out: Optional[str], subcommand: str) -> str:
    out_dir = out or os.path.join(config.RUNS_DIR, get_artifact_filename(subcommand))
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def load_run_config(args) -> tuple:
    """
    Конфиг из --config (или DEFAULT_CONFIG) с применёнными --set,
    --seed, --steps и --ablate. Возвращает (cfg, источник, список переопределений).
    """
    source = getattr(args, 'config', None) or config.DEFAULT_CONFIG
    cfg = load_experiment(source)
    overrides = list(getattr(args, 'set', None) or [])
    cfg = apply_overrides(cfg, overrides)

    seed = getattr(args, 'seed', None)
    if seed is not None:
        cfg = cfg.replace(train=dataclasses.replace(cfg.train, seed=seed),
                          eval=dataclasses.replace(cfg.eval, seeds=(seed,)))
        overrides.append(f"--seed={seed}")
    steps = getattr(args, 'steps', None)
    if steps is not None:
        if steps < 0:
            raise ConfigError("--steps не может быть отрицательным", source='--steps')
        cfg = cfg.replace(train=dataclasses.replace(cfg.train, total_steps=steps))
        overrides.append(f"--steps={steps}")
    ablate = getattr(args, 'ablate', None)
    if ablate:
        cfg = cfg.replace(train=cfg.train.without(*ablate))
        overrides.append(f"--ablate={','.join(ablate)}")
    return cfg, source, overrides


def prepare_run(args, subcommand: str) -> RunContext:
    """Проверяет конфиг до любых вычислений и создаёт каталог запуска"""
    cfg, source, overrides = load_run_config(args)
    out_dir = resolve_out_dir(getattr(args, 'out', None), subcommand)
    logger.info(f"🚀 {subcommand}: конфиг {source}, хеш {cfg.config_hash()[:12]}, каталог {out_dir}")
    return RunContext(cfg, out_dir, subcommand, source, overrides)
