#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Конфигурация: переменные окружения процесса и JSON-конфиг эксперимента
"""

import os
import re
import json
import hashlib
import dataclasses
from dataclasses import dataclass, field
from typing import Optional

from dotenv import load_dotenv

from kinematics import DeltaParams, RrsGeometry

# Загружаем переменные окружения из .env файла (для локальной разработки)
load_dotenv()


class Config:
    """Класс конфигурации процесса"""

    # Каталог для результатов, если --out не задан
    RUNS_DIR = os.getenv('RUNS_DIR', 'runs')

    # Режим отладки
    DEBUG = os.getenv('DEBUG', 'False').lower() == 'true'

    LOG_LEVEL = 'DEBUG' if DEBUG else os.getenv('LOG_LEVEL', 'INFO').upper()
    if LOG_LEVEL not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
        raise ValueError(f"LOG_LEVEL имеет недопустимое значение: {LOG_LEVEL}")

    # Число процессов для оценки и абляций
    workers_str = os.getenv('WORKERS', '1')
    if not workers_str.strip().isdigit() or int(workers_str) < 1:
        raise ValueError(f"WORKERS должен быть целым числом >= 1, получено: {workers_str}")
    WORKERS = int(workers_str)

    # Конфиг эксперимента по умолчанию
    DEFAULT_CONFIG = os.getenv('DEFAULT_CONFIG', 'configs/default.json')

config = Config()


# ============================================
# КОНФИГ ЭКСПЕРИМЕНТА
# ============================================

ABLATION_FLAGS = ('double', 'dueling', 'per', 'nstep', 'noisy', 'distributional')
LOSSES = ('huber', 'cross_entropy', 'huber_pred_proj')
POLICIES = ('checkpoint', 'planner', 'random', 'scripted')
# peripheral: четыре боковых отверстия; apex: вершина и верхнее (короткая задача)
C0_LAYOUTS = ('peripheral', 'apex')


class ConfigError(ValueError):
    """Ошибка пользовательской конфигурации (с номером строки, если известен)"""

    def __init__(self, message, line=None, source=None):
        super().__init__(message)
        self.message = message
        self.line = line
        self.source = source

    def __str__(self):
        where = self.source or '<config>'
        if self.line is not None:
            return f"{where}:{self.line}: {self.message}"
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class TaskConfig:
    dome_radius: float = 0.15
    hole_radius: float = 0.006
    mount_clearance: float = 0.05
    dt: float = 0.1
    max_steps: int = 1200
    task_time: float = 60.0
    pos_tol: float = 0.005
    angle_tol_deg: float = 2.0
    c0_holes: int = 4
    c0_layout: str = 'peripheral'
    curriculum: bool = True
    curriculum_window: int = 20
    curriculum_threshold: float = 0.75
    delta_step: float = 0.02
    rot_step: float = 0.03

    def __post_init__(self):
        positive = ('dome_radius', 'hole_radius', 'dt', 'max_steps', 'task_time', 'pos_tol',
                    'angle_tol_deg', 'curriculum_window', 'delta_step', 'rot_step')
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"task.{name} должен быть > 0")
        if self.mount_clearance < 0:
            raise ValueError("task.mount_clearance не может быть отрицательным")
        if self.c0_layout not in C0_LAYOUTS:
            raise ValueError(f"task.c0_layout должен быть одним из {', '.join(C0_LAYOUTS)}")
        limit = 4 if self.c0_layout == 'peripheral' else 2
        if not 1 <= self.c0_holes <= limit:
            raise ValueError(f"task.c0_holes для раскладки {self.c0_layout} должен быть от 1 до {limit}")
        if not 0 < self.curriculum_threshold < 1:
            raise ValueError("task.curriculum_threshold должен быть в (0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    """Гиперпараметры обучения и флаги абляции"""

    lr: float = 1e-4
    lr_decay: float = 0.999
    lr_min: float = 1e-5
    weight_decay: float = 1e-5
    grad_clip: float = 5.0
    gamma: float = 0.99
    n_step: int = 3
    batch_size: int = 64
    tau: float = 1e-3
    atoms: int = 51
    v_min: float = -10.0
    v_max: float = 200.0
    buffer_capacity: int = 1_000_000
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    per_eps: float = 1e-3
    warmup: int = 1000
    total_steps: int = 100_000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 10_000
    loss: str = 'huber'
    double: bool = True
    dueling: bool = True
    per: bool = True
    nstep: bool = True
    noisy: bool = True
    distributional: bool = True
    seed: int = 0
    log_every: int = 10
    checkpoint_every: int = 0

    def __post_init__(self):
        for name in ('lr', 'lr_min', 'grad_clip', 'n_step', 'batch_size', 'buffer_capacity',
                     'per_eps', 'eps_decay_steps', 'log_every'):
            if not getattr(self, name) > 0:
                raise ValueError(f"train.{name} должен быть > 0")
        for name in ('weight_decay', 'warmup', 'total_steps', 'checkpoint_every', 'alpha'):
            if getattr(self, name) < 0:
                raise ValueError(f"train.{name} не может быть отрицательным")
        if not 0 <= self.gamma <= 1:
            raise ValueError("train.gamma должен быть в [0, 1]")
        if not 0 <= self.tau <= 1:
            raise ValueError("train.tau должен быть в [0, 1]")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("train.lr_decay должен быть в (0, 1]")
        if self.atoms < 2:
            raise ValueError("train.atoms должен быть >= 2")
        if not self.v_min < self.v_max:
            raise ValueError("train.v_min должен быть меньше train.v_max")
        if not 0 <= self.beta_start <= self.beta_end <= 1:
            raise ValueError("train.beta_start и train.beta_end: 0 <= start <= end <= 1")
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ValueError("train.eps_end и train.eps_start: 0 <= end <= start <= 1")
        if self.loss not in LOSSES:
            raise ValueError(f"train.loss должен быть одним из {', '.join(LOSSES)}")

    # Эффективные значения с учётом флагов абляции

    @property
    def horizon(self) -> int:
        return self.n_step if self.nstep else 1

    @property
    def num_atoms(self) -> int:
        return self.atoms if self.distributional else 1

    @property
    def priority_exponent(self) -> float:
        return self.alpha if self.per else 0.0

    @property
    def vanilla(self) -> bool:
        """Все компоненты Rainbow выключены: ε-жадный DQN"""
        return not any(getattr(self, f) for f in ABLATION_FLAGS)

    def without(self, *flags):
        """Копия с выключенными компонентами Rainbow"""
        unknown = [f for f in flags if f not in ABLATION_FLAGS]
        if unknown:
            raise ConfigError(f"неизвестный флаг абляции: {', '.join(unknown)}", source='--ablate')
        return dataclasses.replace(self, **{f: False for f in flags})


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 100
    seeds: tuple = (0, 1, 2, 3, 4)
    noise_sigma: float = 0.0
    policy: str = 'checkpoint'
    atlas_step_deg: float = 1.0
    atlas_range_deg: float = 60.0
    sigma_threshold: float = 0.15
    atlas_seeds: int = 10
    initial_design: tuple = (1.70, 2.00, 0.30)

    def __post_init__(self):
        if self.episodes < 1 or not self.seeds:
            raise ValueError("eval.episodes и eval.seeds должны быть непустыми")
        if self.noise_sigma < 0:
            raise ValueError("eval.noise_sigma не может быть отрицательным")
        if self.policy not in POLICIES:
            raise ValueError(f"eval.policy должен быть одним из {', '.join(POLICIES)}")
        for name in ('atlas_step_deg', 'atlas_range_deg', 'sigma_threshold', 'atlas_seeds'):
            if not getattr(self, name) > 0:
                raise ValueError(f"eval.{name} должен быть > 0")
        if len(self.initial_design) != 3:
            raise ValueError("eval.initial_design должен содержать три числа (λ₁, λ₂, λ₃)")


SECTIONS = {
    'delta': DeltaParams,
    'rrs': RrsGeometry,
    'task': TaskConfig,
    'train': TrainConfig,
    'eval': EvalConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    delta: DeltaParams = field(default_factory=DeltaParams)
    rrs: RrsGeometry = field(default_factory=RrsGeometry)
    task: TaskConfig = field(default_factory=TaskConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        data = {}
        for name in SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            data[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return data

    @classmethod
    def from_dict(cls, data: dict, text: Optional[str] = None, source: Optional[str] = None):
        if not isinstance(data, dict):
            raise ConfigError("конфиг должен быть JSON-объектом", line=1, source=source)
        sections = {}
        for name, values in data.items():
            if name not in SECTIONS:
                raise ConfigError(f"неизвестная секция '{name}'", _line_of(text, name), source)
            if not isinstance(values, dict):
                raise ConfigError(f"секция '{name}' должна быть объектом", _line_of(text, name), source)
            sections[name] = _build_section(name, values, text, source)
        return cls(**sections)

    def replace(self, **sections):
        return dataclasses.replace(self, **sections)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode('utf-8')).hexdigest()


def _line_of(text, key, after_key=None):
    """Номер строки, где в тексте конфига встречается ключ"""
    if not text:
        return None
    start = 0
    if after_key is not None:
        anchor = re.search(r'"%s"\s*:' % re.escape(after_key), text)
        if anchor:
            start = anchor.end()
    match = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, start)
    if not match:
        return None
    return text.count('\n', 0, match.start()) + 1


def _coerce(section, key, value, expected):
    """Проверка типа значения по аннотации поля"""
    where = f"{section}.{key}"
    if expected is bool:
        if not isinstance(value, bool):
            raise ValueError(f"{where} должен быть true/false")
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ValueError(f"{where} должен быть целым числом")
        return int(value)
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{where} должен быть числом")
        return float(value)
    if expected is str:
        if not isinstance(value, str):
            raise ValueError(f"{where} должен быть строкой")
        return value
    if expected is tuple:
        if not isinstance(value, (list, tuple)):
            raise ValueError(f"{where} должен быть списком")
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise ValueError(f"{where} должен содержать только числа")
        return tuple(value)
    return value


def _build_section(name, values, text, source):
    cls = SECTIONS[name]
    known = {f.name: f.type for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"неизвестный ключ '{name}.{key}'", _line_of(text, key, name), source)
        try:
            kwargs[key] = _coerce(name, key, value, known[key])
        except ValueError as e:
            raise ConfigError(str(e), _line_of(text, key, name), source)
    if name == 'eval' and 'seeds' in kwargs:
        kwargs['seeds'] = tuple(int(s) for s in kwargs['seeds'])
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ConfigError(str(e), _line_of(text, name), source)


def parse_experiment(text: str, source: str = '<config>') -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"ошибка синтаксиса JSON: {e.msg}", e.lineno, source)
    return ExperimentConfig.from_dict(data, text, source)


def load_experiment(path) -> ExperimentConfig:
    """Читает JSON-конфиг эксперимента с диска"""
    try:
        with open(path, encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"не удалось прочитать конфиг: {e.strerror}", source=str(path))
    return parse_experiment(text, str(path))


def apply_overrides(cfg: ExperimentConfig, pairs) -> ExperimentConfig:
    """
    Применяет переопределения вида section.key=value.
    Значение разбирается как JSON, иначе берётся строкой.
    """
    if not pairs:
        return cfg
    data = cfg.to_dict()
    for pair in pairs:
        if '=' not in pair or '.' not in pair.split('=', 1)[0]:
            raise ConfigError(f"ожидалось section.key=value, получено '{pair}'", source='--set')
        dotted, raw = pair.split('=', 1)
        section, key = dotted.split('.', 1)
        if section not in data:
            raise ConfigError(f"неизвестная секция '{section}'", source='--set')
        if key not in data[section]:
            raise ConfigError(f"неизвестный ключ '{section}.{key}'", source='--set')
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        data[section][key] = value
    return ExperimentConfig.from_dict(data, source='--set')
