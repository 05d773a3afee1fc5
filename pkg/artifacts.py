#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Запись результатов: JSON, JSON-lines, CSV и чекпоинты сети
"""

import os
import csv
import json
import math
from datetime import datetime

import numpy as np

CODE_VERSION = '1.0.0'
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Чекпоинт не найден или не совпадает с ожидаемой сетью"""


def _plain(value):
    """Приводит numpy-типы и нечисловые значения к JSON-совместимым"""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def to_json(data) -> str:
    return json.dumps(_plain(data), ensure_ascii=False, indent=2, default=str)


def write_json(path, data):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(to_json(data))
        f.write('\n')


def read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def append_jsonl(path, record):
    with open(path, 'a', encoding='utf-8') as f:
        f.write(json.dumps(_plain(record), ensure_ascii=False, default=str))
        f.write('\n')


def write_jsonl(path, records):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(_plain(record), ensure_ascii=False, default=str))
            f.write('\n')


def read_jsonl(path):
    with open(path, encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(['' if v is None else v for v in _plain(list(row))])


def get_artifact_filename(kind):
    """
    Генерирует имя для каталога или файла запуска с отметкой времени
    """
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    return f"{kind}_{timestamp}"


# ============================================
# ЧЕКПОИНТЫ
# ============================================

def checkpoint_path(out_dir, tag):
    return os.path.join(out_dir, f"checkpoint_{tag}.json")


def save_checkpoint(path, spec, params, extra=None):
    """
    Плоские массивы параметров с манифестом форм. Компактный JSON без
    отметок времени: одинаковое обучение даёт побайтно одинаковый файл.
    """
    document = {
        'version': CHECKPOINT_VERSION,
        'network': {
            'state_dim': spec.state_dim,
            'num_actions': spec.num_actions,
            'hidden': list(spec.hidden),
            'atoms': spec.atoms,
            'v_min': spec.v_min,
            'v_max': spec.v_max,
            'dueling': spec.dueling,
            'noisy': spec.noisy,
        },
        'manifest': [[name, list(shape)] for name, shape in spec.shapes()],
        'params': {name: params[name].ravel().tolist() for name, _ in spec.shapes()},
    }
    if extra:
        document['extra'] = _plain(extra)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(document, f, separators=(',', ':'))


def load_checkpoint(path, spec=None):
    """Возвращает (spec, params). При заданном spec проверяет совпадение манифеста."""
    from net import NetworkSpec

    if not os.path.exists(path):
        raise CheckpointError(f"чекпоинт не найден: {path}")
    try:
        document = read_json(path)
    except (OSError, ValueError) as e:
        raise CheckpointError(f"не удалось прочитать чекпоинт {path}: {e}")
    if document.get('version') != CHECKPOINT_VERSION:
        raise CheckpointError(f"неподдерживаемая версия чекпоинта: {document.get('version')}")

    try:
        network = dict(document['network'])
        network['hidden'] = tuple(network.get('hidden', NetworkSpec.hidden))
        stored = NetworkSpec(**network)
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"описание сети в чекпоинте повреждено: {e}")
    if spec is not None and spec.shapes() != stored.shapes():
        raise CheckpointError("формы параметров чекпоинта не совпадают с конфигурацией сети")
    manifest = [(name, tuple(shape)) for name, shape in document['manifest']]
    if manifest != stored.shapes():
        raise CheckpointError("манифест чекпоинта повреждён")

    params = {}
    for name, shape in manifest:
        flat = np.asarray(document['params'][name], dtype=float)
        if flat.size != int(np.prod(shape)):
            raise CheckpointError(f"параметр {name}: ожидалось {int(np.prod(shape))} значений")
        params[name] = flat.reshape(shape)
    return stored, params
