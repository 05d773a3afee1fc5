#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import csv
import json

import numpy as np
import pytest

from artifacts import (
    CheckpointError,
    append_jsonl,
    checkpoint_path,
    load_checkpoint,
    read_json,
    read_jsonl,
    save_checkpoint,
    to_json,
    write_csv,
)
from handlers.common import RunContext
from manifest_decorator import MANIFEST_NAME, write_manifest
from net import NetworkSpec, init_params

SMALL = NetworkSpec(state_dim=4, num_actions=3, hidden=(8, 6), atoms=5, v_min=-1.0, v_max=1.0)


def test_checkpoint_roundtrip(tmp_path):
    params = init_params(SMALL, np.random.default_rng(0))
    path = checkpoint_path(str(tmp_path), 'final')
    assert path.endswith('checkpoint_final.json')
    save_checkpoint(path, SMALL, params)
    stored, loaded = load_checkpoint(path, SMALL)
    assert stored == SMALL
    assert all(np.array_equal(loaded[k], params[k]) for k in params)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, NetworkSpec())
    document = read_json(path)
    assert document['manifest'][0] == ['fc1.w', [4, 8]]
    assert len(document['params']) == len(SMALL.shapes())


def test_checkpoint_restores_default_network(tmp_path):
    spec = NetworkSpec(atoms=11, noisy=False)
    params = init_params(spec, np.random.default_rng(1))
    path = str(tmp_path / 'net.json')
    save_checkpoint(path, spec, params)
    stored, loaded = load_checkpoint(path, spec)
    assert stored == spec
    for key, value in params.items():
        assert np.array_equal(loaded[key], value)


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / 'absent.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text('{"version": 1, "network": ')
    with pytest.raises(CheckpointError):
        load_checkpoint(str(broken))
    old = tmp_path / 'old.json'
    old.write_text(json.dumps({'version': 0}))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(old))


def test_plain_json_values():
    data = json.loads(to_json({'a': np.float64(1.5), 'b': float('nan'), 'c': np.arange(3), 'd': (1, 2)}))
    assert data == {'a': 1.5, 'b': None, 'c': [0, 1, 2], 'd': [1, 2]}


def test_csv_and_jsonl(tmp_path):
    path = tmp_path / 'sub' / 'rows.csv'
    write_csv(str(path), ('x', 'y'), [(1, None), (np.int64(2), 0.5)])
    with open(path, newline='') as f:
        assert list(csv.reader(f)) == [['x', 'y'], ['1', ''], ['2', '0.5']]
    log = tmp_path / 'log.jsonl'
    append_jsonl(str(log), {'n': 1})
    append_jsonl(str(log), {'n': np.int64(2)})
    assert read_jsonl(str(log)) == [{'n': 1}, {'n': 2}]


def test_manifest_decorator(tmp_path, smoke_cfg):
    @write_manifest('demo')
    def command(ctx, value):
        return value * 2

    ctx = RunContext(smoke_cfg, str(tmp_path), None, 'configs/smoke.json', ['train.lr=0.001'])
    assert command(ctx, 21) == 42
    manifest = read_json(os.path.join(tmp_path, MANIFEST_NAME))
    assert manifest['subcommand'] == 'demo'
    assert manifest['config_hash'] == smoke_cfg.config_hash()
    assert manifest['seeds'] == {'train': 0, 'eval': [0, 1, 2, 3, 4]}
    assert manifest['overrides'] == ['train.lr=0.001']


def test_manifest_not_written_on_failure(tmp_path, smoke_cfg):
    @write_manifest('demo')
    def command(ctx):
        raise RuntimeError('boom')

    with pytest.raises(RuntimeError):
        command(RunContext(smoke_cfg, str(tmp_path), 'demo'))
    assert not os.path.exists(os.path.join(tmp_path, MANIFEST_NAME))
