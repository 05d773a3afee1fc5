#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import csv

import pytest

from artifacts import read_json
from handlers.learning.curves import CURVE_HEADER
from handlers.learning.evaluate import EPISODE_HEADER
from main import EXIT_OK, EXIT_USER_ERROR, dispatch
from manifest_decorator import MANIFEST_NAME


@pytest.fixture
def smoke_path(configs_dir):
    return os.path.join(configs_dir, 'smoke.json')


def _header(path):
    with open(path, newline='', encoding='utf-8') as f:
        return next(csv.reader(f))


@pytest.mark.parametrize('argv', [
    [],
    ['train', '--bogus'],
    ['train', '--ablate', 'double,magic'],
    ['eval', '--policy', 'oracle'],
    ['export-curves'],
])
def test_usage_errors(argv):
    assert dispatch(argv) == EXIT_USER_ERROR


def test_bad_config_is_user_error(tmp_path):
    bad = tmp_path / 'bad.json'
    bad.write_text('{\n  "train": {\n    "lr": 0.001,\n    "bogus": 1\n  }\n}\n')
    assert dispatch(['train', '--config', str(bad), '--out', str(tmp_path / 'run')]) == EXIT_USER_ERROR
    assert dispatch(['train', '--config', str(tmp_path / 'absent.json')]) == EXIT_USER_ERROR


def test_bad_overrides_are_user_errors(smoke_path, tmp_path):
    out = str(tmp_path / 'run')
    assert dispatch(['train', '--config', smoke_path, '--out', out, '--set', 'train.nope=1']) == EXIT_USER_ERROR
    assert dispatch(['train', '--config', smoke_path, '--out', out, '--steps', '-1']) == EXIT_USER_ERROR


def test_missing_checkpoint(smoke_path, tmp_path):
    out = str(tmp_path / 'eval')
    assert dispatch(['eval', '--config', smoke_path, '--out', out, '--episodes', '1',
                     '--checkpoint', str(tmp_path / 'none.json')]) == EXIT_USER_ERROR
    assert dispatch(['eval', '--config', smoke_path, '--out', out, '--episodes', '1']) == EXIT_USER_ERROR


def test_train_zero_steps_then_eval(smoke_path, tmp_path):
    run = tmp_path / 'train'
    assert dispatch(['train', '--config', smoke_path, '--out', str(run), '--steps', '0']) == EXIT_OK
    manifest = read_json(run / MANIFEST_NAME)
    assert manifest['subcommand'] == 'train'
    assert manifest['config']['train']['total_steps'] == 0
    assert '--steps=0' in manifest['overrides']
    assert (run / 'checkpoint_final.json').exists()
    assert (run / 'episodes.jsonl').read_text() == ''

    out = tmp_path / 'eval'
    code = dispatch(['eval', '--config', smoke_path, '--out', str(out), '--seed', '0', '--episodes', '2',
                     '--set', 'task.max_steps=10', '--checkpoint', str(run / 'checkpoint_final.json'),
                     '--trace'])
    assert code == EXIT_OK
    assert tuple(_header(out / 'metrics.csv')) == EPISODE_HEADER
    table = read_json(out / 'table.json')
    assert table['row'] == 'Rainbow DQN'
    assert table['seeds'] == [0]
    assert set(table['aggregate']) == set(table['metrics'])
    assert (out / 'trace.jsonl').exists()
    assert read_json(out / MANIFEST_NAME)['seeds']['eval'] == [0]


def test_export_curves(smoke_path, tmp_path):
    run = tmp_path / 'train'
    assert dispatch(['train', '--config', smoke_path, '--out', str(run), '--steps', '60',
                     '--set', 'task.max_steps=20']) == EXIT_OK
    assert dispatch(['export-curves', str(run)]) == EXIT_OK
    with open(run / 'curves.csv', newline='', encoding='utf-8') as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == CURVE_HEADER
    assert len(rows) - 1 == len((run / 'episodes.jsonl').read_text().splitlines())
    assert dispatch(['export-curves', str(tmp_path / 'empty')]) == EXIT_USER_ERROR


def test_atlas_command(smoke_path, tmp_path):
    out = tmp_path / 'atlas'
    assert dispatch(['atlas', '--config', smoke_path, '--out', str(out), '--no-stats',
                     '--set', 'eval.atlas_step_deg=10']) == EXIT_OK
    for name in ('atlas_cells.csv', 'atlas_summary.json', 'joint_path.csv', MANIFEST_NAME):
        assert (out / name).exists(), name
    assert not (out / 'atlas_stats.json').exists()
    assert _header(out / 'atlas_cells.csv') == ['theta_x', 'theta_y', 'sigma_min', 'kappa', 'in_omega']
    assert read_json(out / 'atlas_summary.json')['total_cells'] == 13 * 13
