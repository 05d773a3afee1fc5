#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os

import pytest

from config import ExperimentConfig, load_experiment
from kinematics import DeltaParams, RrsGeometry

CONFIGS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs')


@pytest.fixture
def delta():
    return DeltaParams()


@pytest.fixture
def rrs():
    return RrsGeometry()


@pytest.fixture
def default_cfg():
    return ExperimentConfig()


@pytest.fixture
def smoke_cfg():
    return load_experiment(os.path.join(CONFIGS_DIR, 'smoke.json'))


@pytest.fixture
def configs_dir():
    return CONFIGS_DIR
