#!/usr/bin/env python
# -*- coding: utf-8 -*-

import math
import dataclasses
from types import SimpleNamespace

import numpy as np
import pytest

from atlas import (
    STAT_FIELDS,
    DimensionlessDesign,
    InfeasibleDesign,
    OrientationGrid,
    atlas_statistics,
    comparison_table,
    compute_atlas,
    from_dimensionless,
    initial_design_from_config,
    is_feasible,
    joint_path_rows,
    optimize_design,
    parameter_atlas,
    representative_path,
    singularity_loci,
    to_dimensionless,
)
from kinematics import RrsGeometry


@pytest.fixture
def coarse_grid(rrs):
    return OrientationGrid(math.radians(60.0), math.radians(5.0), rrs.z_home, seed=0)


# ============================================
# БЕЗРАЗМЕРНЫЕ ПАРАМЕТРЫ
# ============================================

def test_to_dimensionless_unit_geometry():
    d = to_dimensionless(SimpleNamespace(base_radius=1.0, platform_radius=1.0, proximal_len=1.0))
    assert d.eta == pytest.approx(1.0)
    assert d.lambdas == pytest.approx((1.0, 2.0, 1.0))


def test_lambdas_sum_to_four(rrs):
    d = to_dimensionless(rrs)
    assert sum(d.lambdas) == pytest.approx(4.0, abs=1e-12)
    assert d.eta == pytest.approx(0.16)
    assert is_feasible(*d.lambdas)


def test_dimensionless_roundtrip(rrs):
    d = to_dimensionless(rrs)
    g = from_dimensionless(d, rrs.distal_len / d.eta, rrs.h_min, rrs.h_max)
    for f in dataclasses.fields(RrsGeometry):
        assert getattr(g, f.name) == pytest.approx(getattr(rrs, f.name), abs=1e-12)


@pytest.mark.parametrize('lambdas', [
    (0.3, 2.0, 1.7),
    (2.1, 1.0, 0.9),
    (1.5, 2.5, 0.0),
    (1.5, 2.0, 0.6),
])
def test_infeasible_design_rejected(lambdas):
    with pytest.raises(InfeasibleDesign):
        from_dimensionless(DimensionlessDesign(*lambdas, eta=0.16), 1.375, 0.1, 0.3)


def test_initial_design_from_config(default_cfg):
    design, distal_ratio = initial_design_from_config(default_cfg)
    assert design.lambdas == (1.7, 2.0, 0.3)
    assert design.eta == pytest.approx(0.16)
    assert distal_ratio == pytest.approx(0.22 / 0.16)


# ============================================
# СЕТКА И АТЛАС
# ============================================

def test_grid_axis_is_symmetric():
    grid = OrientationGrid(math.radians(60.0), math.radians(5.0), 0.2, seed=None)
    axis = grid.axis
    assert axis.size == 25
    assert axis == pytest.approx(-axis[::-1], abs=1e-15)
    assert axis[12] == 0.0


def test_grid_jitter_stays_within_half_step():
    grid = OrientationGrid(math.radians(30.0), math.radians(5.0), 0.2, seed=7)
    roll, _ = grid.samples()
    base, _ = dataclasses.replace(grid, seed=None).samples()
    assert np.all(np.abs(roll - base) <= grid.step_rad / 2)
    assert not np.array_equal(roll, base)


def test_grid_rejects_bad_step():
    with pytest.raises(ValueError):
        OrientationGrid(1.0, 0.0, 0.2)


def test_atlas_area_bounds(rrs, coarse_grid):
    result = compute_atlas(rrs, coarse_grid, 0.15)
    assert result.total_cells == 25 * 25
    assert 0.0 <= result.area <= result.total_cells * coarse_grid.step_rad ** 2
    assert result.area == pytest.approx(result.cells_in_omega * coarse_grid.step_rad ** 2)
    if result.cells_in_omega:
        assert result.min_sigma >= 0.15
        assert result.max_roll_deg <= 45.0 + 1e-9
        assert result.max_pitch_deg <= 45.0 + 1e-9
    assert len(list(result.cell_rows())) == result.total_cells
    assert set(result.summary()) >= {'area_rad2', 'min_sigma', 'cells_in_omega', 'total_cells'}


def test_atlas_area_monotone_in_threshold(rrs, coarse_grid):
    areas = [compute_atlas(rrs, coarse_grid, t).area for t in (0.05, 0.15, 0.30)]
    assert areas[0] >= areas[1] >= areas[2]


def test_atlas_is_deterministic(rrs, coarse_grid):
    a = compute_atlas(rrs, coarse_grid, 0.15)
    b = compute_atlas(rrs, coarse_grid, 0.15)
    assert a.area == b.area
    assert np.array_equal(a.sigma_min, b.sigma_min, equal_nan=True)
    assert np.array_equal(a.in_omega, b.in_omega)


def test_atlas_empty_when_limbs_never_close(coarse_grid):
    g = RrsGeometry(distal_len=1e-6)
    result = compute_atlas(g, coarse_grid, 0.15)
    assert result.area == 0.0
    assert result.min_sigma is None
    assert result.cells_in_omega == 0


def test_atlas_rejects_nonpositive_threshold(rrs, coarse_grid):
    with pytest.raises(ValueError):
        compute_atlas(rrs, coarse_grid, 0.0)


def test_singularity_loci(rrs):
    grid = OrientationGrid(math.radians(60.0), math.radians(5.0), rrs.z_home, seed=None)
    loci = singularity_loci(rrs, grid)
    center = grid.axis.size // 2
    assert not loci[center, center]
    # зеркало y → −y меняет знак roll
    assert np.array_equal(loci, loci[::-1, :])
    outside = np.abs(grid.axis) > math.radians(45.0) + 1e-9
    assert loci[outside, :].all()
    assert loci[:, outside].all()


def test_atlas_statistics_over_seeds(rrs, coarse_grid):
    stats = atlas_statistics(rrs, coarse_grid, 0.15, range(3))
    assert set(stats) == set(STAT_FIELDS)
    assert stats['area']['std'] >= 0.0
    rows = comparison_table(stats, stats)
    assert [r['metric'] for r in rows] == list(STAT_FIELDS)
    assert rows[0]['initial_mean'] == rows[0]['optimized_mean']


# ============================================
# ОПТИМИЗАЦИЯ
# ============================================

def test_optimization_never_worse_than_initial(rrs):
    grid = OrientationGrid(math.radians(45.0), math.radians(5.0), rrs.z_home, seed=0)
    initial = DimensionlessDesign(1.7, 2.0, 0.3, 0.16)
    result = optimize_design(initial, grid, 0.15, 1.375, rrs.h_min, rrs.h_max, maxiter=15)
    assert result.atlas.area >= result.initial_atlas.area
    assert is_feasible(*result.design.lambdas)
    assert result.evaluations == len(result.history)
    assert result.history[0]['l1'] == 1.7


def test_optimization_keeps_kappa_variation_within_initial(rrs):
    grid = OrientationGrid(math.radians(45.0), math.radians(5.0), rrs.z_home, seed=0)
    initial = DimensionlessDesign(1.7, 2.0, 0.3, 0.16)
    result = optimize_design(initial, grid, 0.15, 1.375, rrs.h_min, rrs.h_max, maxiter=15)
    limit = result.initial_atlas.kappa_variation_pct
    assert limit is not None
    assert result.atlas.kappa_variation_pct <= limit + 1e-9
    # точки с большей вариацией κ не считаются допустимыми
    for entry in result.history:
        if entry['admissible'] and entry['kappa_variation_pct'] is not None:
            assert entry['kappa_variation_pct'] <= limit + 1e-9
        if not entry['admissible']:
            assert entry['area'] == -1.0


def test_optimization_without_kappa_limit_never_worse(rrs):
    grid = OrientationGrid(math.radians(45.0), math.radians(5.0), rrs.z_home, seed=0)
    initial = DimensionlessDesign(1.7, 2.0, 0.3, 0.16)
    free = optimize_design(initial, grid, 0.15, 1.375, rrs.h_min, rrs.h_max, maxiter=15, limit_kappa=False)
    bounded = optimize_design(initial, grid, 0.15, 1.375, rrs.h_min, rrs.h_max, maxiter=15)
    assert free.atlas.area >= free.initial_atlas.area
    assert bounded.atlas.area >= bounded.initial_atlas.area


def test_optimization_rejects_infeasible_start(rrs):
    grid = OrientationGrid(math.radians(45.0), math.radians(5.0), rrs.z_home)
    with pytest.raises(InfeasibleDesign):
        optimize_design(DimensionlessDesign(0.3, 2.0, 1.7, 0.16), grid, 0.15, 1.375, rrs.h_min, rrs.h_max)


def test_parameter_atlas_marks_infeasible(rrs):
    grid = OrientationGrid(math.radians(45.0), math.radians(9.0), rrs.z_home)
    areas = parameter_atlas([0.5, 1.0, 1.9], [0.5, 2.0, 3.0], 0.16, 1.375, rrs.h_min, rrs.h_max, grid, 0.15)
    assert areas.shape == (3, 3)
    assert areas[0, 2] == -1.0
    assert areas[1, 1] == -1.0
    assert areas[2, 1] >= 0.0


def test_joint_path_rows(rrs):
    rows = list(joint_path_rows(rrs, representative_path(rrs)))
    assert len(rows) == 73
    assert rows[0][0] == 0 and rows[-1][0] == 72
    assert all(v is not None for row in rows for v in row[4:])
    assert rows[0][4:] == pytest.approx(rows[-1][4:], abs=1e-9)
