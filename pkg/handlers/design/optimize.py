#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import logging
import dataclasses

import numpy as np

from artifacts import write_csv, write_json
from atlas import (
    atlas_statistics,
    comparison_table,
    from_dimensionless,
    grid_from_config,
    initial_design_from_config,
    optimize_design,
    parameter_atlas,
)
from manifest_decorator import write_manifest

logger = logging.getLogger(__name__)

COMPARISON_HEADER = ('metric', 'initial_mean', 'initial_std', 'optimized_mean', 'optimized_std')


def _design_dict(design):
    return {'l1': design.l1, 'l2': design.l2, 'l3': design.l3, 'eta': design.eta}


@write_manifest('optimize')
def optimize_command(ctx, args):
    """Нелдер–Мид от начального дизайна, таблица «до/после» и, по желанию, атлас параметров"""
    cfg = ctx.cfg
    initial, distal_ratio = initial_design_from_config(cfg)
    grid = grid_from_config(cfg.eval, cfg.rrs, seed=args.jitter_seed)
    threshold = cfg.eval.sigma_threshold

    result = optimize_design(initial, grid, threshold, distal_ratio, cfg.rrs.h_min, cfg.rrs.h_max,
                             maxiter=args.maxiter)
    write_json(os.path.join(ctx.out_dir, 'optimization.json'), {
        'initial_design': _design_dict(initial),
        'optimized_design': _design_dict(result.design),
        'initial_area': result.initial_atlas.area,
        'optimized_area': result.atlas.area,
        'improvement_pct': (100.0 * (result.atlas.area / result.initial_atlas.area - 1.0)
                            if result.initial_atlas.area > 0 else None),
        'initial_summary': result.initial_atlas.summary(),
        'optimized_summary': result.atlas.summary(),
        'evaluations': result.evaluations,
        'iterations': result.iterations,
        'kappa_limit_pct': result.initial_atlas.kappa_variation_pct,
        'history': result.history,
    })
    # готовая секция rrs для конфига
    write_json(os.path.join(ctx.out_dir, 'geometry.json'), {'rrs': dataclasses.asdict(result.geometry)})

    seeds = range(cfg.eval.atlas_seeds)
    initial_geometry = from_dimensionless(initial, distal_ratio, cfg.rrs.h_min, cfg.rrs.h_max)
    before = atlas_statistics(initial_geometry, grid, threshold, seeds)
    after = atlas_statistics(result.geometry, grid, threshold, seeds)
    write_csv(os.path.join(ctx.out_dir, 'comparison.csv'), COMPARISON_HEADER,
              ([row[k] for k in COMPARISON_HEADER] for row in comparison_table(before, after)))

    if args.param_atlas:
        values = np.linspace(0.05, 1.95, args.param_atlas)
        areas = parameter_atlas(values, values, initial.eta, distal_ratio, cfg.rrs.h_min, cfg.rrs.h_max,
                                grid, threshold)
        rows = ((l1, l2, areas[i, j]) for i, l1 in enumerate(values) for j, l2 in enumerate(values))
        write_csv(os.path.join(ctx.out_dir, 'parameter_atlas.csv'), ('l1', 'l2', 'area'), rows)
    return 0
