#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import logging

from artifacts import write_csv, write_json
from atlas import (
    atlas_statistics,
    compute_atlas,
    grid_from_config,
    joint_path_rows,
    manipulability_volume,
    representative_path,
)
from manifest_decorator import write_manifest

logger = logging.getLogger(__name__)

CELL_HEADER = ('theta_x', 'theta_y', 'sigma_min', 'kappa', 'in_omega')
VOLUME_HEADER = ('z', 'theta_x', 'theta_y', 'sigma_min', 'kappa', 'valid')
JOINT_HEADER = ('index', 'roll', 'pitch', 'z', 'theta_1_deg', 'theta_2_deg', 'theta_3_deg')


@write_manifest('atlas')
def atlas_command(ctx, args):
    """Карта особенностей текущей геометрии: ячейки, сводка, статистика по сидам"""
    cfg = ctx.cfg
    grid = grid_from_config(cfg.eval, cfg.rrs, seed=args.jitter_seed)
    logger.info(f"Сетка атласа: {grid.axis.size}×{grid.axis.size}, шаг {cfg.eval.atlas_step_deg}°")
    result = compute_atlas(cfg.rrs, grid, cfg.eval.sigma_threshold)
    logger.info(f"A_w = {result.area:.4f} рад², min σ_min = {result.min_sigma}")

    write_csv(os.path.join(ctx.out_dir, 'atlas_cells.csv'), CELL_HEADER, result.cell_rows())
    write_json(os.path.join(ctx.out_dir, 'atlas_summary.json'), result.summary())

    if not args.no_stats:
        seeds = range(cfg.eval.atlas_seeds)
        stats = atlas_statistics(cfg.rrs, grid, cfg.eval.sigma_threshold, seeds)
        write_json(os.path.join(ctx.out_dir, 'atlas_stats.json'), stats)

    path = representative_path(cfg.rrs)
    write_csv(os.path.join(ctx.out_dir, 'joint_path.csv'), JOINT_HEADER, joint_path_rows(cfg.rrs, path))

    if args.volume:
        levels = (cfg.rrs.h_min, cfg.rrs.z_home, cfg.rrs.h_max)
        write_csv(os.path.join(ctx.out_dir, 'manipulability_volume.csv'), VOLUME_HEADER,
                  manipulability_volume(cfg.rrs, grid, levels))
    return 0
