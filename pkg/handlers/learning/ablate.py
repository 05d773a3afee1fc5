#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import logging

from artifacts import write_csv, write_json
from config import ConfigError, config
from evaluation import ablation_cells, geometry_pair, run_ablation_suite
from manifest_decorator import write_manifest

logger = logging.getLogger(__name__)

ABLATION_HEADER = ('cell', 'success_rate_mean', 'success_rate_std', 'steps_to_threshold_mean',
                   'steps_to_threshold_std', 'violations_mean', 'violations_std',
                   'dead_ends_mean', 'dead_ends_std', 'error')


@write_manifest('ablate')
def ablate_command(ctx, args):
    """Полный Rainbow, удаления компонентов и абляция геометрии при одинаковых сидах и бюджете"""
    cfg = ctx.cfg
    initial_rrs = optimized_rrs = None
    if not args.skip_geometry:
        initial_rrs, optimized_rrs = geometry_pair(cfg)
    cells = ablation_cells(cfg, optimized_rrs, initial_rrs)
    if args.cells:
        known = {name for name, _ in cells}
        unknown = [name for name in args.cells if name not in known]
        if unknown:
            raise ConfigError(f"неизвестные ячейки абляции: {', '.join(unknown)}", source='--cells')
        cells = [(name, c) for name, c in cells if name in args.cells]

    rows = run_ablation_suite(cfg, cells, workers=args.workers or config.WORKERS)
    write_csv(os.path.join(ctx.out_dir, 'ablation.csv'), ABLATION_HEADER,
              ([row[k] for k in ABLATION_HEADER] for row in rows))
    write_json(os.path.join(ctx.out_dir, 'table.json'), {'rows': rows})
    return 0
