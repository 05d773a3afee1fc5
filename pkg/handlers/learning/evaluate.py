#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import logging
import dataclasses

from artifacts import write_csv, write_json, write_jsonl
from config import config
from evaluation import METRICS, EvalProtocol, evaluate
from manifest_decorator import write_manifest

logger = logging.getLogger(__name__)

EPISODE_HEADER = ('seed', 'episode', 'success', 'holes', 'completion_time_s', 'alignment_error_deg',
                  'collisions', 'energy', 'rms_error_mm', 'steps', 'reward', 'violations', 'dead_end')

# имена строк как в итоговых таблицах сравнения
ROW_NAMES = {
    'checkpoint': 'Rainbow DQN',
    'planner': 'Planner baseline',
    'random': 'Random policy',
    'scripted': 'Scripted policy',
}


def protocol_from_args(cfg, args) -> EvalProtocol:
    protocol = EvalProtocol.from_config(cfg, checkpoint=args.checkpoint)
    changes = {}
    if args.policy:
        changes['policy'] = args.policy
    if args.noise is not None:
        changes['noise_sigma'] = args.noise
    if args.episodes is not None:
        changes['episodes'] = args.episodes
    if args.trace:
        changes['record_trace'] = True
    return dataclasses.replace(protocol, **changes)


@write_manifest('eval')
def eval_command(ctx, args):
    """Оценка политики: metrics.csv по эпизодам и table.json со сводкой"""
    protocol = protocol_from_args(ctx.cfg, args)
    workers = args.workers or config.WORKERS
    table = evaluate(ctx.cfg, protocol, workers=workers)

    write_csv(os.path.join(ctx.out_dir, 'metrics.csv'), EPISODE_HEADER,
              ([record[k] for k in EPISODE_HEADER] for record in table.episodes))
    write_json(os.path.join(ctx.out_dir, 'table.json'), {
        'row': ROW_NAMES[protocol.policy],
        'policy': protocol.policy,
        'noise_sigma': protocol.noise_sigma,
        'episodes': protocol.episodes,
        'seeds': list(protocol.seeds),
        'metrics': list(METRICS),
        'aggregate': table.aggregate,
        'per_seed': table.per_seed,
    })
    if protocol.record_trace:
        steps = ({'seed': r['seed'], 'episode': r['episode'], **step}
                 for r in table.episodes for step in r['trace'])
        write_jsonl(os.path.join(ctx.out_dir, 'trace.jsonl'), steps)
    return 0
