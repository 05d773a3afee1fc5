#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Точка входа: подкоманды проектирования 3-RRS, обучения и оценки
кооперативной вставки штыря
"""

import sys
import logging
import argparse

from artifacts import CheckpointError
from config import ABLATION_FLAGS, POLICIES, ConfigError, config
from handlers.common import prepare_run
from handlers.design import atlas_command, optimize_command
from handlers.learning import ablate_command, curves_command, eval_command, train_command

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_INTERNAL = 2


class UsageError(Exception):
    """Ошибка разбора аргументов командной строки"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _flag_list(value):
    flags = [f.strip() for f in value.split(',') if f.strip()]
    unknown = [f for f in flags if f not in ABLATION_FLAGS]
    if unknown:
        raise argparse.ArgumentTypeError(f"неизвестные флаги: {', '.join(unknown)}")
    return flags


def _config_options(parser):
    parser.add_argument('--config', help='JSON-конфиг эксперимента')
    parser.add_argument('--out', help='каталог запуска')
    parser.add_argument('--set', action='append', metavar='SECTION.KEY=VALUE',
                        help='переопределить поле конфига')
    parser.add_argument('--seed', type=int, help='сид обучения и оценки')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='pegbot', description='Delta + 3-RRS: вставка штыря, Rainbow DQN')
    commands = parser.add_subparsers(dest='command', required=True)

    atlas = commands.add_parser('atlas', help='карта особенностей 3-RRS')
    _config_options(atlas)
    atlas.add_argument('--jitter-seed', type=int, default=0)
    atlas.add_argument('--no-stats', action='store_true', help='без статистики по сидам дрожания')
    atlas.add_argument('--volume', action='store_true', help='σ_min и κ на нескольких высотах')

    optimize = commands.add_parser('optimize', help='оптимизация геометрии 3-RRS')
    _config_options(optimize)
    optimize.add_argument('--jitter-seed', type=int, default=0)
    optimize.add_argument('--maxiter', type=int, default=200)
    optimize.add_argument('--param-atlas', type=int, default=0, metavar='N',
                          help='атлас A_w на сетке N×N по (λ₁, λ₂)')

    train = commands.add_parser('train', help='обучение Rainbow DQN')
    _config_options(train)
    train.add_argument('--steps', type=int, help='бюджет шагов среды')
    train.add_argument('--ablate', type=_flag_list, help='выключить компоненты: ' + ','.join(ABLATION_FLAGS))

    evaluate = commands.add_parser('eval', help='оценка политики')
    _config_options(evaluate)
    evaluate.add_argument('--checkpoint', help='файл чекпоинта')
    evaluate.add_argument('--policy', choices=POLICIES)
    evaluate.add_argument('--noise', type=float, help='σ шума нормированного наблюдения')
    evaluate.add_argument('--episodes', type=int)
    evaluate.add_argument('--trace', action='store_true', help='записать trace.jsonl')
    evaluate.add_argument('--workers', type=int)

    ablate = commands.add_parser('ablate', help='набор абляций')
    _config_options(ablate)
    ablate.add_argument('--steps', type=int, help='бюджет шагов среды на ячейку')
    ablate.add_argument('--cells', type=lambda v: [c for c in v.split(',') if c], help='подмножество ячеек')
    ablate.add_argument('--skip-geometry', action='store_true', help='без абляции геометрии')
    ablate.add_argument('--workers', type=int)

    curves = commands.add_parser('export-curves', help='CSV кривых обучения из episodes.jsonl')
    curves.add_argument('run_dir')
    curves.add_argument('--out')
    return parser


COMMANDS = {
    'atlas': atlas_command,
    'optimize': optimize_command,
    'train': train_command,
    'eval': eval_command,
    'ablate': ablate_command,
}


def dispatch(argv=None) -> int:
    """Разбирает аргументы, проверяет конфиг до вычислений и запускает подкоманду"""
    try:
        args = build_parser().parse_args(argv)
        if args.command == 'export-curves':
            curves_command(args.run_dir, args.out)
        else:
            ctx = prepare_run(args, args.command)
            COMMANDS[args.command](ctx, args)
        logger.info(f"✅ Подкоманда {args.command} завершена")
        return EXIT_OK
    except (UsageError, ConfigError, CheckpointError) as e:
        logger.error(f"❌ {e}")
        return EXIT_USER_ERROR
    except Exception as e:
        logger.exception(f"❌ Внутренняя ошибка: {e}")
        return EXIT_INTERNAL


def main():
    # Настройка логирования
    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        level=getattr(logging, config.LOG_LEVEL)
    )
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == '__main__':
    main()
