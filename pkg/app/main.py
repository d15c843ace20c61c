"""
Командная строка HumanSR: этапы пайплайна, синтетический проект, PSNR
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from loguru import logger

from app.core.config import settings
from app.core.exceptions import HumanSRError, InvalidArgumentError
from app.core.logger import setup_logging
from app.data.fixture import make_synthetic_fixture
from app.data.imageio import read_ppm
from app.data.manifest import ProjectManifest, load_manifest, override_manifest
from app.data.pipeline import Pipeline
from app.render.compose import psnr

EXIT_OK = 0


def _manifest(args: argparse.Namespace) -> ProjectManifest:
    """Манифест с переопределениями из флагов"""
    manifest = load_manifest(args.manifest)
    update = {}
    if args.out:
        update["output"] = Path(args.out)
    if args.scale is not None:
        update["scale"] = args.scale
    if args.batch_size is not None:
        update["fit"] = {**manifest.fit.model_dump(), "batch_size": args.batch_size}
    if args.no_refine:
        update["refine"] = {**manifest.refine.model_dump(), "enabled": False}
    return override_manifest(manifest, update) if update else manifest


def _add_project_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", required=True, help="Путь к manifest.json")
    parser.add_argument("--out", help="Каталог результатов (иначе из манифеста)")
    parser.add_argument("--mode", choices=("batch", "sequential"), default="batch", help="Режим подгонки")
    parser.add_argument(
        "--batch-size",
        type=int,
        default=None,
        help=f"Кадров в окне (по умолчанию {settings.DEFAULT_BATCH_SIZE})",
    )
    parser.add_argument("--scale", type=int, default=None, help="Масштаб LR (иначе из манифеста)")
    parser.add_argument("--no-refine", action="store_true", help="Рендер без уточнения движения")
    parser.add_argument("--no-cache", action="store_true", help="Пересчитать этапы без кэша")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description=f"{settings.APP_NAME}: суперразрешение видео с человеком по HR эталону"
    )
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="Уровень логирования")
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", help="Подгонка модели к HR или LR последовательности")
    _add_project_flags(fit)
    fit.add_argument("--sequence", choices=("hr", "lr"), default="lr", help="Какая последовательность")

    for name, description in (
        ("refine", "Уточнение движения LR по HR"),
        ("adapt", "Адаптация шаблона по ключевому кадру"),
        ("render", "Рендер и композитинг кадров"),
        ("pipeline", "Весь пайплайн"),
    ):
        _add_project_flags(commands.add_parser(name, help=description))

    fixture = commands.add_parser("fixture", help="Синтетический проект")
    fixture.add_argument("--out", required=True, help="Каталог проекта")
    fixture.add_argument("--seed", type=int, default=1)
    fixture.add_argument("--n-lr", type=int, default=30, help="Число LR кадров")
    fixture.add_argument("--n-hr", type=int, default=24, help="Число HR кадров, больше двух периодов")
    fixture.add_argument("--period", type=int, default=10, help="Период движения, кадров")
    fixture.add_argument("--noise", type=float, default=0.0, help="Шум позы LR, рад")
    fixture.add_argument("--scale", type=int, default=settings.DEFAULT_SCALE, help="Масштаб LR")

    compare = commands.add_parser("psnr", help="PSNR двух PPM изображений")
    compare.add_argument("image_a")
    compare.add_argument("image_b")
    return parser


def run(args: argparse.Namespace) -> int:
    if args.command == "fixture":
        if args.n_hr <= 2 * args.period:
            raise InvalidArgumentError(
                f"n_hr: для уточнения нужно больше 2·period = {2 * args.period} HR кадров"
            )
        make_synthetic_fixture(
            args.seed, args.n_lr, args.n_hr, args.period, args.noise, args.out, scale=args.scale
        )
        return EXIT_OK
    if args.command == "psnr":
        value = psnr(read_ppm(args.image_a), read_ppm(args.image_b))
        print(f"{value:.4f}")
        return EXIT_OK

    manifest = _manifest(args)
    pipeline = Pipeline(manifest, mode=args.mode, use_cache=False if args.no_cache else None)
    if args.command == "pipeline":
        pipeline.run()
        return EXIT_OK

    stage = f"fit_{args.sequence}" if args.command == "fit" else args.command
    result = pipeline.run_stage(stage)
    logger.info(f"📊 {result.name}: {result.status}, {result.details}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Точка входа; код выхода 0, 2 (валидация), 3 (численный сбой), 4 (ввод-вывод)"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, settings.LOG_FILE)
    try:
        return run(args)
    except HumanSRError as e:
        if settings.DEBUG:
            logger.exception(f"❌ {e}")
        else:
            logger.error(f"❌ {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
