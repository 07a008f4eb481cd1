"""Command-line entry point.

Subcommands map one-to-one onto the pipeline runners; every flag overrides
the corresponding field of the JSON config (which is optional, since all
fields have defaults).  Exit codes: 0 success, 1 configuration error,
2 data error.  ``VOXMIX_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ConfigError, DataError
from .pipeline import (
    PipelineConfig,
    run_augment,
    run_eval,
    run_mix_batch,
    run_phantom,
    run_preprocess,
    run_split,
)

#: CLI spellings -> internal method names.
_METHODS = {
    "tensormixup": "tensormixup",
    "mixup": "mixup",
    "scalar-roi": "scalar_roi",
    "cutmix3d": "cutmix3d",
}


def _add_common(parser: argparse.ArgumentParser, needs_input: bool = False) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its fields")
    parser.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int, help="parallel worker count")
    if needs_input:
        parser.add_argument("--input", help="input case-store directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxmix",
        description="Volumetric mixing augmentation and segmentation evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="z-score normalize a case store")
    _add_common(p, needs_input=True)

    p = sub.add_parser("mix", help="generate synthetic cases by mixing pairs")
    _add_common(p, needs_input=True)
    p.add_argument("--method", choices=sorted(_METHODS), help="mixing algorithm")
    p.add_argument("--alpha", type=float, help="Beta(alpha, alpha) concentration")
    p.add_argument("--pairs", type=int, help="number of synthetic cases to generate")

    p = sub.add_parser("augment", help="apply the classic augmentation recipe")
    _add_common(p, needs_input=True)

    p = sub.add_parser("eval", help="evaluate predictions against references")
    _add_common(p)
    p.add_argument("--pred", help="case store holding predicted labels")
    p.add_argument("--gt", help="case store holding reference labels")
    p.add_argument(
        "--allow-partial",
        action="store_true",
        default=None,
        help="evaluate the id intersection instead of failing on mismatches",
    )

    p = sub.add_parser("split", help="write a deterministic k-fold partition")
    _add_common(p, needs_input=True)
    p.add_argument("--k", type=int, help="fold count (k >= 2)")

    p = sub.add_parser("phantom", help="generate synthetic phantom cases")
    _add_common(p)
    p.add_argument("--count", type=int, help="number of phantom cases")

    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    overrides = {}
    for flag, key in (
        ("seed", "seed"),
        ("out", "out"),
        ("workers", "workers"),
        ("input", "input"),
        ("alpha", None),
        ("pairs", "pairs"),
        ("method", None),
        ("pred", "pred"),
        ("gt", "gt"),
        ("allow_partial", "allow_partial"),
        ("k", "kfold"),
        ("count", "phantom_count"),
    ):
        value = getattr(args, flag, None)
        if value is not None and key is not None:
            overrides[key] = value

    if args.config:
        config = PipelineConfig.from_file(args.config, overrides)
    else:
        if "out" not in overrides:
            raise ConfigError("--out is required when no config file is given")
        config = PipelineConfig.from_dict(overrides)

    mix_overrides = {}
    if getattr(args, "method", None) is not None:
        mix_overrides["method"] = _METHODS[args.method]
    if getattr(args, "alpha", None) is not None:
        mix_overrides["alpha"] = args.alpha
    if mix_overrides:
        import dataclasses

        config = dataclasses.replace(
            config, mix=dataclasses.replace(config.mix, **mix_overrides)
        )
    return config


_RUNNERS = {
    "preprocess": run_preprocess,
    "mix": run_mix_batch,
    "augment": run_augment,
    "eval": run_eval,
    "split": run_split,
    "phantom": run_phantom,
}


def main(argv: list[str] | None = None) -> int:
    level_name = os.environ.get("VOXMIX_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.WARNING),
        format="%(levelname)s %(name)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
        _RUNNERS[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
