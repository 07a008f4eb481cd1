"""Config-driven batch orchestration behind the CLI.

Every run is a pure function of (config, input store): work lists are fixed
up front from the master seed, each unit of work gets its own derived RNG
stream, and manifests carry no environment-dependent fields, so output trees
are byte-identical across repeat runs and worker counts.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .augment import AugSpec, apply_augmentations, default_aug_spec
from .core import CaseBundle, zscore_normalize
from .errors import ConfigError, DataError
from .metrics import aggregate_reports, evaluate_case
from .mixers import cutmix3d, mixup_whole, scalar_roi_mix, tensormixup
from .patch import extract_tumor_patch
from .phantom import PhantomParams, generate_phantom
from .rng import (
    RNG_ALGORITHM,
    MixConfig,
    derive_case_rng,
    derive_seed,
    sample_beta,
    sample_mix_tensor,
    sample_pair,
)
from .storage import (
    FORMAT_VERSION,
    list_cases,
    read_case,
    read_json,
    read_manifest,
    write_case,
    write_json,
    write_report,
)

log = logging.getLogger("voxmix")


@dataclass(frozen=True)
class PipelineConfig:
    """One JSON document of knobs; CLI flags override individual fields."""

    out: str
    input: str | None = None
    seed: int = 0
    workers: int = 1
    pairs: int = 20
    mix: MixConfig = field(default_factory=MixConfig)
    aug: AugSpec = field(default_factory=default_aug_spec)
    kfold: int | None = None
    phantom_count: int = 6
    phantom: PhantomParams = field(default_factory=PhantomParams)
    pred: str | None = None
    gt: str | None = None
    allow_partial: bool = False
    figures: bool = True

    def __post_init__(self) -> None:
        if not self.out:
            raise ConfigError("output path must be set")
        if self.input is not None and Path(self.input) == Path(self.out):
            raise ConfigError("input and output paths must be distinct")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.pairs < 0:
            raise ConfigError(f"pairs must be non-negative, got {self.pairs}")
        if self.kfold is not None and self.kfold < 2:
            raise ConfigError(f"kfold must be at least 2, got {self.kfold}")
        if self.phantom_count < 1:
            raise ConfigError(
                f"phantom count must be positive, got {self.phantom_count}"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "mix" in d and isinstance(d["mix"], dict):
            d["mix"] = MixConfig(**d["mix"])
        if "aug" in d and isinstance(d["aug"], dict):
            d["aug"] = AugSpec.from_dict(d["aug"])
        if "phantom" in d and isinstance(d["phantom"], dict):
            p = dict(d["phantom"])
            for key in ("shape", "brain_radii", "tumor_radii", "tumor_fraction_range"):
                if key in p:
                    p[key] = tuple(p[key])
            d["phantom"] = PhantomParams(**p)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def from_file(cls, path: Path, overrides: dict | None = None) -> "PipelineConfig":
        try:
            raw = read_json(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        raw.update(overrides or {})
        return cls.from_dict(raw)


def _require_input(config: PipelineConfig) -> Path:
    if not config.input:
        raise ConfigError("this command needs an input case store (config field 'input')")
    path = Path(config.input)
    if not path.is_dir():
        raise DataError(f"input case store {path} does not exist")
    return path


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------


def run_preprocess(config: PipelineConfig) -> list[str]:
    """Z-score every modality of every case into a new store; labels copied."""
    input_dir = _require_input(config)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    done = []
    failed = []
    for case_id in list_cases(input_dir):
        try:
            case = read_case(input_dir / case_id)
            normalized = CaseBundle(
                case.case_id,
                {m: zscore_normalize(v) for m, v in case.modalities.items()},
                case.label,
                soft_label=case.soft_label,
            )
            write_case(normalized, out_dir / case_id)
            done.append(case_id)
        except DataError as exc:
            failed.append(case_id)
            log.warning("preprocess skip case=%s reason=%s", case_id, exc)
    if not done:
        raise DataError("preprocess failed for every case")
    write_json(
        out_dir / "preprocess_manifest.json",
        {
            "format_version": FORMAT_VERSION,
            "input": config.input,
            "normalization": "zscore",
            "cases": done,
            "skipped": failed,
        },
    )
    return done


# ---------------------------------------------------------------------------
# mix
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4)
def _cached_case(store_dir: str, case_id: str) -> CaseBundle:
    return read_case(Path(store_dir) / case_id)


def _case_has_tumor(store_dir: Path, case_id: str) -> bool:
    manifest = read_manifest(store_dir / case_id)
    label_path = store_dir / case_id / manifest.label["file"]
    flat = np.frombuffer(label_path.read_bytes(), dtype=np.uint8)
    return bool((flat != manifest.scheme.background_code).any())


def _mix_one_pair(task: dict) -> dict:
    """Worker body: all inputs are primitives so tasks cross process borders."""
    store = task["input"]
    cfg = MixConfig(**task["mix"])
    stream = task["stream"]
    rng = derive_case_rng(task["seed"], stream)
    case_i = _cached_case(store, task["source_i"])
    case_j = _cached_case(store, task["source_j"])

    method = cfg.method
    weight_rng = rng.derive("weights")
    if method == "tensormixup":
        p1 = extract_tumor_patch(case_i, cfg, rng.derive("patch-i"))
        p2 = extract_tumor_patch(case_j, cfg, rng.derive("patch-j"))
        a = sample_mix_tensor(weight_rng, cfg.alpha, cfg.patch_size)
        mixed = tensormixup(p1, p2, a)
        lineage = dataclasses.replace(mixed.lineage, alpha=cfg.alpha, seed_label=stream)
    elif method == "scalar_roi":
        lam = float(sample_beta(weight_rng, cfg.alpha, 1)[0])
        p1 = extract_tumor_patch(case_i, cfg, rng.derive("patch-i"))
        p2 = extract_tumor_patch(case_j, cfg, rng.derive("patch-j"))
        mixed = scalar_roi_mix(p1, p2, lam)
        lineage = dataclasses.replace(mixed.lineage, alpha=cfg.alpha, seed_label=stream)
    elif method == "cutmix3d":
        lam = float(sample_beta(weight_rng, cfg.alpha, 1)[0])
        p1 = extract_tumor_patch(case_i, cfg, rng.derive("patch-i"))
        p2 = extract_tumor_patch(case_j, cfg, rng.derive("patch-j"))
        mixed = cutmix3d(p1, p2, lam, rng.derive("box"))
        lineage = dataclasses.replace(mixed.lineage, alpha=cfg.alpha, seed_label=stream)
    else:  # mixup
        lam = float(sample_beta(weight_rng, cfg.alpha, 1)[0])
        mixed = mixup_whole(case_i, case_j, lam, cfg.patch_size)
        lineage = dataclasses.replace(mixed.lineage, alpha=cfg.alpha, seed_label=stream)

    mixed = dataclasses.replace(mixed, case_id=task["case_id"], lineage=lineage)
    write_case(mixed, Path(task["out"]) / task["case_id"])
    return {
        "index": task["index"],
        "case_id": task["case_id"],
        "source_i": task["source_i"],
        "source_j": task["source_j"],
        "stream": stream,
    }


def run_mix_batch(config: PipelineConfig) -> dict:
    """Generate the configured number of synthetic cases from a store."""
    input_dir = _require_input(config)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = dataclasses.replace(config.mix, seed=config.seed)

    eligible = []
    for case_id in list_cases(input_dir):
        if _case_has_tumor(input_dir, case_id):
            eligible.append(case_id)
        else:
            log.warning("mix skip case=%s reason=no_tumor", case_id)
    if len(eligible) < 2:
        raise DataError(
            f"need at least 2 tumor-bearing cases to mix, found {len(eligible)}"
        )

    pair_rng = derive_case_rng(config.seed, "pair-list")
    tasks = []
    for i in range(config.pairs):
        a, b = sample_pair(pair_rng, len(eligible))
        tasks.append(
            {
                "index": i,
                "case_id": f"mix-{i:04d}",
                "stream": f"pair-{i:04d}",
                "source_i": eligible[a],
                "source_j": eligible[b],
                "input": str(input_dir),
                "out": str(out_dir),
                "seed": config.seed,
                "mix": dataclasses.asdict(cfg),
            }
        )

    if config.workers == 1:
        records = [_mix_one_pair(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_mix_one_pair, tasks))
    records.sort(key=lambda r: r["index"])

    manifest = {
        "format_version": FORMAT_VERSION,
        "rng_algorithm": RNG_ALGORITHM,
        "seed": config.seed,
        "method": cfg.method,
        "alpha": cfg.alpha,
        "patch_size": list(cfg.patch_size),
        "margin": cfg.margin,
        "crop": cfg.crop,
        "input": config.input,
        "pairs": records,
        "skipped_cases": [c for c in list_cases(input_dir) if c not in eligible],
    }
    write_json(out_dir / "batch_manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# augment
# ---------------------------------------------------------------------------


def run_augment(config: PipelineConfig) -> list[str]:
    """Apply the augmentation recipe to every case, one stream per case.

    Hard labels are transformed jointly with the images; soft labels of
    synthetic inputs are not carried through (the hardened label is).
    """
    input_dir = _require_input(config)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    done = []
    for case_id in list_cases(input_dir):
        case = read_case(input_dir / case_id)
        rng = derive_case_rng(config.seed, f"{config.aug.seed_label}-{case_id}")
        augmented = apply_augmentations(case, config.aug, rng)
        write_case(augmented, out_dir / case_id)
        done.append(case_id)
    if not done:
        raise DataError(f"no cases found in {input_dir}")
    write_json(
        out_dir / "augment_manifest.json",
        {
            "format_version": FORMAT_VERSION,
            "rng_algorithm": RNG_ALGORITHM,
            "seed": config.seed,
            "input": config.input,
            "spec": config.aug.to_dict(),
            "cases": done,
        },
    )
    return done


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def run_eval(config: PipelineConfig) -> dict:
    """Evaluate predicted labels against references; write report files."""
    if not config.pred or not config.gt:
        raise ConfigError("eval needs both 'pred' and 'gt' case stores")
    pred_dir = Path(config.pred)
    gt_dir = Path(config.gt)
    pred_ids = set(list_cases(pred_dir))
    gt_ids = set(list_cases(gt_dir))
    common = sorted(pred_ids & gt_ids)
    missing = sorted(pred_ids ^ gt_ids)
    if missing:
        for case_id in missing:
            side = "gt" if case_id in pred_ids else "pred"
            log.warning("eval mismatch case=%s missing_in=%s", case_id, side)
        if not config.allow_partial:
            raise DataError(
                f"{len(missing)} case(s) present on one side only: {missing}; "
                f"pass allow_partial to evaluate the intersection"
            )
    if not common:
        raise DataError("no case ids common to pred and gt stores")

    reports = []
    for case_id in common:
        pred_case = read_case(pred_dir / case_id)
        gt_case = read_case(gt_dir / case_id)
        reports.append(
            evaluate_case(
                pred_case.label, gt_case.label, gt_case.spacing, case_id=case_id
            )
        )

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report(reports, out_dir / "report.csv", fmt="csv")
    write_report(reports, out_dir / "report.json", fmt="json")
    summary = aggregate_reports(reports)
    write_json(out_dir / "summary.json", summary)
    figures = []
    if config.figures:
        from .plots import render_metric_boxplots

        figures = [str(p) for p in render_metric_boxplots(reports, out_dir)]
    return {"cases": common, "summary": summary, "figures": figures}


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------


def kfold_split(case_ids: list[str], k: int, seed: int) -> list[list[str]]:
    """Deterministic partition into k folds with sizes differing by at most 1."""
    if k < 2:
        raise ConfigError(f"kfold needs k >= 2, got {k}")
    if k > len(case_ids):
        raise ConfigError(f"cannot split {len(case_ids)} cases into {k} folds")
    ids = sorted(case_ids)
    derive_case_rng(seed, "kfold").shuffle(ids)
    return [[str(c) for c in fold] for fold in np.array_split(ids, k)]


def run_split(config: PipelineConfig) -> list[list[str]]:
    input_dir = _require_input(config)
    if config.kfold is None:
        raise ConfigError("split needs the 'kfold' config field (k >= 2)")
    folds = kfold_split(list_cases(input_dir), config.kfold, config.seed)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(
        out_dir / "splits.json",
        {
            "format_version": FORMAT_VERSION,
            "rng_algorithm": RNG_ALGORITHM,
            "seed": config.seed,
            "k": config.kfold,
            "input": config.input,
            "folds": {f"fold_{i}": fold for i, fold in enumerate(folds)},
        },
    )
    return folds


# ---------------------------------------------------------------------------
# phantom
# ---------------------------------------------------------------------------


def run_phantom(config: PipelineConfig) -> list[str]:
    """Generate the configured number of phantom cases into a fresh store."""
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    done = []
    for i in range(config.phantom_count):
        case_id = f"phantom-{i:03d}"
        params = dataclasses.replace(
            config.phantom, seed=derive_seed(config.seed, case_id)
        )
        write_case(generate_phantom(params, case_id), out_dir / case_id)
        done.append(case_id)
    write_json(
        out_dir / "phantom_manifest.json",
        {
            "format_version": FORMAT_VERSION,
            "rng_algorithm": RNG_ALGORITHM,
            "seed": config.seed,
            "count": config.phantom_count,
            "shape": list(config.phantom.shape),
            "cases": done,
        },
    )
    return done
