"""Command-line surface: preprocess, extract, evaluate, rank, report.

Settings are resolved in a fixed precedence: built-in defaults, then
command-line flags, then the --official preset, then the JSON config file
passed with --config (config keys override flags; a config "official" key
is applied before the config's other keys so explicit keys win). The
VOXEVAL_THREADS environment variable supplies the default thread count
when neither --threads nor a config value is given; 0 means auto.

Exit codes: 0 success, 2 configuration/usage error, 3 data-validation
error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .manifest import (
    DatasetManifest,
    ManifestError,
    PredictionFile,
    PredictionFileError,
    load_manifest,
    load_predictions,
)
from .matching import MatchCriterion
from .metrics import DEFAULT_FPPI_THRESHOLDS, EvalConfig, evaluate_detections
from .postprocessing import PostprocessConfig, apply_postprocess
from .preprocessing import PreprocessConfig, preprocess
from .ranking import MethodRun, bootstrap_rank
from .report import render_figures, write_evaluation, write_json, write_ranking
from .volume_io import NiftiFormatError, read_volume, write_volume

__all__ = ["ConfigError", "main", "build_parser", "resolve_settings"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4

ENV_THREADS = "VOXEVAL_THREADS"

CRITERION_CHOICES = ("iou", "half_diameter", "in_radius")
OFFICIAL_PRESETS = {
    # Criterion and duplicate policy of the published evaluation protocols.
    "luna16": {"criterion": "half_diameter", "duplicate_policy": "ignore"},
    "pn9": {"criterion": "in_radius", "radius": None, "duplicate_policy": "ignore"},
    "ctaa": {"criterion": "iou", "iou": 0.3, "duplicate_policy": "ignore"},
}


class ConfigError(ValueError):
    """Invalid command line, config file, or setting combination."""


def _defaults() -> dict:
    return {
        "manifest": None,
        "pred": {},
        "baseline": None,
        "iou": 0.1,
        "fppi": list(DEFAULT_FPPI_THRESHOLDS),
        "iterations": 1000,
        "seed": 0,
        "criterion": "iou",
        "radius": None,
        "duplicate_policy": "fp",
        "official": None,
        "threads": None,
        "out": None,
        "split": None,
        "strict": True,
        "ap_interpolation": "all_points",
        "connectivity": 26,
        "tie_rank": "average",
        "preprocess": {},
        "postprocess": {},
    }


def _parse_number(token) -> float:
    """Accept plain floats and a/b fractions (the FPPI grid is often written 1/8)."""
    if isinstance(token, (int, float)) and not isinstance(token, bool):
        return float(token)
    text = str(token).strip()
    if "/" in text:
        num, _, den = text.partition("/")
        try:
            return float(num) / float(den)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"cannot parse number {token!r}") from None
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse number {token!r}") from None


def _parse_fppi(value) -> list[float]:
    tokens = value.split(",") if isinstance(value, str) else list(value)
    if not tokens:
        raise ConfigError("fppi grid must not be empty")
    return [_parse_number(t) for t in tokens]


def _parse_pred_flags(values: list[str]) -> dict[str, str]:
    preds: dict[str, str] = {}
    for item in values:
        method_id, sep, path = item.partition("=")
        if not sep or not method_id or not path:
            raise ConfigError(f"--pred expects <id>=<path>, got {item!r}")
        if method_id in preds:
            raise ConfigError(f"duplicate prediction id {method_id!r}")
        preds[method_id] = path
    return preds


def _apply_official(settings: dict, name: str) -> None:
    if name not in OFFICIAL_PRESETS:
        raise ConfigError(f"unknown official protocol {name!r}; choose from {sorted(OFFICIAL_PRESETS)}")
    settings["official"] = name
    settings.update(OFFICIAL_PRESETS[name])


_CONFIG_KEYS = {
    "manifest": str,
    "pred": dict,
    "baseline": str,
    "iou": "number",
    "fppi": "fppi",
    "iterations": int,
    "seed": int,
    "criterion": str,
    "radius": "number_or_null",
    "duplicate_policy": str,
    "official": str,
    "threads": int,
    "out": str,
    "split": "split",
    "strict": bool,
    "ap_interpolation": str,
    "connectivity": int,
    "tie_rank": str,
    "preprocess": dict,
    "postprocess": dict,
}


def _apply_config_file(settings: dict, path: str) -> None:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config file must hold a JSON object")
    if "official" in doc:
        value = doc["official"]
        if value is not None:
            if not isinstance(value, str):
                raise ConfigError(f"{path}: 'official' must be a string")
            _apply_official(settings, value)
    for key, value in doc.items():
        if key == "official":
            continue
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        kind = _CONFIG_KEYS[key]
        if kind == "number":
            settings[key] = _parse_number(value)
        elif kind == "number_or_null":
            settings[key] = None if value is None else _parse_number(value)
        elif kind == "fppi":
            settings[key] = _parse_fppi(value)
        elif kind == "split":
            if value is not None and value not in ("train", "val", "test"):
                raise ConfigError(f"{path}: split must be train, val, test, or null")
            settings[key] = value
        elif kind is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: {key!r} must be a boolean")
            settings[key] = value
        elif kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{path}: {key!r} must be an integer")
            settings[key] = value
        elif kind is dict:
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: {key!r} must be an object")
            settings[key] = dict(value)
        else:
            if not isinstance(value, str):
                raise ConfigError(f"{path}: {key!r} must be a string")
            settings[key] = value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxeval",
        description="Volumetric detection evaluation: preprocessing, mask-to-box "
        "extraction, mAP/FROC scoring, bootstrap ranking, report rendering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--manifest", help="dataset manifest JSON")
        sp.add_argument("--config", help="JSON config file; its keys override flags")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, help="worker threads (0 = auto)")

    def eval_flags(sp):
        sp.add_argument("--pred", action="append", default=None, metavar="ID=PATH",
                        help="prediction file, repeatable")
        sp.add_argument("--iou", type=float, help="IoU threshold for matching and mAP")
        sp.add_argument("--fppi", help="comma-separated FPPI grid (fractions like 1/8 allowed)")
        sp.add_argument("--criterion", choices=CRITERION_CHOICES, help="matching criterion")
        sp.add_argument("--duplicate-policy", choices=("fp", "ignore"), dest="duplicate_policy")
        sp.add_argument("--official", choices=sorted(OFFICIAL_PRESETS),
                        help="apply a published protocol preset")

    sp = sub.add_parser("preprocess", help="resample and normalize manifest volumes")
    common(sp)

    sp = sub.add_parser("extract", help="convert mask annotations to an explicit-box manifest")
    common(sp)

    sp = sub.add_parser("evaluate", help="score prediction files with mAP and FROC")
    common(sp)
    eval_flags(sp)

    sp = sub.add_parser("rank", help="paired bootstrap ranking of several methods")
    common(sp)
    eval_flags(sp)
    sp.add_argument("--baseline", help="method id the deltas are reported against")
    sp.add_argument("--iterations", type=int, help="bootstrap iterations")
    sp.add_argument("--seed", type=int, help="bootstrap seed")

    sp = sub.add_parser("report", help="render figures for results in --out")
    common(sp)

    return parser


def resolve_settings(args: argparse.Namespace) -> dict:
    settings = _defaults()
    for key in ("manifest", "out", "threads", "baseline", "iterations", "seed",
                "criterion", "duplicate_policy"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if getattr(args, "iou", None) is not None:
        settings["iou"] = float(args.iou)
    if getattr(args, "fppi", None) is not None:
        settings["fppi"] = _parse_fppi(args.fppi)
    if getattr(args, "pred", None):
        settings["pred"] = _parse_pred_flags(args.pred)
    if getattr(args, "official", None) is not None:
        _apply_official(settings, args.official)
    if getattr(args, "config", None):
        _apply_config_file(settings, args.config)
    _validate_settings(settings)
    return settings


def _validate_settings(settings: dict) -> None:
    if settings["criterion"] not in CRITERION_CHOICES:
        raise ConfigError(f"criterion must be one of {CRITERION_CHOICES}")
    if settings["duplicate_policy"] not in ("fp", "ignore"):
        raise ConfigError("duplicate_policy must be 'fp' or 'ignore'")
    if settings["iterations"] < 1:
        raise ConfigError("iterations must be >= 1")
    if settings["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    if settings["connectivity"] not in (6, 18, 26):
        raise ConfigError("connectivity must be 6, 18, or 26")
    if settings["tie_rank"] not in ("average", "min"):
        raise ConfigError("tie_rank must be 'average' or 'min'")
    if settings["ap_interpolation"] not in ("all_points", "points_101"):
        raise ConfigError("ap_interpolation must be 'all_points' or 'points_101'")
    if settings["threads"] is not None and settings["threads"] < 0:
        raise ConfigError("threads must be >= 0")
    if not isinstance(settings["pred"], dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in settings["pred"].items()
    ):
        raise ConfigError("pred must map method ids to file paths")


def _resolve_threads(settings: dict) -> int:
    value = settings["threads"]
    if value is None:
        env = os.environ.get(ENV_THREADS)
        if env is not None:
            try:
                value = int(env)
            except ValueError:
                raise ConfigError(f"{ENV_THREADS} must be an integer, got {env!r}") from None
            if value < 0:
                raise ConfigError(f"{ENV_THREADS} must be >= 0")
        else:
            value = 0
    return value if value > 0 else (os.cpu_count() or 1)


def _require(settings: dict, key: str) -> str:
    if not settings[key]:
        raise ConfigError(f"this command requires --{key.replace('_', '-')} (or a config key)")
    return settings[key]


def _out_dir(settings: dict) -> Path:
    out = Path(_require(settings, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _criterion_from(settings: dict) -> MatchCriterion:
    try:
        if settings["criterion"] == "iou":
            return MatchCriterion(kind="iou_threshold", iou=settings["iou"])
        if settings["criterion"] == "half_diameter":
            return MatchCriterion(kind="center_half_diameter")
        return MatchCriterion(kind="center_in_radius", radius=settings["radius"])
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _eval_config(settings: dict) -> EvalConfig:
    try:
        return EvalConfig(
            iou_threshold=settings["iou"],
            fppi_thresholds=tuple(settings["fppi"]),
            ap_interpolation=settings["ap_interpolation"],
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _post_config(settings: dict) -> PostprocessConfig:
    raw = dict(settings["postprocess"])
    for key in ("min_score", "nms_iou"):
        if key in raw:
            raw[key] = _parse_number(raw[key])
    try:
        return PostprocessConfig(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad postprocess config: {e}") from e


def _pre_config(settings: dict) -> PreprocessConfig:
    raw = dict(settings["preprocess"])
    if "target_spacing" in raw:
        raw["target_spacing"] = tuple(_parse_number(v) for v in raw["target_spacing"])
    if "clip_percentiles" in raw and raw["clip_percentiles"] is not None:
        raw["clip_percentiles"] = tuple(_parse_number(v) for v in raw["clip_percentiles"])
    try:
        return PreprocessConfig(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad preprocess config: {e}") from e


def _load_manifest(settings: dict) -> DatasetManifest:
    return load_manifest(_require(settings, "manifest"), connectivity=settings["connectivity"])


def _load_method_predictions(settings: dict, manifest: DatasetManifest) -> dict[str, PredictionFile]:
    if not settings["pred"]:
        raise ConfigError("this command requires at least one --pred <id>=<path>")
    post = _post_config(settings)
    out: dict[str, PredictionFile] = {}
    for method_id, path in settings["pred"].items():
        pf = load_predictions(path, manifest, method_id=method_id, strict=settings["strict"])
        dets = apply_postprocess(list(pf.detections), post)
        out[method_id] = PredictionFile(method_id=method_id, detections=tuple(dets))
    return out


def _settings_echo(settings: dict, manifest: DatasetManifest, keys) -> dict:
    """Reproducibility echo for result files; never includes thread count."""
    echo = {k: settings[k] for k in keys}
    echo["criterion"] = settings["criterion"]
    echo["duplicate_policy"] = settings["duplicate_policy"]
    echo["official"] = settings["official"]
    echo["dataset_id"] = manifest.dataset_id
    echo["postprocess"] = dict(settings["postprocess"])
    return echo


def cmd_preprocess(settings: dict) -> None:
    manifest = _load_manifest(settings)
    out = _out_dir(settings)
    config = _pre_config(settings)
    (out / "images").mkdir(exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    images_written, masks_written = [], []
    for entry in manifest.images:
        if entry.image_path is not None:
            volume = read_volume(entry.image_path)
            write_volume(preprocess(volume, config, is_label=False),
                         out / "images" / f"{entry.image_id}.nii.gz")
            images_written.append(entry.image_id)
        if entry.mask_path is not None:
            mask = read_volume(entry.mask_path)
            write_volume(preprocess(mask, config, is_label=True),
                         out / "masks" / f"{entry.image_id}.nii.gz")
            masks_written.append(entry.image_id)
    provenance = {
        "schema_version": 1,
        "dataset_id": manifest.dataset_id,
        "parameters": {
            "target_spacing": list(config.target_spacing),
            "image_interpolation": config.image_interpolation,
            "clip_percentiles": list(config.clip_percentiles) if config.clip_percentiles else None,
            "normalize": config.normalize,
        },
        "images": sorted(images_written),
        "masks": sorted(masks_written),
    }
    write_json(provenance, out / "preprocess.json")
    print(f"preprocessed {len(images_written)} images and {len(masks_written)} masks -> {out}")


def _inverse_triple(triple, axis_order: str) -> list[float]:
    out = [0.0, 0.0, 0.0]
    for i, axis in enumerate("xyz"):
        out[axis_order.index(axis)] = float(triple[i])
    return out


def cmd_extract(settings: dict) -> None:
    manifest = _load_manifest(settings)
    out = _out_dir(settings)
    images = []
    n_objects = 0
    for entry in manifest.images:
        objects = manifest.ground_truth(entry.image_id)
        n_objects += len(objects)
        record = {"image_id": entry.image_id, "split": entry.split}
        if entry.image_path is not None:
            record["image"] = str(entry.image_path)
        record["boxes"] = [
            {
                "class_id": g.class_id,
                "min": _inverse_triple(g.box.min, manifest.axis_order),
                "max": _inverse_triple(g.box.max, manifest.axis_order),
                "center": _inverse_triple(g.center, manifest.axis_order),
                "diameter": g.diameter,
                "ignore": g.ignore,
            }
            for g in objects
        ]
        images.append(record)
    doc = {
        "schema_version": 1,
        "dataset_id": manifest.dataset_id,
        "axis_order": manifest.axis_order,
        "classes": {str(k): v for k, v in sorted(manifest.classes.items())},
        "images": images,
    }
    path = out / "extracted_manifest.json"
    write_json(doc, path)
    print(f"extracted {n_objects} objects from {len(images)} images -> {path}")


def cmd_evaluate(settings: dict) -> None:
    manifest = _load_manifest(settings)
    out = _out_dir(settings)
    ground_truth = manifest.ground_truth_by_image(settings["split"])
    if not ground_truth:
        raise ManifestError(f"no images in split {settings['split']!r}")
    criterion = _criterion_from(settings)
    config = _eval_config(settings)
    threads = _resolve_threads(settings)
    results = {}
    for method_id, pf in _load_method_predictions(settings, manifest).items():
        results[method_id] = evaluate_detections(
            ground_truth,
            pf.by_image(),
            criterion,
            config,
            duplicate_policy=settings["duplicate_policy"],
            threads=threads,
        )
    echo = _settings_echo(settings, manifest,
                          ("iou", "fppi", "ap_interpolation", "split", "radius", "strict"))
    paths = write_evaluation(out, manifest.dataset_id, results, echo)
    sys.stdout.write(Path(paths["csv"]).read_text())
    print(f"wrote {paths['json']} and {paths['csv']}")


def cmd_rank(settings: dict) -> None:
    manifest = _load_manifest(settings)
    out = _out_dir(settings)
    if len(settings["pred"]) < 2:
        raise ConfigError("rank requires at least two --pred <id>=<path> methods")
    baseline = settings["baseline"] or next(iter(settings["pred"]))
    if baseline not in settings["pred"]:
        raise ConfigError(f"baseline {baseline!r} is not among prediction ids")
    ground_truth = manifest.ground_truth_by_image(settings["split"])
    criterion = _criterion_from(settings)
    config = _eval_config(settings)
    threads = _resolve_threads(settings)
    runs = [
        MethodRun(method_id=mid, predictions=pf.by_image())
        for mid, pf in _load_method_predictions(settings, manifest).items()
    ]
    distributions = {
        metric: bootstrap_rank(
            runs,
            ground_truth,
            metric=metric,
            iterations=settings["iterations"],
            seed=settings["seed"],
            criterion=criterion,
            config=config,
            duplicate_policy=settings["duplicate_policy"],
            baseline_id=baseline,
            tie_rank=settings["tie_rank"],
            threads=threads,
        )
        for metric in ("map", "froc")
    }
    echo = _settings_echo(settings, manifest,
                          ("iou", "fppi", "ap_interpolation", "split", "radius",
                           "iterations", "seed", "tie_rank", "baseline"))
    echo["baseline"] = baseline
    paths = write_ranking(out, distributions, echo)
    sys.stdout.write(Path(paths["deltas"]).read_text())
    print(f"wrote {paths['json']}, {paths['histograms']}, {paths['deltas']}")


def cmd_report(settings: dict) -> None:
    out = _out_dir(settings)
    for path in render_figures(out):
        print(f"wrote {path}")


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
    "rank": cmd_rank,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        settings = resolve_settings(args)
        _COMMANDS[args.command](settings)
        return EXIT_OK
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ManifestError, PredictionFileError, NiftiFormatError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
