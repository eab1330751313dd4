"""Command-line entry point driving the full pipeline.

One subcommand per pipeline operation:

    ingest clean normalize split stats        dataset pipeline
    train convert describe                    training and packaging
    eval agreement                            evaluation
    diagnose serve                            deployment

Exit codes: 0 success, 1 domain error, 2 usage error. Configuration
precedence for the deployment commands: flags > CACAO_* environment
variables > --config JSON file > built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import checkpoint, container, dataset, kb, metrics
from .arch import ArchSpec, CompoundScalingConfig, cacaonet_b0, scale_arch
from .cascade import DEFAULT_TRIGGER, CascadeEngine
from .errors import CacaoDxError, ConfigurationError
from .service import DEFAULT_BIND, DEFAULT_MAX_UPLOAD, DEFAULT_PORT, DiagnosisService, ServiceConfig
from .store import DiagnosisStore
from .train import TrainConfig, train
from . import imageio

ENV_PREFIX = "CACAO_"


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name)


def _load_config_file(path):
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc


def _resolve(flag, env_name, file_cfg, file_key, default=None):
    if flag is not None:
        return flag
    env = _env(env_name)
    if env is not None:
        return env
    if file_key in file_cfg:
        return file_cfg[file_key]
    return default


def _parse_labels(raw):
    return tuple(part.strip() for part in raw.split(",") if part.strip())


# ---------------------------------------------------------------- pipeline


def cmd_ingest(args) -> int:
    sources = {}
    if args.sources:
        sources = json.loads(Path(args.sources).read_text(encoding="utf-8"))
    labels = _parse_labels(args.labels) if args.labels else ()
    manifest = dataset.ingest(args.root, sources, labels)
    dataset.save_manifest(manifest, args.output)
    print(f"ingested {len(manifest.entries)} records from {len(manifest.sources)} sources -> {args.output}")
    return 0


def cmd_clean(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    exclusions = []
    if args.exclude:
        exclusions = [l.strip() for l in Path(args.exclude).read_text(encoding="utf-8").splitlines() if l.strip()]
    cleaned = dataset.clean(manifest, args.blur_threshold, args.min_resolution, exclusions)
    dataset.save_manifest(cleaned, args.output)
    s = dataset.stats(cleaned)
    print(f"clean: {s.accepted} accepted, {s.rejected} rejected -> {args.output}")
    return 0


def cmd_normalize(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    normalized = dataset.normalize(manifest, args.out_dir, args.side)
    dataset.save_manifest(normalized, args.output)
    print(f"normalized images to {args.side}x{args.side} under {args.out_dir} -> {args.output}")
    return 0


def cmd_split(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    split_manifest = dataset.split(manifest, args.test_fraction, args.seed)
    dataset.save_manifest(split_manifest, args.output)
    s = dataset.stats(split_manifest)
    print(f"split: {s.by_split.get('train', 0)} train / {s.by_split.get('test', 0)} test -> {args.output}")
    return 0


def cmd_stats(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    s = dataset.stats(manifest)
    if args.json:
        print(json.dumps(s.to_dict(), indent=2))
    else:
        print(s.to_text(), end="")
    return 0


# ---------------------------------------------------------------- training


def cmd_train(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    if args.labels:
        labels = _parse_labels(args.labels)
    else:
        labels = tuple(sorted({e.label for e in manifest.labeled()}))
    if not labels:
        raise ConfigurationError("manifest has no labeled entries and no --labels given")

    if args.arch:
        arch = ArchSpec.from_text(Path(args.arch).read_text(encoding="utf-8"), labels)
    else:
        arch = cacaonet_b0(labels, input_size=args.resolution)
    if args.phi > 0:
        scaling = CompoundScalingConfig(phi=args.phi, alpha=args.alpha,
                                        beta=args.beta, gamma=args.gamma)
        arch = scale_arch(arch, scaling)

    cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
        augmentation=frozenset() if args.no_augment else frozenset(("hflip", "rotate15", "brightness20")),
        rebalance=not args.no_rebalance,
    )
    train_samples = dataset.load_split_samples(manifest, labels, "train", arch.input_size)
    val_samples = dataset.load_split_samples(manifest, labels, "test", arch.input_size)
    model, history = train(arch, train_samples, val_samples, cfg)

    checkpoint.save_checkpoint(model, args.output)
    history_path = args.history or str(Path(args.output).with_suffix(".history.csv"))
    Path(history_path).write_text(history.to_csv(), encoding="utf-8")
    best = history.by_epoch(history.best_epoch)
    print(f"trained {len(history.epochs)} epochs; best epoch {history.best_epoch}"
          f" (val_acc {best.val_acc:.4f}) -> {args.output}")
    return 0


def cmd_convert(args) -> int:
    model = checkpoint.load_checkpoint(args.checkpoint)
    container.save(model, args.output)
    print(f"wrote {args.output} ({container.file_digest(args.output)[:16]}...)")
    return 0


def cmd_describe(args) -> int:
    info = container.describe(args.model)
    print(f"container version {info.format_version}, {info.file_bytes} bytes,"
          f" payload {info.payload_bytes} bytes")
    print(f"labels: {', '.join(info.labels)}")
    print("architecture:")
    for line in info.arch_text.strip().splitlines():
        print(f"  {line}")
    print("tensors:")
    for name, shape, offset, length in info.tensors:
        print(f"  {name:<24} shape={'x'.join(map(str, shape)) or 'scalar':<14}"
              f" offset={offset:<10} bytes={length}")
    print(f"digest: {container.file_digest(args.model)}")
    return 0


# ---------------------------------------------------------------- evaluation


def cmd_eval(args) -> int:
    model = container.load(args.model)
    manifest = dataset.load_manifest(args.manifest)
    report = metrics.evaluate_model(model, manifest)
    if args.json:
        print(report.to_json(), end="")
    else:
        print(report.to_text(), end="")
    if args.matrix_csv:
        Path(args.matrix_csv).write_text(report.matrix_csv(), encoding="utf-8")
    return 0


def cmd_agreement(args) -> int:
    app, expert = [], []
    with open(args.csv, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            app.append((row["app_disease"], row.get("app_level") or None))
            expert.append((row["expert_disease"], row.get("expert_level") or None))
    result = metrics.agreement(app, expert)
    print(f"{result.matches}/{result.total} matches, agreement {result.rate * 100:.2f}%")
    return 0


# ---------------------------------------------------------------- deployment


def _service_config(args) -> ServiceConfig:
    file_cfg = _load_config_file(getattr(args, "config", None) or _env("CONFIG"))
    models_dir = _resolve(getattr(args, "models_dir", None), "MODELS_DIR", file_cfg, "models_dir")
    disease = _resolve(getattr(args, "disease_model", None), "DISEASE_MODEL", file_cfg, "disease_model")
    level = _resolve(getattr(args, "level_model", None), "LEVEL_MODEL", file_cfg, "level_model")
    if models_dir:
        disease = disease or str(Path(models_dir) / "disease.cdm")
        level = level or str(Path(models_dir) / "level.cdm")
    if not disease or not level:
        raise ConfigurationError("disease/level model paths are required"
                                 " (--models-dir or --disease-model/--level-model)")
    kb_path = _resolve(getattr(args, "kb", None), "KB", file_cfg, "kb", str(kb.default_kb_path()))
    store_dir = _resolve(getattr(args, "store", None), "STORE", file_cfg, "store", "diagnoses")
    bind = _resolve(getattr(args, "bind", None), "BIND", file_cfg, "bind", DEFAULT_BIND)
    port = int(_resolve(getattr(args, "port", None), "PORT", file_cfg, "port", DEFAULT_PORT))
    max_upload = int(_resolve(getattr(args, "max_upload", None), "MAX_UPLOAD",
                              file_cfg, "max_upload_bytes", DEFAULT_MAX_UPLOAD))
    ui_dir = _resolve(getattr(args, "ui", None), "UI", file_cfg, "ui_dir")
    return ServiceConfig(disease, level, kb_path, store_dir, bind, port, max_upload, ui_dir)


def cmd_diagnose(args) -> int:
    config = _service_config(args)
    config.validate()
    engine = CascadeEngine.load(config.disease_model, config.level_model, config.kb_path,
                                trigger_label=args.trigger)
    image = imageio.load_chw(args.image)
    diagnosis = engine.diagnose(image, image_ref=str(args.image))
    DiagnosisStore(config.store_dir).put(diagnosis)
    print(json.dumps(diagnosis.to_dict(), indent=2))
    return 0


def cmd_serve(args) -> int:
    config = _service_config(args)
    service = DiagnosisService(config)
    service.serve_forever()
    return 0


# ---------------------------------------------------------------- parser


def _add_deploy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--models-dir", dest="models_dir", help="directory with disease.cdm and level.cdm")
    p.add_argument("--disease-model", dest="disease_model")
    p.add_argument("--level-model", dest="level_model")
    p.add_argument("--kb", help="knowledge base JSON (default: shipped KB)")
    p.add_argument("--store", help="diagnosis store directory (default: ./diagnoses)")
    p.add_argument("--config", help="JSON config file (lowest precedence)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cacaodx",
                                     description="Offline cacao pod disease triage pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="walk a photo tree into a manifest")
    p.add_argument("root")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--sources", help="JSON mapping of source dir -> {name, date}")
    p.add_argument("--labels", help="comma-separated label names to recognise in paths")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("clean", help="reject blurred/low-res/foreign entries")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--blur-threshold", type=float, default=dataset.DEFAULT_BLUR_THRESHOLD)
    p.add_argument("--min-resolution", type=int, default=dataset.DEFAULT_MIN_RESOLUTION)
    p.add_argument("--exclude", help="file with one excluded image path per line")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("normalize", help="resize and rename accepted images")
    p.add_argument("manifest")
    p.add_argument("out_dir")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--side", type=int, default=dataset.DEFAULT_SIDE)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("split", help="stratified train/test assignment")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--test-fraction", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("stats", help="count records by source/label/split")
    p.add_argument("manifest")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a classifier from a split manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True, help="checkpoint .npz path")
    p.add_argument("--labels", help="comma-separated class labels (default: from manifest)")
    p.add_argument("--arch", help="architecture text file (default: built-in base)")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=1.2)
    p.add_argument("--beta", type=float, default=1.1)
    p.add_argument("--gamma", type=float, default=1.15)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-epochs", type=int, default=30)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--no-rebalance", action="store_true")
    p.add_argument("--history", help="history CSV path (default: next to checkpoint)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert", help="convert a checkpoint to a .cdm container")
    p.add_argument("checkpoint")
    p.add_argument("output")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("describe", help="print a container's header and directory")
    p.add_argument("model")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("eval", help="evaluate a container on a manifest's test split")
    p.add_argument("model")
    p.add_argument("manifest")
    p.add_argument("--json", action="store_true")
    p.add_argument("--matrix-csv", help="write the confusion matrix as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("agreement", help="app-vs-expert agreement from a CSV")
    p.add_argument("csv", help="columns: app_disease,app_level,expert_disease,expert_level")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("diagnose", help="diagnose one image and persist the result")
    p.add_argument("image")
    p.add_argument("--trigger", default=DEFAULT_TRIGGER)
    _add_deploy_flags(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("serve", help="run the local HTTP service")
    p.add_argument("--bind")
    p.add_argument("--port", type=int)
    p.add_argument("--max-upload", type=int, dest="max_upload")
    p.add_argument("--ui", help="directory with the field UI bundle to serve at /")
    p.add_argument("--seed", type=int, default=0, help="reserved for reproducible service runs")
    _add_deploy_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CacaoDxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
