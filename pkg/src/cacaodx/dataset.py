"""Dataset pipeline: ingest, clean, normalize, split, rebalance, stats.

A manifest is the unit of work: one ImageRecord per image plus the
per-source accounting. Rejection is data, not failure; every step
preserves the invariant accepted + rejected == ingested. Manifests
persist as JSON lines plus a sources header file, so every step can
run as a separate CLI invocation.
"""

from __future__ import annotations

import dataclasses
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import imageio
from .errors import (
    CacaoDxError,
    ConfigurationError,
    EmptyClassError,
    InputError,
    StratificationError,
)
from .train import VARIANTS_BY_FLAG, apply_variant

UNLABELED = "unlabeled"
REJECTED_PREFIX = "rejected:"

DEFAULT_BLUR_THRESHOLD = 100.0
DEFAULT_MIN_RESOLUTION = 64
DEFAULT_SIDE = 64


@dataclass
class ImageRecord:
    path: str
    label: str = UNLABELED
    source: str = ""
    date: str = ""
    width: int = 0
    height: int = 0
    blur_score: float | None = None
    split: str = "none"          # train | test | none
    augment: str | None = None   # variant tag for oversampled duplicates

    @property
    def rejected(self) -> bool:
        return self.label.startswith(REJECTED_PREFIX)

    @property
    def accepted(self) -> bool:
        return not self.rejected

    def reject(self, reason: str) -> None:
        self.label = REJECTED_PREFIX + reason
        self.split = "none"

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ImageRecord":
        return cls(**json.loads(line))


@dataclass
class SourceInfo:
    name: str
    date: str = ""
    raw_count: int = 0


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    sources: list = field(default_factory=list)

    def check_accounting(self) -> None:
        raw = sum(1 for e in self.entries if e.augment is None)
        total = sum(s.raw_count for s in self.sources)
        if self.sources and raw != total:
            raise InputError(f"source raw counts sum to {total} but manifest has {raw} raw entries")

    def accepted(self) -> list:
        return [e for e in self.entries if e.accepted]

    def labeled(self) -> list:
        return [e for e in self.entries if e.accepted and e.label != UNLABELED]

    def copy(self) -> "DatasetManifest":
        return DatasetManifest(
            [dataclasses.replace(e) for e in self.entries],
            [dataclasses.replace(s) for s in self.sources],
        )


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for entry in manifest.entries:
            fh.write(entry.to_json() + "\n")
    sources_path = path.with_suffix(path.suffix + ".sources.json")
    with open(sources_path, "w", encoding="utf-8") as fh:
        json.dump([dataclasses.asdict(s) for s in manifest.sources], fh, indent=2)
        fh.write("\n")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(ImageRecord.from_json(line))
    sources = []
    sources_path = path.with_suffix(path.suffix + ".sources.json")
    if sources_path.exists():
        with open(sources_path, encoding="utf-8") as fh:
            sources = [SourceInfo(**s) for s in json.load(fh)]
    return DatasetManifest(entries, sources)


def ingest(root, source_metadata: dict | None = None,
           label_names=()) -> DatasetManifest:
    """Walk a directory tree of field photos into a manifest.

    Every top-level subdirectory is one collection source; deeper
    directory names matching a configured label pre-label the image.
    Undecodable image files become rejected:undecodable records.
    """
    root = Path(root)
    if not root.is_dir():
        raise OSError(f"dataset root {root} does not exist or is not a directory")
    source_metadata = source_metadata or {}
    label_names = set(label_names)

    files = sorted(
        p for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in imageio.IMAGE_SUFFIXES
    )
    entries = []
    raw_counts: Counter = Counter()
    source_order: list[str] = []
    source_dates: dict[str, str] = {}
    for path in files:
        rel = path.relative_to(root)
        source_key = rel.parts[0] if len(rel.parts) > 1 else "root"
        meta = source_metadata.get(source_key, {})
        source_name = meta.get("name", source_key)
        if source_name not in source_dates:
            source_order.append(source_name)
            source_dates[source_name] = meta.get("date", "")
        label = UNLABELED
        for part in rel.parts[1:-1]:
            if part in label_names:
                label = part
                break
        record = ImageRecord(path=str(path), label=label, source=source_name,
                             date=source_dates[source_name])
        img = imageio.try_open_image(path)
        if img is None:
            record.reject("undecodable")
        else:
            record.width, record.height = img.size
        raw_counts[source_name] += 1
        entries.append(record)

    sources = [SourceInfo(n, source_dates[n], raw_counts[n]) for n in source_order]
    manifest = DatasetManifest(entries, sources)
    manifest.check_accounting()
    return manifest


def clean(manifest: DatasetManifest, blur_threshold: float = DEFAULT_BLUR_THRESHOLD,
          min_resolution: int = DEFAULT_MIN_RESOLUTION, exclusions=()) -> DatasetManifest:
    """Reject foreign-object, low-resolution and blurred entries.

    The exclusion list is the manual channel for photos of things that
    are not cacao pods; blur is the variance of a 3x3 Laplacian over the
    0..255 grayscale image, rejected below the threshold.
    """
    out = manifest.copy()
    excluded = {str(p) for p in exclusions}
    for entry in out.entries:
        if entry.rejected:
            continue
        if entry.path in excluded:
            entry.reject("foreign")
            continue
        if entry.width < min_resolution or entry.height < min_resolution:
            entry.reject("low-res")
            continue
        entry.blur_score = imageio.laplacian_variance(imageio.grayscale_255(entry.path))
        if entry.blur_score < blur_threshold:
            entry.reject("blurred")
    return out


def normalize(manifest: DatasetManifest, out_dir, side: int = DEFAULT_SIDE) -> DatasetManifest:
    """Resize accepted labeled images to side x side PNGs named
    `<label>_<seq:05>.png` under `out_dir/<label>/`.

    Renaming is positional within each label (sorted by current path),
    so re-running on its own output is byte-identical.
    """
    out_dir = Path(out_dir)
    out = manifest.copy()
    by_label: dict[str, list[ImageRecord]] = {}
    for entry in out.entries:
        if entry.accepted and entry.label != UNLABELED and entry.augment is None:
            by_label.setdefault(entry.label, []).append(entry)

    written = set()
    for label in sorted(by_label):
        target_dir = out_dir / label
        target_dir.mkdir(parents=True, exist_ok=True)
        for seq, entry in enumerate(sorted(by_label[label], key=lambda e: e.path), start=1):
            target = target_dir / f"{label}_{seq:05d}.png"
            if target in written:
                raise CacaoDxError(f"normalize produced a duplicate name: {target}")
            written.add(target)
            img = imageio.open_image(entry.path)
            if img.size != (side, side):
                img = img.resize((side, side), Image.BILINEAR)
            img.save(target, format="PNG")
            entry.path = str(target)
            entry.width = entry.height = side
    return out


def split(manifest: DatasetManifest, test_fraction: float, seed: int = 0) -> DatasetManifest:
    """Stratified train/test assignment over accepted labeled entries.

    Each class contributes ceil(test_fraction * n) test samples, chosen
    by a seeded shuffle, so the same seed reproduces the same split.
    """
    if not 0 <= test_fraction < 1:
        raise ConfigurationError("test_fraction must lie in [0, 1)")
    out = manifest.copy()
    by_label: dict[str, list[ImageRecord]] = {}
    for entry in out.entries:
        if entry.accepted and entry.label != UNLABELED:
            by_label.setdefault(entry.label, []).append(entry)
    rng = np.random.default_rng(seed)
    for label in sorted(by_label):
        group = sorted(by_label[label], key=lambda e: e.path)
        if len(group) < 2:
            raise StratificationError(f"class {label!r} has {len(group)} sample(s); need at least 2")
        k = math.ceil(test_fraction * len(group))
        order = rng.permutation(len(group))
        test_idx = set(order[:k].tolist())
        for i, entry in enumerate(group):
            entry.split = "test" if i in test_idx else "train"
    return out


def rebalance(manifest: DatasetManifest, seed: int = 0,
              augmentation=("hflip", "rotate15", "brightness20"),
              labels=None) -> DatasetManifest:
    """Oversample minority classes to the majority count by appending
    duplicate records tagged with an augmentation variant.

    Only train-side entries are duplicated once a split exists; the
    variant for each duplicate is drawn from the seed.
    """
    out = manifest.copy()
    eligible = [e for e in out.entries
                if e.accepted and e.label != UNLABELED and e.split != "test"]
    by_label: dict[str, list[ImageRecord]] = {}
    for entry in eligible:
        by_label.setdefault(entry.label, []).append(entry)
    wanted = set(labels) if labels is not None else set(by_label)
    for label in sorted(wanted):
        if not by_label.get(label):
            raise EmptyClassError(f"class {label!r} has no samples to oversample from")
    if not by_label:
        return out

    variants = [v for f in ("hflip", "rotate15", "brightness20")
                if f in set(augmentation) for v in VARIANTS_BY_FLAG[f]]
    if not variants:
        raise ConfigurationError("rebalance needs at least one augmentation flag")
    target = max(len(v) for v in by_label.values())
    rng = np.random.default_rng(seed)
    for label in sorted(by_label):
        group = sorted(by_label[label], key=lambda e: e.path)
        need = target - len(group)
        for k in range(need):
            base = group[k % len(group)]
            dup = dataclasses.replace(base)
            dup.augment = variants[int(rng.integers(len(variants)))]
            out.entries.append(dup)
    return out


@dataclass
class ManifestStats:
    total: int
    accepted: int
    rejected: int
    by_source: list          # (name, date, raw_count)
    by_label: dict
    by_split: dict
    by_rejection: dict

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "by_source": [{"name": n, "date": d, "raw_count": c} for n, d, c in self.by_source],
            "by_label": dict(self.by_label),
            "by_split": dict(self.by_split),
            "by_rejection": dict(self.by_rejection),
        }

    def to_text(self) -> str:
        lines = ["source                        date            raw"]
        for name, date, count in self.by_source:
            lines.append(f"{name:<29} {date:<15} {count:>4}")
        lines.append(f"{'total':<29} {'':<15} {self.total:>4}")
        lines.append("")
        lines.append(f"accepted {self.accepted}  rejected {self.rejected}")
        if self.by_label:
            lines.append("by label:    " + "  ".join(f"{k}={v}" for k, v in sorted(self.by_label.items())))
        if self.by_split:
            lines.append("by split:    " + "  ".join(f"{k}={v}" for k, v in sorted(self.by_split.items())))
        if self.by_rejection:
            lines.append("by rejection: " + "  ".join(f"{k}={v}" for k, v in sorted(self.by_rejection.items())))
        return "\n".join(lines) + "\n"


def stats(manifest: DatasetManifest) -> ManifestStats:
    """Count records by source, label, split and rejection reason."""
    manifest.check_accounting()
    by_label: Counter = Counter()
    by_split: Counter = Counter()
    by_rejection: Counter = Counter()
    accepted = rejected = 0
    for entry in manifest.entries:
        if entry.rejected:
            rejected += 1
            by_rejection[entry.label[len(REJECTED_PREFIX):]] += 1
        else:
            accepted += 1
            by_label[entry.label] += 1
            by_split[entry.split] += 1
    by_source = [(s.name, s.date, s.raw_count) for s in manifest.sources]
    return ManifestStats(
        total=len(manifest.entries),
        accepted=accepted,
        rejected=rejected,
        by_source=by_source,
        by_label=dict(by_label),
        by_split=dict(by_split),
        by_rejection=dict(by_rejection),
    )


def load_split_samples(manifest: DatasetManifest, labels, split_name: str,
                       side: int = DEFAULT_SIDE) -> list:
    """Materialize (CHW float image, label index) pairs for one split,
    applying the augmentation variant of oversampled duplicates."""
    label_index = {label: i for i, label in enumerate(labels)}
    samples = []
    for entry in manifest.entries:
        if not entry.accepted or entry.split != split_name:
            continue
        if entry.label not in label_index:
            raise InputError(f"manifest label {entry.label!r} not in the configured labels")
        image = imageio.load_chw(entry.path, side)
        if entry.augment:
            image = apply_variant(image, entry.augment)
        samples.append((image, label_index[entry.label]))
    return samples
