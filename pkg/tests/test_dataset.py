import numpy as np
import pytest
from PIL import Image

from cacaodx import dataset
from cacaodx.dataset import (
    DatasetManifest,
    ImageRecord,
    SourceInfo,
    clean,
    ingest,
    load_manifest,
    normalize,
    rebalance,
    save_manifest,
    split,
    stats,
)
from cacaodx.errors import EmptyClassError, StratificationError
from conftest import make_pod_image

LABELS = ("black-pod-rot", "healthy", "pod-borer")


def write_tree(root, per_class=4, side=64, seed=0):
    rng = np.random.default_rng(seed)
    for label in LABELS:
        d = root / "field-a" / label
        d.mkdir(parents=True, exist_ok=True)
        for k in range(per_class):
            make_pod_image(label, rng, side).save(d / f"img_{k:03d}.png")


# ---------------------------------------------------------------- ingest


def test_ingest_counts_and_labels(tmp_path):
    write_tree(tmp_path, per_class=3)
    manifest = ingest(tmp_path, {"field-a": {"name": "Field A", "date": "2020-07-02"}}, LABELS)
    assert len(manifest.entries) == 9
    assert manifest.sources == [SourceInfo("Field A", "2020-07-02", 9)]
    assert {e.label for e in manifest.entries} == set(LABELS)
    assert all(e.width == 64 and e.height == 64 for e in manifest.entries)


def test_ingest_missing_root(tmp_path):
    with pytest.raises(OSError):
        ingest(tmp_path / "nope")


def test_ingest_empty_directory(tmp_path):
    manifest = ingest(tmp_path)
    assert manifest.entries == []
    assert stats(manifest).total == 0


def test_ingest_corrupt_file_rejected(tmp_path):
    write_tree(tmp_path, per_class=2)
    truncated = tmp_path / "field-a" / "healthy" / "broken.png"
    good = tmp_path / "field-a" / "healthy" / "img_000.png"
    truncated.write_bytes(good.read_bytes()[:60])
    manifest = ingest(tmp_path, label_names=LABELS)
    rejected = [e for e in manifest.entries if e.rejected]
    assert len(manifest.entries) == 7
    assert len(rejected) == 1
    assert rejected[0].label == "rejected:undecodable"
    assert rejected[0].split == "none"


def test_ingest_deterministic_order(tmp_path):
    write_tree(tmp_path, per_class=2)
    a = ingest(tmp_path, label_names=LABELS)
    b = ingest(tmp_path, label_names=LABELS)
    assert [e.path for e in a.entries] == [e.path for e in b.entries]


# ---------------------------------------------------------------- clean


def _uniform_png(path, value=128, side=32):
    Image.new("L", (side, side), value).save(path)


def test_uniform_image_scores_zero_blur(tmp_path):
    write_tree(tmp_path, per_class=2)
    flat = tmp_path / "field-a" / "healthy" / "flat.png"
    _uniform_png(flat, side=64)
    manifest = ingest(tmp_path, label_names=LABELS)
    cleaned = clean(manifest, blur_threshold=0.5, min_resolution=8)
    flat_entry = next(e for e in cleaned.entries if "flat" in e.path)
    assert flat_entry.blur_score == 0.0
    assert flat_entry.label == "rejected:blurred"


def test_checkerboard_sharper_than_uniform(tmp_path):
    checker = np.indices((32, 32)).sum(axis=0) % 2 * 255
    Image.fromarray(checker.astype(np.uint8), "L").save(tmp_path / "checker.png")
    _uniform_png(tmp_path / "flat.png")
    manifest = ingest(tmp_path)
    cleaned = clean(manifest, blur_threshold=0.0, min_resolution=8)
    scores = {e.path.split("/")[-1]: e.blur_score for e in cleaned.entries}
    assert scores["checker.png"] > scores["flat.png"]


def test_exclusion_list_rejects_foreign(tmp_path):
    write_tree(tmp_path, per_class=2)
    manifest = ingest(tmp_path, label_names=LABELS)
    victim = manifest.entries[0].path
    cleaned = clean(manifest, blur_threshold=0.0, min_resolution=8, exclusions=[victim])
    assert next(e for e in cleaned.entries if e.path == victim).label == "rejected:foreign"


def test_low_resolution_rejected(tmp_path):
    write_tree(tmp_path, per_class=2)
    small = tmp_path / "field-a" / "healthy" / "small.png"
    make_pod_image("healthy", np.random.default_rng(0), 16).save(small)
    manifest = ingest(tmp_path, label_names=LABELS)
    cleaned = clean(manifest, blur_threshold=0.0, min_resolution=32)
    assert next(e for e in cleaned.entries if "small" in e.path).label == "rejected:low-res"


def test_clean_conserves_counts(tmp_path):
    write_tree(tmp_path, per_class=3)
    _uniform_png(tmp_path / "field-a" / "healthy" / "flat.png", side=64)
    manifest = ingest(tmp_path, label_names=LABELS)
    cleaned = clean(manifest, blur_threshold=10.0, min_resolution=8)
    s = stats(cleaned)
    assert s.accepted + s.rejected == s.total == len(manifest.entries)


# ---------------------------------------------------------------- normalize


def test_normalize_names_and_sizes(tmp_path):
    write_tree(tmp_path, per_class=2, side=48)
    manifest = ingest(tmp_path, label_names=LABELS)
    out_dir = tmp_path / "norm"
    normalized = normalize(manifest, out_dir, side=32)
    first = sorted(e.path for e in normalized.entries if e.label == "healthy")[0]
    assert first.endswith("healthy/healthy_00001.png")
    with Image.open(first) as img:
        assert img.size == (32, 32)
    assert all(e.width == e.height == 32 for e in normalized.labeled())


def test_normalize_skips_rejected_and_unlabeled(tmp_path):
    write_tree(tmp_path, per_class=2)
    loose = tmp_path / "field-a" / "notes.png"  # unlabeled (directly under source)
    make_pod_image("healthy", np.random.default_rng(1), 64).save(loose)
    manifest = ingest(tmp_path, label_names=LABELS)
    manifest.entries[0].reject("foreign")
    out_dir = tmp_path / "norm"
    normalized = normalize(manifest, out_dir, side=32)
    written = sorted(p.name for p in out_dir.rglob("*.png"))
    assert len(written) == 5  # 6 labeled - 1 rejected
    rejected_entry = next(e for e in normalized.entries if e.rejected)
    assert not rejected_entry.path.startswith(str(out_dir))


def test_normalize_idempotent_byte_identical(tmp_path):
    write_tree(tmp_path, per_class=2, side=40)
    manifest = ingest(tmp_path, label_names=LABELS)
    out_dir = tmp_path / "norm"
    once = normalize(manifest, out_dir, side=32)
    before = {p: p.read_bytes() for p in out_dir.rglob("*.png")}
    twice = normalize(once, out_dir, side=32)
    after = {p: p.read_bytes() for p in out_dir.rglob("*.png")}
    assert before == after
    assert [e.path for e in once.entries] == [e.path for e in twice.entries]


# ---------------------------------------------------------------- split


def _labeled_manifest(counts: dict) -> DatasetManifest:
    entries = []
    for label, n in counts.items():
        for k in range(n):
            entries.append(ImageRecord(path=f"{label}/{k:04d}.png", label=label,
                                       width=64, height=64))
    return DatasetManifest(entries, [])


def test_split_counts():
    manifest = _labeled_manifest({"healthy": 100})
    out = split(manifest, 0.15, seed=1)
    tests = [e for e in out.entries if e.split == "test"]
    trains = [e for e in out.entries if e.split == "train"]
    assert (len(tests), len(trains)) == (15, 85)


def test_split_zero_fraction_all_train():
    out = split(_labeled_manifest({"a": 4, "b": 5}), 0.0, seed=0)
    assert all(e.split == "train" for e in out.entries)


def test_split_deterministic():
    manifest = _labeled_manifest({"a": 30, "b": 20})
    one = split(manifest, 0.25, seed=9)
    two = split(manifest, 0.25, seed=9)
    assert [e.split for e in one.entries] == [e.split for e in two.entries]


def test_split_stratified_within_one_sample():
    manifest = _labeled_manifest({"a": 40, "b": 25, "c": 11})
    out = split(manifest, 0.2, seed=3)
    for label, n in (("a", 40), ("b", 25), ("c", 11)):
        k = sum(1 for e in out.entries if e.label == label and e.split == "test")
        assert abs(k - 0.2 * n) <= 1


def test_split_tiny_class_rejected():
    with pytest.raises(StratificationError):
        split(_labeled_manifest({"a": 10, "b": 1}), 0.2, seed=0)


# ---------------------------------------------------------------- rebalance


def test_rebalance_counting_example():
    manifest = _labeled_manifest({"a": 4, "b": 2})
    out = rebalance(manifest, seed=0)
    counts = {}
    for e in out.entries:
        counts[e.label] = counts.get(e.label, 0) + 1
    assert counts == {"a": 4, "b": 4}
    assert len(out.entries) == 8
    assert sum(1 for e in out.entries if e.augment) == 2


def test_rebalance_balanced_is_noop():
    manifest = _labeled_manifest({"a": 3, "b": 3})
    out = rebalance(manifest, seed=0)
    assert len(out.entries) == 6
    assert all(e.augment is None for e in out.entries)


def test_rebalance_never_removes():
    manifest = _labeled_manifest({"a": 7, "b": 3, "c": 5})
    out = rebalance(manifest, seed=2)
    for label in ("a", "b", "c"):
        assert sum(1 for e in out.entries if e.label == label) == 7


def test_rebalance_empty_class_error():
    manifest = _labeled_manifest({"a": 3})
    with pytest.raises(EmptyClassError):
        rebalance(manifest, labels=("a", "b"))


def test_rebalance_deterministic():
    manifest = _labeled_manifest({"a": 6, "b": 2})
    one = rebalance(manifest, seed=5)
    two = rebalance(manifest, seed=5)
    assert [(e.path, e.augment) for e in one.entries] == [(e.path, e.augment) for e in two.entries]


def test_rebalance_skips_test_split():
    manifest = split(_labeled_manifest({"a": 10, "b": 4}), 0.25, seed=0)
    out = rebalance(manifest, seed=0)
    extra = [e for e in out.entries if e.augment]
    assert extra and all(e.split != "test" for e in extra)


# ---------------------------------------------------------------- stats + io


def test_stats_empty_manifest():
    s = stats(DatasetManifest())
    assert s.total == s.accepted == s.rejected == 0
    assert s.by_label == {} and s.by_rejection == {}


def test_stats_grouping(tmp_path):
    write_tree(tmp_path, per_class=2)
    manifest = ingest(tmp_path, label_names=LABELS)
    manifest.entries[0].reject("blurred")
    s = stats(manifest)
    assert s.total == 6
    assert s.accepted == 5
    assert s.by_rejection == {"blurred": 1}
    assert sum(s.by_label.values()) == 5
    assert "total" in s.to_text()


def test_manifest_round_trip(tmp_path):
    write_tree(tmp_path, per_class=2)
    manifest = ingest(tmp_path, {"field-a": {"name": "A", "date": "2020-09-12"}}, LABELS)
    manifest.entries[1].reject("foreign")
    path = tmp_path / "manifest.jsonl"
    save_manifest(manifest, path)
    loaded = load_manifest(path)
    assert loaded.entries == manifest.entries
    assert loaded.sources == manifest.sources


def test_load_split_samples(tmp_path):
    write_tree(tmp_path, per_class=3)
    manifest = split(ingest(tmp_path, label_names=LABELS), 0.34, seed=0)
    samples = dataset.load_split_samples(manifest, LABELS, "test", side=32)
    assert len(samples) == 6  # ceil(0.34 * 3) = 2 per class
    for image, label in samples:
        assert image.shape == (3, 32, 32)
        assert image.dtype == np.float32
        assert 0 <= label < len(LABELS)
        assert 0.0 <= image.min() and image.max() <= 1.0
