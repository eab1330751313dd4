import json

import numpy as np
import pytest

from cacaodx import container
from cacaodx.cascade import CascadeEngine, Diagnosis
from cacaodx.errors import ConfigurationError, MissingRecommendationError
from cacaodx.kb import KnowledgeBase, default_kb, load_kb, lookup, parse_kb
from cacaodx.nn import Model
from conftest import biased_model, forbid_network, tiny_arch

DISEASES = ("black-pod-rot", "healthy", "pod-borer")
LEVELS = ("level-1", "level-2", "level-3")


@pytest.fixture
def engine():
    return CascadeEngine(
        biased_model(DISEASES, "healthy"),
        Model.initialize(tiny_arch(LEVELS), seed=1),
        default_kb(),
    )


def trigger_engine():
    return CascadeEngine(
        biased_model(DISEASES, "black-pod-rot"),
        biased_model(LEVELS, "level-2"),
        default_kb(),
    )


def _image(seed=0, side=16):
    return np.random.default_rng(seed).random((3, side, side)).astype(np.float32)


# ---------------------------------------------------------------- kb


def test_default_kb_covers_diseases():
    kb = default_kb()
    for label in DISEASES:
        entry = kb.lookup(label)
        assert entry.treatment and entry.symptoms and entry.sources


def test_healthy_entry_is_preventive():
    entry = default_kb().lookup("healthy")
    text = " ".join(entry.treatment).lower()
    assert "prevent" in text or "no treatment" in text


def test_lookup_unknown_label():
    with pytest.raises(MissingRecommendationError):
        lookup(default_kb(), "unknown-disease")


def test_kb_schema_validation(tmp_path):
    bad = [{"disease": "x", "treatment": [], "symptoms": ["s"], "sources": ["s"]}]
    path = tmp_path / "kb.json"
    path.write_text(json.dumps(bad), encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_kb(path)
    with pytest.raises(ConfigurationError):
        parse_kb([])
    with pytest.raises(OSError):
        load_kb(tmp_path / "missing.json")


# ---------------------------------------------------------------- engine invariants


def test_trigger_must_be_a_disease_label():
    with pytest.raises(ConfigurationError):
        CascadeEngine(biased_model(DISEASES, "healthy"),
                      biased_model(LEVELS, "level-1"),
                      default_kb(), trigger_label="rust")


def test_every_disease_label_needs_kb_entry():
    kb = KnowledgeBase({k: v for k, v in default_kb().entries.items() if k != "pod-borer"})
    with pytest.raises(ConfigurationError):
        CascadeEngine(biased_model(DISEASES, "healthy"),
                      biased_model(LEVELS, "level-1"), kb)


# ---------------------------------------------------------------- diagnose


def test_healthy_has_no_stage2(engine):
    diagnosis = engine.diagnose(_image())
    assert diagnosis.stage1_label == "healthy"
    assert diagnosis.stage2_label is None
    assert "stage2" not in diagnosis.to_dict()
    assert diagnosis.recommendation_key == "healthy"


def test_trigger_runs_stage2():
    diagnosis = trigger_engine().diagnose(_image(1))
    assert diagnosis.stage1_label == "black-pod-rot"
    assert diagnosis.stage2_label == "level-2"
    assert diagnosis.stage2_confidence is not None
    assert set(diagnosis.stage2_confidence) == set(LEVELS)


def test_confidence_vectors_sum_to_one(engine):
    diagnosis = trigger_engine().diagnose(_image(2))
    assert sum(diagnosis.stage1_confidence.values()) == pytest.approx(1.0, abs=1e-6)
    assert sum(diagnosis.stage2_confidence.values()) == pytest.approx(1.0, abs=1e-6)


def test_argmax_tie_takes_lowest_index():
    # all-zero weights give exactly uniform probabilities
    arch = tiny_arch(DISEASES)
    init = Model.initialize(arch, seed=0)
    uniform = Model(arch, {k: np.zeros_like(v) for k, v in init.weights.items()})
    engine = CascadeEngine(uniform, biased_model(LEVELS, "level-1"), default_kb())
    diagnosis = engine.diagnose(_image(3))
    assert diagnosis.stage1_label == DISEASES[0]


def test_diagnose_resizes_internally(engine):
    big = np.random.default_rng(4).random((3, 50, 50)).astype(np.float32)
    diagnosis = engine.diagnose(big)
    assert diagnosis.stage1_label == "healthy"


def test_diagnose_offline(engine):
    with forbid_network():
        for seed in range(20):
            engine.diagnose(_image(seed))


def test_cascade_invariant_randomized():
    engine = CascadeEngine(
        Model.initialize(tiny_arch(DISEASES), seed=7),
        Model.initialize(tiny_arch(LEVELS), seed=8),
        default_kb(),
    )
    rng = np.random.default_rng(9)
    seen_trigger = False
    with forbid_network():
        for _ in range(100):
            diagnosis = engine.diagnose(rng.random((3, 16, 16)).astype(np.float32))
            is_trigger = diagnosis.stage1_label == engine.trigger_label
            seen_trigger = seen_trigger or is_trigger
            assert (diagnosis.stage2_label is not None) == is_trigger
            assert diagnosis.recommendation_key in engine.kb
    assert isinstance(seen_trigger, bool)


def test_diagnosis_round_trips_as_dict():
    diagnosis = trigger_engine().diagnose(_image(5), image_ref="field/pod-001.png")
    clone = Diagnosis.from_dict(json.loads(json.dumps(diagnosis.to_dict())))
    assert clone == diagnosis
    assert clone.image_ref == "field/pod-001.png"


def test_image_ref_defaults_to_digest(engine):
    diagnosis = engine.diagnose(_image(6))
    assert diagnosis.image_ref.startswith("sha256:")


def test_model_versions_from_containers(tmp_path):
    disease_path = tmp_path / "disease.cdm"
    level_path = tmp_path / "level.cdm"
    container.save(biased_model(DISEASES, "healthy"), disease_path)
    container.save(biased_model(LEVELS, "level-1"), level_path)
    engine = CascadeEngine.load(disease_path, level_path, default_kb())
    assert engine.model_versions["disease"] == container.file_digest(disease_path)
    assert engine.model_versions["level"] == container.file_digest(level_path)
    diagnosis = engine.diagnose(_image(7))
    assert diagnosis.model_versions == engine.model_versions
