"""Two-stage diagnosis cascade.

Stage 1 classifies the pod image into a disease label. Only when that
label is the configured trigger (black pod rot by default) does stage 2
run the infection-level model on the same image. Everything happens
in-process on local files; the engine performs no network I/O.
"""

from __future__ import annotations

import hashlib
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import container, imageio
from .errors import ConfigurationError
from .kb import KnowledgeBase
from .nn import Model
from .tensor import Tensor

DISEASE_LABELS = ("black-pod-rot", "healthy", "pod-borer")
DEFAULT_TRIGGER = "black-pod-rot"
DEFAULT_LEVELS = ("level-1", "level-2", "level-3")


@dataclass(frozen=True)
class Diagnosis:
    id: str
    timestamp: str
    image_ref: str
    stage1_label: str
    stage1_confidence: dict
    stage2_label: str | None
    stage2_confidence: dict | None
    recommendation_key: str
    model_versions: dict

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "timestamp": self.timestamp,
            "image_ref": self.image_ref,
            "stage1": {"label": self.stage1_label, "confidence": self.stage1_confidence},
            "recommendation_key": self.recommendation_key,
            "model_versions": self.model_versions,
        }
        if self.stage2_label is not None:
            out["stage2"] = {"label": self.stage2_label, "confidence": self.stage2_confidence}
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "Diagnosis":
        stage2 = raw.get("stage2")
        return cls(
            id=raw["id"],
            timestamp=raw["timestamp"],
            image_ref=raw["image_ref"],
            stage1_label=raw["stage1"]["label"],
            stage1_confidence=dict(raw["stage1"]["confidence"]),
            stage2_label=stage2["label"] if stage2 else None,
            stage2_confidence=dict(stage2["confidence"]) if stage2 else None,
            recommendation_key=raw["recommendation_key"],
            model_versions=dict(raw["model_versions"]),
        )


def _confidences(labels, probs) -> dict:
    return {label: float(p) for label, p in zip(labels, probs)}


class CascadeEngine:
    """Immutable pair of loaded models plus the recommendation KB.

    All configuration problems (missing trigger label, disease label
    without a KB entry) surface here, never during diagnose calls.
    """

    def __init__(self, disease_model: Model, level_model: Model, kb: KnowledgeBase,
                 trigger_label: str = DEFAULT_TRIGGER,
                 model_versions: dict | None = None) -> None:
        if trigger_label not in disease_model.arch.labels:
            raise ConfigurationError(
                f"trigger label {trigger_label!r} is not one of the disease labels"
                f" {list(disease_model.arch.labels)}"
            )
        missing = [l for l in disease_model.arch.labels if l not in kb]
        if missing:
            raise ConfigurationError(f"knowledge base lacks entries for {missing}")
        self.disease_model = disease_model
        self.level_model = level_model
        self.kb = kb
        self.trigger_label = trigger_label
        self.model_versions = dict(model_versions or {"disease": "unversioned", "level": "unversioned"})

    @classmethod
    def load(cls, disease_path, level_path, kb_or_path,
             trigger_label: str = DEFAULT_TRIGGER) -> "CascadeEngine":
        from .kb import load_kb  # local import keeps module load light

        kb = kb_or_path if isinstance(kb_or_path, KnowledgeBase) else load_kb(kb_or_path)
        disease_model = container.load(disease_path)
        level_model = container.load(level_path)
        versions = {
            "disease": container.file_digest(disease_path),
            "level": container.file_digest(level_path),
        }
        return cls(disease_model, level_model, kb, trigger_label, versions)

    def _prepare(self, image, model: Model) -> np.ndarray:
        arr = image.array if isinstance(image, Tensor) else np.asarray(image, dtype=np.float32)
        if arr.ndim != 3:
            raise ConfigurationError(f"diagnose expects a CHW image, got shape {arr.shape}")
        arr = arr.astype(np.float32, copy=False)
        side = model.arch.input_size
        if arr.shape[1] != side or arr.shape[2] != side:
            arr = imageio.resize_chw(arr, side)
        return arr[np.newaxis]

    def diagnose(self, image, image_ref: str | None = None) -> Diagnosis:
        """Classify one CHW image (resized internally if needed)."""
        if image_ref is None:
            arr = image.array if isinstance(image, Tensor) else np.asarray(image, dtype=np.float32)
            image_ref = "sha256:" + hashlib.sha256(
                np.ascontiguousarray(arr, dtype=np.float32).tobytes()
            ).hexdigest()

        probs1 = self.disease_model.forward(self._prepare(image, self.disease_model))[0]
        stage1_label = self.disease_model.arch.labels[int(np.argmax(probs1))]

        stage2_label = None
        stage2_conf = None
        if stage1_label == self.trigger_label:
            probs2 = self.level_model.forward(self._prepare(image, self.level_model))[0]
            stage2_label = self.level_model.arch.labels[int(np.argmax(probs2))]
            stage2_conf = _confidences(self.level_model.arch.labels, probs2)

        return Diagnosis(
            id=uuid.uuid4().hex,
            timestamp=datetime.now(timezone.utc).isoformat(),
            image_ref=image_ref,
            stage1_label=stage1_label,
            stage1_confidence=_confidences(self.disease_model.arch.labels, probs1),
            stage2_label=stage2_label,
            stage2_confidence=stage2_conf,
            recommendation_key=stage1_label,
            model_versions=self.model_versions,
        )

    def diagnose_bytes(self, data: bytes, image_ref: str | None = None) -> Diagnosis | None:
        """Decode an uploaded PNG/JPEG and diagnose it; None if undecodable."""
        img = imageio.decode_bytes(data)
        if img is None:
            return None
        if image_ref is None:
            image_ref = "sha256:" + hashlib.sha256(data).hexdigest()
        return self.diagnose(imageio.pil_to_chw(img), image_ref)


def diagnose(engine: CascadeEngine, image, image_ref: str | None = None) -> Diagnosis:
    return engine.diagnose(image, image_ref)
