"""Management-recommendation knowledge base.

A KB is a JSON array of entries, each with a disease key and three
non-empty text lists: treatment, symptoms and sources. The file is
schema-validated once at load; lookups after that cannot fail for a
configured label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigurationError, MissingRecommendationError

REQUIRED_PARTS = ("treatment", "symptoms", "sources")


@dataclass(frozen=True)
class RecommendationEntry:
    disease: str
    treatment: tuple
    symptoms: tuple
    sources: tuple

    def to_dict(self) -> dict:
        return {
            "disease": self.disease,
            "treatment": list(self.treatment),
            "symptoms": list(self.symptoms),
            "sources": list(self.sources),
        }


class KnowledgeBase:
    def __init__(self, entries: dict) -> None:
        self.entries = dict(entries)

    def lookup(self, label: str) -> RecommendationEntry:
        try:
            return self.entries[label]
        except KeyError:
            raise MissingRecommendationError(f"no recommendation entry for {label!r}") from None

    def labels(self) -> list:
        return sorted(self.entries)

    def __contains__(self, label: str) -> bool:
        return label in self.entries


def _validate_entry(raw, where: str) -> RecommendationEntry:
    if not isinstance(raw, dict) or not isinstance(raw.get("disease"), str) or not raw["disease"]:
        raise ConfigurationError(f"{where}: every KB entry needs a non-empty disease key")
    parts = {}
    for part in REQUIRED_PARTS:
        values = raw.get(part)
        if (not isinstance(values, list) or not values
                or not all(isinstance(v, str) and v.strip() for v in values)):
            raise ConfigurationError(
                f"{where}: entry {raw['disease']!r} needs a non-empty string list for {part!r}"
            )
        parts[part] = tuple(values)
    return RecommendationEntry(raw["disease"], parts["treatment"], parts["symptoms"], parts["sources"])


def parse_kb(raw) -> KnowledgeBase:
    if not isinstance(raw, list) or not raw:
        raise ConfigurationError("knowledge base must be a non-empty JSON array of entries")
    entries = {}
    for i, item in enumerate(raw):
        entry = _validate_entry(item, f"entry {i}")
        if entry.disease in entries:
            raise ConfigurationError(f"duplicate KB entry for {entry.disease!r}")
        entries[entry.disease] = entry
    return KnowledgeBase(entries)


def load_kb(path) -> KnowledgeBase:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"knowledge base {path} is not valid JSON: {exc}") from exc
    return parse_kb(raw)


def default_kb() -> KnowledgeBase:
    """The knowledge base shipped with the package."""
    raw = resources.files("cacaodx").joinpath("kb/default_kb.json").read_text(encoding="utf-8")
    return parse_kb(json.loads(raw))


def default_kb_path() -> Path:
    return Path(str(resources.files("cacaodx").joinpath("kb/default_kb.json")))


def lookup(kb: KnowledgeBase, label: str) -> RecommendationEntry:
    return kb.lookup(label)
