"""Training-side checkpoint: a numpy .npz archive of the weight arrays
plus the architecture text and labels.

This is the intermediate artifact `train` writes and `convert` turns
into the deployable flat container.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .arch import ArchSpec
from .errors import NotAModelError
from .nn import Model

ARCH_KEY = "__arch__"
LABELS_KEY = "__labels__"


def save_checkpoint(model: Model, path) -> None:
    arrays = {name: np.asarray(value, dtype=np.float32) for name, value in model.weights.items()}
    arrays[ARCH_KEY] = np.array(model.arch.to_text())
    arrays[LABELS_KEY] = np.array(json.dumps(list(model.arch.labels)))
    np.savez(path, **arrays)


def load_checkpoint(path) -> Model:
    path = Path(path)
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise NotAModelError(f"{path} is not a checkpoint archive: {exc}") from exc
    with archive:
        if ARCH_KEY not in archive or LABELS_KEY not in archive:
            raise NotAModelError(f"{path} lacks the architecture/labels entries")
        arch_text = archive[ARCH_KEY].item()
        labels = json.loads(archive[LABELS_KEY].item())
        arch = ArchSpec.from_text(arch_text, labels)
        weights = {name: archive[name] for name in archive.files
                   if name not in (ARCH_KEY, LABELS_KEY)}
    return Model(arch, weights)
