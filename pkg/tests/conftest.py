"""Shared fixtures: synthetic pod images, toy models, network guard."""

from __future__ import annotations

import contextlib
import socket
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from cacaodx.arch import ArchSpec, avgpool, conv, dense, flatten, relu, softmax_layer
from cacaodx.cascade import DEFAULT_LEVELS, DISEASE_LABELS
from cacaodx.nn import Model

# Class palettes for the synthetic pod dataset: (base RGB, blob RGB).
BLOB_STYLES = {
    "black-pod-rot": ((60, 110, 40), (25, 20, 15)),
    "healthy": ((70, 150, 50), (200, 180, 60)),
    "pod-borer": ((150, 120, 40), (90, 40, 30)),
}


def make_pod_image(label: str, rng: np.random.Generator, side: int = 64) -> Image.Image:
    """A textured colored blob on a textured background; classes differ
    by palette, so a small CNN separates them while blur scores stay high."""
    base, blob = BLOB_STYLES[label]
    img = np.empty((side, side, 3), dtype=np.float64)
    img[:] = base
    yy, xx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    cy, cx = rng.uniform(side * 0.3, side * 0.7, size=2)
    radius = rng.uniform(side * 0.2, side * 0.35)
    mask = (yy - cy) ** 2 + (xx - cx) ** 2 < radius**2
    img[mask] = blob
    img += rng.normal(0, 18, size=img.shape)  # texture keeps Laplacian variance high
    return Image.fromarray(np.clip(img, 0, 255).astype(np.uint8), "RGB")


def build_blob_tree(root: Path, per_class: int = 60, side: int = 64, seed: int = 0,
                    source: str = "field-a") -> None:
    """Write a labeled directory tree: root/<source>/<label>/img_k.png."""
    rng = np.random.default_rng(seed)
    for label in sorted(BLOB_STYLES):
        directory = root / source / label
        directory.mkdir(parents=True, exist_ok=True)
        for k in range(per_class):
            make_pod_image(label, rng, side).save(directory / f"img_{k:04d}.png")


def tiny_arch(labels, side: int = 16) -> ArchSpec:
    return ArchSpec(
        (conv(4), relu(), avgpool(2), flatten(), dense(len(labels)), softmax_layer()),
        side, 3, tuple(labels),
    )


def biased_model(labels, favored: str, side: int = 16) -> Model:
    """Zero weights except a dense bias that always predicts `favored`."""
    arch = tiny_arch(labels, side)
    model = Model.initialize(arch, seed=0)
    weights = {k: np.zeros_like(v) for k, v in model.weights.items()}
    dense_bias = next(k for k in weights if k.startswith("dense") and k.endswith("bias"))
    weights[dense_bias][list(labels).index(favored)] = 10.0
    return Model(arch, weights)


@pytest.fixture
def disease_labels():
    return DISEASE_LABELS


@pytest.fixture
def level_labels():
    return DEFAULT_LEVELS


@contextlib.contextmanager
def forbid_network(allow_loopback: bool = False):
    """Fail the test if anything opens a non-loopback connection."""
    real_connect = socket.socket.connect
    real_connect_ex = socket.socket.connect_ex

    def _check(address):
        host = address[0] if isinstance(address, tuple) else address
        if allow_loopback and str(host) in ("127.0.0.1", "localhost", "::1"):
            return
        raise AssertionError(f"unexpected network connection to {address!r}")

    def guarded_connect(self, address):
        _check(address)
        return real_connect(self, address)

    def guarded_connect_ex(self, address):
        _check(address)
        return real_connect_ex(self, address)

    socket.socket.connect = guarded_connect
    socket.socket.connect_ex = guarded_connect_ex
    try:
        yield
    finally:
        socket.socket.connect = real_connect
        socket.socket.connect_ex = real_connect_ex
