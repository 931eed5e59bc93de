"""Synthetic labeled cloud sequences for validation.

Each layer is a sum of smooth Gaussian bumps advected rigidly by its velocity
with periodic wrap, so rigid-translation ground truth is exact on the pixel
grid for integer displacements. Cloud pixels are where a layer's bump field
exceeds a fixed coverage threshold; where two layers overlap the warmer one
(the lower cloud) wins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imaging import Frame, SegmentationMask, write_sequence

COVERAGE_THRESHOLD = 0.5


@dataclass(frozen=True)
class LayerSpec:
    base_temp: float                  # Kelvin at full coverage
    velocity: tuple = (1.0, 0.0)      # (u, v) pixels/frame: +x right, +y down
    n_blobs: int = 6
    blob_scale: float = 8.0           # Gaussian bump sigma, pixels
    amplitude: float = 3.0            # Kelvin spread inside the layer


@dataclass(frozen=True)
class SynthSpec:
    shape: tuple = (60, 80)           # (height, width)
    frames: int = 31
    layers: tuple = (LayerSpec(base_temp=280.0),)
    noise_sigma: float = 0.5
    background_temp: float = 240.0
    change_point: int = None          # frame index where layer 2 appears
    seed: int = 0

    def __post_init__(self):
        if not 1 <= len(self.layers) <= 2:
            raise ValueError("layer count must be 1 or 2")
        if self.frames < 2:
            raise ValueError("at least 2 frames required")
        if len(self.layers) == 2 and self.noise_sigma > 0:
            sep = abs(self.layers[0].base_temp - self.layers[1].base_temp)
            if sep < 4.0 * self.noise_sigma:
                raise ValueError("layer temperatures must be separated by "
                                 ">= 4x noise_sigma")
        if self.change_point is not None and len(self.layers) != 2:
            raise ValueError("a change point requires two layers")


def _bump_field(shape, centers, scale):
    """Sum of periodic Gaussian bumps at the given centers."""
    m, n = shape
    ii, jj = np.mgrid[0:m, 0:n]
    total = np.zeros(shape)
    for ci, cj in centers:
        di = (ii - ci + m / 2) % m - m / 2
        dj = (jj - cj + n / 2) % n - n / 2
        total += np.exp(-(di * di + dj * dj) / (2.0 * scale * scale))
    return total


def generate(spec):
    """Sequence of (Frame, SegmentationMask, pixel labels) plus frame truth.

    Pixel labels: 0 = clear sky, k = covered by layer k (1-based, in spec
    order). Frame truth is the count of layers actually present. Deterministic
    in the seed.
    """
    rng = np.random.default_rng(spec.seed)
    m, n = spec.shape
    centers0 = [rng.uniform([0, 0], [m, n], size=(layer.n_blobs, 2))
                for layer in spec.layers]
    sequence = []
    truth = []
    for t in range(spec.frames):
        active = list(range(len(spec.layers)))
        if spec.change_point is not None and t < spec.change_point:
            active = [0]
        temp = np.full(spec.shape, spec.background_temp)
        labels = np.zeros(spec.shape, dtype=int)
        best_base = np.full(spec.shape, -np.inf)
        for k in active:
            layer = spec.layers[k]
            u, v = layer.velocity
            centers = centers0[k] + t * np.array([v, u])
            cov = _bump_field(spec.shape, centers, layer.blob_scale)
            cloudy = cov > COVERAGE_THRESHOLD
            # the warmer (lower) layer occludes where layers overlap
            take = cloudy & (layer.base_temp > best_base)
            temp[take] = (layer.base_temp
                          + layer.amplitude * (cov[take] - COVERAGE_THRESHOLD))
            labels[take] = k + 1
            best_base[take] = layer.base_temp
        if spec.noise_sigma > 0:
            temp = temp + rng.normal(0.0, spec.noise_sigma, size=spec.shape)
        mask = labels > 0
        sequence.append((Frame(temp, index=t), SegmentationMask(mask), labels))
        truth.append(len({k for k in labels.ravel() if k > 0}))
    return sequence, truth


def write_with_truth(directory, sequence, truth):
    """Write frames/masks via the imaging format plus a ground-truth JSON."""
    directory = Path(directory)
    manifest = write_sequence(directory,
                              [(f, mk) for f, mk, _ in sequence])
    for frame, _, labels in sequence:
        np.savetxt(directory / f"labels_{frame.index:04}.csv", labels,
                   fmt="%d", delimiter=",")
    truth_doc = {"frames": [{"t": f.index, "l": int(l),
                             "labels": f"labels_{f.index:04}.csv"}
                            for (f, _, _), l in zip(sequence, truth)]}
    truth_path = directory / "truth.json"
    truth_path.write_text(json.dumps(truth_doc, indent=2, sort_keys=True))
    return manifest, truth_path
