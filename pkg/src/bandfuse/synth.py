"""Synthetic hyperspectral benchmark with planted band-group structure.

The band axis carries structure at two scales. Fine groups (adjacent runs
of bands) share one per-pixel value and alternate in base level, which is
what squared-Euclidean band distances resolve. Each pair of adjacent fine
groups forms a coarse group that shares a per-pixel correlated noise
draw, which is what band correlations resolve. The two dissimilarity
measures therefore recover different partitions and feed genuinely
different feature spaces downstream.

Classes differ in their across-group pattern and mildly in level. Every
pixel gets a random gain and offset (illumination variation): offsets and
gain inflate distances between samples but barely touch correlations,
while group-level noise does the opposite, so the two kernel families
make partly independent errors and fusing them helps.
"""

from __future__ import annotations

import numpy as np

from .datasets import HsiDataset


def make_synthetic(
    seed: int,
    n_per_class: int = 500,
    bands: int = 60,
    classes: int = 4,
    groups: int = 12,
    base_amplitude: float = 1.2,
    pattern_separation: float = 1.2,
    level_separation: float = 0.4,
    group_noise: float = 0.25,
    coarse_noise: float = 0.45,
    gain_noise: float = 0.12,
    offset_noise: float = 0.50,
    band_noise: float = 0.25,
):
    """Returns (dataset, planted_groups) where planted_groups is the list of
    fine-group column-index arrays the generator used."""
    rng = np.random.default_rng(seed)
    sizes = np.full(groups, bands // groups)
    sizes[: bands % groups] += 1
    edges = np.concatenate([[0], np.cumsum(sizes)])
    planted = [np.arange(edges[g], edges[g + 1]) for g in range(groups)]

    signs = np.where(np.arange(groups) % 2 == 0, 1.0, -1.0)
    base = signs * base_amplitude * (1.0 + rng.normal(0.0, 0.15, size=groups))

    def unit_pattern():
        v = rng.normal(0.0, 1.0, size=groups)
        return v / np.linalg.norm(v)

    protos = np.empty((classes, groups))
    spread = (classes - 1) / 2.0
    for cls in range(classes):
        pattern = pattern_separation * unit_pattern()
        level = level_separation * (cls - spread) / max(spread, 1.0)
        protos[cls] = base + pattern + level

    profile = np.empty(bands)
    group_of = np.empty(bands, dtype=np.int64)
    for g, idx in enumerate(planted):
        profile[idx] = 1.0 + 0.05 * np.linspace(-1.0, 1.0, idx.size)
        group_of[idx] = g
    coarse_of = group_of // 2
    n_coarse = int(coarse_of.max()) + 1

    n = n_per_class * classes
    labels = np.repeat(np.arange(1, classes + 1), n_per_class)
    group_vals = protos[labels - 1] + rng.normal(0.0, group_noise, size=(n, groups))
    coarse_vals = rng.normal(0.0, coarse_noise, size=(n, n_coarse))
    signal = group_vals[:, group_of] * profile + coarse_vals[:, coarse_of]
    gain = np.maximum(1.0 + rng.normal(0.0, gain_noise, size=(n, 1)), 0.2)
    offset = rng.normal(0.0, offset_noise, size=(n, 1))
    pixels = gain * signal + offset + rng.normal(0.0, band_noise, size=(n, bands))

    order = rng.permutation(n)
    ds = HsiDataset(
        pixels=pixels[order],
        labels=labels[order],
        band_ids=np.arange(1, bands + 1),
    )
    return ds, planted
