import numpy as np

from bandfuse.datasets import SplitSpec, make_split
from bandfuse.grouping import CloddParams, clodd_c
from bandfuse.proximity import normalize_dm, squared_euclidean_dm
from bandfuse.synth import make_synthetic


def test_shapes_and_labels():
    ds, planted = make_synthetic(0, n_per_class=50, bands=24, classes=3, groups=4)
    assert ds.n_rows == 150 and ds.n_bands == 24 and ds.n_classes == 3
    assert np.concatenate(planted).tolist() == list(range(24))
    assert ds.class_counts().tolist() == [50, 50, 50]


def test_deterministic_per_seed():
    a, _ = make_synthetic(5, n_per_class=20, bands=12, classes=2, groups=3)
    b, _ = make_synthetic(5, n_per_class=20, bands=12, classes=2, groups=3)
    np.testing.assert_array_equal(a.pixels, b.pixels)
    c, _ = make_synthetic(6, n_per_class=20, bands=12, classes=2, groups=3)
    assert not np.array_equal(a.pixels, c.pixels)


def test_planted_groups_recoverable():
    hits = 0
    for seed in range(5):
        ds, planted = make_synthetic(seed, n_per_class=120)
        train, val, _ = make_split(ds, SplitSpec(seed, 0.2, 0.5))
        rows = np.sort(np.concatenate([train, val]))
        dm = normalize_dm(squared_euclidean_dm(ds, rows))
        part = clodd_c(
            dm,
            CloddParams(0.5, 3.0, 5, 20, search="annealed", seed=seed, restarts=6,
                        proposals_per_band=100),
        )
        if [g.tolist() for g in part.groups] == [g.tolist() for g in planted]:
            hits += 1
    assert hits >= 4
