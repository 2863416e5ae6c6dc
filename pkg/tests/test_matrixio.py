import numpy as np
import pytest

from bandfuse.errors import DataError
from bandfuse.matrixio import (
    read_matrix_text,
    read_pgm,
    write_matrix_text,
    write_permutation,
    write_pgm,
)

import oracles


def test_text_round_trip_nine_digits(tmp_path, rng):
    m = oracles.random_symmetric_dm(rng, 8)
    path = str(tmp_path / "m.txt")
    write_matrix_text(m, path)
    back = read_matrix_text(path)
    assert np.abs(back - m).max() < 1e-8  # 9 significant digits
    first = open(path).readline()
    assert len(first.split(",")) == 8


def test_pgm_round_trip_quantization(tmp_path, rng):
    m = np.clip(oracles.random_symmetric_dm(rng, 10), 0, 1)
    path = str(tmp_path / "m.pgm")
    write_pgm(m, path)
    with open(path, "rb") as fh:
        assert fh.readline() == b"P5\n"
    back = read_pgm(path)
    assert back.shape == m.shape
    assert np.abs(back - m).max() <= 0.5 / 255 + 1e-12


def test_pgm_exact_levels(tmp_path):
    m = np.array([[0.0, 1.0], [1.0, 0.5]])
    path = str(tmp_path / "levels.pgm")
    write_pgm(m, path)
    raw = open(path, "rb").read()
    assert raw.endswith(bytes([0, 255, 255, 128]))


def test_ragged_text_rejected(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1,2\n3\n")
    with pytest.raises(DataError, match="ragged"):
        read_matrix_text(str(path))


def test_permutation_sidecar(tmp_path):
    path = str(tmp_path / "perm.txt")
    write_permutation(np.array([3, 0, 2, 1]), path)
    assert open(path).read() == "3\n0\n2\n1\n"
