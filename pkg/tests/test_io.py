import numpy as np
import pytest

from blockpr.core import KRBDMatrix, make_krbd
from blockpr.io import load_bpr1, load_csv, save_bpr1, save_csv
from blockpr.rng import complex_normal, generator


def test_vector_round_trip(tmp_path):
    v = complex_normal(generator(1), 17)
    save_bpr1(tmp_path / "v.bpr1", v)
    back = load_bpr1(tmp_path / "v.bpr1")
    assert back.ndim == 1
    assert back.tobytes() == v.tobytes()


def test_dense_round_trip(tmp_path):
    m = complex_normal(generator(2), (5, 3))
    save_bpr1(tmp_path / "m.bpr1", m)
    back = load_bpr1(tmp_path / "m.bpr1")
    assert back.shape == (5, 3)
    assert np.array_equal(back, m)


def test_krbd_round_trip(tmp_path):
    rng = generator(3)
    k = make_krbd([complex_normal(rng, (3, 1)), complex_normal(rng, (6, 2))])
    save_bpr1(tmp_path / "k.bpr1", k)
    back = load_bpr1(tmp_path / "k.bpr1")
    assert isinstance(back, KRBDMatrix)
    assert back.partition == k.partition
    for b1, b2 in zip(back.blocks, k.blocks):
        assert np.array_equal(b1, b2)


def test_header_layout(tmp_path):
    # magic + u32 rows + u32 cols + u8 kind, little endian
    save_bpr1(tmp_path / "v.bpr1", np.array([1 + 2j]))
    raw = (tmp_path / "v.bpr1").read_bytes()
    assert raw[:4] == b"BPR1"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == 1
    assert raw[12] == 0
    assert np.frombuffer(raw[13:], dtype="<f8").tolist() == [1.0, 2.0]


def test_bad_magic(tmp_path):
    (tmp_path / "bad.bpr1").write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(ValueError, match="magic"):
        load_bpr1(tmp_path / "bad.bpr1")


def test_truncated_file(tmp_path):
    save_bpr1(tmp_path / "v.bpr1", np.ones(4, dtype=complex))
    raw = (tmp_path / "v.bpr1").read_bytes()
    (tmp_path / "cut.bpr1").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_bpr1(tmp_path / "cut.bpr1")


def test_csv_round_trip_matrix(tmp_path):
    m = complex_normal(generator(4), (3, 4))
    save_csv(tmp_path / "m.csv", m)
    back = load_csv(tmp_path / "m.csv")
    assert np.array_equal(back, m)  # repr-precision floats round-trip exactly


def test_csv_round_trip_vector(tmp_path):
    v = np.array([1.5 + 2.25j, -3.0 - 0.5j, 0.0 + 0j])
    save_csv(tmp_path / "v.csv", v)
    text = (tmp_path / "v.csv").read_text()
    assert text.splitlines()[0] == "1.5+2.25i"
    assert text.splitlines()[1] == "-3.0-0.5i"
    back = load_csv(tmp_path / "v.csv")
    assert back.ndim == 1
    assert np.array_equal(back, v)


def test_csv_scientific_notation_round_trip(tmp_path):
    v = np.array([1e-05 + 2e-07j, -3.25e8 - 1.5e-12j, 2.0 + 0.125j])
    save_csv(tmp_path / "sci.csv", v)
    back = load_csv(tmp_path / "sci.csv")
    assert np.array_equal(back, v)


def test_csv_rejects_garbage(tmp_path):
    (tmp_path / "g.csv").write_text("1.0+2.0i,banana\n")
    with pytest.raises(ValueError):
        load_csv(tmp_path / "g.csv")
