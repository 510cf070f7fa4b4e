import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scatenc import io
from scatenc.scattering import ScatteringConfig, batch_scatter
from scatenc.synth import VoxelResponses, gen_session_labels


@settings(max_examples=30, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 9), st.integers(1, 9)),
              elements=st.floats(width=32, allow_nan=False)))
def test_raster_roundtrip_bitwise(tmp_path_factory, u):
    p = tmp_path_factory.mktemp("r") / "x.ras"
    io.write_raster(p, u)
    assert io.read_raster(p).tobytes() == u.tobytes()


def test_raster_layout(tmp_path):
    u = np.arange(6, dtype=np.float32).reshape(2, 3)
    io.write_raster(tmp_path / "a.ras", u)
    data = (tmp_path / "a.ras").read_bytes()
    assert data[:8] == b"SCATRAS1"
    assert struct.unpack("<II", data[8:16]) == (3, 2)
    assert np.frombuffer(data[16:], "<f4").tolist() == [0, 1, 2, 3, 4, 5]


def test_raster_errors(tmp_path):
    (tmp_path / "bad.ras").write_bytes(b"NOTARAST" + bytes(8))
    with pytest.raises(io.FormatError, match="bad magic"):
        io.read_raster(tmp_path / "bad.ras")
    (tmp_path / "short.ras").write_bytes(b"SCATRAS1" + struct.pack("<II", 4, 4) + bytes(8))
    with pytest.raises(io.FormatError, match="payload size"):
        io.read_raster(tmp_path / "short.ras")


def test_pgm_ingestion(tmp_path):
    pix = np.array([[0, 51, 255], [102, 204, 153]], dtype=np.uint8)
    (tmp_path / "a.pgm").write_bytes(b"P5\n# comment\n3 2\n255\n" + pix.tobytes())
    np.testing.assert_allclose(io.read_raster(tmp_path / "a.pgm"), pix / 255.0)
    pix16 = np.array([[0, 1000]], dtype=">u2")
    (tmp_path / "b.pgm").write_bytes(b"P5 2 1 1000\n" + pix16.tobytes())
    np.testing.assert_allclose(io.read_raster(tmp_path / "b.pgm"), [[0.0, 1.0]])
    io.write_pgm(tmp_path / "c.pgm", pix / 255.0)
    np.testing.assert_allclose(io.read_raster(tmp_path / "c.pgm"), pix / 255.0)


def test_list_images(tmp_path):
    for n in ("b", "a"):
        io.write_raster(tmp_path / f"{n}.ras", np.zeros((2, 2)))
    (tmp_path / "notes.txt").write_text("a.ras\nb.ras\n")
    assert [p.name for p in io.list_images(str(tmp_path))] == ["a.ras", "b.ras"]
    assert [p.name for p in io.list_images(str(tmp_path / "notes.txt"))] == ["a.ras", "b.ras"]
    with pytest.raises(io.FormatError, match="not found"):
        io.list_images(str(tmp_path / "zz.ras"))


def test_features_roundtrip(tmp_path, rng):
    fm = batch_scatter(list(rng.standard_normal((3, 16, 16))), ScatteringConfig(M=2, J=2, L=2),
                       ["x", "y", "z"])
    io.save_features(tmp_path / "f.bin", fm)
    back = io.load_features(tmp_path / "f.bin")
    assert back.values.tobytes() == fm.values.tobytes()
    assert back.paths == fm.paths and back.image_ids == fm.image_ids
    assert back.config == fm.config
    io.save_features(tmp_path / "f.csv", fm)
    text = (tmp_path / "f.csv").read_text().splitlines()
    assert text[0] == "image_id," + ",".join(fm.labels)
    csv_back = io.load_features(tmp_path / "f.csv")
    np.testing.assert_allclose(csv_back.values, fm.values, rtol=1e-8)


def test_fmt_is_nine_significant_digits():
    assert io.fmt(1 / 3) == "0.333333333"
    assert io.fmt(123456789012.0) == "1.23456789e+11"
    assert io.fmt(float("nan")) == "nan"


def test_matrix_errors(tmp_path):
    (tmp_path / "m.bin").write_bytes(b"SCATMAT1" + struct.pack("<I", 3) + b"{x}")
    with pytest.raises(io.FormatError, match="malformed"):
        io.read_matrix(tmp_path / "m.bin")


def test_responses_and_tables(tmp_path, rng):
    y = VoxelResponses(rng.standard_normal((4, 2)), ["a", "b", "c", "d"], ["v0", "v1"])
    io.save_responses(tmp_path / "r.bin", y)
    back = io.load_responses(tmp_path / "r.bin")
    assert back.values.tobytes() == y.values.tobytes() and back.voxel_ids == y.voxel_ids
    s = gen_session_labels(6, 3, 2, ["a", "b", "c", "d", "e", "f"])
    io.write_sessions(tmp_path / "s.csv", s)
    s2 = io.read_sessions(tmp_path / "s.csv")
    assert s2.image_ids == s.image_ids and np.array_equal(s2.block, s.block)
    io.write_labels(tmp_path / "l.csv", ["a", "b"], [1, 2])
    assert io.read_labels(tmp_path / "l.csv") == {"a": 1, "b": 2}
    (tmp_path / "bad.csv").write_text("image_id,session\na,1\n")
    with pytest.raises(io.FormatError, match="missing columns"):
        io.read_sessions(tmp_path / "bad.csv")
