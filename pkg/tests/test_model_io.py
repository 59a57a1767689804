import struct
import zlib

import numpy as np
import pytest

from opfault import model_io as M
from opfault import network as N


def small_spec():
    return N.NetworkSpec(
        layers=[
            N.LayerSpec("op_conv", 1, 2, kernel=3, q=2, stride=2, padding=1),
            N.LayerSpec("op_tconv", 2, 1, kernel=3, q=2, stride=2, padding=1,
                        output_trim=1, activation="none"),
            N.dense_layer(8, 2, activation="sigmoid"),
        ],
        input_len=8,
    )


def test_spec_text_round_trip():
    spec = small_spec()
    spec.skips = {1: 0}
    text = M.spec_to_text(spec)
    back = M.spec_from_text(text)
    assert back.input_len == spec.input_len
    assert back.skips == spec.skips
    assert back.layers == spec.layers
    assert M.spec_to_text(back) == text


def test_spec_text_none_input_len():
    spec = N.NetworkSpec(layers=[N.dense_layer(3, 1)])
    back = M.spec_from_text(M.spec_to_text(spec))
    assert back.input_len is None


def test_save_load_round_trip_bitwise(tmp_path):
    spec = small_spec()
    params = N.init_params(spec, np.random.default_rng(9))
    path = tmp_path / "m.sonn"
    M.save_model(path, spec, params)
    spec2, params2 = M.load_model(path)
    assert spec2.layers == spec.layers
    assert spec2.input_len == spec.input_len
    for (w, b), (w2, b2) in zip(params, params2):
        assert w.tobytes() == w2.tobytes()
        assert b.tobytes() == b2.tobytes()
        assert w2.dtype == np.float32


def test_save_rejects_mismatched_shapes(tmp_path):
    spec = small_spec()
    params = N.init_params(spec, np.random.default_rng(9))
    params[0] = (params[0][0][:, :, :2, :], params[0][1])
    with pytest.raises(ValueError):
        M.save_model(tmp_path / "m.sonn", spec, params)


def _saved(tmp_path):
    spec = small_spec()
    params = N.init_params(spec, np.random.default_rng(9))
    path = tmp_path / "m.sonn"
    M.save_model(path, spec, params)
    return path, path.read_bytes()


def test_load_rejects_bad_magic(tmp_path):
    path, blob = _saved(tmp_path)
    path.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError, match="magic"):
        M.load_model(path)


def test_load_rejects_unknown_version(tmp_path):
    path, blob = _saved(tmp_path)
    path.write_bytes(blob[:4] + bytes([7]) + blob[5:])
    with pytest.raises(ValueError, match="version"):
        M.load_model(path)


def test_load_rejects_truncation(tmp_path):
    path, blob = _saved(tmp_path)
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(ValueError):
        M.load_model(path)
    path.write_bytes(b"")
    with pytest.raises(ValueError, match="truncated"):
        M.load_model(path)


def test_load_rejects_corrupt_payload(tmp_path):
    path, blob = _saved(tmp_path)
    flipped = bytearray(blob)
    flipped[20] ^= 0xFF  # inside the spec text
    path.write_bytes(bytes(flipped))
    with pytest.raises(ValueError, match="checksum"):
        M.load_model(path)


def test_load_rejects_param_count_disagreement(tmp_path):
    # craft a container whose CRC is valid but whose payload is short
    spec = small_spec()
    text = M.spec_to_text(spec).encode()
    payload = np.zeros(10, dtype="<f4").tobytes()
    crc = zlib.crc32(text + payload) & 0xFFFFFFFF
    path = tmp_path / "bad.sonn"
    path.write_bytes(M.MAGIC + bytes([M.FORMAT_VERSION]) + struct.pack("<I", len(text))
                     + text + payload + struct.pack("<I", crc))
    with pytest.raises(ValueError, match="payload"):
        M.load_model(path)
