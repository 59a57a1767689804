"""Model container format: magic, version, spec text, raw float32 params, CRC.

Layout (all integers little-endian):

    bytes 0..3   magic b"SONN"
    byte  4      format version (currently 1)
    bytes 5..8   u32 length of the spec text
    ...          spec text, utf-8
    ...          parameters, float32 LE, layer order, weights then bias
    last 4       u32 zlib.crc32 over spec text bytes + parameter bytes

The spec text is one line per fact: an input_len line, one line per layer,
one line per skip. Round-trips bitwise: load(save(spec, params)) returns
identical arrays.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .network import LayerSpec, NetworkSpec, param_shapes

MAGIC = b"SONN"
FORMAT_VERSION = 1


def spec_to_text(spec: NetworkSpec) -> str:
    lines = [f"input_len {spec.input_len if spec.input_len is not None else '-'}"]
    for ls in spec.layers:
        lines.append(f"layer {ls.kind} in {ls.in_channels} out {ls.out_channels} "
                     f"k {ls.kernel} q {ls.q} stride {ls.stride} pad {ls.padding} "
                     f"trim {ls.output_trim} act {ls.activation}")
    for dest in sorted(spec.skips):
        lines.append(f"skip {dest} {spec.skips[dest]}")
    return "\n".join(lines) + "\n"


def spec_from_text(text: str) -> NetworkSpec:
    layers = []
    skips = {}
    input_len = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "input_len":
            input_len = None if parts[1] == "-" else int(parts[1])
        elif parts[0] == "layer":
            kv = dict(zip(parts[2::2], parts[3::2]))
            layers.append(LayerSpec(
                kind=parts[1], in_channels=int(kv["in"]), out_channels=int(kv["out"]),
                kernel=int(kv["k"]), q=int(kv["q"]), stride=int(kv["stride"]),
                padding=int(kv["pad"]), output_trim=int(kv["trim"]), activation=kv["act"]))
        elif parts[0] == "skip":
            skips[int(parts[1])] = int(parts[2])
        else:
            raise ValueError(f"unrecognized spec line: {line!r}")
    if not layers:
        raise ValueError("spec text declares no layers")
    return NetworkSpec(layers=layers, skips=skips, input_len=input_len)


def _param_bytes(spec: NetworkSpec, params: list) -> bytes:
    expected = param_shapes(spec)
    if len(params) != len(expected):
        raise ValueError(f"expected {len(expected)} parameter pairs, got {len(params)}")
    chunks = []
    for j, ((w, b), (ws, bs)) in enumerate(zip(params, expected)):
        if tuple(w.shape) != ws or tuple(b.shape) != bs:
            raise ValueError(f"layer {j}: parameter shapes {w.shape}/{b.shape} "
                             f"do not match spec {ws}/{bs}")
        chunks.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(chunks)


def save_model(path, spec: NetworkSpec, params: list) -> None:
    text = spec_to_text(spec).encode("utf-8")
    payload = _param_bytes(spec, params)
    crc = zlib.crc32(text + payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def load_model(path):
    """Read a model file back as (spec, params). Raises ValueError on any
    malformed container: wrong magic, unknown version, truncation, payload
    size disagreement, or checksum mismatch."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 13:
        raise ValueError("model file truncated")
    if blob[:4] != MAGIC:
        raise ValueError("not a model file (bad magic)")
    if blob[4] != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {blob[4]}")
    (text_len,) = struct.unpack("<I", blob[5:9])
    if 9 + text_len + 4 > len(blob):
        raise ValueError("model file truncated")
    text = blob[9:9 + text_len]
    payload = blob[9 + text_len:-4]
    (crc_stored,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(text + payload) & 0xFFFFFFFF != crc_stored:
        raise ValueError("model file checksum mismatch")
    spec = spec_from_text(text.decode("utf-8"))
    expected = param_shapes(spec)
    total = sum(int(np.prod(ws)) + int(np.prod(bs)) for ws, bs in expected)
    if len(payload) != total * 4:
        raise ValueError(f"parameter payload holds {len(payload) // 4} floats, "
                         f"spec requires {total}")
    flat = np.frombuffer(payload, dtype="<f4")
    params = []
    pos = 0
    for ws, bs in expected:
        nw = int(np.prod(ws))
        nb = int(np.prod(bs))
        w = flat[pos:pos + nw].reshape(ws).astype(np.float32)
        pos += nw
        b = flat[pos:pos + nb].reshape(bs).astype(np.float32)
        pos += nb
        params.append((w, b))
    return spec, params
