"""Binary model files (``MIPR``) and activation-statistics dumps (``MIPS``).

Model file layout, all little-endian::

    b"MIPR" | u32 version | u64 total file length | u32 n_layers | u32 input_dim | u8 has_seed | i64 seed
    n_layers x (u32 in_dim | u32 out_dim | u8 activation | u8 residual)
    n_layers x (f64[out*in] weight row-major | f64[out] bias)
    u8 section flags  (1: dimension masks, 2: weight masks, 4: input index)
    [dimension masks: n_layers+1 x u8[width]]
    [weight masks: n_layers x u8[out*in]]
    [input index: i64[input_dim]]
    u32 crc32 of every preceding byte

Stats dump layout::

    b"MIPS" | u32 version | u64 total file length | u32 n_pairs
    n_pairs x (u32 layer | u32 dim_lower | u32 dim_upper | u64 n
               | f64[dim] mean | f64[dim*dim] covariance)
    u32 crc32

Readers check length, then checksum, and only then parse, so a flipped bit
in a size field is reported as corruption instead of driving the parser.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import BadMagic, ChecksumMismatch, TruncatedFile, VersionMismatch
from .nn import ACTIVATIONS, LayerSpec, MaskSet, Network

MODEL_MAGIC = b"MIPR"
STATS_MAGIC = b"MIPS"
VERSION = 1

_FLAG_MASKS = 1
_FLAG_WEIGHT_MASKS = 2
_FLAG_INPUT_INDEX = 4


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise TruncatedFile(f"needed {n} bytes at offset {self.pos}, file has {len(self.buf)}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype, count):
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count), dtype=dtype).copy()


_HEADER = 16  # magic, version, total length


def _seal(magic, payload: bytes) -> bytes:
    head = magic + struct.pack("<IQ", VERSION, _HEADER + len(payload) + 4)
    body = head + payload
    return body + struct.pack("<I", zlib.crc32(body))


def _open(buf, magic) -> "_Reader":
    """Validate magic, version, length and CRC; return a reader past the header."""
    if len(buf) < 8:
        raise TruncatedFile("file too short for header")
    if buf[:4] != magic:
        raise BadMagic(f"expected magic {magic!r}, found {buf[:4]!r}")
    (version,) = struct.unpack("<I", buf[4:8])
    if version != VERSION:
        raise VersionMismatch(f"file version {version}, this reader supports {VERSION}")
    if len(buf) < _HEADER + 4:
        raise TruncatedFile("file too short for header")
    (total,) = struct.unpack("<Q", buf[8:16])
    if len(buf) < total:
        raise TruncatedFile(f"header declares {total} bytes, file has {len(buf)}")
    (stored,) = struct.unpack("<I", buf[-4:])
    if len(buf) != total or zlib.crc32(buf[:-4]) != stored:
        raise ChecksumMismatch("CRC32 does not match file contents")
    r = _Reader(buf[:-4])
    r.pos = _HEADER
    return r


def _done(r: "_Reader"):
    if r.pos != len(r.buf):
        raise ChecksumMismatch(f"{len(r.buf) - r.pos} unexplained bytes before the checksum")


def model_to_bytes(net: Network, masks: MaskSet | None = None, weight_masks=None) -> bytes:
    parts = [struct.pack("<II", len(net.layers), net.input_dim)]
    parts.append(struct.pack("<Bq", net.seed is not None, net.seed or 0))
    for layer in net.layers:
        parts.append(struct.pack(
            "<IIBB", layer.in_dim, layer.out_dim,
            ACTIVATIONS.index(layer.activation), int(layer.residual),
        ))
    for layer in net.layers:
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    flags = 0
    if masks is not None:
        masks.validate(net)
        flags |= _FLAG_MASKS
    if weight_masks is not None:
        flags |= _FLAG_WEIGHT_MASKS
    if net.input_index is not None:
        flags |= _FLAG_INPUT_INDEX
    parts.append(struct.pack("<B", flags))
    if masks is not None:
        parts.extend(m.astype(np.uint8).tobytes() for m in masks.masks)
    if weight_masks is not None:
        for layer, m in zip(net.layers, weight_masks.masks):
            if m.shape != layer.weight.shape:
                raise ValueError("weight mask shape mismatch")
            parts.append(np.ascontiguousarray(m, dtype=np.uint8).tobytes())
    if net.input_index is not None:
        parts.append(np.ascontiguousarray(net.input_index, dtype="<i8").tobytes())
    return _seal(MODEL_MAGIC, b"".join(parts))


def model_from_bytes(buf: bytes):
    """Returns ``(network, masks_or_None, weight_masks_or_None)``."""
    from .baselines import WeightMaskSet

    r = _open(buf, MODEL_MAGIC)
    n_layers, input_dim = r.unpack("<II")
    has_seed, seed = r.unpack("<Bq")
    shapes = [r.unpack("<IIBB") for _ in range(n_layers)]
    arrays = []
    for in_dim, out_dim, _, _ in shapes:
        w = r.array("<f8", in_dim * out_dim).reshape(out_dim, in_dim)
        b = r.array("<f8", out_dim)
        arrays.append((w, b))
    (flags,) = r.unpack("<B")
    widths = [input_dim] + [s[1] for s in shapes]
    masks = weight_masks = input_index = None
    if flags & _FLAG_MASKS:
        masks = MaskSet([r.array(np.uint8, w).astype(bool) for w in widths])
    if flags & _FLAG_WEIGHT_MASKS:
        weight_masks = WeightMaskSet(
            [r.array(np.uint8, i * o).reshape(o, i).astype(bool) for i, o, _, _ in shapes]
        )
    if flags & _FLAG_INPUT_INDEX:
        input_index = r.array("<i8", input_dim)
    _done(r)
    layers = [
        LayerSpec(w, b, ACTIVATIONS[act], bool(res))
        for (w, b), (_, _, act, res) in zip(arrays, shapes)
    ]
    net = Network(layers, seed=seed if has_seed else None, input_index=input_index)
    return net, masks, weight_masks


def save(net: Network, path, masks: MaskSet | None = None, weight_masks=None) -> None:
    Path(path).write_bytes(model_to_bytes(net, masks, weight_masks))


def load(path):
    """Load a model file; returns ``(network, masks, weight_masks)``."""
    return model_from_bytes(Path(path).read_bytes())


def load_network(path) -> Network:
    return load(path)[0]


def stats_to_bytes(stats) -> bytes:
    parts = [struct.pack("<I", len(stats))]
    for s in stats:
        parts.append(struct.pack("<IIIQ", s.layer, s.dim_lower, s.dim_upper, s.n))
        parts.append(np.ascontiguousarray(s.mean, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(s.covariance(), dtype="<f8").tobytes())
    return _seal(STATS_MAGIC, b"".join(parts))


def stats_from_bytes(buf: bytes):
    from .stats import LayerPairStats

    r = _open(buf, STATS_MAGIC)
    (n_pairs,) = r.unpack("<I")
    out = []
    for _ in range(n_pairs):
        layer, dl, du, n = r.unpack("<IIIQ")
        dim = dl + du
        mean = r.array("<f8", dim)
        cov = r.array("<f8", dim * dim).reshape(dim, dim)
        out.append(LayerPairStats.from_moments(layer, dl, du, n, mean, cov))
    _done(r)
    return out


def save_stats(stats, path) -> None:
    Path(path).write_bytes(stats_to_bytes(stats))


def load_stats(path):
    return stats_from_bytes(Path(path).read_bytes())
