"""Checkpoint container: named numpy arrays in a small binary format.

One file holds a typed bundle (core memory, chart model, or dissimilarity
matrix) as named little-endian arrays.  Memory checkpoints include the
maintained similarity cache so a resumed curation run sees bitwise the
state it left off with; rebuilding the cache from features would risk
last-ulp differences that flip later eviction decisions.

Raw CSI payloads are stored as complex64, matching the precision of the
record file format; features, taps, and cache values stay float64.
"""

from __future__ import annotations

import struct

import numpy as np

from .curation import CoreMemory
from .dissimilarity import DissimilarityMatrix
from .network import ChartModel
from .recordio import RecordFormatError

MAGIC = b"CCKP1"
VERSION = 1
_HEADER = struct.Struct("<5sH8sI")

_DTYPES = ["<f8", "<c16", "<i8", "<c8", "u1"]
_DTYPE_CODE = {np.dtype(d): i for i, d in enumerate(_DTYPES)}


def save_named_arrays(path, kind: str, arrays: dict[str, np.ndarray]) -> None:
    """Write a named-array bundle of the given kind."""
    kind_b = kind.encode()
    if len(kind_b) > 8:
        raise ValueError(f"kind must encode to <= 8 bytes, got {kind!r}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, kind_b.ljust(8, b"\x00"),
                              len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            if arr.dtype not in _DTYPE_CODE:
                raise ValueError(f"unsupported dtype {arr.dtype} for {name!r}")
            name_b = name.encode()
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<BB", _DTYPE_CODE[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_named_arrays(path, expected_kind: str | None = None) -> tuple[str, dict]:
    """Read a bundle back; returns (kind, {name: array})."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise RecordFormatError(f"checkpoint truncated: {len(raw)} bytes is "
                                f"shorter than the {_HEADER.size}-byte header",
                                offset=len(raw))
    magic, version, kind_b, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise RecordFormatError(f"bad checkpoint magic {magic!r}", offset=0)
    if version != VERSION:
        raise RecordFormatError(f"unsupported checkpoint version {version}",
                                offset=5)
    kind = kind_b.rstrip(b"\x00").decode()
    if expected_kind is not None and kind != expected_kind:
        raise RecordFormatError(
            f"checkpoint holds a {kind!r} bundle, expected {expected_kind!r}")
    arrays: dict[str, np.ndarray] = {}
    off = _HEADER.size
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off:off + name_len].decode()
            off += name_len
            code, ndim = struct.unpack_from("<BB", raw, off)
            off += 2
            dims = struct.unpack_from(f"<{ndim}Q", raw, off)
            off += 8 * ndim
            dtype = np.dtype(_DTYPES[code])
            nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            if off + nbytes > len(raw):
                raise RecordFormatError(
                    f"checkpoint truncated inside array {name!r}", offset=off)
            arrays[name] = np.frombuffer(
                raw, dtype=dtype, count=int(np.prod(dims, dtype=np.int64)),
                offset=off).reshape(dims).copy()
            off += nbytes
    except (struct.error, IndexError) as exc:
        raise RecordFormatError(f"corrupt checkpoint entry at byte {off}",
                                offset=off) from exc
    return kind, arrays


# -- core memory -------------------------------------------------------


def save_memory(path, mem: CoreMemory) -> None:
    """Checkpoint a core memory, including its similarity cache."""
    n = mem.count
    meta = np.array([mem.capacity, mem.c_taps, n, int(mem.store_full_csi),
                     -1 if mem.n_antennas is None else mem.n_antennas,
                     -1 if mem.n_subcarriers is None else mem.n_subcarriers,
                     -1 if mem.position_dim is None else mem.position_dim],
                    dtype=np.int64)
    arrays: dict[str, np.ndarray] = {"meta": meta}
    if mem.n_antennas is not None:
        arrays["ap_spans"] = np.asarray(mem.ap_spans, dtype=np.int64)
        arrays["features"] = mem.features
        arrays["taps"] = mem.taps
        if mem.csi_entries is not None:
            arrays["entries"] = mem.csi_entries.astype(np.complex64)
        arrays["arrival"] = mem.arrival_indices
        arrays["timestamps"] = mem.timestamps
        arrays["positions"] = mem._positions[:n]
        arrays["has_position"] = mem._has_position[:n].astype(np.uint8)
        arrays["sim"] = mem.sim_cache
        arrays["row_max"] = mem._row_max[:n]
        arrays["row_argmax"] = mem._row_argmax[:n]
    save_named_arrays(path, "memory", arrays)


def load_memory(path) -> CoreMemory:
    """Restore a core memory checkpoint bitwise (CSI payload at the
    complex64 precision it was stored with)."""
    _, arrays = load_named_arrays(path, expected_kind="memory")
    meta = arrays["meta"]
    capacity, c_taps, n, store_full, b, w, pos_dim = (int(v) for v in meta)
    mem = CoreMemory(capacity, c_taps=c_taps, store_full_csi=bool(store_full))
    if b < 0:
        return mem
    mem.n_antennas, mem.n_subcarriers = b, w
    mem.ap_spans = tuple((int(a0), int(a1)) for a0, a1 in arrays["ap_spans"])
    mem.position_dim = None if pos_dim < 0 else pos_dim
    m = capacity
    mem._features = np.zeros((m, b * c_taps))
    mem._features[:n] = arrays["features"]
    mem._taps = np.zeros((m, b, c_taps), dtype=np.complex128)
    mem._taps[:n] = arrays["taps"]
    if store_full:
        mem._entries = np.zeros((m, b, w), dtype=np.complex128)
        if "entries" in arrays:
            mem._entries[:n] = arrays["entries"].astype(np.complex128)
    mem._arrival = np.zeros(m, dtype=np.int64)
    mem._arrival[:n] = arrays["arrival"]
    mem._timestamps = np.full(m, np.nan)
    mem._timestamps[:n] = arrays["timestamps"]
    mem._positions = np.full((m, 3), np.nan)
    mem._positions[:n] = arrays["positions"]
    mem._has_position = np.zeros(m, dtype=bool)
    mem._has_position[:n] = arrays["has_position"].astype(bool)
    mem._sim = np.zeros((m, m))
    mem._sim[:n, :n] = arrays["sim"]
    mem._row_max = np.full(m, -1.0)
    mem._row_max[:n] = arrays["row_max"]
    mem._row_argmax = np.full(m, -1, dtype=np.int64)
    mem._row_argmax[:n] = arrays["row_argmax"]
    mem.count = n
    mem._refresh_max_pair()
    return mem


# -- chart model -------------------------------------------------------


def save_model(path, model: ChartModel) -> None:
    arrays: dict[str, np.ndarray] = {
        "widths": np.asarray(model.layer_widths, dtype=np.int64)
    }
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    save_named_arrays(path, "model", arrays)


def load_model(path) -> ChartModel:
    """Restore a chart model checkpoint bitwise."""
    _, arrays = load_named_arrays(path, expected_kind="model")
    n_layers = len(arrays["widths"]) - 1
    weights = [arrays[f"w{i}"] for i in range(n_layers)]
    biases = [arrays[f"b{i}"] for i in range(n_layers)]
    return ChartModel(weights=weights, biases=biases)


# -- dissimilarity matrices --------------------------------------------


def save_dissimilarity(path, matrix: DissimilarityMatrix) -> None:
    arrays = {
        "values": matrix.values,
        "kind": np.frombuffer(matrix.kind.encode(), dtype=np.uint8).copy(),
    }
    save_named_arrays(path, "dissim", arrays)


def load_dissimilarity(path) -> DissimilarityMatrix:
    _, arrays = load_named_arrays(path, expected_kind="dissim")
    kind = arrays["kind"].tobytes().decode()
    return DissimilarityMatrix(values=arrays["values"], kind=kind)