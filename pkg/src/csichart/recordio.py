"""Binary CSI record streams.

File layout (all little-endian):

  header:  magic "CCSF1" (5 bytes), version u16, n_antennas u32,
           n_subcarriers u32, n_samples u64, has_positions u8,
           position_dim u8
  record:  sample_index u64, timestamp f64 (NaN when unknown),
           position_dim * f64 when has_positions,
           then n_antennas * n_subcarriers complex values stored
           antenna-major as interleaved float32 (re, im) pairs

CSI is stored in float32 precision; readers promote to complex128 for
computation.  Reading is lazy: records are parsed one at a time so
arbitrarily long streams can be curated in bounded memory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .csi import CsiMatrix

MAGIC = b"CCSF1"
VERSION = 1
_HEADER = struct.Struct("<5sHIIQBB")
_COUNT_OFFSET = struct.calcsize("<5sHII")  # byte position of n_samples


class RecordFormatError(ValueError):
    """Malformed record file; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class StreamItem:
    """One delivered sample: the CSI matrix plus its reference position."""

    csi: CsiMatrix
    position: np.ndarray | None = None


def _record_size(b: int, w: int, has_positions: bool, position_dim: int) -> int:
    return 8 + 8 + (position_dim * 8 if has_positions else 0) + b * w * 8


class RecordStream:
    """Lazy reader over a record file; iterable of :class:`StreamItem`.

    Metadata comes from the header; each ``iter()`` re-opens the file, so
    a stream can be consumed multiple times.  ``start``/``stop`` select a
    record range; ``ap_spans`` tags every yielded sample with an access
    point partition (the file format itself does not carry one).
    """

    def __init__(self, path, start: int = 0, stop: int | None = None,
                 ap_spans=None):
        self.path = str(path)
        self.ap_spans = tuple(tuple(s) for s in ap_spans) if ap_spans else None
        with open(self.path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) < _HEADER.size:
                raise RecordFormatError(
                    f"{self.path}: truncated header ({len(head)} bytes)", offset=0)
            magic, version, b, w, n, has_pos, pos_dim = _HEADER.unpack(head)
            if magic != MAGIC:
                raise RecordFormatError(f"{self.path}: bad magic {magic!r}", offset=0)
            if version != VERSION:
                raise RecordFormatError(
                    f"{self.path}: unsupported version {version}", offset=5)
            fh.seek(0, 2)
            actual = fh.tell()
        if b < 1 or w < 1:
            raise RecordFormatError(f"{self.path}: empty antenna or subcarrier axis",
                                    offset=7)
        rec_size = _record_size(b, w, bool(has_pos), pos_dim)
        expected = _HEADER.size + n * rec_size
        if actual != expected:
            n_complete = max(0, (actual - _HEADER.size)) // rec_size
            raise RecordFormatError(
                f"{self.path}: header claims {n} records but the body holds "
                f"{n_complete}; parse fails at byte {_HEADER.size + n_complete * rec_size}",
                offset=_HEADER.size + n_complete * rec_size,
            )
        self.n_antennas = int(b)
        self.n_subcarriers = int(w)
        self.total_records = int(n)
        self.has_positions = bool(has_pos)
        self.position_dim = int(pos_dim)
        self._rec_size = rec_size
        self.start = int(start)
        self.stop = self.total_records if stop is None else min(int(stop), self.total_records)
        if not 0 <= self.start <= self.stop:
            raise ValueError(f"bad record range [{self.start}, {self.stop})")

    @property
    def n_samples(self) -> int:
        return self.stop - self.start

    def __len__(self) -> int:
        return self.n_samples

    def __iter__(self):
        b, w = self.n_antennas, self.n_subcarriers
        pos_dim = self.position_dim if self.has_positions else 0
        prefix = struct.Struct(f"<Qd{pos_dim}d")
        with open(self.path, "rb", buffering=1 << 20) as fh:
            fh.seek(_HEADER.size + self.start * self._rec_size)
            for rec in range(self.start, self.stop):
                raw = fh.read(self._rec_size)
                if len(raw) != self._rec_size:
                    raise RecordFormatError(
                        f"{self.path}: record {rec} truncated",
                        offset=_HEADER.size + rec * self._rec_size)
                fields = prefix.unpack_from(raw)
                sample_index = fields[0]
                timestamp = fields[1]
                position = np.array(fields[2:], dtype=np.float64) if pos_dim else None
                flat = np.frombuffer(raw, dtype="<f4", offset=prefix.size)
                entries = flat.astype(np.float64).view(np.complex128).reshape(b, w)
                try:
                    csi = CsiMatrix(
                        entries=entries,
                        sample_index=int(sample_index),
                        timestamp=None if np.isnan(timestamp) else float(timestamp),
                        ap_spans=self.ap_spans,
                    )
                except ValueError as exc:
                    raise RecordFormatError(
                        f"{self.path}: record {rec}: {exc}",
                        offset=_HEADER.size + rec * self._rec_size) from exc
                if position is not None and not np.isfinite(position).all():
                    raise RecordFormatError(
                        f"{self.path}: record {rec}: non-finite position",
                        offset=_HEADER.size + rec * self._rec_size)
                yield StreamItem(csi=csi, position=position)


def read_records(path, start: int = 0, stop: int | None = None,
                 ap_spans=None) -> RecordStream:
    """Open a record file for lazy streaming; validates the header and
    that the body length matches the claimed record count."""
    return RecordStream(path, start=start, stop=stop, ap_spans=ap_spans)


def write_records(path, items, *, has_positions: bool | None = None,
                  position_dim: int = 2) -> int:
    """Write an iterable of :class:`StreamItem` (or (CsiMatrix, position)
    tuples) to ``path``; returns the number of records written.

    Stream shape is fixed by the first item.  ``has_positions`` defaults
    to whether the first item carries a position; mixing positioned and
    unpositioned items is an error because the format has no per-record
    flag.
    """
    it = iter(items)
    try:
        first = next(it)
    except StopIteration:
        raise ValueError("cannot write an empty record stream") from None

    def unpack(item):
        if isinstance(item, StreamItem):
            return item.csi, item.position
        csi, position = item
        return csi, position

    csi0, pos0 = unpack(first)
    b, w = csi0.n_antennas, csi0.n_subcarriers
    if has_positions is None:
        has_positions = pos0 is not None
    if has_positions and pos0 is not None:
        position_dim = int(np.asarray(pos0).size)
    count = 0
    with open(str(path), "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, b, w, 0, int(has_positions),
                              position_dim if has_positions else 0))

        def emit(csi, position):
            if (csi.n_antennas, csi.n_subcarriers) != (b, w):
                raise ValueError(
                    f"record {count}: shape ({csi.n_antennas}, {csi.n_subcarriers}) "
                    f"does not match stream shape ({b}, {w})")
            ts = np.nan if csi.timestamp is None else float(csi.timestamp)
            fh.write(struct.pack("<Qd", csi.sample_index, ts))
            if has_positions:
                if position is None:
                    raise ValueError(f"record {count}: stream carries positions "
                                     "but this item has none")
                position = np.asarray(position, dtype=np.float64)
                if position.size != position_dim:
                    raise ValueError(f"record {count}: position has {position.size} "
                                     f"coordinates, stream has {position_dim}")
                fh.write(position.tobytes())
            flat = np.ascontiguousarray(csi.entries).view(np.float64)
            fh.write(flat.astype("<f4").tobytes())

        emit(csi0, pos0)
        count = 1
        for item in it:
            csi, position = unpack(item)
            emit(csi, position)
            count += 1
        fh.seek(_COUNT_OFFSET)
        fh.write(struct.pack("<Q", count))
    return count


def import_external(src, fmt: str, dest, *, start: int = 0,
                    stop: int | None = None, ap_spans=None) -> RecordStream:
    """Convert an external capture into the native record format.

    ``fmt="ccsf"`` re-emits a native file (validating and optionally
    trimming a record range); ``fmt="npz"`` reads a numpy archive with a
    complex ``csi`` array of shape (N, B, W) (or float (N, B, W, 2) re/im
    pairs) plus optional ``positions`` (N, d) and ``timestamps`` (N,).
    Returns a lazy stream over the written file.
    """
    if fmt == "ccsf":
        source = read_records(src, start=start, stop=stop, ap_spans=ap_spans)
        write_records(dest, source)
        return read_records(dest, ap_spans=ap_spans)
    if fmt == "npz":
        archive = np.load(str(src))
        if "csi" not in archive:
            raise RecordFormatError(f"{src}: npz archive has no 'csi' array")
        csi = np.asarray(archive["csi"])
        if csi.ndim == 4 and csi.shape[-1] == 2:
            csi = csi[..., 0] + 1j * csi[..., 1]
        if csi.ndim != 3:
            raise RecordFormatError(
                f"{src}: csi array must have shape (N, B, W), got {csi.shape}")
        n = csi.shape[0]
        positions = archive["positions"] if "positions" in archive else None
        timestamps = archive["timestamps"] if "timestamps" in archive else None
        if positions is not None and positions.shape[0] != n:
            raise RecordFormatError(f"{src}: positions length {positions.shape[0]} "
                                    f"!= {n} samples")
        if timestamps is not None and timestamps.shape[0] != n:
            raise RecordFormatError(f"{src}: timestamps length {timestamps.shape[0]} "
                                    f"!= {n} samples")
        stop = n if stop is None else min(stop, n)

        def items():
            for rec in range(start, stop):
                try:
                    sample = CsiMatrix(
                        entries=np.asarray(csi[rec], dtype=np.complex128),
                        sample_index=rec,
                        timestamp=None if timestamps is None else float(timestamps[rec]),
                        ap_spans=ap_spans,
                    )
                except ValueError as exc:
                    raise RecordFormatError(f"{src}: record {rec}: {exc}") from exc
                pos = None if positions is None else np.asarray(positions[rec],
                                                               dtype=np.float64)
                yield StreamItem(csi=sample, position=pos)

        write_records(dest, items())
        return read_records(dest, ap_spans=ap_spans)
    raise ValueError(f"unknown import format {fmt!r}; expected 'ccsf' or 'npz'")
