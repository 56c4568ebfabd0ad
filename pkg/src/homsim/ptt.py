"""PTT1 binary time-tag files.

Layout, all little-endian::

    header  magic b"PTT1" | u16 version (=1) | u16 channel count
            | u64 tick resolution in fs (1000 = 1 ps) | u64 record count
    record  u8 channel | u8 flags (0) | u16 reserved (0) | u64 timestamp in ticks

Timestamps must be nondecreasing within each channel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from homsim.errors import FormatError

MAGIC = b"PTT1"
VERSION = 1
HEADER = struct.Struct("<4sHHQQ")
RECORD_DTYPE = np.dtype([("channel", "u1"), ("flags", "u1"), ("reserved", "<u2"), ("ticks", "<u8")])
PS_FS = 1000

assert HEADER.size == 24 and RECORD_DTYPE.itemsize == 12


@dataclass
class PttFile:
    records: np.ndarray  # RECORD_DTYPE
    n_channels: int = 2
    resolution_fs: int = PS_FS

    def channel_ps(self, channel: int) -> np.ndarray:
        """Timestamps of one channel converted to integer picoseconds."""
        ticks = self.records["ticks"][self.records["channel"] == channel]
        if self.resolution_fs % PS_FS == 0:
            return (ticks * np.uint64(self.resolution_fs // PS_FS)).astype(np.int64)
        return (ticks.astype(np.float64) * self.resolution_fs / PS_FS).round().astype(np.int64)

    def __len__(self):
        return len(self.records)


def records_from_channels(channels: dict, resolution_fs: int = PS_FS) -> np.ndarray:
    """Merge {channel: sorted int ps array} into time-ordered records."""
    parts_t, parts_c = [], []
    for ch, t in channels.items():
        t = np.asarray(t, np.int64)
        if t.size and t.min() < 0:
            raise FormatError("timestamps must be >= 0")
        ticks = t * PS_FS
        if np.any(ticks % resolution_fs):
            raise FormatError(f"timestamps not representable at {resolution_fs} fs resolution")
        parts_t.append(ticks // resolution_fs)
        parts_c.append(np.full(t.size, ch, np.uint8))
    t = np.concatenate(parts_t) if parts_t else np.empty(0, np.int64)
    c = np.concatenate(parts_c) if parts_c else np.empty(0, np.uint8)
    order = np.lexsort((c, t))
    rec = np.zeros(t.size, RECORD_DTYPE)
    rec["channel"] = c[order]
    rec["ticks"] = t[order]
    return rec


def to_bytes(records: np.ndarray, n_channels: int = 2, resolution_fs: int = PS_FS) -> bytes:
    records = np.asarray(records, RECORD_DTYPE)
    return HEADER.pack(MAGIC, VERSION, n_channels, resolution_fs, records.size) + records.tobytes()


def write_ptt(path, records: np.ndarray, n_channels: int = 2, resolution_fs: int = PS_FS) -> None:
    Path(path).write_bytes(to_bytes(records, n_channels, resolution_fs))


def from_bytes(raw: bytes) -> PttFile:
    if len(raw) < HEADER.size:
        raise FormatError("file shorter than the PTT header")
    magic, version, n_ch, res, n = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported PTT version {version}")
    if res == 0:
        raise FormatError("tick resolution must be > 0")
    body = len(raw) - HEADER.size
    if body != n * RECORD_DTYPE.itemsize:
        raise FormatError(f"header announces {n} records but body holds {body} bytes")
    rec = np.frombuffer(raw, RECORD_DTYPE, count=n, offset=HEADER.size).copy()
    if n and int(rec["channel"].max()) >= n_ch:
        raise FormatError("record channel outside the declared channel count")
    for ch in np.unique(rec["channel"]):
        t = rec["ticks"][rec["channel"] == ch]
        if np.any(t[1:] < t[:-1]):
            raise FormatError(f"timestamps of channel {ch} are not sorted")
    return PttFile(rec, n_ch, res)


def read_ptt(path) -> PttFile:
    return from_bytes(Path(path).read_bytes())
