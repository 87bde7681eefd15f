"""Time-tag file formats.

Binary layout (little-endian)::

    offset  size  field
    0       4     magic b"HSPT"
    4       1     format version (1)
    5       3     reserved, zero
    8       8     number of records, uint64
    16      10*n  records: uint64 timestamp_ps, uint8 channel, uint8 origin

Records of both channels are interleaved in time order (ties: lower
channel first). The CSV form has the header ``timestamp_ps,channel,origin``.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"HSPT"
VERSION = 1
RECORD = np.dtype([("timestamp_ps", "<u8"), ("channel", "u1"), ("origin", "u1")])
_HEADER = struct.Struct("<4sB3xQ")


def merge_streams(*streams):
    """Interleave event streams into one record array sorted by (time, channel)."""
    n = sum(len(s) for s in streams)
    rec = np.empty(n, dtype=RECORD)
    i = 0
    for s in streams:
        k = len(s)
        rec["timestamp_ps"][i:i + k] = s.timestamps
        rec["channel"][i:i + k] = s.channel
        rec["origin"][i:i + k] = s.origin
        i += k
    order = np.lexsort((rec["channel"], rec["timestamp_ps"]))
    return rec[order]


def write_binary(path, *streams):
    rec = merge_streams(*streams)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(rec)))
        fh.write(rec.tobytes())
    return len(rec)


def read_binary(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, n = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        rec = np.frombuffer(fh.read(), dtype=RECORD)
    if len(rec) != n:
        raise ValueError(f"{path}: header says {n} records, found {len(rec)}")
    return rec


def write_csv(path, *streams):
    rec = merge_streams(*streams)
    with open(path, "w", newline="\n") as fh:
        fh.write("timestamp_ps,channel,origin\n")
        for t, ch, o in zip(rec["timestamp_ps"], rec["channel"], rec["origin"]):
            fh.write(f"{int(t)},{int(ch)},{int(o)}\n")
    return len(rec)


def read_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    rec = np.empty(len(data), dtype=RECORD)
    if len(data):
        rec["timestamp_ps"] = data[:, 0]
        rec["channel"] = data[:, 1]
        rec["origin"] = data[:, 2]
    return rec


def split_channel(rec, channel):
    sel = rec["channel"] == channel
    return rec["timestamp_ps"][sel].astype(np.int64), rec["origin"][sel]
