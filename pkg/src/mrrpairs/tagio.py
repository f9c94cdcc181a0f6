"""Tag-stream and table persistence.

Binary tag format (all little-endian):

    offset  size  field
    0       8     magic "MRRTAGS1"
    8       2     version (u16), currently 1
    10      4     resolution_ps (u32)
    14      1     channel_count (u8)
    15      8     record_count (u64)
    23      9*N   records: u64 timestamp in ticks, u8 channel

Timestamps are stored as integer ticks of ``resolution_ps``; reading and
writing round-trips a stream bit-exactly.  CSV import/export uses the
two-column ``timestamp_ps,channel`` schema.  All writers go through a
write-temp-then-rename step so partial files are never left behind.
"""

import csv
import io
import json
import os
import struct
import warnings
from pathlib import Path

import numpy as np

from .analysis import PowerSweep
from .correlate import Histogram
from .emitter import TagStream
from .errors import TagIoError

MAGIC = b"MRRTAGS1"
VERSION = 1
_HEADER = struct.Struct("<8sHIBQ")
RECORD_SIZE = 9


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def atomic_write_text(path, payload: str) -> None:
    atomic_write_bytes(path, payload.encode())


def write_tags(path, stream: TagStream) -> None:
    """Write a stream in the binary tag format (atomic)."""
    ticks = stream.timestamps_ps // stream.resolution_ps
    if np.any(ticks * stream.resolution_ps != stream.timestamps_ps):
        raise TagIoError("timestamps are not aligned to the stream resolution")
    channel_count = (max((int(c) for c in stream.channel_ids), default=0)) + 1
    header = _HEADER.pack(MAGIC, VERSION, stream.resolution_ps, channel_count, len(stream))
    records = np.zeros(len(stream), dtype=[("t", "<u8"), ("ch", "u1")])
    records["t"] = ticks.astype(np.uint64)
    records["ch"] = stream.channels
    atomic_write_bytes(path, header + records.tobytes())


def read_tags(path, sort: bool = False, duration_s: float | None = None) -> TagStream:
    """Read a binary tag file; out-of-order records warn (pass sort=True to fix)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TagIoError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, resolution, channel_count, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TagIoError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise TagIoError(f"{path}: unsupported version {version}")
    body = raw[_HEADER.size :]
    if len(body) != count * RECORD_SIZE:
        raise TagIoError(
            f"{path}: body holds {len(body)} bytes, expected {count * RECORD_SIZE} "
            f"for {count} records"
        )
    records = np.frombuffer(body, dtype=[("t", "<u8"), ("ch", "u1")])
    times = records["t"].astype(np.int64) * resolution
    channels = records["ch"].astype(np.uint8)
    if times.size and np.any(np.diff(times) < 0):
        if sort:
            order = np.argsort(times, kind="stable")
            times, channels = times[order], channels[order]
        else:
            warnings.warn(f"{path}: timestamps are not monotonic; pass sort=True", stacklevel=2)
            order = np.argsort(times, kind="stable")
            times, channels = times[order], channels[order]
    if duration_s is None:
        duration_s = float(times[-1]) * 1e-12 if times.size else 0.0
        duration_s = max(duration_s, 1e-12)
    return TagStream(
        timestamps_ps=times,
        channels=channels,
        resolution_ps=int(resolution),
        duration_s=duration_s,
        channel_ids=tuple(range(channel_count)),
        origin={"path": str(path)},
    )


def write_tags_csv(path, stream: TagStream) -> None:
    buf = io.StringIO()
    buf.write("timestamp_ps,channel\n")
    for t, ch in zip(stream.timestamps_ps.tolist(), stream.channels.tolist()):
        buf.write(f"{t},{ch}\n")
    atomic_write_text(path, buf.getvalue())


def read_tags_csv(
    path, resolution_ps: int = 1, sort: bool = False, duration_s: float | None = None
) -> TagStream:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TagIoError(f"{path}: empty CSV")
        if [c.strip() for c in header[:2]] != ["timestamp_ps", "channel"]:
            raise TagIoError(f"{path}: expected 'timestamp_ps,channel' header, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((int(row[0]), int(row[1])))
            except (ValueError, IndexError):
                raise TagIoError(f"{path}:{lineno}: bad record {row}") from None
    times = np.array([r[0] for r in rows], dtype=np.int64)
    channels = np.array([r[1] for r in rows], dtype=np.uint8)
    if times.size and np.any(np.diff(times) < 0):
        if not sort:
            warnings.warn(f"{path}: timestamps are not monotonic; sorting", stacklevel=2)
        order = np.argsort(times, kind="stable")
        times, channels = times[order], channels[order]
    if duration_s is None:
        duration_s = max(float(times[-1]) * 1e-12 if times.size else 0.0, 1e-12)
    channel_ids = tuple(range(int(channels.max()) + 1)) if channels.size else (0, 1)
    return TagStream(
        timestamps_ps=times,
        channels=channels,
        resolution_ps=resolution_ps,
        duration_s=duration_s,
        channel_ids=channel_ids,
        origin={"path": str(path)},
    )


def write_histogram_csv(path, hist: Histogram) -> None:
    """Two columns: bin lower edge in ps, counts."""
    buf = io.StringIO()
    buf.write("delay_ps,counts\n")
    edges = hist.delay_min_ps + hist.bin_width_ps * np.arange(hist.n_bins, dtype=np.int64)
    for edge, count in zip(edges.tolist(), hist.counts.tolist()):
        buf.write(f"{edge},{count}\n")
    atomic_write_text(path, buf.getvalue())


def write_power_sweep_csv(path, sweep: PowerSweep) -> None:
    buf = io.StringIO()
    buf.write("power_mw,singles_signal,singles_idler,coincidence_rate,car\n")
    for power, s_s, s_i, r_c, car in sweep.rows():
        buf.write(f"{power:.6g},{s_s:.6f},{s_i:.6f},{r_c:.6f},{car:.6f}\n")
    atomic_write_text(path, buf.getvalue())


def write_json(path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
