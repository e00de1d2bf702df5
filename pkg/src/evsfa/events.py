"""Event data model, file I/O and the background-activity noise filter.

An event stream is held column-wise (one numpy array per field) so that
neighbourhood queries can be answered with ``searchsorted`` over the sorted
timestamps instead of Python loops.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

__all__ = [
    "Event",
    "EventStream",
    "EventParseError",
    "EventBoundsError",
    "load_events",
    "write_events",
    "filter_noise",
    "neighbour_counts",
    "atomic_write",
]

BINARY_MAGIC = b"EVS1"
_HEADER = struct.Struct("<4sIII")
RECORD_DTYPE = np.dtype(
    {
        "names": ["x", "y", "t", "p"],
        "formats": ["<u2", "<u2", "<u8", "u1"],
        "offsets": [0, 2, 4, 12],
        "itemsize": 16,
    }
)


class EventParseError(ValueError):
    """Raised when an event file does not parse under its declared format."""


class EventBoundsError(ValueError):
    """Raised when an event lies outside the declared sensor size."""


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-sorted events from a ``width`` x ``height`` sensor.

    Parameters
    ----------
    x, y : array_like of int
        Pixel column and row.
    t : array_like of int
        Timestamps in microseconds.
    p : array_like of int
        Polarity flags (0 or 1). Carried through I/O, never used by features.
    width, height : int
        Sensor size in pixels.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        cols = {}
        for name, dtype in (("x", np.int64), ("y", np.int64), ("t", np.int64), ("p", np.uint8)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype).reshape(-1)
            arr.setflags(write=False)
            cols[name] = arr
        n = len(cols["t"])
        if any(len(c) != n for c in cols.values()):
            raise ValueError("event columns must have equal length")
        for name, arr in cols.items():
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def from_arrays(cls, x, y, t, p=None, *, width, height, sort=True, check=True):
        """Build a stream, stably sorting by time and checking sensor bounds."""
        x = np.asarray(x, dtype=np.int64).reshape(-1)
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        t = np.asarray(t, dtype=np.int64).reshape(-1)
        p = np.ones_like(t, dtype=np.uint8) if p is None else np.asarray(p).reshape(-1)
        if check and len(t):
            bad = (x < 0) | (x >= width) | (y < 0) | (y >= height)
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise EventBoundsError(
                    f"event {i} at ({x[i]}, {y[i]}) outside {width}x{height} sensor"
                )
            if (t < 0).any():
                raise EventBoundsError("negative timestamp")
        if sort and len(t) and np.any(np.diff(t) < 0):
            order = np.argsort(t, kind="stable")
            x, y, t, p = x[order], y[order], t[order], p[order]
        return cls(x, y, t, p, width, height)

    @classmethod
    def from_events(cls, events, *, width, height):
        events = list(events)
        if not events:
            return cls.empty(width, height)
        x, y, t, p = (np.array(col) for col in zip(*events))
        return cls.from_arrays(x, y, t, p, width=width, height=height)

    @classmethod
    def empty(cls, width, height):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z.astype(np.uint8), width, height)

    def __len__(self):
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for row in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.p.tolist()):
            yield Event(*row)

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            return Event(int(self.x[key]), int(self.y[key]), int(self.t[key]), int(self.p[key]))
        return EventStream(self.x[key], self.y[key], self.t[key], self.p[key], self.width, self.height)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and all(
                np.array_equal(getattr(self, c), getattr(other, c)) for c in ("x", "y", "t", "p")
            )
        )

    __hash__ = None

    @property
    def span(self):
        """(first, last) timestamp, or None for an empty stream."""
        if not len(self):
            return None
        return int(self.t[0]), int(self.t[-1])

    def time_slice(self, t_lo, t_hi, *, lo_open=True):
        """Index range of events with ``t_lo < t <= t_hi`` (``t_lo <= t`` if not ``lo_open``)."""
        lo = np.searchsorted(self.t, t_lo, side="right" if lo_open else "left")
        hi = np.searchsorted(self.t, t_hi, side="right")
        return int(lo), int(hi)


# ---------------------------------------------------------------------------
# file I/O


def atomic_write(path, data: bytes):
    """Write ``data`` to ``path`` through a temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _guess_format(path):
    return "packed-binary" if os.fspath(path).endswith((".bin", ".evs")) else "csv"


def load_events(path, format=None) -> EventStream:
    """Read an event file written as CSV or packed binary.

    The CSV layout is a ``width,height`` header line followed by one
    ``x,y,t,p`` line per event. The binary layout is a 16 byte header
    (``EVS1``, u32 width, u32 height, u32 count) followed by 16 byte
    little-endian records.
    """
    format = format or _guess_format(path)
    if format == "csv":
        return _load_csv(path)
    if format in ("packed-binary", "binary"):
        return _load_binary(path)
    raise ValueError(f"unknown event format {format!r}")


def _load_csv(path):
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise EventParseError(f"{path}: line 1: missing 'width,height' header")
    try:
        width, height = (int(v) for v in lines[0].split(","))
    except ValueError:
        raise EventParseError(f"{path}: line 1: bad header {lines[0]!r}") from None
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            if len(parts) != 4:
                raise ValueError
            row = [int(v) for v in parts]
        except ValueError:
            raise EventParseError(f"{path}: line {lineno}: malformed event {line!r}") from None
        if row[3] not in (0, 1):
            raise EventParseError(f"{path}: line {lineno}: polarity must be 0 or 1")
        rows.append(row)
    if not rows:
        return EventStream.empty(width, height)
    arr = np.array(rows, dtype=np.int64)
    return EventStream.from_arrays(
        arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3].astype(np.uint8), width=width, height=height
    )


def _load_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise EventParseError(f"{path}: offset 0: truncated header")
    magic, width, height, count = _HEADER.unpack_from(raw, 0)
    if magic != BINARY_MAGIC:
        raise EventParseError(f"{path}: offset 0: bad magic {magic!r}")
    body = len(raw) - _HEADER.size
    if body != count * RECORD_DTYPE.itemsize:
        offset = _HEADER.size + min(body, count * RECORD_DTYPE.itemsize)
        raise EventParseError(
            f"{path}: offset {offset}: expected {count} records, found {body / RECORD_DTYPE.itemsize:g}"
        )
    rec = np.frombuffer(raw, dtype=RECORD_DTYPE, count=count, offset=_HEADER.size)
    if count and rec["p"].max() > 1:
        i = int(np.flatnonzero(rec["p"] > 1)[0])
        raise EventParseError(f"{path}: offset {_HEADER.size + 16 * i}: polarity must be 0 or 1")
    return EventStream.from_arrays(
        rec["x"], rec["y"], rec["t"].astype(np.int64), rec["p"], width=width, height=height
    )


def encode_events(stream: EventStream, format="csv") -> bytes:
    if format == "csv":
        lines = [f"{stream.width},{stream.height}"]
        lines.extend(
            f"{x},{y},{t},{p}"
            for x, y, t, p in zip(
                stream.x.tolist(), stream.y.tolist(), stream.t.tolist(), stream.p.tolist()
            )
        )
        return ("\n".join(lines) + "\n").encode()
    if format in ("packed-binary", "binary"):
        if stream.width > 0xFFFF + 1 or stream.height > 0xFFFF + 1:
            raise ValueError("packed binary stores 16 bit coordinates")
        rec = np.zeros(len(stream), dtype=RECORD_DTYPE)
        rec["x"], rec["y"], rec["t"], rec["p"] = stream.x, stream.y, stream.t, stream.p
        header = _HEADER.pack(BINARY_MAGIC, stream.width, stream.height, len(stream))
        return header + rec.tobytes()
    raise ValueError(f"unknown event format {format!r}")


def write_events(stream: EventStream, path, format=None):
    """Write ``stream`` losslessly; see :func:`load_events` for the layouts."""
    atomic_write(path, encode_events(stream, format or _guess_format(path)))


# ---------------------------------------------------------------------------
# noise filter


def neighbour_counts(stream: EventStream, half_width=2, window=30000):
    """Number of events in each event's box ``|dx|,|dy| <= half_width, |dt| <= window``.

    The event itself is included in its own count.
    """
    n = len(stream)
    counts = np.zeros(n, dtype=np.int64)
    if n == 0:
        return counts
    W, H = stream.width, stream.height
    t = stream.t - stream.t[0]
    block = int(t[-1]) + 2 * window + 1
    if W * H * block >= 2**62:
        return _neighbour_counts_slow(stream, half_width, window)
    pix = stream.y * W + stream.x
    # one sorted key per event: pixel-major, then shifted time
    keys = np.sort(pix * block + t + window)
    for dy in range(-half_width, half_width + 1):
        for dx in range(-half_width, half_width + 1):
            nx, ny = stream.x + dx, stream.y + dy
            ok = (nx >= 0) & (nx < W) & (ny >= 0) & (ny < H)
            base = (ny * W + nx) * block + t
            lo = np.searchsorted(keys, base[ok], side="left")
            hi = np.searchsorted(keys, base[ok] + 2 * window, side="right")
            counts[ok] += hi - lo
    return counts


def _neighbour_counts_slow(stream, half_width, window):
    counts = np.zeros(len(stream), dtype=np.int64)
    for i in range(len(stream)):
        lo, hi = stream.time_slice(stream.t[i] - window, stream.t[i] + window, lo_open=False)
        near = (np.abs(stream.x[lo:hi] - stream.x[i]) <= half_width) & (
            np.abs(stream.y[lo:hi] - stream.y[i]) <= half_width
        )
        counts[i] = near.sum()
    return counts


def filter_noise(stream: EventStream, half_width=2, window=30000) -> EventStream:
    """Drop events that are alone in their spatiotemporal box.

    An event survives when at least one *other* event lies within
    ``half_width`` pixels on both axes and ``window`` microseconds on either
    side of it. Order is preserved.
    """
    if len(stream) == 0:
        return stream
    keep = neighbour_counts(stream, half_width, window) >= 2
    return stream[keep]
