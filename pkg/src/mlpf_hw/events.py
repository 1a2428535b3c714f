"""Event model and CSV stream I/O.

Streams are held column-wise (:class:`EventArray`) because realistic
recordings run to millions of events; indexing or iterating yields
individual :class:`Event` values.

CSV layout: header ``t_us,x,y,p[,label]``, polarity 0/1 on disk
(mapped to -1/+1 in memory), label 1 for signal and 0 for noise.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Iterator

import numpy as np

SIGNAL = 1
NOISE = 0
NO_LABEL = -1

TS_BITS = 16
TS_MASK = (1 << TS_BITS) - 1


class EventError(ValueError):
    """Base class for stream problems; carries the 1-based file line if known."""

    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class ParseError(EventError):
    pass


class OrderingError(EventError):
    pass


class BoundsError(EventError):
    pass


@dataclass(frozen=True)
class SensorGeometry:
    width: int = 346
    height: int = 260

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("sensor must be at least 8x8")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class Event:
    t_us: int
    x: int
    y: int
    polarity: int
    label: int | None = None

    def __post_init__(self):
        if self.polarity not in (-1, 1):
            raise ValueError(f"polarity must be -1 or +1, got {self.polarity}")


class EventArray:
    """Time-ordered columnar event stream."""

    def __init__(self, t_us, x, y, p, label=None):
        self.t_us = np.asarray(t_us, dtype=np.int64)
        self.x = np.asarray(x, dtype=np.int64)
        self.y = np.asarray(y, dtype=np.int64)
        self.p = np.asarray(p, dtype=np.int8)
        n = len(self.t_us)
        if label is None:
            self.label = None
        else:
            self.label = np.asarray(label, dtype=np.int8)
            if len(self.label) != n:
                raise ValueError("label column length mismatch")
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("column length mismatch")

    @classmethod
    def empty(cls, labeled=False) -> "EventArray":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, z if labeled else None)

    @classmethod
    def from_events(cls, events) -> "EventArray":
        events = list(events)
        if not events:
            return cls.empty()
        labeled = all(e.label is not None for e in events)
        if not labeled and any(e.label is not None for e in events):
            raise ValueError("mixed labeled and unlabeled events")
        return cls([e.t_us for e in events], [e.x for e in events], [e.y for e in events],
                   [e.polarity for e in events], [e.label for e in events] if labeled else None)

    @property
    def labeled(self) -> bool:
        return self.label is not None

    def __len__(self):
        return len(self.t_us)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            lab = None if self.label is None else int(self.label[idx])
            return Event(int(self.t_us[idx]), int(self.x[idx]), int(self.y[idx]),
                         int(self.p[idx]), lab)
        lab = None if self.label is None else self.label[idx]
        return EventArray(self.t_us[idx], self.x[idx], self.y[idx], self.p[idx], lab)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, EventArray):
            return NotImplemented
        if (self.label is None) != (other.label is None):
            return False
        same = all(np.array_equal(a, b) for a, b in zip(self._cols(), other._cols()))
        return same and (self.label is None or np.array_equal(self.label, other.label))

    def _cols(self):
        return (self.t_us, self.x, self.y, self.p)

    def validate(self, geometry: SensorGeometry, first_line: int | None = None):
        """Check ordering, bounds and polarity; ``first_line`` maps index 0 to a file line."""

        def where(i):
            return None if first_line is None else first_line + int(i)

        bad = np.flatnonzero(np.diff(self.t_us) < 0)
        if bad.size:
            i = bad[0] + 1
            raise OrderingError(f"timestamp {self.t_us[i]} < previous {self.t_us[i - 1]}", where(i))
        bad = np.flatnonzero(self.t_us < 0)
        if bad.size:
            raise OrderingError("negative timestamp", where(bad[0]))
        oob = (self.x < 0) | (self.x >= geometry.width) | (self.y < 0) | (self.y >= geometry.height)
        bad = np.flatnonzero(oob)
        if bad.size:
            i = bad[0]
            raise BoundsError(f"pixel ({self.x[i]},{self.y[i]}) outside "
                              f"{geometry.width}x{geometry.height}", where(i))
        bad = np.flatnonzero((self.p != 1) & (self.p != -1))
        if bad.size:
            raise ParseError(f"polarity {self.p[bad[0]]} not in {{-1,+1}}", where(bad[0]))
        return self


def ms_timestamp(t_us):
    """Millisecond timestamp as the hardware forms it: ``t_us >> 10``."""
    return t_us >> 10


def wrap16(t_ms):
    return t_ms & TS_MASK


HEADER = "t_us,x,y,p"


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        return source.read()
    raise TypeError(f"cannot read events from {type(source).__name__}")


def parse_stream(source, geometry: SensorGeometry = SensorGeometry()) -> EventArray:
    """Read an event CSV (path or text stream) into a validated EventArray."""
    lines = _open_text(source).splitlines()
    if not lines:
        raise ParseError("missing header", 1)
    header = lines[0].strip()
    if header == HEADER:
        ncol = 4
    elif header == HEADER + ",label":
        ncol = 5
    else:
        raise ParseError(f"unexpected header {header!r}", 1)
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if not body:
        return EventArray.empty(labeled=ncol == 5)

    rows = [ln.split(",") for ln in body]
    try:
        if any(len(r) != ncol for r in rows):
            raise ValueError
        data = np.array(rows, dtype=np.int64)
    except (ValueError, OverflowError):
        _locate_bad_row(rows, ncol)
        raise
    p = data[:, 3]
    bad = np.flatnonzero((p != 0) & (p != 1))
    if bad.size:
        raise ParseError(f"polarity field must be 0 or 1, got {p[bad[0]]}", int(bad[0]) + 2)
    label = None
    if ncol == 5:
        label = data[:, 4]
        bad = np.flatnonzero((label != 0) & (label != 1))
        if bad.size:
            raise ParseError(f"label must be 0 or 1, got {label[bad[0]]}", int(bad[0]) + 2)
    ev = EventArray(data[:, 0], data[:, 1], data[:, 2], 2 * p - 1, label)
    return ev.validate(geometry, first_line=2)


def _locate_bad_row(rows, ncol):
    for i, r in enumerate(rows):
        if len(r) != ncol:
            raise ParseError(f"expected {ncol} fields, got {len(r)}", i + 2)
        for field in r:
            try:
                int(field)
            except ValueError:
                raise ParseError(f"non-integer field {field.strip()!r}", i + 2) from None


def format_stream(events: EventArray, with_label: bool | None = None) -> str:
    if with_label is None:
        with_label = events.labeled
    if with_label and not events.labeled:
        raise ValueError("stream has no labels to write")
    cols = [events.t_us, events.x, events.y, (events.p > 0).astype(np.int64)]
    header = HEADER
    if with_label:
        cols.append(events.label)
        header += ",label"
    return _join_columns(header, cols)


def _join_columns(header, cols, fmts=None):
    out = [header]
    if len(cols[0]):
        fmts = fmts or [None] * len(cols)
        str_cols = [c.astype(str) if f is None else [f(v) for v in c] for c, f in zip(cols, fmts)]
        out.extend(",".join(row) for row in zip(*str_cols))
    return "\n".join(out) + "\n"


def write_stream(events: EventArray, path, with_label: bool | None = None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_stream(events, with_label))
