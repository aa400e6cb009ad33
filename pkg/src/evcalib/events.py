"""Event stream parsing, windowing, and active-event surfaces.

The text format is one event per line, ``t x y p``, whitespace separated,
with ``#`` comments. Timestamps are seconds, pixel coordinates integer, and
polarity is -1/+1 (a 0/1 encoding is accepted and mapped to -1/+1).
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from ._kernels import build_sae_maps


class Event(NamedTuple):
    t: float
    x: int
    y: int
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor dimensions must be positive")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height


DAVIS346 = SensorGeometry(width=346, height=260)


class Events:
    """Columnar batch of events (float64 t, int32 x/y, int8 p)."""

    __slots__ = ("t", "x", "y", "p")

    def __init__(self, t, x, y, p):
        self.t = np.asarray(t, dtype=np.float64)
        self.x = np.asarray(x, dtype=np.int32)
        self.y = np.asarray(y, dtype=np.int32)
        self.p = np.asarray(p, dtype=np.int8)
        n = self.t.shape[0]
        if not (self.x.shape[0] == self.y.shape[0] == self.p.shape[0] == n):
            raise ValueError("event columns must have equal length")

    @classmethod
    def empty(cls) -> "Events":
        return cls([], [], [], [])

    @classmethod
    def from_records(cls, records: Iterable[tuple]) -> "Events":
        rows = list(records)
        if not rows:
            return cls.empty()
        t, x, y, p = zip(*rows)
        return cls(t, x, y, p)

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def __getitem__(self, i: int) -> Event:
        return Event(float(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def take(self, index) -> "Events":
        return Events(self.t[index], self.x[index], self.y[index], self.p[index])


@dataclass(frozen=True)
class EventWindow:
    """Half-open time slice [t_start, t_end) of a stream."""

    t_start: float
    t_end: float
    events: Events

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class ActiveEventSurface:
    """Per-pixel most-recent event time and polarity for one window.

    ``valid`` marks pixels that saw at least one event; time/polarity values
    at invalid pixels are meaningless and must not be read.
    """

    geometry: SensorGeometry
    time_map: np.ndarray
    polarity_map: np.ndarray
    valid: np.ndarray

    @property
    def active_count(self) -> int:
        return int(self.valid.sum())

    def active_events(self) -> Events:
        ys, xs = np.nonzero(self.valid)
        return Events(self.time_map[ys, xs], xs, ys, self.polarity_map[ys, xs])


class StreamFormatError(ValueError):
    """Malformed event stream; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def parse_event_stream(source, geometry: SensorGeometry, *,
                       time_slack: float = 0.0) -> Events:
    """Parse and validate a ``t x y p`` text stream.

    ``source`` is a path or a binary file-like. Timestamps may step backward
    by at most ``time_slack`` seconds (the result is then re-sorted, stably);
    larger regressions are rejected.
    """
    if isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
    else:
        raw = source.read()
    try:
        with warnings.catch_warnings():
            # comment-only streams are legal and return an empty batch
            warnings.simplefilter("ignore", UserWarning)
            table = np.loadtxt(io.BytesIO(raw), dtype=np.float64,
                               comments="#", ndmin=2)
    except ValueError:
        _raise_first_bad_line(raw, geometry)
        raise  # unreachable; _raise_first_bad_line always raises
    if table.size == 0:
        return Events.empty()
    if table.shape[1] != 4:
        _raise_first_bad_line(raw, geometry)

    t, x, y, p = table.T
    bad = (
        (x != np.floor(x)) | (y != np.floor(y)) | (p != np.floor(p))
        | (x < 0) | (x >= geometry.width) | (y < 0) | (y >= geometry.height)
        | ((p != -1) & (p != 0) & (p != 1))
        | ~np.isfinite(t) | ~np.isfinite(x) | ~np.isfinite(y)
    )
    if len(t) > 1:
        regress = np.zeros(len(t), dtype=bool)
        regress[1:] = t[1:] < t[:-1] - time_slack
        bad |= regress
    if bad.any():
        _raise_first_bad_line(raw, geometry, row=int(np.argmax(bad)),
                              time_slack=time_slack)

    p = np.where(p == 0, -1, p)
    ev = Events(t, x, y, p)
    if time_slack > 0 and len(ev) > 1 and np.any(ev.t[1:] < ev.t[:-1]):
        ev = ev.take(np.argsort(ev.t, kind="stable"))
    return ev


def load_events(path, geometry: SensorGeometry, **kwargs) -> Events:
    return parse_event_stream(Path(path), geometry, **kwargs)


def write_events(path, events: Events) -> None:
    t, x, y, p = events.t, events.x, events.y, events.p
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lo in range(0, len(events), 1 << 20):
            hi = min(lo + (1 << 20), len(events))
            fh.writelines(f"{float(t[i])!r} {x[i]} {y[i]} {p[i]}\n"
                          for i in range(lo, hi))


def _raise_first_bad_line(raw: bytes, geometry: SensorGeometry, *,
                          row: int | None = None, time_slack: float = 0.0):
    """Line-by-line re-scan to attach an exact line number to the failure."""
    data_row = -1
    prev_t = None
    for ln, line in enumerate(raw.splitlines(), start=1):
        body = line.split(b"#", 1)[0].strip()
        if not body:
            continue
        data_row += 1
        if row is not None and data_row < row:
            parts = body.split()
            prev_t = float(parts[0])
            continue
        parts = body.split()
        if len(parts) != 4:
            raise StreamFormatError(ln, f"expected 4 fields, got {len(parts)}")
        try:
            t = float(parts[0])
            x = float(parts[1])
            y = float(parts[2])
            p = float(parts[3])
        except ValueError:
            raise StreamFormatError(ln, f"non-numeric field in {body!r}") from None
        if not np.isfinite(t):
            raise StreamFormatError(ln, "non-finite timestamp")
        if x != int(x) or y != int(y):
            raise StreamFormatError(ln, "pixel coordinates must be integers")
        if not (0 <= x < geometry.width and 0 <= y < geometry.height):
            raise StreamFormatError(
                ln, f"pixel ({int(x)}, {int(y)}) outside "
                    f"{geometry.width}x{geometry.height}")
        if p not in (-1.0, 0.0, 1.0):
            raise StreamFormatError(ln, f"polarity {parts[3].decode()} not in "
                                        "{-1, +1} (or 0/1)")
        if prev_t is not None and t < prev_t - time_slack:
            raise StreamFormatError(ln, f"timestamp {t!r} goes back past the "
                                        f"allowed slack ({time_slack!r}s)")
        prev_t = t
    # The fast path failed but every line scans clean: report generically.
    raise StreamFormatError(0, "unparseable stream")


def window_events(events: Events, window_len: float) -> list[EventWindow]:
    """Split a time-sorted stream into consecutive half-open windows.

    Windows are aligned to the first event's timestamp; empty interior
    windows are kept so window indices map linearly to time.
    """
    if window_len <= 0:
        raise ValueError("window_len must be positive")
    if len(events) == 0:
        return []
    t = events.t
    t0 = float(t[0])
    k = np.floor((t - t0) / window_len).astype(np.int64)
    # floor() can be off by one ulp right at a boundary; nudge against the
    # representable window edges so membership is exact.
    for _ in range(2):
        k += t >= t0 + (k + 1) * window_len
        k -= t < t0 + k * window_len
    n_windows = int(k[-1]) + 1
    bounds = np.searchsorted(k, np.arange(n_windows + 1))
    out = []
    for i in range(n_windows):
        sl = slice(int(bounds[i]), int(bounds[i + 1]))
        out.append(EventWindow(
            t_start=t0 + i * window_len,
            t_end=t0 + (i + 1) * window_len,
            events=events.take(sl),
        ))
    return out


def build_sae(window: EventWindow, geometry: SensorGeometry) -> ActiveEventSurface:
    """Most-recent-event surface of one window; later events win ties."""
    ev = window.events
    if len(ev):
        if ev.x.min() < 0 or ev.x.max() >= geometry.width \
                or ev.y.min() < 0 or ev.y.max() >= geometry.height:
            raise ValueError("event coordinates outside sensor geometry")
    time_map, pol_map, valid = build_sae_maps(
        ev.t, ev.x, ev.y, ev.p, geometry.width, geometry.height)
    return ActiveEventSurface(geometry=geometry, time_map=time_map,
                              polarity_map=pol_map, valid=valid)
