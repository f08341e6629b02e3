"""Event streams, voxel-cube encoding, synthetic generators, and file I/O.

Events are (t, x, y, p) tuples with integer microsecond timestamps and
binary polarity. Streams are stored column-wise as numpy arrays so that
encoding and augmentation stay vectorized.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "Event",
    "EventStream",
    "VoxelCube",
    "GroundTruthBox",
    "GroundTruth",
    "EventFileError",
    "BadMagicError",
    "TruncatedFileError",
    "UnsortedTimestampsError",
    "encode_voxel_cube",
    "horizontal_flip",
    "generate_synthetic_stream",
    "read_event_file",
    "write_event_file",
    "read_ground_truth",
    "write_ground_truth",
    "resize_stream_nearest",
    "window_slice",
    "concat_streams",
    "SCENARIOS",
]


class Event(NamedTuple):
    t: int
    x: int
    y: int
    p: int


class EventFileError(Exception):
    """Base class for event-file parsing failures."""


class BadMagicError(EventFileError):
    pass


class TruncatedFileError(EventFileError):
    pass


class UnsortedTimestampsError(EventFileError):
    pass


class EventStream:
    """Time-ordered events on a fixed-size sensor.

    Columns are int64 arrays; construction validates bounds, polarity and
    timestamp ordering. Instances are treated as immutable.
    """

    def __init__(self, t, x, y, p, width: int, height: int, duration: int):
        t = np.asarray(t, dtype=np.int64)
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        p = np.asarray(p, dtype=np.int64)
        if not (t.shape == x.shape == y.shape == p.shape) or t.ndim != 1:
            raise ValueError("event columns must be 1-D and equal length")
        if width <= 0 or height <= 0:
            raise ValueError("sensor must have positive area")
        if duration < 0:
            raise ValueError("duration must be non-negative")
        if t.size:
            if np.any(np.diff(t) < 0):
                raise UnsortedTimestampsError("timestamps must be non-decreasing")
            if t[0] < 0 or t[-1] >= duration:
                raise ValueError("timestamps must lie in [0, duration)")
            if np.any((x < 0) | (x >= width)) or np.any((y < 0) | (y >= height)):
                raise ValueError("event coordinates out of sensor bounds")
            if np.any((p != 0) & (p != 1)):
                raise ValueError("polarity must be 0 or 1")
        self.t = t
        self.x = x
        self.y = y
        self.p = p
        self.width = int(width)
        self.height = int(height)
        self.duration = int(duration)

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.duration == other.duration
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    @classmethod
    def empty(cls, width: int, height: int, duration: int) -> "EventStream":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, width, height, duration)


@dataclass(frozen=True)
class VoxelCube:
    """4-D integer event histogram of shape [T, C, H, W] with C = 2n."""

    data: np.ndarray
    T: int
    n: int

    @property
    def C(self) -> int:
        return 2 * self.n

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ValueError("voxel cube must be 4-D")
        if self.data.shape[0] != self.T or self.data.shape[1] != 2 * self.n:
            raise ValueError("voxel cube shape inconsistent with T, n")
        if np.any(self.data < 0):
            raise ValueError("voxel cube entries must be non-negative")


@dataclass(frozen=True)
class GroundTruthBox:
    t_start: int
    t_end: int
    class_id: int
    x: float
    y: float
    w: float
    h: float


@dataclass
class GroundTruth:
    """Labels emitted alongside a synthetic stream.

    Classification scenarios carry a single class label; detection
    scenarios carry boxes annotated over time intervals.
    """

    kind: str  # "classification" | "detection"
    label: int | None = None
    boxes: list[GroundTruthBox] = field(default_factory=list)


def encode_voxel_cube(stream: EventStream, t_a: int, t_b: int, T: int, n: int) -> VoxelCube:
    """Bin events in [t_a, t_b) into a [T, 2n, H, W] histogram.

    Time-bin index is floor((t - t_a) / (t_b - t_a) * T); the micro bin is
    the same floor rule applied within the bin, scaled by n. Both indices
    clamp to their last bin for timestamps arbitrarily close to t_b.
    Channel index is p * n + micro. All arithmetic is exact (integers).
    """
    if t_a >= t_b:
        raise ValueError("window must satisfy t_a < t_b")
    if T < 1 or n < 1:
        raise ValueError("T and n must be >= 1")
    cube = np.zeros((T, 2 * n, stream.height, stream.width), dtype=np.int64)
    if len(stream) == 0:
        return VoxelCube(cube, T, n)
    mask = (stream.t >= t_a) & (stream.t < t_b)
    if not mask.any():
        return VoxelCube(cube, T, n)
    t = stream.t[mask]
    x = stream.x[mask]
    y = stream.y[mask]
    p = stream.p[mask]
    L = int(t_b - t_a)
    rel = t - t_a
    tau = np.minimum(rel * T // L, T - 1)
    # exact within-bin remainder (in units of 1/L of a bin)
    rem = rel * T - tau * L
    micro = np.minimum(rem * n // L, n - 1)
    c = p * n + micro
    np.add.at(cube, (tau, c, y, x), 1)
    return VoxelCube(cube, T, n)


def horizontal_flip(stream: EventStream) -> EventStream:
    """Mirror events along the x axis: x -> width - 1 - x."""
    return EventStream(
        stream.t,
        stream.width - 1 - stream.x,
        stream.y,
        stream.p,
        stream.width,
        stream.height,
        stream.duration,
    )


def resize_stream_nearest(stream: EventStream, out_w: int, out_h: int) -> EventStream:
    """Rescale event coordinates by nearest-neighbor mapping.

    Multiple events may collapse onto one output pixel.
    """
    if out_w <= 0 or out_h <= 0:
        raise ValueError("output dimensions must be positive")
    if out_w == stream.width and out_h == stream.height:
        return stream
    # map source pixel centers onto the output grid
    x = np.minimum((stream.x * out_w) // stream.width, out_w - 1)
    y = np.minimum((stream.y * out_h) // stream.height, out_h - 1)
    return EventStream(stream.t, x, y, stream.p, out_w, out_h, stream.duration)


def window_slice(stream: EventStream, t_start: int, length: int) -> EventStream:
    """Events with t in [t_start, t_start + length), timestamps re-based to 0."""
    if length <= 0:
        raise ValueError("length must be positive")
    mask = (stream.t >= t_start) & (stream.t < t_start + length)
    return EventStream(
        stream.t[mask] - t_start,
        stream.x[mask],
        stream.y[mask],
        stream.p[mask],
        stream.width,
        stream.height,
        length,
    )


def concat_streams(a: EventStream, b: EventStream) -> EventStream:
    """Merge two streams on the same sensor, re-sorting by timestamp."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("streams must share sensor dimensions")
    t = np.concatenate([a.t, b.t])
    order = np.argsort(t, kind="stable")
    return EventStream(
        t[order],
        np.concatenate([a.x, b.x])[order],
        np.concatenate([a.y, b.y])[order],
        np.concatenate([a.p, b.p])[order],
        a.width,
        a.height,
        max(a.duration, b.duration),
    )


# --- synthetic stream generation -------------------------------------------

SCENARIOS = ("moving-bar", "moving-square", "static-noise", "multi-object")

_GT_ANNOT_INTERVAL = 10_000  # µs between detection annotations


def _edge_events(rng, xs, ys, t0, t1, polarity, rate, width, height):
    """Poisson events along a set of edge pixels over [t0, t1)."""
    span = t1 - t0
    n_pix = len(xs)
    if n_pix == 0 or span <= 0:
        return [], [], [], []
    lam = rate * span
    count = rng.poisson(lam)
    if count == 0:
        return [], [], [], []
    idx = rng.integers(0, n_pix, size=count)
    t = rng.integers(t0, t1, size=count)
    x = np.clip(xs[idx], 0, width - 1)
    y = np.clip(ys[idx], 0, height - 1)
    p = np.full(count, polarity, dtype=np.int64)
    return t, x, y, p


def _finalize(parts, width, height, duration):
    if parts:
        t = np.concatenate([np.asarray(q[0], dtype=np.int64) for q in parts])
        x = np.concatenate([np.asarray(q[1], dtype=np.int64) for q in parts])
        y = np.concatenate([np.asarray(q[2], dtype=np.int64) for q in parts])
        p = np.concatenate([np.asarray(q[3], dtype=np.int64) for q in parts])
    else:
        t = x = y = p = np.zeros(0, dtype=np.int64)
    order = np.argsort(t, kind="stable")
    return EventStream(t[order], x[order], y[order], p[order], width, height, duration)


def _moving_rect_events(rng, width, height, duration, rate, x0, y0, w, h, vx, vy):
    """Edge events of a rectangle translating at (vx, vy) px/µs."""
    parts = []
    boxes = []
    step = 2_000  # µs simulation slice
    for t0 in range(0, duration, step):
        t1 = min(t0 + step, duration)
        cx = x0 + vx * t0
        cy = y0 + vy * t0
        left = int(round(cx))
        top = int(round(cy))
        if left + w < 0 or left >= width or top + h < 0 or top >= height:
            continue
        ys_v = np.arange(top, top + h)
        xs_h = np.arange(left, left + w)
        # leading vertical edge fires ON, trailing fires OFF
        lead_x = left + w - 1 if vx >= 0 else left
        trail_x = left if vx >= 0 else left + w - 1
        parts.append(_edge_events(rng, np.full(h, lead_x), ys_v, t0, t1, 1, rate / 2, width, height))
        parts.append(_edge_events(rng, np.full(h, trail_x), ys_v, t0, t1, 0, rate / 2, width, height))
        # faint events along horizontal edges keep the box extent visible
        parts.append(_edge_events(rng, xs_h, np.full(w, top), t0, t1, 1, rate / 8, width, height))
        parts.append(_edge_events(rng, xs_h, np.full(w, top + h - 1), t0, t1, 0, rate / 8, width, height))
    for ta in range(0, duration, _GT_ANNOT_INTERVAL):
        tb = min(ta + _GT_ANNOT_INTERVAL, duration)
        tm = (ta + tb) // 2
        bx = x0 + vx * tm
        by = y0 + vy * tm
        cl_x = max(0.0, min(bx, width - 1.0))
        cl_y = max(0.0, min(by, height - 1.0))
        cl_w = min(bx + w, float(width)) - cl_x
        cl_h = min(by + h, float(height)) - cl_y
        if cl_w > 1 and cl_h > 1:
            boxes.append(GroundTruthBox(ta, tb, 0, cl_x, cl_y, cl_w, cl_h))
    return parts, boxes


def generate_synthetic_stream(
    scenario: str,
    seed: int,
    duration: int,
    width: int,
    height: int,
    rate: float,
) -> tuple[EventStream, GroundTruth]:
    """Deterministic synthetic event stream plus labels.

    ``rate`` is the approximate total event rate in events/µs. Moving
    objects emit polarity-signed events along leading/trailing edges.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if width <= 0 or height <= 0:
        raise ValueError("zero-area sensor")
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    rng = np.random.default_rng(seed)

    if scenario == "static-noise":
        count = rng.poisson(rate * duration)
        t = np.sort(rng.integers(0, duration, size=count))
        x = rng.integers(0, width, size=count)
        y = rng.integers(0, height, size=count)
        p = rng.integers(0, 2, size=count)
        stream = EventStream(t, x, y, p, width, height, duration)
        return stream, GroundTruth(kind="classification", label=1)

    if scenario == "moving-bar":
        bar_h = max(2, int(height * 0.7))
        top = (height - bar_h) // 2
        vx = (width * 0.6) / duration  # px/µs, crosses ~60% of the sensor
        x_start = width * 0.1
        parts = []
        step = 2_000
        for t0 in range(0, duration, step):
            t1 = min(t0 + step, duration)
            bx = int(round(x_start + vx * t0))
            if bx < 0 or bx >= width:
                continue
            ys = np.arange(top, top + bar_h)
            parts.append(_edge_events(rng, np.full(bar_h, bx), ys, t0, t1, 1, rate / 2, width, height))
            tx = max(bx - 1, 0)
            parts.append(_edge_events(rng, np.full(bar_h, tx), ys, t0, t1, 0, rate / 2, width, height))
        stream = _finalize(parts, width, height, duration)
        return stream, GroundTruth(kind="classification", label=0)

    if scenario == "moving-square":
        side = int(rng.integers(max(4, height // 8), max(6, height // 2)))
        x0 = float(rng.integers(0, max(1, width - side)))
        y0 = float(rng.integers(0, max(1, height - side)))
        speed = (width * 0.4) / duration
        vx = speed if rng.random() < 0.5 else -speed
        parts, boxes = _moving_rect_events(rng, width, height, duration, rate, x0, y0, side, side, vx, 0.0)
        stream = _finalize(parts, width, height, duration)
        return stream, GroundTruth(kind="detection", boxes=boxes)

    # multi-object: two independently moving rectangles of distinct classes
    parts = []
    boxes = []
    for class_id in (0, 1):
        side = int(rng.integers(max(4, height // 8), max(6, height // 3)))
        x0 = float(rng.integers(0, max(1, width - side)))
        y0 = float(rng.integers(0, max(1, height - side)))
        speed = (width * 0.4) / duration
        vx = speed if rng.random() < 0.5 else -speed
        ps, bs = _moving_rect_events(rng, width, height, duration, rate / 2, x0, y0, side, side, vx, 0.0)
        parts.extend(ps)
        boxes.extend(
            GroundTruthBox(b.t_start, b.t_end, class_id, b.x, b.y, b.w, b.h) for b in bs
        )
    stream = _finalize(parts, width, height, duration)
    return stream, GroundTruth(kind="detection", boxes=boxes)


# --- binary event file format -----------------------------------------------
#
# Little-endian layout:
#   magic "EVST" | version u16 = 1 | width u16 | height u16
#   duration u64 (µs) | count u64
#   count x { t u64 | x u16 | y u16 | p u8 | pad u8 }

_MAGIC = b"EVST"
_HEADER = struct.Struct("<4sHHHQQ")
_RECORD_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "u1")]
)


def write_event_file(stream: EventStream, path) -> None:
    records = np.zeros(len(stream), dtype=_RECORD_DTYPE)
    records["t"] = stream.t
    records["x"] = stream.x
    records["y"] = stream.y
    records["p"] = stream.p
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(_MAGIC, 1, stream.width, stream.height, stream.duration, len(stream))
        )
        fh.write(records.tobytes())


def read_event_file(path) -> EventStream:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise TruncatedFileError("file too short for header")
        magic, version, width, height, duration, count = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise BadMagicError(f"bad magic {magic!r}")
        if version != 1:
            raise EventFileError(f"unsupported version {version}")
        payload = fh.read(count * _RECORD_DTYPE.itemsize)
    if len(payload) < count * _RECORD_DTYPE.itemsize:
        raise TruncatedFileError("truncated event records")
    records = np.frombuffer(payload, dtype=_RECORD_DTYPE)
    t = records["t"].astype(np.int64)
    if t.size and np.any(np.diff(t) < 0):
        raise UnsortedTimestampsError("event file timestamps not sorted")
    return EventStream(
        t,
        records["x"].astype(np.int64),
        records["y"].astype(np.int64),
        records["p"].astype(np.int64),
        width,
        height,
        duration,
    )


def write_ground_truth(gt: GroundTruth, path) -> None:
    """Line-oriented sidecar: one record per annotation."""
    with open(path, "w") as fh:
        if gt.kind == "classification":
            fh.write(f"{gt.label}\n")
        else:
            for b in gt.boxes:
                fh.write(
                    f"{b.t_start} {b.t_end} {b.class_id} "
                    f"{b.x:.3f} {b.y:.3f} {b.w:.3f} {b.h:.3f}\n"
                )


def read_ground_truth(path, kind: str) -> GroundTruth:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if kind == "classification":
        if len(lines) != 1 or len(lines[0]) != 1:
            raise ValueError("classification sidecar must hold a single class id")
        return GroundTruth(kind="classification", label=int(lines[0][0]))
    boxes = []
    for parts in lines:
        if len(parts) != 7:
            raise ValueError("detection sidecar records need 7 fields")
        boxes.append(
            GroundTruthBox(
                int(parts[0]), int(parts[1]), int(parts[2]),
                float(parts[3]), float(parts[4]), float(parts[5]), float(parts[6]),
            )
        )
    return GroundTruth(kind="detection", boxes=boxes)
