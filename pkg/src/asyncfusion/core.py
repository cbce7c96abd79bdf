"""Domain types and dataset ingestion shared across the package."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

FULL_CIRCLE = 360.0
MANIFEST_NAME = "manifest.json"


class AsyncFusionError(Exception):
    """Base class for all errors raised by the package."""


class ValidationError(AsyncFusionError, ValueError):
    """Invalid input data or configuration."""

    def __init__(self, message: str, sensor_id: str | None = None, tick: int | None = None):
        context = []
        if sensor_id is not None:
            context.append(f"sensor={sensor_id}")
        if tick is not None:
            context.append(f"tick={tick}")
        full = f"{message} ({', '.join(context)})" if context else message
        super().__init__(full)
        self.sensor_id = sensor_id
        self.tick = tick


class NumericalError(AsyncFusionError, ArithmeticError):
    """A numerical routine failed (divergence, non-finite values)."""


class Role(str, enum.Enum):
    FAST = "fast"
    SLOW = "slow"


class PayloadKind(str, enum.Enum):
    VECTOR = "vector"
    POINTS = "points"


def normalize_fov(intervals: Iterable[Sequence[float]]) -> tuple[tuple[float, float], ...]:
    """Canonicalize angular intervals onto ``[0, 360)``.

    Each raw interval ``[start, end)`` is read counter-clockwise; ``end < start``
    wraps through 0. Wrapping intervals are split and overlapping pieces merged.
    A span of 360 degrees or more collapses to ``((0, 360),)``.
    """
    pieces: list[tuple[float, float]] = []
    for raw in intervals:
        start, end = float(raw[0]), float(raw[1])
        if not (math.isfinite(start) and math.isfinite(end)):
            raise ValidationError(f"non-finite FOV interval {raw!r}")
        width = end - start
        if width < 0:
            width %= FULL_CIRCLE
        if width == 0:
            raise ValidationError(f"empty FOV interval [{start}, {end})")
        if width >= FULL_CIRCLE:
            return ((0.0, FULL_CIRCLE),)
        lo = start % FULL_CIRCLE
        if lo >= FULL_CIRCLE:  # tiny negative starts round up to 360
            lo = 0.0
        hi = lo + width
        if hi <= FULL_CIRCLE:
            pieces.append((lo, hi))
        else:
            pieces.append((lo, FULL_CIRCLE))
            pieces.append((0.0, hi - FULL_CIRCLE))
    if not pieces:
        raise ValidationError("empty FOV")

    pieces.sort()
    merged = [pieces[0]]
    for lo, hi in pieces[1:]:
        last_lo, last_hi = merged[-1]
        if lo <= last_hi:
            merged[-1] = (last_lo, max(last_hi, hi))
        else:
            merged.append((lo, hi))
    if merged[0] == (0.0, FULL_CIRCLE):
        return ((0.0, FULL_CIRCLE),)
    return tuple(merged)


def fov_arc_length(intervals: Sequence[tuple[float, float]]) -> float:
    return float(sum(hi - lo for lo, hi in intervals))


@dataclass(frozen=True)
class SensorSpec:
    """Static description of one sensor stream.

    ``fov`` is normalized on construction, so two specs describing the same
    angular coverage compare equal regardless of how the intervals were written.
    """

    id: str
    role: Role
    fov: tuple[tuple[float, float], ...]
    frame_bytes: int
    sample_interval_ms: float
    clock_offset_ms: float = 0.0
    max_range_m: float | None = None
    payload: PayloadKind = PayloadKind.VECTOR
    dim: int = 1

    def __post_init__(self):
        if not self.id:
            raise ValidationError("sensor id must be non-empty")
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "payload", PayloadKind(self.payload))
        try:
            fov = normalize_fov(self.fov)
        except ValidationError as exc:
            raise ValidationError(str(exc), sensor_id=self.id) from None
        object.__setattr__(self, "fov", fov)
        if int(self.frame_bytes) != self.frame_bytes or self.frame_bytes <= 0:
            raise ValidationError("frame_bytes must be a positive integer", sensor_id=self.id)
        object.__setattr__(self, "frame_bytes", int(self.frame_bytes))
        if not self.sample_interval_ms > 0:
            raise ValidationError("sample_interval_ms must be positive", sensor_id=self.id)
        if self.max_range_m is not None and not self.max_range_m > 0:
            raise ValidationError("max_range_m must be positive", sensor_id=self.id)
        if self.dim < 1:
            raise ValidationError("dim must be >= 1", sensor_id=self.id)
        if self.payload is PayloadKind.POINTS and self.dim not in (2, 3):
            raise ValidationError("point payloads must be 2D or 3D", sensor_id=self.id)

    @property
    def is_full_view(self) -> bool:
        return self.fov == ((0.0, FULL_CIRCLE),)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "role": self.role.value,
            "fov": [list(iv) for iv in self.fov],
            "frame_bytes": self.frame_bytes,
            "sample_interval_ms": self.sample_interval_ms,
            "clock_offset_ms": self.clock_offset_ms,
            "max_range_m": self.max_range_m,
            "payload": self.payload.value,
            "dim": self.dim,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SensorSpec":
        return cls(
            id=str(d["id"]),
            role=Role(d["role"]),
            fov=tuple(tuple(iv) for iv in d["fov"]),
            frame_bytes=d["frame_bytes"],
            sample_interval_ms=float(d["sample_interval_ms"]),
            clock_offset_ms=float(d.get("clock_offset_ms", 0.0)),
            max_range_m=d.get("max_range_m"),
            payload=PayloadKind(d.get("payload", "vector")),
            dim=int(d["dim"]),
        )


def validate_fov(spec: SensorSpec) -> SensorSpec:
    """Return ``spec`` with its FOV in canonical form (idempotent)."""
    return replace(spec, fov=normalize_fov(spec.fov))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FeatureFrame:
    """One tick of one sensor: a dense vector (1-D) or a point set (m x 2|3)."""

    sensor_id: str
    tick: int
    timestamp_ms: float
    payload: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "payload", _freeze(self.payload))
        if self.payload.ndim not in (1, 2):
            raise ValidationError("payload must be a vector or a point array", self.sensor_id, self.tick)
        if self.tick < 0:
            raise ValidationError("tick must be non-negative", self.sensor_id, self.tick)

    @property
    def kind(self) -> PayloadKind:
        return PayloadKind.VECTOR if self.payload.ndim == 1 else PayloadKind.POINTS

    def __eq__(self, other):
        if not isinstance(other, FeatureFrame):
            return NotImplemented
        return (
            self.sensor_id == other.sensor_id
            and self.tick == other.tick
            and self.timestamp_ms == other.timestamp_ms
            and self.payload.shape == other.payload.shape
            and np.array_equal(self.payload, other.payload)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class Dataset:
    sensors: tuple[SensorSpec, ...]
    frames: Mapping[str, tuple[FeatureFrame, ...]]
    tick_count: int
    _by_id: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        object.__setattr__(self, "frames", {k: tuple(v) for k, v in self.frames.items()})
        object.__setattr__(self, "_by_id", {s.id: s for s in self.sensors})
        _validate_dataset(self)

    def sensor(self, sensor_id: str) -> SensorSpec:
        try:
            return self._by_id[sensor_id]
        except KeyError:
            raise ValidationError("unknown sensor", sensor_id=sensor_id) from None

    @property
    def slow(self) -> list[SensorSpec]:
        return [s for s in self.sensors if s.role is Role.SLOW]

    @property
    def fast(self) -> list[SensorSpec]:
        return [s for s in self.sensors if s.role is Role.FAST]

    def frame(self, sensor_id: str, tick: int) -> FeatureFrame:
        return self.frames[sensor_id][tick]

    def payload_matrix(self, sensor_id: str, ticks: Sequence[int] | None = None) -> np.ndarray:
        """Stack payloads of ``ticks`` into a 2-D array, point sets flattened row-major."""
        seq = self.frames[sensor_id]
        ticks = range(self.tick_count) if ticks is None else ticks
        rows = [seq[t].payload.reshape(-1) for t in ticks]
        sizes = {r.size for r in rows}
        if len(sizes) > 1:
            raise ValidationError("payload size varies across ticks", sensor_id=sensor_id)
        return np.vstack(rows) if rows else np.empty((0, 0))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.sensors == other.sensors
            and self.tick_count == other.tick_count
            and self.frames.keys() == other.frames.keys()
            and all(self.frames[k] == other.frames[k] for k in self.frames)
        )

    __hash__ = None  # type: ignore[assignment]


def _validate_dataset(ds: Dataset) -> None:
    ids = [s.id for s in ds.sensors]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate sensor ids")
    if ds.tick_count < 1:
        raise ValidationError("tick_count must be positive")
    if not any(s.role is Role.SLOW for s in ds.sensors):
        raise ValidationError("no slow modality")
    if not any(s.role is Role.FAST for s in ds.sensors):
        raise ValidationError("no fast modality")
    for spec in ds.sensors:
        seq = ds.frames.get(spec.id)
        if seq is None:
            raise ValidationError("no frames", sensor_id=spec.id)
        if len(seq) != ds.tick_count:
            raise ValidationError(
                f"has {len(seq)} frames, manifest says {ds.tick_count}", sensor_id=spec.id
            )
        prev_ts = -math.inf
        for expected, fr in enumerate(seq):
            if fr.sensor_id != spec.id or fr.tick != expected:
                raise ValidationError("frames out of tick order", spec.id, fr.tick)
            if fr.kind is not spec.payload:
                raise ValidationError(f"payload kind {fr.kind.value} != {spec.payload.value}", spec.id, fr.tick)
            width = fr.payload.shape[-1]
            if width != spec.dim:
                raise ValidationError(f"payload dimension {width} != {spec.dim}", spec.id, fr.tick)
            if fr.kind is PayloadKind.POINTS and fr.payload.shape[0] == 0:
                raise ValidationError("empty point set", spec.id, fr.tick)
            if not np.all(np.isfinite(fr.payload)):
                raise ValidationError("non-finite payload", spec.id, fr.tick)
            if not fr.timestamp_ms > prev_ts:
                raise ValidationError("non-monotone timestamps", spec.id, fr.tick)
            prev_ts = fr.timestamp_ms


def as_missing_rate(r: float) -> float:
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f"missing rate {r} outside [0, 1]")
    return r


# ---------------------------------------------------------------------------
# directory format


def _payload_header(spec: SensorSpec) -> list[str]:
    if spec.payload is PayloadKind.VECTOR:
        return [f"v{i}" for i in range(spec.dim)]
    return ["x", "y", "z"][: spec.dim]


def load_dataset(path: str | Path) -> Dataset:
    """Load and validate a dataset directory (``manifest.json`` + per-sensor CSV)."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise ValidationError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed manifest {manifest_path}: {exc}") from None

    tick_count = int(manifest["tick_count"])
    sensors = []
    frames: dict[str, tuple[FeatureFrame, ...]] = {}
    for entry in manifest["sensors"]:
        try:
            spec = SensorSpec.from_dict(entry)
        except KeyError as exc:
            raise ValidationError(f"manifest sensor entry missing key {exc}") from None
        sensors.append(spec)
        csv_path = root / entry.get("file", f"{spec.id}.csv")
        frames[spec.id] = _read_frames(spec, csv_path)
    return Dataset(sensors=tuple(sensors), frames=frames, tick_count=tick_count)


def _read_frames(spec: SensorSpec, csv_path: Path) -> tuple[FeatureFrame, ...]:
    if not csv_path.is_file():
        raise ValidationError(f"missing frame file {csv_path}", sensor_id=spec.id)
    expected = ["tick", "timestamp_ms", *_payload_header(spec)]
    rows: dict[int, list] = {}
    stamps: dict[int, float] = {}
    with csv_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise ValidationError(f"bad header {header}, expected {expected}", sensor_id=spec.id)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ValidationError(
                    f"line {line_no}: {len(row)} columns, expected {len(expected)} (dimension mismatch)",
                    sensor_id=spec.id,
                )
            tick = int(row[0])
            ts = float(row[1])
            if tick in stamps and stamps[tick] != ts:
                raise ValidationError("inconsistent timestamp within tick", spec.id, tick)
            if spec.payload is PayloadKind.VECTOR and tick in rows:
                raise ValidationError("duplicate vector row", spec.id, tick)
            stamps[tick] = ts
            rows.setdefault(tick, []).append([float(x) for x in row[2:]])

    out = []
    for tick in sorted(rows):
        values = np.asarray(rows[tick], dtype=float)
        payload = values[0] if spec.payload is PayloadKind.VECTOR else values
        out.append(FeatureFrame(spec.id, tick, stamps[tick], payload))
    return tuple(out)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write ``ds`` in the directory format read by :func:`load_dataset`."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"tick_count": ds.tick_count, "sensors": []}
    for spec in ds.sensors:
        entry = spec.to_dict()
        entry["file"] = f"{spec.id}.csv"
        manifest["sensors"].append(entry)
        with (root / entry["file"]).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["tick", "timestamp_ms", *_payload_header(spec)])
            for fr in ds.frames[spec.id]:
                block = fr.payload.reshape(1, -1) if fr.kind is PayloadKind.VECTOR else fr.payload
                for point in block:
                    writer.writerow([fr.tick, repr(float(fr.timestamp_ms)), *(repr(float(v)) for v in point)])
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
