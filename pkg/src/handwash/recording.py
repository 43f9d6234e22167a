"""Multi-rate recording model, bundle I/O, validation and cue-based annotation proposals.

A recording bundle is a directory holding one ``<channel_id>.csv`` per channel
(header ``t_ms,value``), a ``meta.csv`` of ``key,value`` rows and an
``annotations.csv`` (``start_ms,end_ms,kind,source``). Lines starting with
``#`` are comments.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

IMU_CHANNELS = ("acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z")
ATMOSPHERIC_CHANNELS = ("humidity", "temperature", "pressure")
SENSOR_CHANNELS = IMU_CHANNELS + ATMOSPHERIC_CHANNELS
CUE_CHANNELS = ("beacon_rssi", "button")
CHANNELS = SENSOR_CHANNELS + CUE_CHANNELS

NOMINAL_RATE_HZ: dict[str, float] = {
    **{c: 52.0 for c in IMU_CHANNELS},
    **{c: 1.0 for c in ATMOSPHERIC_CHANNELS},
}

ANNOTATION_KINDS = ("hand_wash", "walk", "stairs", "other_adl")
ANNOTATION_SOURCES = ("manual", "proposed")
DAY_CONDITIONS = ("rainy", "sunny", "cloudy")

DEFAULT_RSSI_FLOOR = -80.0
DEFAULT_MAX_WASH_S = 90.0

RATE_TOLERANCE = 0.20
GAP_FACTOR = 5.0
WASH_DURATION_RANGE_S = (3.0, 120.0)


class RecordingError(ValueError):
    """Raised for malformed bundles and contract violations."""


class CueWarning(UserWarning):
    """Ground-truth cue inconsistencies (odd presses, rejected pairs)."""


@dataclass(frozen=True, eq=False)
class ChannelSeries:
    channel_id: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.channel_id not in CHANNELS:
            raise RecordingError(f"unknown channel {self.channel_id!r}")
        t = np.array(self.timestamps, dtype=np.int64)
        v = np.array(self.values, dtype=np.float64)
        if t.ndim != 1 or v.shape != t.shape:
            raise RecordingError(
                f"{self.channel_id}: timestamps and values must be 1-d and equal length"
            )
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            raise RecordingError(
                f"{self.channel_id}: timestamps not strictly increasing at index {bad[0] + 1}"
            )
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.timestamps)

    def __eq__(self, other):
        if not isinstance(other, ChannelSeries):
            return NotImplemented
        return (
            self.channel_id == other.channel_id
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def between(self, start_ms: int, end_ms: int) -> np.ndarray:
        """Values with ``start_ms <= t < end_ms``."""
        lo, hi = np.searchsorted(self.timestamps, [start_ms, end_ms], side="left")
        return self.values[lo:hi]


@dataclass(frozen=True, order=True)
class Annotation:
    start_ms: int
    end_ms: int
    kind: str = "hand_wash"
    source: str = "manual"

    def __post_init__(self):
        if self.kind not in ANNOTATION_KINDS:
            raise RecordingError(f"unknown annotation kind {self.kind!r}")
        if self.source not in ANNOTATION_SOURCES:
            raise RecordingError(f"unknown annotation source {self.source!r}")
        if not self.end_ms > self.start_ms:
            raise RecordingError(
                f"annotation end {self.end_ms} must be after start {self.start_ms}"
            )

    @property
    def duration_s(self) -> float:
        return (self.end_ms - self.start_ms) / 1000.0


@dataclass(frozen=True)
class RecordingMeta:
    participant_id: str
    recording_id: str = ""
    day_condition: str = "cloudy"
    outdoor_temp_c: float = 17.0
    outdoor_rh_percent: float = 75.0
    outdoor_pressure_hpa: float = 1002.0

    def __post_init__(self):
        if not self.recording_id:
            object.__setattr__(self, "recording_id", self.participant_id)
        if self.day_condition not in DAY_CONDITIONS:
            raise RecordingError(f"unknown day condition {self.day_condition!r}")
        for name, (lo, hi) in (
            ("outdoor_temp_c", (-40.0, 60.0)),
            ("outdoor_rh_percent", (0.0, 100.0)),
            ("outdoor_pressure_hpa", (850.0, 1100.0)),
        ):
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise RecordingError(f"{name}={value} outside [{lo}, {hi}]")


@dataclass(frozen=True, eq=False)
class Recording:
    meta: RecordingMeta
    channels: Mapping[str, ChannelSeries]
    annotations: tuple[Annotation, ...] = ()
    duration_ms: int = 0

    def __post_init__(self):
        for ch in SENSOR_CHANNELS:
            if ch not in self.channels:
                raise RecordingError(f"missing channel {ch}")
        ordered = {}
        for ch in CHANNELS:
            if ch in self.channels:
                series = self.channels[ch]
                if series.channel_id != ch:
                    raise RecordingError(f"channel key {ch} holds {series.channel_id}")
                if len(series) and series.timestamps[0] < 0:
                    raise RecordingError(f"{ch}: negative timestamp")
                if len(series) and series.timestamps[-1] > self.duration_ms:
                    raise RecordingError(
                        f"{ch}: timestamp {series.timestamps[-1]} beyond duration {self.duration_ms}"
                    )
                ordered[ch] = series
        extra = set(self.channels) - set(ordered)
        if extra:
            raise RecordingError(f"unknown channels {sorted(extra)}")
        annotations = tuple(sorted(self.annotations))
        for a in annotations:
            if a.start_ms < 0 or a.end_ms > self.duration_ms:
                raise RecordingError(
                    f"annotation [{a.start_ms}, {a.end_ms}] outside [0, {self.duration_ms}]"
                )
        object.__setattr__(self, "channels", ordered)
        object.__setattr__(self, "annotations", annotations)
        object.__setattr__(self, "duration_ms", int(self.duration_ms))

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.meta == other.meta
            and self.duration_ms == other.duration_ms
            and self.annotations == other.annotations
            and list(self.channels) == list(other.channels)
            and all(self.channels[c] == other.channels[c] for c in self.channels)
        )

    __hash__ = None

    @property
    def participant_id(self) -> str:
        return self.meta.participant_id

    @property
    def recording_id(self) -> str:
        return self.meta.recording_id

    @property
    def washes(self) -> tuple[Annotation, ...]:
        return tuple(a for a in self.annotations if a.kind == "hand_wash")


@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    message: str
    channel: str = ""
    t_ms: int | None = None


# ---------------------------------------------------------------------------
# bundle I/O


def _data_lines(path: Path) -> list[tuple[int, str]]:
    """(1-based line number, text) of non-comment, non-blank lines."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if line and not line.startswith("#"):
                out.append((i, line))
    return out


def _read_channel(path: Path, channel: str) -> ChannelSeries:
    lines = _data_lines(path)
    if not lines or lines[0][1].replace(" ", "") != "t_ms,value":
        raise RecordingError(f"{path.name}: expected header 't_ms,value'")
    rows = lines[1:]
    t_cells, v_cells = [], []
    for lineno, text in rows:
        parts = text.split(",")
        if len(parts) != 2:
            raise RecordingError(f"{path.name}: row {lineno}: expected 2 cells, got {len(parts)}")
        t_cells.append(parts[0])
        v_cells.append(parts[1])
    try:
        t = np.array([int(c) for c in t_cells], dtype=np.int64)
    except ValueError:
        for (lineno, _), cell in zip(rows, t_cells):
            try:
                int(cell)
            except ValueError:
                raise RecordingError(
                    f"{path.name}: malformed number {cell!r} at row {lineno}, column t_ms"
                ) from None
        raise
    try:
        v = np.array(v_cells, dtype=np.float64) if v_cells else np.empty(0)
    except ValueError:
        for (lineno, _), cell in zip(rows, v_cells):
            try:
                float(cell)
            except ValueError:
                raise RecordingError(
                    f"{path.name}: malformed number {cell!r} at row {lineno}, column value"
                ) from None
        raise
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        lineno = rows[bad[0] + 1][0]
        raise RecordingError(
            f"{path.name}: non-monotone timestamp at row {lineno} (data index {bad[0] + 1})"
        )
    return ChannelSeries(channel, t, v)


def _read_meta(path: Path) -> dict[str, str]:
    out = {}
    for lineno, text in _data_lines(path)[1:]:
        key, sep, value = text.partition(",")
        if not sep:
            raise RecordingError(f"{path.name}: row {lineno}: expected key,value")
        out[key.strip()] = value.strip()
    return out


def _float_field(meta: dict[str, str], key: str) -> float:
    try:
        return float(meta[key])
    except KeyError:
        raise RecordingError(f"meta.csv: missing key {key}") from None
    except ValueError:
        raise RecordingError(f"meta.csv: malformed number {meta[key]!r} for {key}") from None


def _read_annotations(path: Path) -> list[Annotation]:
    lines = _data_lines(path)
    if not lines:
        return []
    header = [h.strip() for h in lines[0][1].split(",")]
    if header != ["start_ms", "end_ms", "kind", "source"]:
        raise RecordingError(f"{path.name}: expected header start_ms,end_ms,kind,source")
    out = []
    for lineno, text in lines[1:]:
        cells = [c.strip() for c in text.split(",")]
        if len(cells) != 4:
            raise RecordingError(f"{path.name}: row {lineno}: expected 4 cells")
        bounds = []
        for col, cell in zip(("start_ms", "end_ms"), cells[:2]):
            try:
                bounds.append(int(cell))
            except ValueError:
                raise RecordingError(
                    f"{path.name}: malformed number {cell!r} at row {lineno}, column {col}"
                ) from None
        out.append(Annotation(bounds[0], bounds[1], cells[2], cells[3]))
    return out


def parse_recording(path: str | Path) -> Recording:
    """Load a recording bundle directory.

    Unknown ``*.csv`` files are ignored with a warning. Raises
    :class:`RecordingError` naming the offending channel, row or column.
    """
    path = Path(path)
    if not path.is_dir():
        raise RecordingError(f"{path}: not a recording bundle directory")
    meta_path = path / "meta.csv"
    if not meta_path.exists():
        raise RecordingError(f"{path}: missing meta.csv")
    raw = _read_meta(meta_path)
    meta = RecordingMeta(
        participant_id=raw.get("participant_id", path.name),
        recording_id=raw.get("recording_id", path.name),
        day_condition=raw.get("day_condition", "cloudy"),
        outdoor_temp_c=_float_field(raw, "outdoor_temp_c"),
        outdoor_rh_percent=_float_field(raw, "outdoor_rh_percent"),
        outdoor_pressure_hpa=_float_field(raw, "outdoor_pressure_hpa"),
    )
    channels = {}
    for ch in CHANNELS:
        f = path / f"{ch}.csv"
        if f.exists():
            channels[ch] = _read_channel(f, ch)
        elif ch in SENSOR_CHANNELS:
            raise RecordingError(f"missing channel {ch}")
    known = {f"{c}.csv" for c in CHANNELS} | {"meta.csv", "annotations.csv"}
    for f in sorted(path.glob("*.csv")):
        if f.name not in known:
            warnings.warn(f"{path.name}: ignoring unknown channel file {f.name}", stacklevel=2)
    ann_path = path / "annotations.csv"
    annotations = _read_annotations(ann_path) if ann_path.exists() else []
    if "duration_ms" in raw:
        try:
            duration = int(raw["duration_ms"])
        except ValueError:
            raise RecordingError(f"meta.csv: malformed duration_ms {raw['duration_ms']!r}") from None
    else:
        duration = max(int(s.timestamps[-1]) for s in channels.values() if len(s))
    return Recording(meta, channels, tuple(annotations), duration)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_recording(rec: Recording, path: str | Path, header: str | None = None) -> Path:
    """Write ``rec`` as a bundle directory; ``header`` becomes a leading comment line."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    prefix = f"# {header}\n" if header else ""
    m = rec.meta
    meta_rows = [
        ("participant_id", m.participant_id),
        ("recording_id", m.recording_id),
        ("day_condition", m.day_condition),
        ("outdoor_temp_c", _fmt(m.outdoor_temp_c)),
        ("outdoor_rh_percent", _fmt(m.outdoor_rh_percent)),
        ("outdoor_pressure_hpa", _fmt(m.outdoor_pressure_hpa)),
        ("duration_ms", str(rec.duration_ms)),
    ]
    with open(path / "meta.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(prefix + "key,value\n")
        fh.writelines(f"{k},{v}\n" for k, v in meta_rows)
    with open(path / "annotations.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(prefix + "start_ms,end_ms,kind,source\n")
        fh.writelines(
            f"{a.start_ms},{a.end_ms},{a.kind},{a.source}\n" for a in rec.annotations
        )
    for ch, series in rec.channels.items():
        buf = io.StringIO()
        buf.write(prefix + "t_ms,value\n")
        buf.writelines(
            f"{t},{v!r}\n" for t, v in zip(series.timestamps.tolist(), series.values.tolist())
        )
        (path / f"{ch}.csv").write_text(buf.getvalue(), encoding="utf-8")
    return path


def load_dataset(root: str | Path) -> list[Recording]:
    """Parse every bundle below ``root``, ordered by (participant, recording)."""
    root = Path(root)
    if (root / "meta.csv").exists():
        return [parse_recording(root)]
    if not root.is_dir():
        raise RecordingError(f"{root}: no such dataset directory")
    bundles = sorted(p for p in root.iterdir() if (p / "meta.csv").exists())
    if not bundles:
        raise RecordingError(f"{root}: dataset directory contains no recording bundles")
    recs = [parse_recording(p) for p in bundles]
    return sorted(recs, key=lambda r: (r.participant_id, r.recording_id))


# ---------------------------------------------------------------------------
# annotation proposals


def button_presses(series: ChannelSeries) -> np.ndarray:
    """Timestamps of 0->1 transitions; a leading 1 counts as a press."""
    on = series.values > 0.5
    prev = np.concatenate(([False], on[:-1]))
    return series.timestamps[on & ~prev]


def _mean_rssi(series: ChannelSeries, start_ms: int, end_ms: int, floor: float) -> float:
    # one bin per started second; empty bins count as just below the floor
    n_bins = max(1, math.ceil((end_ms - start_ms) / 1000))
    lo, hi = np.searchsorted(series.timestamps, [start_ms, end_ms], side="left")
    hi = max(hi, np.searchsorted(series.timestamps, end_ms, side="right"))
    t = series.timestamps[lo:hi]
    v = series.values[lo:hi]
    bins = np.minimum((t - start_ms) // 1000, n_bins - 1)
    sums = np.bincount(bins, weights=v, minlength=n_bins)
    counts = np.bincount(bins, minlength=n_bins)
    per_bin = np.where(counts > 0, sums / np.maximum(counts, 1), floor - 1.0)
    return float(per_bin.mean())


def _rssi_runs(series: ChannelSeries, floor: float, max_gap_ms: int = 2000) -> list[tuple[int, int]]:
    t = series.timestamps[series.values >= floor]
    if t.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(t) > max_gap_ms)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [t.size - 1]))
    return [(int(t[s]), int(t[e])) for s, e in zip(starts, ends) if t[e] > t[s]]


def propose_annotations(
    rec: Recording,
    rssi_floor: float = DEFAULT_RSSI_FLOOR,
    max_wash_s: float = DEFAULT_MAX_WASH_S,
) -> list[Annotation]:
    """Hand-wash proposals from button press pairs, gated by beacon proximity.

    Presses are paired in order (1st with 2nd, 3rd with 4th, ...). A pair
    longer than ``max_wash_s`` or whose mean RSSI falls below ``rssi_floor``
    is rejected with a :class:`CueWarning`. Without a button channel the
    contiguous above-floor RSSI runs are proposed instead.
    """
    button = rec.channels.get("button")
    rssi = rec.channels.get("beacon_rssi")
    if button is None and rssi is None:
        raise RecordingError("no ground-truth cues")
    max_ms = max_wash_s * 1000.0
    if button is None:
        spans = [s for s in _rssi_runs(rssi, rssi_floor) if s[1] - s[0] <= max_ms]
        return [Annotation(s, e, "hand_wash", "proposed") for s, e in spans]

    presses = button_presses(button).tolist()
    if len(presses) % 2:
        warnings.warn(
            f"{rec.recording_id}: odd trailing button press at {presses[-1]} ms ignored",
            CueWarning,
            stacklevel=2,
        )
        presses = presses[:-1]
    out = []
    for start, end in zip(presses[0::2], presses[1::2]):
        if end - start > max_ms:
            warnings.warn(
                f"{rec.recording_id}: press pair [{start}, {end}] ms exceeds {max_wash_s} s",
                CueWarning,
                stacklevel=2,
            )
            continue
        if rssi is not None and _mean_rssi(rssi, start, end, rssi_floor) < rssi_floor:
            warnings.warn(
                f"{rec.recording_id}: press pair [{start}, {end}] ms away from beacon",
                CueWarning,
                stacklevel=2,
            )
            continue
        out.append(Annotation(int(start), int(end), "hand_wash", "proposed"))
    return out


# ---------------------------------------------------------------------------
# validation


def validate_recording(rec: Recording) -> list[ValidationIssue]:
    """Collect data-quality findings; never raises."""
    issues: list[ValidationIssue] = []
    for ch, rate in NOMINAL_RATE_HZ.items():
        series = rec.channels.get(ch)
        if series is None or len(series) < 2:
            continue
        period = 1000.0 / rate
        gaps = np.diff(series.timestamps)
        median = float(np.median(gaps))
        if abs(median - period) > RATE_TOLERANCE * period:
            issues.append(
                ValidationIssue(
                    "rate_deviation",
                    f"{ch}: median sample gap {median:.2f} ms vs nominal {period:.2f} ms",
                    ch,
                )
            )
        for i in np.flatnonzero(gaps > GAP_FACTOR * period):
            t0, t1 = int(series.timestamps[i]), int(series.timestamps[i + 1])
            issues.append(
                ValidationIssue("channel_gap", f"{ch}: no samples in ({t0}, {t1}) ms", ch, t0)
            )

    anns = rec.annotations
    for i, a in enumerate(anns):
        for b in anns[i + 1:]:
            if b.start_ms >= a.end_ms:
                break
            issues.append(
                ValidationIssue(
                    "annotation_overlap",
                    f"{a.kind} [{a.start_ms}, {a.end_ms}] overlaps {b.kind} [{b.start_ms}, {b.end_ms}]",
                    t_ms=b.start_ms,
                )
            )
    lo, hi = WASH_DURATION_RANGE_S
    washes = rec.washes
    for a in washes:
        if not lo <= a.duration_s <= hi:
            issues.append(
                ValidationIssue(
                    "duration_out_of_range",
                    f"hand_wash at {a.start_ms} ms lasts {a.duration_s:.3f} s, outside [{lo}, {hi}] s",
                    t_ms=a.start_ms,
                )
            )
    if not washes:
        issues.append(ValidationIssue("no_hand_wash", f"{rec.recording_id}: no hand_wash annotations"))
    return issues


# ---------------------------------------------------------------------------
# annotation export


def export_annotations(rec: Recording) -> str:
    """Tab-separated annotation document (seconds with 3 decimals), ordered by start."""
    lines = [f"# recording\t{rec.recording_id}", "start_s\tend_s\tkind\tsource"]
    for a in sorted(rec.annotations):
        lines.append(f"{a.start_ms / 1000:.3f}\t{a.end_ms / 1000:.3f}\t{a.kind}\t{a.source}")
    return "\n".join(lines) + "\n"


def parse_annotation_document(text: str) -> list[Annotation]:
    out = []
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0].split("\t") != ["start_s", "end_s", "kind", "source"]:
        raise RecordingError("annotation document: missing header")
    for n, line in enumerate(rows[1:], start=2):
        cells = line.split("\t")
        if len(cells) != 4:
            raise RecordingError(f"annotation document: line {n}: expected 4 fields")
        start, end = (round(float(c) * 1000) for c in cells[:2])
        out.append(Annotation(start, end, cells[2], cells[3]))
    return out
