"""Non-overlapping windowing, window labels and per-channel statistical features."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .recording import (
    ATMOSPHERIC_CHANNELS,
    IMU_CHANNELS,
    Annotation,
    Recording,
    RecordingError,
)

ACC = IMU_CHANNELS[:3]
GYRO = IMU_CHANNELS[3:]
HUMIDITY, TEMPERATURE, PRESSURE = ATMOSPHERIC_CHANNELS

SUBSETS: dict[str, tuple[str, ...]] = {
    "A": ACC,
    "A+HTP": ACC + (HUMIDITY, TEMPERATURE, PRESSURE),
    "AG": ACC + GYRO,
    "AG+H": ACC + GYRO + (HUMIDITY,),
    "AG+T": ACC + GYRO + (TEMPERATURE,),
    "AG+P": ACC + GYRO + (PRESSURE,),
    "ALL": ACC + GYRO + (HUMIDITY, TEMPERATURE, PRESSURE),
}
SUBSET_NAMES = tuple(SUBSETS)

FEATURE_NAMES = (
    "mean",
    "std",
    "min",
    "max",
    "slope",
    "median",
    "iqr",
    "q1",
    "q3",
    "avg_crossings",
    "skewness",
    "kurtosis",
)
N_FEATURES = len(FEATURE_NAMES)

WASH, NULL = "wash", "null"
DEFAULT_OVERLAP_THRESHOLD = 0.5

# second central moment below which skewness and kurtosis are reported as 0
DEGENERATE_M2 = 1e-12


class FeatureBlock(NamedTuple):
    mean: float
    std: float
    min: float
    max: float
    slope: float
    median: float
    iqr: float
    q1: float
    q3: float
    avg_crossings: float
    skewness: float
    kurtosis: float


@dataclass(frozen=True, eq=False)
class Window:
    start_ms: int
    end_ms: int
    samples: Mapping[str, np.ndarray]
    label: str = NULL


def subset_channels(subset: str) -> tuple[str, ...]:
    try:
        return SUBSETS[subset]
    except KeyError:
        raise ValueError(f"unknown sensor subset {subset!r}; choose from {', '.join(SUBSETS)}") from None


def feature_columns(channels: Sequence[str]) -> tuple[str, ...]:
    return tuple(f"{ch}_{f}" for ch in channels for f in FEATURE_NAMES)


def _window_ms(window_s: float) -> int:
    if not window_s > 0:
        raise ValueError(f"window length must be > 0, got {window_s}")
    ms = round(window_s * 1000)
    if ms <= 0:
        raise ValueError(f"window length {window_s} s is below 1 ms")
    return ms


def window_starts(duration_ms: int, window_s: float) -> np.ndarray:
    """Window start times anchored at t=0; a trailing partial window is dropped."""
    w = _window_ms(window_s)
    return np.arange(duration_ms // w, dtype=np.int64) * w


def wash_overlap_ms(starts: np.ndarray, window_ms: int, annotations: Sequence[Annotation]) -> np.ndarray:
    washes = sorted((a.start_ms, a.end_ms) for a in annotations if a.kind == "hand_wash")
    merged: list[list[int]] = []
    for s, e in washes:
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    ends = starts + window_ms
    overlap = np.zeros(starts.shape, dtype=np.int64)
    for s, e in merged:
        overlap += np.clip(np.minimum(ends, e) - np.maximum(starts, s), 0, None)
    return overlap


def label_window(
    w: Window,
    annotations: Sequence[Annotation],
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD,
) -> str:
    """``wash`` iff hand-wash annotations cover at least ``overlap_threshold`` of the window."""
    length = w.end_ms - w.start_ms
    covered = wash_overlap_ms(np.array([w.start_ms]), length, annotations)[0]
    return WASH if covered >= overlap_threshold * length else NULL


def make_windows(
    rec: Recording,
    window_s: float,
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD,
) -> list[Window]:
    w_ms = _window_ms(window_s)
    starts = window_starts(rec.duration_ms, window_s)
    labels = wash_overlap_ms(starts, w_ms, rec.annotations) >= overlap_threshold * w_ms
    bounds = {
        ch: np.searchsorted(s.timestamps, np.append(starts, starts[-1] + w_ms if starts.size else 0))
        for ch, s in rec.channels.items()
    }
    out = []
    for k, start in enumerate(starts.tolist()):
        samples = {
            ch: rec.channels[ch].values[b[k]:b[k + 1]] for ch, b in bounds.items()
        }
        out.append(Window(start, start + w_ms, samples, WASH if labels[k] else NULL))
    return out


# ---------------------------------------------------------------------------
# features


def _crossings(d: np.ndarray) -> np.ndarray:
    """Sign alternations of deviations per row; zeros take the previous sign, leading zeros count as positive."""
    m, n = d.shape
    sign = np.sign(d)
    pos = np.where(sign != 0, np.arange(n), 0)
    np.maximum.accumulate(pos, axis=1, out=pos)
    filled = np.take_along_axis(sign, pos, axis=1)
    filled[filled == 0] = 1
    return (filled[:, 1:] != filled[:, :-1]).sum(axis=1).astype(np.float64)


def features_2d(x: np.ndarray) -> np.ndarray:
    """Feature rows for a batch of equal-length series ``x`` of shape (m, n)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] == 0:
        raise ValueError("empty window channel")
    mn = x.min(axis=1)
    mx = x.max(axis=1)
    mean = x.mean(axis=1)
    mean = mean + (x - mean[:, None]).mean(axis=1)
    const = mn == mx
    mean[const] = mn[const]
    d = x - mean[:, None]
    d2 = d * d
    m2 = d2.mean(axis=1)
    m3 = (d2 * d).mean(axis=1)
    m4 = (d2 * d2).mean(axis=1)
    degenerate = m2 < DEGENERATE_M2
    safe = np.where(degenerate, 1.0, m2)
    skew = np.where(degenerate, 0.0, m3 / safe**1.5)
    kurt = np.where(degenerate, 0.0, m4 / safe**2 - 3.0)
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], axis=1)
    out = np.empty((x.shape[0], N_FEATURES))
    out[:, 0] = mean
    out[:, 1] = np.sqrt(m2)
    out[:, 2] = mn
    out[:, 3] = mx
    out[:, 4] = x[:, -1] - x[:, 0]
    out[:, 5] = med
    out[:, 6] = q3 - q1
    out[:, 7] = q1
    out[:, 8] = q3
    out[:, 9] = _crossings(d)
    out[:, 10] = skew
    out[:, 11] = kurt
    return out


def channel_features(series) -> FeatureBlock:
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty window channel")
    return FeatureBlock(*features_2d(x[None, :])[0].tolist())


def windowed_features(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Features of ``values[lo[k]:hi[k]]`` for every window k, batched by slice length."""
    lengths = hi - lo
    if np.any(lengths <= 0):
        k = int(np.flatnonzero(lengths <= 0)[0])
        raise ValueError(f"empty window channel (window {k})")
    out = np.empty((lo.size, N_FEATURES))
    for n in np.unique(lengths):
        rows = np.flatnonzero(lengths == n)
        idx = lo[rows, None] + np.arange(n)
        out[rows] = features_2d(values[idx])
    return out


# ---------------------------------------------------------------------------
# feature matrices


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    participants: np.ndarray
    recordings: np.ndarray
    start_ms: np.ndarray
    columns: tuple[str, ...]
    window_s: float = 0.0

    def __len__(self):
        return self.X.shape[0]

    @property
    def channels(self) -> tuple[str, ...]:
        # every channel block starts with its "<channel>_mean" column
        return tuple(c[: -len("_mean")] for c in self.columns[::N_FEATURES])

    def rows(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(
            self.X[idx],
            self.y[idx],
            self.participants[idx],
            self.recordings[idx],
            self.start_ms[idx],
            self.columns,
            self.window_s,
        )

    def select(self, channels: Sequence[str]) -> "FeatureMatrix":
        present = list(self.channels)
        cols = []
        for ch in channels:
            if ch not in present:
                raise ValueError(f"feature matrix has no channel {ch}")
            k = present.index(ch)
            cols.extend(range(k * N_FEATURES, (k + 1) * N_FEATURES))
        return FeatureMatrix(
            self.X[:, cols],
            self.y,
            self.participants,
            self.recordings,
            self.start_ms,
            feature_columns(channels),
            self.window_s,
        )

    def to_csv(self, path: str | Path | None = None, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        buf.write(",".join(("participant", "recording", "start_ms", "label") + self.columns) + "\n")
        for i in range(len(self)):
            cells = [
                str(self.participants[i]),
                str(self.recordings[i]),
                str(int(self.start_ms[i])),
                WASH if self.y[i] else NULL,
            ]
            cells.extend(repr(v) for v in self.X[i].tolist())
            buf.write(",".join(cells) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def recording_features(
    rec: Recording,
    window_s: float,
    channels: Sequence[str],
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(features, labels, window starts) for one recording."""
    w_ms = _window_ms(window_s)
    starts = window_starts(rec.duration_ms, window_s)
    edges = np.append(starts, starts[-1] + w_ms) if starts.size else starts
    blocks = []
    for ch in channels:
        series = rec.channels.get(ch)
        if series is None:
            raise RecordingError(f"recording {rec.recording_id}: missing channel {ch}")
        b = np.searchsorted(series.timestamps, edges, side="left")
        try:
            blocks.append(windowed_features(series.values, b[:-1], b[1:]))
        except ValueError as exc:
            raise RecordingError(f"recording {rec.recording_id}, channel {ch}: {exc}") from None
    X = np.hstack(blocks) if blocks else np.empty((starts.size, 0))
    y = (wash_overlap_ms(starts, w_ms, rec.annotations) >= overlap_threshold * w_ms).astype(np.int8)
    return X, y, starts


def assemble_matrix(
    recordings: Sequence[Recording],
    window_s: float,
    subset: str = "ALL",
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD,
) -> FeatureMatrix:
    """One row per window over all recordings, ordered by (participant, recording, start)."""
    channels = subset_channels(subset) if isinstance(subset, str) else tuple(subset)
    ordered = sorted(recordings, key=lambda r: (r.participant_id, r.recording_id))
    Xs, ys, parts, recs, starts = [], [], [], [], []
    for rec in ordered:
        X, y, s = recording_features(rec, window_s, channels, overlap_threshold)
        Xs.append(X)
        ys.append(y)
        starts.append(s)
        parts.append(np.full(len(s), rec.participant_id, dtype=object))
        recs.append(np.full(len(s), rec.recording_id, dtype=object))
    if not Xs:
        raise ValueError("no recordings")
    return FeatureMatrix(
        np.vstack(Xs),
        np.concatenate(ys),
        np.concatenate(parts),
        np.concatenate(recs),
        np.concatenate(starts),
        feature_columns(channels),
        float(window_s),
    )
