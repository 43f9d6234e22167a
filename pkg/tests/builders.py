"""Hand-built recordings for tests."""

import numpy as np

from handwash.recording import SENSOR_CHANNELS, ChannelSeries, Recording, RecordingMeta


def regular(channel, duration_ms, rate_hz, value=0.0):
    t = np.arange(0, duration_ms + 1, 1000.0 / rate_hz).round().astype(np.int64)
    v = value(t) if callable(value) else np.full(t.shape, value)
    return ChannelSeries(channel, t, v)


def bare_recording(duration_ms=600_000, annotations=(), extra=None, participant="P01"):
    chans = {}
    for ch in SENSOR_CHANNELS:
        rate = 52.0 if ch.startswith(("acc", "gyro")) else 1.0
        chans[ch] = regular(ch, duration_ms, rate)
    chans.update(extra or {})
    return Recording(RecordingMeta(participant), chans, tuple(annotations), duration_ms)
