"""Deterministic synthetic recordings with scripted hand washes.

Atmospheric channels follow simple parametric response shapes around each
wash: humidity ramps up while entering the sink room, rises with a
saturating exponential during the wash and decays slowly afterwards;
temperature dips in the sink room and is flat during the wash; pressure only
moves on stairs. IMU channels carry stylized activity textures whose
wash/desk separability is set by ``Scenario.imu_ambiguity``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from .config import ConfigError
from .recording import (
    DAY_CONDITIONS,
    Annotation,
    ChannelSeries,
    Recording,
    RecordingMeta,
)

SEGMENT_KINDS = ("desk", "walk", "stairs", "hand_wash", "room_transit")

IMU_RATE_HZ = 52.0
ATMO_RATE_HZ = 1.0
WASH_RANGE_S = (15.0, 40.0)
TRANSIT_RANGE_S = (8.0, 20.0)
MIN_DESK_S = 240.0
DRY_OFF_S = 5.0

_SCRIPT_TAG = 0x5C1
_STYLE_TAG = 0x57E


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    kind: str
    duration_s: float
    climb: int = 0  # stairs only: +1 ascending, -1 descending

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ScenarioError(f"unknown segment kind {self.kind!r}")
        if not self.duration_s > 0:
            raise ScenarioError(f"{self.kind} segment must have positive duration")
        if self.climb and self.kind != "stairs":
            raise ScenarioError("only stairs segments climb")

    @property
    def duration_ms(self) -> int:
        return round(self.duration_s * 1000)


@dataclass(frozen=True)
class ParticipantStyle:
    wash_freq_hz: float = 4.0
    wash_vigor: float = 1.0
    walk_freq_hz: float = 1.9
    rh_offset: float = 0.0
    temp_offset: float = 0.0


@dataclass(frozen=True)
class ResponseParams:
    rh_baseline: float = 45.0
    rh_room_bump: float = 1.5
    rh_wash_gain: float = 5.0
    rh_rise_tau_s: float = 15.0
    rh_decay_tau_s: float = 120.0
    temp_baseline: float = 23.0
    temp_room_dip: float = -0.3
    temp_relax_tau_s: float = 60.0
    pressure_baseline: float = 1002.0
    pressure_stairs_rate: float = -0.04
    noise_acc: float = 0.02
    noise_gyro: float = 1.0
    noise_humidity: float = 0.1
    noise_temperature: float = 0.02
    noise_pressure: float = 0.03
    calibration_sd_humidity: float = 3.0
    calibration_sd_temperature: float = 1.0
    calibration_sd_pressure: float = 2.0

    def __post_init__(self):
        for name in ("rh_rise_tau_s", "rh_decay_tau_s", "temp_relax_tau_s"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"{name} must be > 0")
        if not self.rh_decay_tau_s > self.rh_rise_tau_s:
            raise ScenarioError("rh_decay_tau_s must exceed rh_rise_tau_s")
        if self.pressure_stairs_rate > 0:
            raise ScenarioError("pressure_stairs_rate is the (negative) ascent rate")
        peak = self.rh_baseline + self.rh_room_bump + self.rh_wash_gain
        if not (0 <= self.rh_baseline and peak <= 100):
            raise ScenarioError("humidity model leaves [0, 100] %RH")
        for f in fields(self):
            if f.name.startswith(("noise_", "calibration_")) and getattr(self, f.name) < 0:
                raise ScenarioError(f"{f.name} must be >= 0")

    def to_config(self) -> dict[str, str]:
        return {f"response.{k}": repr(float(v)) for k, v in asdict(self).items()}

    @classmethod
    def from_config(cls, values: Mapping[str, str]) -> "ResponseParams":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if not key.startswith("response."):
                continue
            name = key[len("response."):]
            if name not in known:
                raise ConfigError(f"unknown key {key}")
            try:
                kwargs[name] = float(value)
            except ValueError:
                raise ConfigError(f"{key}: not a number: {value!r}") from None
        return cls(**kwargs)


def _split_ms(total_ms: int, parts: int, minimum_ms: int, rng: np.random.Generator) -> list[int]:
    spare = total_ms - parts * minimum_ms
    if spare < 0:
        raise ScenarioError("session too short for the scripted activities")
    weights = rng.dirichlet(np.ones(parts))
    cuts = np.floor(np.cumsum(weights)[:-1] * spare).astype(np.int64)
    sizes = np.diff(np.concatenate(([0], cuts, [spare])))
    return [int(s) + minimum_ms for s in sizes]


def draw_script(
    washes: int, session_s: float, rng: np.random.Generator
) -> tuple[Segment, ...]:
    """Desk blocks separating shuffled events: washes (each after a room transit) and one stair walk."""
    events: list[list[Segment]] = []
    for _ in range(washes):
        transit = round(float(rng.uniform(*TRANSIT_RANGE_S)), 3)
        wash = round(float(rng.uniform(*WASH_RANGE_S)), 3)
        events.append([Segment("room_transit", transit), Segment("hand_wash", wash)])
    walk = [
        Segment("walk", round(float(rng.uniform(60, 120)), 3)),
        Segment("stairs", 30.0, climb=-1),
        Segment("walk", round(float(rng.uniform(30, 60)), 3)),
        Segment("stairs", 30.0, climb=+1),
        Segment("walk", round(float(rng.uniform(60, 120)), 3)),
    ]
    events.append(walk)
    order = rng.permutation(len(events))
    events = [events[i] for i in order]
    used_ms = sum(s.duration_ms for ev in events for s in ev)
    desk = _split_ms(round(session_s * 1000) - used_ms, len(events) + 1, round(MIN_DESK_S * 1000), rng)
    script = [Segment("desk", desk[0] / 1000)]
    for ev, d in zip(events, desk[1:]):
        script.extend(ev)
        script.append(Segment("desk", d / 1000))
    return tuple(script)


def draw_style(rng: np.random.Generator) -> ParticipantStyle:
    return ParticipantStyle(
        wash_freq_hz=round(float(rng.uniform(3.0, 5.0)), 6),
        wash_vigor=round(float(rng.uniform(0.8, 1.2)), 6),
        walk_freq_hz=round(float(rng.uniform(1.7, 2.1)), 6),
        rh_offset=round(float(rng.normal(0.0, 5.0)), 6),
        temp_offset=round(float(rng.normal(0.0, 1.0)), 6),
    )


@dataclass(frozen=True)
class Scenario:
    """Session scripts and styles for a cohort.

    Scripts and styles not given explicitly are drawn from ``seed``.
    """

    n_participants: int = 10
    washes_per_participant: int = 4
    session_s: float = 3600.0
    imu_ambiguity: float = 0.3
    seed: int = 0
    scripts: tuple[tuple[Segment, ...], ...] = ()
    styles: tuple[ParticipantStyle, ...] = ()

    def __post_init__(self):
        if self.n_participants < 1:
            raise ScenarioError("n_participants must be >= 1")
        if self.washes_per_participant < 0:
            raise ScenarioError("washes_per_participant must be >= 0")
        if not 0.0 <= self.imu_ambiguity <= 1.0:
            raise ScenarioError("imu_ambiguity must lie in [0, 1]")
        if not self.scripts:
            scripts = tuple(
                draw_script(
                    self.washes_per_participant,
                    self.session_s,
                    np.random.default_rng([self.seed, i, _SCRIPT_TAG]),
                )
                for i in range(self.n_participants)
            )
            object.__setattr__(self, "scripts", scripts)
        if not self.styles:
            styles = tuple(
                draw_style(np.random.default_rng([self.seed, i, _STYLE_TAG]))
                for i in range(self.n_participants)
            )
            object.__setattr__(self, "styles", styles)
        object.__setattr__(self, "scripts", tuple(tuple(s) for s in self.scripts))
        object.__setattr__(self, "styles", tuple(self.styles))
        self.validate()

    def validate(self):
        if len(self.scripts) != self.n_participants or len(self.styles) != self.n_participants:
            raise ScenarioError("need one script and one style per participant")
        session_ms = round(self.session_s * 1000)
        for i, script in enumerate(self.scripts):
            total = sum(s.duration_ms for s in script)
            if total != session_ms:
                raise ScenarioError(
                    f"participant {i}: script lasts {total} ms, session is {session_ms} ms"
                )
            kinds = [s.kind for s in script]
            if kinds.count("hand_wash") != self.washes_per_participant:
                raise ScenarioError(
                    f"participant {i}: {kinds.count('hand_wash')} washes, "
                    f"expected {self.washes_per_participant}"
                )
            for j, k in enumerate(kinds):
                if k == "hand_wash" and (j == 0 or kinds[j - 1] != "room_transit"):
                    raise ScenarioError(f"participant {i}: hand_wash #{j} not preceded by room_transit")
            if kinds and kinds[-1] == "hand_wash":
                raise ScenarioError(f"participant {i}: script must not end with a hand_wash")

    def to_config(self) -> dict[str, str]:
        out = {
            "scenario.n_participants": str(self.n_participants),
            "scenario.washes_per_participant": str(self.washes_per_participant),
            "scenario.session_s": repr(float(self.session_s)),
            "scenario.imu_ambiguity": repr(float(self.imu_ambiguity)),
            "scenario.seed": str(self.seed),
        }
        for i, script in enumerate(self.scripts):
            out[f"scenario.script.{i}"] = ",".join(
                f"{s.kind}:{s.duration_s!r}" + (f":{s.climb:+d}" if s.climb else "")
                for s in script
            )
        for i, st in enumerate(self.styles):
            out[f"scenario.style.{i}"] = ",".join(repr(float(v)) for v in asdict(st).values())
        return out

    @classmethod
    def from_config(cls, values: Mapping[str, str]) -> "Scenario":
        kw: dict = {}
        scripts: dict[int, tuple[Segment, ...]] = {}
        styles: dict[int, ParticipantStyle] = {}
        try:
            for key, value in values.items():
                if not key.startswith("scenario."):
                    continue
                name = key[len("scenario."):]
                if name in ("n_participants", "washes_per_participant", "seed"):
                    kw[name] = int(value)
                elif name in ("session_s", "imu_ambiguity"):
                    kw[name] = float(value)
                elif name.startswith("script."):
                    scripts[int(name[7:])] = _parse_script(value)
                elif name.startswith("style."):
                    nums = [float(v) for v in value.split(",")]
                    styles[int(name[6:])] = ParticipantStyle(*nums)
                else:
                    raise ConfigError(f"unknown key {key}")
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid scenario entry: {exc}") from None
        if scripts:
            kw["scripts"] = tuple(scripts[i] for i in sorted(scripts))
        if styles:
            kw["styles"] = tuple(styles[i] for i in sorted(styles))
        return cls(**kw)


def _parse_script(text: str) -> tuple[Segment, ...]:
    out = []
    for item in text.split(","):
        parts = item.strip().split(":")
        climb = int(parts[2]) if len(parts) > 2 else 0
        out.append(Segment(parts[0], float(parts[1]), climb))
    return tuple(out)


# ---------------------------------------------------------------------------
# response models


def humidity_response(t_rel, wash_len: float, p: ResponseParams, transit_s: float = 10.0):
    """%RH above the participant's baseline around one wash starting at ``t_rel = 0``."""
    if wash_len <= 0:
        raise ValueError("wash_len must be > 0")
    t = np.asarray(t_rel, dtype=np.float64)
    bump = p.rh_room_bump
    ramp = bump * np.clip((t + transit_s) / transit_s, 0.0, 1.0)
    rise = bump + p.rh_wash_gain * -np.expm1(-np.clip(t, 0.0, wash_len) / p.rh_rise_tau_s)
    peak = bump + p.rh_wash_gain * -math.expm1(-wash_len / p.rh_rise_tau_s)
    decay = peak * np.exp(-np.maximum(t - wash_len, 0.0) / p.rh_decay_tau_s)
    out = np.where(t < 0, ramp, np.where(t <= wash_len, rise, decay))
    return out if out.ndim else float(out)


def temperature_response(t_rel, wash_len: float, p: ResponseParams, transit_s: float = 10.0):
    """°C offset: dip ramping in over the transit, flat during the wash, relaxing afterwards."""
    if wash_len <= 0:
        raise ValueError("wash_len must be > 0")
    t = np.asarray(t_rel, dtype=np.float64)
    dip = p.temp_room_dip
    ramp = dip * np.clip((t + transit_s) / transit_s, 0.0, 1.0)
    relax = dip * np.exp(-np.maximum(t - wash_len, 0.0) / p.temp_relax_tau_s)
    out = np.where(t <= wash_len, ramp, relax)
    return out if out.ndim else float(out)


def segment_starts_s(script: Sequence[Segment]) -> np.ndarray:
    ms = np.cumsum([0] + [s.duration_ms for s in script])
    return ms / 1000.0


def pressure_response(t_abs, script: Sequence[Segment], p: ResponseParams):
    """hPa: baseline plus the integrated stair rate up to ``t_abs``."""
    t = np.asarray(t_abs, dtype=np.float64)
    starts = segment_starts_s(script)
    out = np.full(t.shape, p.pressure_baseline)
    for seg, s0 in zip(script, starts[:-1]):
        if seg.kind != "stairs" or not seg.climb:
            continue
        rate = seg.climb * p.pressure_stairs_rate
        out = out + rate * np.clip(t - s0, 0.0, seg.duration_s)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ScriptedWash:
    onset_s: float
    duration_s: float
    transit_s: float


def scripted_washes(script: Sequence[Segment]) -> list[ScriptedWash]:
    starts = segment_starts_s(script)
    out = []
    for j, seg in enumerate(script):
        if seg.kind == "hand_wash":
            out.append(ScriptedWash(float(starts[j]), seg.duration_s, script[j - 1].duration_s))
    return out


# ---------------------------------------------------------------------------
# recording synthesis


def _sample_times_ms(duration_ms: int, rate_hz: float) -> np.ndarray:
    n = int(math.floor(duration_ms * rate_hz / 1000.0)) + 1
    t = np.round(np.arange(n) * (1000.0 / rate_hz)).astype(np.int64)
    return t[t <= duration_ms]


_KIND_CODE = {k: i for i, k in enumerate(SEGMENT_KINDS)}


def _imu(
    t_s: np.ndarray,
    kinds: np.ndarray,
    style: ParticipantStyle,
    ambiguity: float,
    p: ResponseParams,
    rng: np.random.Generator,
) -> dict[str, np.ndarray]:
    n = t_s.size
    acc = np.zeros((3, n))
    gyro = np.zeros((3, n))
    acc[2] += 1.0

    moving = np.isin(kinds, [_KIND_CODE[k] for k in ("walk", "stairs", "room_transit")])
    stairs = kinds == _KIND_CODE["stairs"]
    phase = 2 * np.pi * style.walk_freq_hz * t_s
    gait = np.where(stairs, 1.2, 1.0) * moving
    acc[0] += gait * 0.25 * np.sin(phase)
    acc[2] += gait * 0.15 * np.sin(2 * phase + 0.3)
    gyro[1] += gait * 25.0 * np.sin(phase + 0.5)
    acc[:, moving] += rng.normal(0.0, 0.05, (3, int(moving.sum())))

    wash = kinds == _KIND_CODE["hand_wash"]
    k = (1.0 - ambiguity) * style.wash_vigor
    if k > 0 and wash.any():
        nw = int(wash.sum())
        wphase = 2 * np.pi * style.wash_freq_hz * t_s[wash]
        acc[0, wash] += k * 0.4 * np.sin(wphase)
        acc[1, wash] += k * 0.3 * np.sin(wphase + 1.0)
        gyro[0, wash] += k * 80.0 * np.sin(wphase + 0.4)
        gyro[2, wash] += k * 60.0 * np.sin(wphase + 2.0)
        acc[:, wash] += k * rng.normal(0.0, 0.1, (3, nw))
        gyro[:, wash] += k * rng.normal(0.0, 20.0, (3, nw))

    acc += rng.normal(0.0, p.noise_acc, acc.shape)
    gyro += rng.normal(0.0, p.noise_gyro, gyro.shape)
    names = ("acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z")
    return dict(zip(names, [*acc, *gyro]))


def generate_recording(
    scn: Scenario,
    participant_index: int,
    p: ResponseParams | None = None,
    seed: int = 0,
) -> Recording:
    """Synthesize one participant session; deterministic in ``(seed, participant_index)``."""
    p = p or ResponseParams()
    if not 0 <= participant_index < scn.n_participants:
        raise ScenarioError(f"participant_index {participant_index} out of range")
    scn.validate()
    script = scn.scripts[participant_index]
    style = scn.styles[participant_index]
    rng = np.random.default_rng([seed, participant_index])
    duration_ms = round(scn.session_s * 1000)

    meta = RecordingMeta(
        participant_id=f"P{participant_index + 1:02d}",
        recording_id=f"P{participant_index + 1:02d}",
        day_condition=DAY_CONDITIONS[int(rng.integers(len(DAY_CONDITIONS)))],
        outdoor_temp_c=round(float(rng.uniform(13.0, 21.0)), 2),
        outdoor_rh_percent=round(float(rng.uniform(63.5, 89.0)), 2),
        outdoor_pressure_hpa=round(float(rng.uniform(996.7, 1007.7)), 2),
    )
    calib = rng.normal(0.0, 1.0, 3) * [
        p.calibration_sd_humidity,
        p.calibration_sd_temperature,
        p.calibration_sd_pressure,
    ]

    bounds_ms = np.cumsum([0] + [s.duration_ms for s in script])
    codes = np.array([_KIND_CODE[s.kind] for s in script])

    t_imu = _sample_times_ms(duration_ms, IMU_RATE_HZ)
    seg_idx = np.searchsorted(bounds_ms, t_imu, side="right") - 1
    seg_idx = np.minimum(seg_idx, len(script) - 1)
    imu = _imu(t_imu / 1000.0, codes[seg_idx], style, scn.imu_ambiguity, p, rng)

    t_atmo = _sample_times_ms(duration_ms, ATMO_RATE_HZ)
    ts = t_atmo / 1000.0
    washes = scripted_washes(script)
    rh = np.full(ts.shape, p.rh_baseline + style.rh_offset + calib[0])
    temp = np.full(ts.shape, p.temp_baseline + style.temp_offset + calib[1])
    for w in washes:
        rh += humidity_response(ts - w.onset_s, w.duration_s, p, w.transit_s)
        temp += temperature_response(ts - w.onset_s, w.duration_s, p, w.transit_s)
    rh = np.clip(rh + rng.normal(0.0, p.noise_humidity, ts.shape), 0.0, 100.0)
    temp = temp + rng.normal(0.0, p.noise_temperature, ts.shape)
    pres = pressure_response(ts, script, p) + calib[2] + rng.normal(0.0, p.noise_pressure, ts.shape)

    channels = {ch: ChannelSeries(ch, t_imu, v) for ch, v in imu.items()}
    channels["humidity"] = ChannelSeries("humidity", t_atmo, rh)
    channels["temperature"] = ChannelSeries("temperature", t_atmo, temp)
    channels["pressure"] = ChannelSeries("pressure", t_atmo, pres)

    annotations = []
    press_t = [0]
    press_v = [0.0]
    rssi_t: list[np.ndarray] = []
    for w in washes:
        start = round(w.onset_s * 1000)
        end = start + round(w.duration_s * 1000)
        annotations.append(Annotation(start, end, "hand_wash", "manual"))
        before = start - round(rng.uniform(1.0, 3.0) * 1000)
        after = end + round(rng.uniform(1.0, 3.0) * 1000)
        for t in (before, after):
            press_t += [t, t + 150]
            press_v += [1.0, 0.0]
        near0 = start - round(w.transit_s * 1000)
        rssi_t.append(np.arange(near0, end + round(DRY_OFF_S * 1000) + 1, 1000))
    channels["button"] = ChannelSeries("button", press_t, press_v)
    rt = np.concatenate(rssi_t) if rssi_t else np.empty(0, dtype=np.int64)
    rv = np.round(-60.0 + rng.normal(0.0, 3.0, rt.shape))
    channels["beacon_rssi"] = ChannelSeries("beacon_rssi", rt, rv)

    return Recording(meta, channels, tuple(annotations), duration_ms)


def generate_dataset(
    scn: Scenario, p: ResponseParams | None = None, seed: int = 0
) -> list[Recording]:
    return [generate_recording(scn, i, p, seed) for i in range(scn.n_participants)]
