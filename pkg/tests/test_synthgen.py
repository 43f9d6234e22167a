import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handwash.features import assemble_matrix
from handwash.recording import write_recording
from handwash.synthgen import (
    ResponseParams,
    Scenario,
    ScenarioError,
    Segment,
    generate_dataset,
    generate_recording,
    humidity_response,
    pressure_response,
    scripted_washes,
    segment_starts_s,
    temperature_response,
)

P = ResponseParams()


class TestHumidity:
    def test_far_before(self):
        assert humidity_response(-1e6, 20.0, P) == 0.0

    def test_closed_form_rise(self):
        p = ResponseParams(rh_wash_gain=5.0, rh_rise_tau_s=10.0)
        rise = humidity_response(10.0, 30.0, p) - humidity_response(0.0, 30.0, p)
        assert rise == pytest.approx(5 * (1 - math.exp(-1)), abs=1e-12)
        assert rise == pytest.approx(3.1606, abs=5e-5)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(3.0, 120.0), st.floats(1.0, 30.0))
    def test_monotone_during_wash_and_continuous(self, wash_len, transit):
        t = np.linspace(0, wash_len, 400)
        h = humidity_response(t, wash_len, P, transit)
        assert np.all(np.diff(h) >= 0)
        for edge in (-transit, 0.0, wash_len):
            a = humidity_response(edge - 1e-9, wash_len, P, transit)
            b = humidity_response(edge + 1e-9, wash_len, P, transit)
            assert abs(a - b) < 1e-6

    def test_slower_decay_required(self):
        with pytest.raises(ValueError):
            ResponseParams(rh_rise_tau_s=50.0, rh_decay_tau_s=20.0)
        with pytest.raises(ValueError):
            ResponseParams(rh_baseline=97.0)


class TestTemperature:
    def test_far_before(self):
        assert temperature_response(-1e6, 20.0, P) == 0.0

    def test_flat_during_wash(self):
        t = np.linspace(0, 40.0, 401)
        v = temperature_response(t, 40.0, P)
        assert v.max() - v.min() <= 0.05
        assert np.all(np.abs(np.diff(v) / np.diff(t)) < 0.01)

    def test_mid_transit(self):
        assert temperature_response(-6.0, 25.0, P, transit_s=12.0) == pytest.approx(P.temp_room_dip / 2)

    def test_relaxes_after(self):
        assert abs(temperature_response(1e4, 25.0, P)) < 1e-12


class TestPressure:
    def test_no_stairs(self):
        script = (Segment("desk", 100.0), Segment("walk", 50.0))
        v = pressure_response(np.linspace(0, 150, 20), script, P)
        assert np.all(v == P.pressure_baseline)

    def test_integrated_stairs(self):
        script = (Segment("desk", 10.0), Segment("stairs", 30.0, climb=+1), Segment("desk", 10.0))
        before, after = pressure_response(np.array([5.0, 45.0]), script, P)
        assert after - before == pytest.approx(-1.2, abs=1e-12)
        down = (Segment("desk", 10.0), Segment("stairs", 30.0, climb=-1), Segment("desk", 10.0))
        assert pressure_response(45.0, down, P) - P.pressure_baseline == pytest.approx(1.2, abs=1e-12)


class TestScenario:
    def test_default_counts(self):
        scn = Scenario()
        washes = [w for s in scn.scripts for w in scripted_washes(s)]
        assert len(washes) == 40
        assert all(15.0 <= w.duration_s <= 40.0 for w in washes)
        for s in scn.scripts:
            assert sum(seg.duration_ms for seg in s) == 3_600_000
            assert segment_starts_s(s)[-1] == 3600.0

    def test_invalid(self):
        with pytest.raises(ScenarioError):
            Scenario(imu_ambiguity=1.5)
        with pytest.raises(ScenarioError):
            Scenario(session_s=600.0)
        scn = Scenario(n_participants=2)
        bad = (scn.scripts[0][:1] + (Segment("hand_wash", 20.0),) + scn.scripts[0][1:],) + scn.scripts[1:]
        with pytest.raises(ScenarioError):
            Scenario(n_participants=2, scripts=bad, styles=scn.styles)

    def test_config_roundtrip(self, small_scenario):
        assert Scenario.from_config(small_scenario.to_config()) == small_scenario
        p = ResponseParams(rh_wash_gain=7.5, noise_humidity=0.0)
        assert ResponseParams.from_config(p.to_config()) == p


class TestGenerate:
    def test_deterministic_bytes(self, small_scenario, tmp_path):
        a = generate_recording(small_scenario, 1, P, seed=4)
        b = generate_recording(small_scenario, 1, P, seed=4)
        assert a == b
        write_recording(a, tmp_path / "a")
        write_recording(b, tmp_path / "b")
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
        assert generate_recording(small_scenario, 1, P, seed=5) != a

    def test_annotations_are_scripted(self, small_scenario, small_dataset):
        for rec, script in zip(small_dataset, small_scenario.scripts):
            want = [(round(w.onset_s * 1000), round(w.onset_s * 1000) + round(w.duration_s * 1000))
                    for w in scripted_washes(script)]
            assert [(a.start_ms, a.end_ms) for a in rec.annotations] == want

    def test_null_fraction(self, default_dataset):
        y = assemble_matrix(default_dataset, 5.0, "A").y
        assert abs((1 - y.mean()) - 0.97) <= 0.015

    def test_pressure_still_during_wash(self, default_dataset):
        for rec in default_dataset[:3]:
            pr = rec.channels["pressure"]
            for a in rec.washes:
                seg = pr.between(a.start_ms, a.end_ms)
                assert np.ptp(seg) <= 8 * P.noise_pressure

    def _wash_and_desk_acc(self, ambiguity):
        scn = Scenario(n_participants=1, imu_ambiguity=ambiguity, seed=3)
        rec = generate_recording(scn, 0, P, seed=0)
        acc = rec.channels["acc_x"]
        a = rec.washes[0]
        wash = acc.between(a.start_ms, a.end_ms)
        desk = acc.between(0, 60_000)
        return wash, desk, scn.styles[0]

    def test_wash_oscillation_frequency(self):
        wash, _, style = self._wash_and_desk_acc(0.0)
        spec = np.abs(np.fft.rfft(wash - wash.mean()))
        freqs = np.fft.rfftfreq(wash.size, 1 / 52.0)
        peak = freqs[np.argmax(spec)]
        assert 3.0 <= peak <= 5.0
        assert abs(peak - style.wash_freq_hz) < 0.1

    def test_full_ambiguity_hides_wash(self):
        wash, desk, _ = self._wash_and_desk_acc(1.0)
        assert wash.std() == pytest.approx(desk.std(), rel=0.15)

    def test_dataset_matches_per_participant(self, small_scenario, small_dataset):
        again = generate_dataset(small_scenario, P, seed=0)
        assert all(a == b for a, b in zip(again, small_dataset))
