import numpy as np
import pytest

from emato.cycles import (CycleExhausted, DrivingCycle, composite_cycle,
                          lead_prediction, load_cycle_csv, save_cycle_csv,
                          shipped_cycle, synthetic_highway, synthetic_urban)
from emato.errors import InvalidSpecError


class TestDrivingCycle:
    def test_shipped_highway_scale(self):
        cyc = synthetic_highway()
        assert 350 <= cyc.total_time <= 420
        assert 7000 <= cyc.total_distance <= 9000
        mean = cyc.total_distance / cyc.total_time
        assert 19.0 <= mean <= 23.0
        # leader accelerations stay within what the ego can follow
        acc = np.diff(cyc.v) / np.diff(cyc.t)
        assert np.max(np.abs(acc)) <= 1.8

    def test_urban_has_stops(self):
        cyc = synthetic_urban()
        stopped = np.sum(cyc.v < 0.01)
        assert stopped > 5

    def test_monotone_time_required(self):
        with pytest.raises(InvalidSpecError):
            DrivingCycle("bad", np.array([0.0, 1.0, 1.0]), np.zeros(3))

    def test_position_exact_for_ramp(self):
        # piecewise-linear speed integrates to an exact quadratic
        t = np.arange(0.0, 21.0, 1.0)
        cyc = DrivingCycle("ramp", t, 1.5 * t)
        for tq in (0.3, 5.7, 12.25, 20.0):
            assert cyc.position_at(tq) == pytest.approx(0.75 * tq ** 2,
                                                        abs=1e-9)

    def test_hold_last_beyond_end(self):
        t = np.arange(0.0, 11.0, 1.0)
        cyc = DrivingCycle("c", t, np.full(11, 8.0))
        assert cyc.speed_at(15.0) == 8.0
        assert cyc.position_at(15.0) == pytest.approx(8.0 * 15.0, abs=1e-9)


class TestComposite:
    def test_zero_speed_splice(self):
        a = DrivingCycle("a", np.arange(0.0, 6.0), np.array([0, 5, 5, 5, 5, 0.0]))
        b = DrivingCycle("b", np.arange(0.0, 4.0), np.array([0, 3, 3, 0.0]))
        comp = composite_cycle([a, b], rest=5.0)
        assert comp.total_time == pytest.approx(a.total_time + 5.0
                                                + b.total_time, abs=1e-6)
        assert comp.total_distance == pytest.approx(
            a.total_distance + b.total_distance, abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(InvalidSpecError):
            composite_cycle([])

    def test_shipped_names(self):
        for name in ("highway", "urban", "composite"):
            assert shipped_cycle(name).total_time > 0
        with pytest.raises(InvalidSpecError):
            shipped_cycle("autobahn")


class TestCycleCsv:
    def test_roundtrip(self, tmp_path):
        cyc = synthetic_urban()
        path = tmp_path / "cycle.csv"
        save_cycle_csv(path, cyc)
        back = load_cycle_csv(path)
        assert np.allclose(back.t, cyc.t, atol=1e-9)
        assert np.allclose(back.v, cyc.v, atol=1e-9)

    def test_mph_conversion(self, tmp_path):
        path = tmp_path / "mph.csv"
        path.write_text("time_s,speed_mph\n0,0\n10,45\n20,45\n")
        cyc = load_cycle_csv(path, mph=True)
        assert cyc.v[-1] == pytest.approx(45 * 0.44704, rel=1e-9)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("seconds,kph\n0,0\n")
        with pytest.raises(InvalidSpecError):
            load_cycle_csv(path)


class TestLeadPrediction:
    def test_constant_speed_steps(self):
        t = np.arange(0.0, 61.0, 1.0)
        cyc = DrivingCycle("c20", t, np.full(61, 20.0))
        pred = lead_prediction(cyc, 5.0, 50, 0.1, l_offset=80.0)
        assert len(pred.path_l) == 51
        assert np.allclose(np.diff(pred.path_l), 2.0, atol=1e-9)

    def test_hold_last_within_horizon(self):
        t = np.arange(0.0, 11.0, 1.0)
        cyc = DrivingCycle("c", t, np.full(11, 12.0))
        pred = lead_prediction(cyc, 8.0, 50, 0.1)
        # last 3 s of the horizon extrapolate at the final speed
        assert np.allclose(pred.path_v, 12.0, atol=1e-9)
        assert pred.path_l[-1] == pytest.approx(cyc.position_at(13.0),
                                                abs=1e-9)

    def test_ramp_matches_trapezoid(self):
        t = np.arange(0.0, 31.0, 1.0)
        cyc = DrivingCycle("ramp", t, 0.8 * t)
        pred = lead_prediction(cyc, 10.0, 50, 0.1)
        tq = 10.0 + 0.1 * np.arange(51)
        assert np.allclose(pred.path_l, 0.4 * tq ** 2, atol=1e-9)

    def test_exhausted_signal(self):
        t = np.arange(0.0, 11.0, 1.0)
        cyc = DrivingCycle("c", t, np.full(11, 5.0))
        with pytest.raises(CycleExhausted):
            lead_prediction(cyc, 10.5, 50, 0.1)
