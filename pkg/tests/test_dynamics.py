import numpy as np
import pytest

from emato.dynamics import (KinState, SlopeProfile, integrate_state,
                            load_slope_profile, make_slope_profile,
                            predict_slope, resistance_accel,
                            save_slope_profile, traction_accel,
                            export_slope_csv)
from emato.errors import InvalidSpecError


class TestResistance:
    def test_sedan_standstill_flat(self, sedan):
        assert resistance_accel(0.0, 0.0, sedan) == pytest.approx(
            0.015 * 9.81, rel=1e-12)

    def test_truck_cruise_flat_golden(self, truck):
        # frozen: k1*400 + mu*g with k1 = 0.6*1.184*2.5/9600
        assert resistance_accel(20.0, 0.0, truck) == pytest.approx(
            0.13286, abs=1e-9)

    def test_sedan_grade_dominates(self, sedan):
        # frozen from independent trig arithmetic
        assert resistance_accel(0.0, 0.05, sedan) == pytest.approx(
            0.6372617513624738, rel=1e-12)

    def test_drag_isolation(self, truck):
        for v in (3.0, 11.0, 24.0):
            drag = resistance_accel(v, 0.0, truck) - resistance_accel(0.0, 0.0, truck)
            assert drag == pytest.approx(truck.k1 * v ** 2, rel=1e-12)

    def test_derived_constants(self, sedan, truck):
        assert truck.k1 == pytest.approx(0.6 * 1.184 * 2.5 / 9600, rel=1e-15)
        assert sedan.k2 == pytest.approx(0.015 * 9.81, rel=1e-15)
        assert sedan.k3 == 9.81


class TestTraction:
    @pytest.mark.parametrize("a_v,a_r,a_b,want", [
        (0.0, 0.147, 0.0, 0.147),
        (-0.5, 0.2, 0.3, 0.0),
        (1.0, 0.133, 0.0, 1.133),
    ])
    def test_balance(self, a_v, a_r, a_b, want):
        assert traction_accel(a_v, a_r, a_b) == pytest.approx(want, abs=1e-12)

    def test_round_trip(self, truck):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a_v, a_r, a_b = rng.uniform(-3, 3, 3)
            a_t = traction_accel(a_v, a_r, a_b)
            assert a_t - a_r - a_b == pytest.approx(a_v, abs=1e-12)


class TestIntegrateState:
    def test_uniform_motion(self):
        new, clamped = integrate_state(KinState(0.0, 10.0, 0.0), 0.0, 0.1)
        assert (new.l, new.v, new.a_v) == (1.0, 10.0, 0.0)
        assert not clamped

    def test_constant_jerk_closed_form(self):
        new, _ = integrate_state(KinState(0.0, 10.0, 0.0), 1.0, 0.1)
        assert new.l == pytest.approx(1.0001666666666666, rel=1e-12)
        assert new.v == pytest.approx(10.005, rel=1e-12)
        assert new.a_v == pytest.approx(0.1, rel=1e-12)

    def test_speed_clamped_at_zero(self):
        new, clamped = integrate_state(KinState(0.0, 0.01, -1.0), 0.0, 0.1)
        assert new.v == 0.0
        assert clamped

    def test_composition_exactness(self):
        # n substeps of constant jerk equal one closed-form step
        rng = np.random.default_rng(2)
        for _ in range(50):
            x0 = KinState(*rng.uniform(-5, 20, 3))
            j = rng.uniform(-3, 3)
            dt, n = 0.05, 8
            x = x0
            for _ in range(n):
                x, clamped = integrate_state(x, j, dt)
                if clamped:
                    break
            else:
                big, _ = integrate_state(x0, j, n * dt)
                assert x.l == pytest.approx(big.l, abs=1e-10)
                assert x.v == pytest.approx(big.v, abs=1e-10)
                assert x.a_v == pytest.approx(big.a_v, abs=1e-10)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            integrate_state(KinState(0, 1, 0), 0.0, 0.0)


class TestSlopeProfiles:
    def test_flat_is_zero(self):
        prof = make_slope_profile("flat")
        assert prof.theta(500.0) == 0.0
        assert prof.elevation(500.0) == 0.0

    def test_rolling_sine_value(self):
        prof = make_slope_profile("rolling", amplitude=0.03, wavelength=400.0)
        assert prof.theta(100.0) == pytest.approx(0.03, rel=1e-12)

    def test_steep_higher_than_rolling(self):
        # ordering of peak-to-peak elevation, checked against a
        # trapezoid integration of tan(theta) as an independent oracle
        s = np.linspace(0.0, 2200.0, 4001)
        spans = {}
        for kind in ("rolling", "steep"):
            prof = make_slope_profile(kind)
            h = np.concatenate([[0.0], np.cumsum(
                0.5 * (np.tan(prof.theta(s[1:])) + np.tan(prof.theta(s[:-1])))
                * np.diff(s))])
            spans[kind] = h.max() - h.min()
            # analytic elevation matches the small-angle integral closely
            assert np.max(np.abs(prof.elevation(s) - h)) < 0.05 * spans[kind]
        assert spans["steep"] > spans["rolling"]

    def test_amplitude_cap(self):
        with pytest.raises(InvalidSpecError):
            make_slope_profile("rolling", amplitude=0.2)

    def test_wavelength_required(self):
        with pytest.raises(InvalidSpecError):
            SlopeProfile("steep", amplitude=0.08, wavelength=0.0)

    def test_lipschitz_continuity(self):
        for kind in ("rolling", "steep"):
            prof = make_slope_profile(kind)
            bound = 2 * np.pi * prof.amplitude / prof.wavelength
            s = np.linspace(0.0, 3000.0, 20000)
            delta = s[1] - s[0]
            diffs = np.abs(np.diff(np.atleast_1d(prof.theta(s))))
            assert np.all(diffs <= bound * delta * (1 + 1e-9))

    def test_custom_table(self):
        prof = SlopeProfile("custom", table=([0.0, 100.0, 200.0],
                                             [0.0, 0.02, 0.0]))
        assert prof.theta(50.0) == pytest.approx(0.01, rel=1e-12)
        assert prof.elevation(200.0) > 0


class TestSlopePrediction:
    def test_flat_gives_zero_vector(self):
        pred = predict_slope(make_slope_profile("flat"), np.linspace(0, 900, 51))
        assert len(pred) == 51
        assert np.all(pred.theta_seq == 0.0)

    def test_lookup_identity_on_knots(self):
        prof = make_slope_profile("rolling")
        l_ref = np.linspace(0.0, 800.0, 33)
        pred = predict_slope(prof, l_ref)
        assert np.allclose(pred.theta_seq, prof.theta(l_ref), atol=1e-15)

    def test_reversed_coordinates_rejected(self):
        with pytest.raises(ValueError):
            predict_slope(make_slope_profile("flat"), np.array([5.0, 1.0]))


class TestSlopeIO:
    def test_json_roundtrip(self, tmp_path):
        prof = make_slope_profile("steep")
        path = tmp_path / "slope.json"
        save_slope_profile(path, prof)
        back = load_slope_profile(path)
        s = np.linspace(0, 1000, 11)
        assert np.allclose(back.theta(s), prof.theta(s), atol=1e-15)

    def test_csv_export(self, tmp_path):
        path = tmp_path / "slope.csv"
        export_slope_csv(path, make_slope_profile("rolling"), 400.0, ds=100.0)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "s_m,theta_rad,elevation_m"
        assert len(lines) == 6
