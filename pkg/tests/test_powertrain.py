import json

import numpy as np
import pytest

from emato.errors import DegenerateSamplesError, EnvelopeError, InvalidSpecError
from emato.params import published_fuel_coeffs, truck_params
from emato.powertrain import (EngineMap, EngineMapSpec, FitSample,
                              TransmissionSpec, build_engine_map,
                              engine_state, fit_fuel_model, fuel_rate_exact,
                              fuel_rate_model, fuel_rate_partials,
                              load_powertrain, optimize_gear_policy,
                              sample_fit_data, save_powertrain,
                              truck_map_spec, truck_transmission)


class TestEngineMap:
    def test_min_bsfc_echoes_basin(self):
        spec = EngineMapSpec(n_speed=16, n_torque=16, bsfc_min=195.0)
        emap = build_engine_map(spec)
        bsfc_min, omega, torque = emap.bsfc_minimum()
        assert abs(bsfc_min - 195.0) <= 0.5
        # interior minimum, not on the grid boundary
        assert emap.speed_grid[0] < omega < emap.speed_grid[-1]
        assert emap.torque_grid[0] < torque < emap.torque_grid[-1]

    def test_power_consistent_with_speed_times_torque(self, truck_map):
        # product surfaces are exactly reproduced by bilinear interpolation
        rng = np.random.default_rng(3)
        for _ in range(50):
            omega = rng.uniform(truck_map.omega_min, truck_map.omega_max)
            torque = rng.uniform(0.0, truck_map.torque_grid[-1])
            assert truck_map.power(omega, torque) == pytest.approx(
                omega * torque, rel=0.01)

    def test_interpolation_identity_at_nodes(self, truck_map):
        for i in (0, 5, 11):
            for k in (0, 7, 15):
                omega = truck_map.speed_grid[i]
                torque = truck_map.torque_grid[k]
                assert truck_map.bsfc(omega, torque) == pytest.approx(
                    truck_map.bsfc_surface[i, k], abs=1e-12)

    def test_bilinear_blend_midway(self, truck_map):
        i, k = 4, 6
        omega = 0.5 * (truck_map.speed_grid[i] + truck_map.speed_grid[i + 1])
        torque = 0.5 * (truck_map.torque_grid[k] + truck_map.torque_grid[k + 1])
        corners = truck_map.bsfc_surface[i:i + 2, k:k + 2]
        assert truck_map.bsfc(omega, torque) == pytest.approx(
            float(np.mean(corners)), abs=1e-12)

    def test_degenerate_grid_rejected(self):
        with pytest.raises(InvalidSpecError):
            EngineMap([1.0, 1.0, 2.0], [0.0, 1.0],
                      np.ones((3, 2)), np.ones((3, 2)), [1.0, 1.0, 1.0])

    def test_small_grid_rejected(self):
        with pytest.raises(InvalidSpecError):
            build_engine_map(EngineMapSpec(n_speed=4))


class TestEngineState:
    def test_zero_speed_zero_omega(self, truck):
        trans = truck_transmission()
        for gear in range(trans.n_gears):
            omega, _ = engine_state(0.0, 1.0, gear, trans, truck)
            assert omega == 0.0

    def test_zero_traction_zero_torque(self, truck):
        _, torque = engine_state(15.0, 0.0, 2, truck_transmission(), truck)
        assert torque == 0.0

    def test_worked_truck_example(self, truck):
        # i_t = 8 via a single 2.0 gear and 4.0 final drive
        trans = TransmissionSpec(gear_ratios=(2.0,), final_drive=4.0,
                                 efficiency=0.95, wheel_radius=0.4)
        omega, torque = engine_state(10.0, 0.5, 0, trans, truck)
        assert torque == pytest.approx(4800 * 0.5 * 0.4 / (8 * 0.95), rel=1e-12)
        assert omega == pytest.approx(10 * 8 / 0.4, rel=1e-12)

    def test_bad_gear(self, truck):
        with pytest.raises(InvalidSpecError):
            engine_state(10.0, 0.5, 9, truck_transmission(), truck)


class TestFuelRateExact:
    def test_unit_analysis_oracle(self, truck):
        # 50 kW at 200 g/kWh and 0.85 g/mL is 10 kg/h = 3.268 mL/s
        omega_grid = np.linspace(100.0, 400.0, 9)
        torque_grid = np.linspace(0.0, 400.0, 9)
        emap = EngineMap(omega_grid, torque_grid,
                         np.outer(omega_grid, torque_grid),
                         np.full((9, 9), 200.0), np.full(9, 400.0))
        trans = TransmissionSpec(gear_ratios=(1.25,), final_drive=4.0,
                                 efficiency=0.95, wheel_radius=0.4)
        # v=20, i_t=5 -> omega=250; torque target 200 -> a_t from inverse
        a_t = 200.0 * 5 * 0.95 / (4800 * 0.4)
        f_r = fuel_rate_exact(20.0, a_t, 0, emap, trans, truck)
        assert f_r == pytest.approx(3.2679738562091503, rel=1e-12)

    def test_idle_floor_nonnegative(self, truck_map, truck):
        f_r = fuel_rate_exact(0.0, 0.0, 0, truck_map, truck_transmission(),
                              truck)
        assert f_r >= 0.0

    def test_gear_changes_fuel(self, truck_map, truck):
        trans = truck_transmission()
        f2 = fuel_rate_exact(10.0, 0.5, 2, truck_map, trans, truck)
        f4 = fuel_rate_exact(10.0, 0.5, 4, truck_map, trans, truck)
        assert f2 != pytest.approx(f4, rel=1e-6)

    def test_envelope_violation(self, truck_map, truck):
        with pytest.raises(EnvelopeError):
            fuel_rate_exact(27.0, 0.5, 0, truck_map, truck_transmission(),
                            truck)  # gear 1 at 27 m/s over-revs


class TestGearPolicy:
    def test_single_gear_constant_table(self, truck_map, truck):
        trans = TransmissionSpec(gear_ratios=(1.0,), final_drive=4.0,
                                 efficiency=0.95, wheel_radius=0.4)
        pol = optimize_gear_policy(truck_map, trans, np.linspace(5, 25, 6),
                                   np.linspace(0.0, 1.0, 4), truck)
        feas = pol.table[pol.table >= 0]
        assert len(feas) > 0 and np.all(feas == 0)

    def test_staircase_monotone_in_speed(self, truck_policy):
        # higher speeds never select a lower gear at fixed traction
        for k in range(len(truck_policy.at_grid)):
            col = truck_policy.table[:, k]
            col = col[col >= 0]
            assert np.all(np.diff(col) >= 0)

    def test_staircase_trend_in_traction(self, truck_policy):
        # away from the unloaded fringe, more traction trends toward lower
        # gears; near-tie wiggles of one step are tolerated
        sel = truck_policy.at_grid >= 0.4
        at_sel = truck_policy.at_grid[sel]
        for i, v in enumerate(truck_policy.v_grid):
            if v < 5.0:
                continue
            row = truck_policy.table[i, sel].astype(float)
            ok = row >= 0
            if np.sum(ok) < 4:
                continue
            assert np.all(np.diff(row[ok]) <= 1)  # no upward jumps
            lo = row[ok][: max(2, np.sum(ok) // 3)].mean()
            hi = row[ok][-max(2, np.sum(ok) // 3):].mean()
            assert hi <= lo + 1e-9

    def test_policy_optimal_per_cell(self, truck_map, truck_policy, truck):
        trans = truck_policy.trans
        rng = np.random.default_rng(5)
        cells = [(rng.integers(0, len(truck_policy.v_grid)),
                  rng.integers(0, len(truck_policy.at_grid)))
                 for _ in range(40)]
        for i, k in cells:
            chosen = truck_policy.table[i, k]
            if chosen < 0:
                continue
            v, a_t = truck_policy.v_grid[i], truck_policy.at_grid[k]
            best = fuel_rate_exact(v, a_t, int(chosen), truck_map, trans, truck)
            for gear in range(trans.n_gears):
                try:
                    other = fuel_rate_exact(v, a_t, gear, truck_map, trans,
                                            truck)
                except EnvelopeError:
                    continue
                assert best <= other + 1e-12

    def test_sole_feasible_gear_selected(self, truck_map, truck_policy, truck):
        trans = truck_policy.trans
        found = False
        for i, v in enumerate(truck_policy.v_grid):
            for k, a_t in enumerate(truck_policy.at_grid):
                feasible = []
                for gear in range(trans.n_gears):
                    omega, torque = engine_state(v, a_t, gear, trans, truck)
                    if truck_map.contains(omega, torque):
                        feasible.append(gear)
                if len(feasible) == 1:
                    assert truck_policy.table[i, k] == feasible[0]
                    found = True
        assert found, "lattice should contain sole-feasible-gear cells"

    def test_unreachable_powertrain_rejected(self, truck_map, truck):
        trans = TransmissionSpec(gear_ratios=(100.0,), final_drive=10.0,
                                 efficiency=0.95, wheel_radius=0.2)
        with pytest.raises(InvalidSpecError):
            optimize_gear_policy(truck_map, trans, np.linspace(5, 25, 4),
                                 np.linspace(0.5, 2.0, 4), truck)


class TestFuelModelFit:
    def test_exact_recovery_from_published_truck_coeffs(self):
        coeffs = published_fuel_coeffs("truck")
        v, at = np.meshgrid(np.linspace(2, 26, 9), np.linspace(0.1, 2.9, 7))
        samples = [FitSample(float(vv), float(aa),
                             float(fuel_rate_model(coeffs, vv, aa)))
                   for vv, aa in zip(v.ravel(), at.ravel())]
        fit = fit_fuel_model(samples)
        got = np.array(fit.coeffs.o + fit.coeffs.c)
        want = np.array(coeffs.o + coeffs.c)
        assert np.all(np.abs(got - want) <= 1e-6 * np.maximum(np.abs(want), 1e-12))

    def test_map_fit_accuracy(self, truck_map, truck_policy, truck):
        samples = sample_fit_data(truck_map, truck_policy, truck)
        fit = fit_fuel_model(samples)
        assert fit.accuracy_pct >= 95.0

    def test_rank_condition(self):
        samples = [FitSample(10.0, 0.1 * k, 1.0 + 0.1 * k) for k in range(8)]
        with pytest.raises(DegenerateSamplesError):
            fit_fuel_model(samples)

    def test_too_few_samples(self):
        with pytest.raises(DegenerateSamplesError):
            fit_fuel_model([FitSample(10.0, 0.5, 1.0)] * 5)


class TestFuelRateModel:
    def test_idle_is_o0(self, truck):
        assert fuel_rate_model(published_fuel_coeffs("truck"), 0.0, 0.0) \
            == pytest.approx(3.351e-1, rel=1e-12)

    def test_sedan_golden_point(self):
        # frozen from independent polynomial arithmetic
        coeffs = published_fuel_coeffs("sedan")
        assert fuel_rate_model(coeffs, 20.0, 0.5) == pytest.approx(
            1.3037588, rel=1e-9)

    def test_partial_in_traction(self, sedan):
        coeffs = sedan.fuel
        c0, c1, c2 = coeffs.c
        for v in (0.0, 7.5, 20.0):
            _, da = fuel_rate_partials(coeffs, v, 1.0)
            assert da == pytest.approx(c0 + c1 * v + c2 * v ** 2, rel=1e-12)

    @pytest.mark.parametrize("vehicle", ["sedan", "truck"])
    def test_partials_match_finite_differences(self, vehicle):
        coeffs = published_fuel_coeffs(vehicle)
        rng = np.random.default_rng(9)
        h = 1e-5
        for _ in range(60):
            v = rng.uniform(0.5, 26.5)
            at = rng.uniform(0.0, 3.0)
            dv, da = fuel_rate_partials(coeffs, v, at)
            fd_v = (fuel_rate_model(coeffs, v + h, at)
                    - fuel_rate_model(coeffs, v - h, at)) / (2 * h)
            fd_a = (fuel_rate_model(coeffs, v, at + h)
                    - fuel_rate_model(coeffs, v, at - h)) / (2 * h)
            assert dv == pytest.approx(fd_v, rel=1e-7, abs=1e-9)
            assert da == pytest.approx(fd_a, rel=1e-7, abs=1e-9)

    @pytest.mark.parametrize("vehicle", ["sedan", "truck"])
    def test_strictly_increasing_in_traction(self, vehicle):
        coeffs = published_fuel_coeffs(vehicle)
        v = np.linspace(0.0, 27.0, 500)
        slope = coeffs.c[0] + coeffs.c[1] * v + coeffs.c[2] * v ** 2
        assert np.all(slope > 0)


class TestUnitIdentity:
    def test_exact_fuel_matches_map_product(self, truck_map, truck_policy,
                                            truck):
        c_u = 3.6e6 * truck.fuel.rho_g
        for s in sample_fit_data(truck_map, truck_policy, truck)[::7]:
            gear = truck_policy.lookup(s.v, s.a_t)
            omega, torque = engine_state(s.v, s.a_t, gear, truck_policy, truck)
            expect = truck_map.power(omega, torque) \
                * truck_map.bsfc(omega, torque) / c_u
            assert s.f_r == pytest.approx(expect, abs=1e-12)


class TestSerialization:
    def test_powertrain_roundtrip(self, tmp_path, truck_map, truck_policy):
        path = tmp_path / "pt.json"
        save_powertrain(path, truck_map, truck_policy)
        emap, policy = load_powertrain(path)
        assert np.allclose(emap.bsfc_surface, truck_map.bsfc_surface)
        assert np.array_equal(policy.table, truck_policy.table)
        assert policy.trans == truck_policy.trans

    def test_fuel_coeffs_fields(self):
        d = published_fuel_coeffs("truck").to_dict()
        assert set(d) == {"o0", "o1", "o2", "o3", "o4",
                          "c0", "c1", "c2", "rho_g"}
