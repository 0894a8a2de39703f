"""Energy-model-aware trajectory optimization toolkit.

Differentiable fuel-rate modeling, quintic trajectory candidates (1-D and
Frenet), NLP trajectory refinement, and closed-loop eco-driving scenario
simulation with energy-efficiency metrics.
"""

__version__ = "0.1.0"

from .params import (FuelCoeffs, Limits, VehicleParams, published_fuel_coeffs,
                     sedan_params, truck_params, vehicle_params)
from .dynamics import (KinState, SlopePrediction, SlopeProfile,
                       integrate_state, make_slope_profile, predict_slope,
                       resistance_accel, traction_accel)
from .powertrain import (EngineMap, EngineMapSpec, FitResult, FitSample,
                         GearPolicy, TransmissionSpec, build_engine_map,
                         engine_state, fit_fuel_model, fuel_rate_exact,
                         fuel_rate_model, fuel_rate_partials,
                         optimize_gear_policy, sample_fit_data,
                         sedan_map_spec, transmission_spec, truck_map_spec)
from .trajectory import Trajectory
from .polytraj import (Candidate, QuinticSegment, ReferenceLine,
                       SafetyGeometry, Weights, evaluate_objective,
                       feasibility_check, frenet_to_global,
                       make_frenet_candidate, quintic_fit,
                       sample_1d_candidates, select_candidate,
                       to_path_trajectory)
from .optimizer import (AccParams, ConstraintSpec, NLPProblem, SolveStats,
                        TrafficPrediction, acc_constraints, build_problem,
                        check_gradients, solve)
from .cycles import (DrivingCycle, composite_cycle, lead_prediction,
                     load_cycle_csv, shipped_cycle, synthetic_highway,
                     synthetic_urban)
from .scenarios import (Metrics, RunResult, ScenarioConfig, acc_spacing,
                        compute_metrics, homotopy_safety_check, run_acc,
                        run_cc_png, run_frenet)
