"""IPMSM MTPA strategy simulator.

Library + CLI for comparing maximum-torque-per-ampere control strategies on
an interior PMSM model: conventional i_d=0, extremum seeking with square-wave
angle injection, and a dual-control scheme that identifies the magnet flux
and saliency online with a bank of RLS estimators.
"""

from .config import (ControllerSetup, SimOptions, controller_setup, load_config,
                     motor_params, sim_options)
from .dcee import (DceeConfig, DceeController, DiscreteModel, build_discrete_model,
                   control_output, cost_gradient, dcee_tick, dual_cost,
                   predict_torque, predicted_cost)
from .errors import ConfigError, SimulationDiverged
from .estimators import (EstimatorBank, ParamEstimate, bank_references, bank_update,
                         normalized_torque, regressor, rls_update)
from .extremum_seeking import (EsConfig, EsController, es_demodulate_and_integrate,
                               es_references, injection_signal)
from .foc import PiState, current_pi_decoupled, make_current_pis, make_speed_pi, speed_pi
from .mtpa import (EPS_L, DegenerateSaliencyError, MtpaPoint, UnreachableTorqueError,
                   mtpa_curve_torque, mtpa_oracle, mtpa_point, torque_to_current)
from .observer import LowSpeedError, ObserverConfig, TorqueObserver, observe_torque
from .plant import (MotorParams, MotorState, PlantInput, advance_plant,
                    advance_plant_avg, copper_loss, electromagnetic_torque,
                    limit_voltage, plant_derivatives, step_plant)
from .report import emit_plots, export_csv, read_csv, write_summary
from .scenario import (ScenarioLog, ScenarioResult, ScenarioTimeline, Segment,
                       run_scenario, smooth_load, summarize)

__version__ = "0.1.0"
