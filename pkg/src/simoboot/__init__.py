"""Transient simulator and analysis toolkit for single-inductor-multiple-output
DC-DC converters built around a shared bootstrap gate driver."""

from .analysis import (GateDriveCost, Metrics, TrackingReport, compute_metrics,
                       efficiency, gate_drive_cost, is_regulated, output_mean,
                       peak_current, ripple, service_rates, verify_tracking)
from .config import (ConfigError, apply_override, parse_config,
                     parse_config_file, render_config)
from .control import (ControllerState, charge_first_threshold,
                      highest_target_index, initial_controller_state,
                      needs_service, next_action, select_round_robin)
from .dynamics import (CircuitState, NodeVoltages, Phase, analytic_rl_segment,
                       derivative, driver_bias, gate_overdrive, node_voltages,
                       recharge_current)
from .engine import (EnergyLedger, Event, LedgerSeries, SimulationError, Trace,
                     locate_event, simulate, step, stored_energy)
from .model import (BootstrapSpec, ControllerParams, ConverterSpec, DiodeModel,
                    DriverSpec, InductorSpec, LoadModel, OutputSpec, SimParams,
                    SwitchModel, nominal_boot_voltage, validate)
from .traceio import (csv_header, format_trace_csv, read_trace_csv,
                      write_trace_csv)

__version__ = "0.1.0"
