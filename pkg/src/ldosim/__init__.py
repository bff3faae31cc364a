"""Behavioral simulation toolkit for a dual-range capacitor-less FVF LDO."""

from .ac import (
    FrequencyResponse, FrequencySweep, LoopGainResult, OperatingPoint,
    ac_sweep, dc_operating_point, loop_gain, psr, write_response_csv,
)
from .errors import (
    CircuitError, ConfigError, ConvergenceError, LdosimError, LoadRangeError,
    NetlistParseError, SingularMatrixError, TransientStallError,
)
from .ldo import (
    BlockBias, LdoParams, Mode, TransientSetup, build_small_signal,
    build_transient, derive_bias, initial_guess, load_params, mode_from_ven,
    node_pole_estimates, operating_point, quiescent_current, save_params,
    step_scenario,
)
from .metrics import (
    MetricsReport, current_efficiency, excursions, fom, iq_reduction,
    psr_margins, response_time, settling_time,
)
from .netlist import (
    BreakPort, Capacitor, Circuit, ISource, NonlinearVccs, Resistor, VSource,
    Vccs, parse_netlist, parse_si, register_model,
)
from .transient import Stimulus, TransientTrace, simulate, write_trace_csv

__version__ = "0.1.0"
