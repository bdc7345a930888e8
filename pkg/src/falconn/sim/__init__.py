"""Plants, fixed-step integration and traces."""

from .integrate import DIVERGENCE_LIMIT, DivergenceError, integrate_rk4
from .plants import (
    PLANTS,
    InputBoundError,
    SutSpec,
    first_order,
    get_plant,
    linear_second_order,
    maglev_analog,
    run_experiment,
    van_der_pol_forced,
)
from .signals import InputSignal, corners_random, resample_input, uniform_grid
from .trace import Trace, TraceFormatError, read_trace, write_trace
