from .types import CallableValueFunction, ControlDriftMode, CostateSolution, LQInstance, ValueFunction
from .controllers import (
    ModulatedPoint,
    bridge_controller,
    control_time_to_step,
    feature_pseudoinverse,
    modulated_costate_solution,
    modulated_solution,
    solve_terminal_state_prop2,
    step_to_control_time,
    style_controller,
    style_costate_solution,
)
from .hjb import (
    BridgeValueFunction,
    ModulatedValueFunction,
    ShiftedValueFunction,
    StyleValueFunction,
    hjb_residual,
)
from .shooting import shooting_bvp_solve
from .simulation import measure_convergence_slope, simulate_controlled, simulate_ensemble
