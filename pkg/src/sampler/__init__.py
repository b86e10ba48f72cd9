from .types import ControlVariable, GradientMode, ProxInit, SamplerConfig
from .modulation import (
    ModulatedSampler,
    optimize_control_step,
    proximal_x0_solve,
    run_algorithm1,
    run_algorithm2,
    run_uncontrolled,
)
