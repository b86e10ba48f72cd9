from .types import DriftMode, NoiseSchedule, ScheduleKind, SdeCoefficients, State, Trajectory
from .schedules import FlowPath, MarginalPath, OrnsteinUhlenbeckPath, VariancePreservingPath, make_schedule
from .score_models import (
    ConditionalScoreModel,
    CountingScoreModel,
    GaussianMixture,
    IsotropicGaussian,
    ScoreModel,
    TabulatedScore,
)
from .sampling import (
    ddim_sample,
    ddim_step,
    flow_path_sample,
    flow_posterior_mean,
    forward_marginal_sample,
    reverse_drift,
    simulate_reverse,
    tweedie_posterior_mean,
)
