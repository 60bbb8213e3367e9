"""Risk-sensitive skill learning with per-skill risk parameters.

A two-tiered stochastic policy (softmax skill selection, Gaussian risk
parameter per skill) trained by two-timescale projected policy gradient to
maximize the probability that an episode's accumulated reward clears a target,
plus an expected-return baseline, a miniature soccer-offense environment, and
exact-gradient oracles on an enumerable fixture.
"""

from .core import (AugmentedState, ConfigurationError, EnvState, EpisodeConfig,
                   EnvironmentStepError, RewardMode, RiskAwareTrajectory, SkillChoice,
                   SkillOutcome, TrajectoryStep, ValidationError, augment_transition,
                   augmented_reward, dump_trajectory, parse_trajectory, run_episode,
                   success_probability_estimate)
from .er import ErConfig, train_er
from .learner import (CurvePoint, GradientEstimate, LinearCritic, ProjectionBox,
                      StepSchedule, TrainConfig, TrainResult, critic_update,
                      estimate_gradients, evaluate, read_curve, train,
                      trajectory_gradient, two_timescale_step, write_curve)
from .offense import (FieldState, MetricsRecord, MiniOffenseEnv, OffenseParams,
                      RewardTable, SkillId, goal_probability, heatmap_region_means,
                      keeper_policy, metrics_collect, rap_mean_field, scenario_init)
from .oracle import (FixtureEnv, TabularTwoTieredPolicy, TinyMdpFixture,
                     brute_force_gradient, exact_return, fd_gradient,
                     sampled_gradient_moments)
from .policy import (FeatureSpec, Featurizer, GibbsGaussianPolicy, fourier_features,
                     gaussian_log_density, inter_skill_probs, load_checkpoint,
                     log_grad_inter, log_grad_rad, rad_features, rad_sample,
                     sample_skill, save_checkpoint)

__version__ = "0.1.0"

__all__ = [
    "AugmentedState", "ConfigurationError", "EnvState", "EnvironmentStepError",
    "EpisodeConfig", "RewardMode", "RiskAwareTrajectory", "SkillChoice",
    "SkillOutcome", "TrajectoryStep", "ValidationError", "augment_transition",
    "augmented_reward", "dump_trajectory", "parse_trajectory", "run_episode",
    "success_probability_estimate",
    "ErConfig", "train_er",
    "CurvePoint", "GradientEstimate", "LinearCritic", "ProjectionBox",
    "StepSchedule", "TrainConfig", "TrainResult", "critic_update",
    "estimate_gradients", "evaluate", "read_curve", "train", "trajectory_gradient",
    "two_timescale_step", "write_curve",
    "FieldState", "MetricsRecord", "MiniOffenseEnv", "OffenseParams", "RewardTable",
    "SkillId", "goal_probability", "heatmap_region_means", "keeper_policy",
    "metrics_collect", "rap_mean_field", "scenario_init",
    "FixtureEnv", "TabularTwoTieredPolicy", "TinyMdpFixture", "brute_force_gradient",
    "exact_return", "fd_gradient", "sampled_gradient_moments",
    "FeatureSpec", "Featurizer", "GibbsGaussianPolicy", "fourier_features",
    "gaussian_log_density", "inter_skill_probs", "load_checkpoint", "log_grad_inter",
    "log_grad_rad", "rad_features", "rad_sample", "sample_skill", "save_checkpoint",
    "__version__",
]
