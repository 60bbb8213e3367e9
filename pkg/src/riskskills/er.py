"""Expected-return baseline: identical machinery, different objective.

The baseline learner maximizes discounted expected shaped reward instead of
the probability of clearing the target.  Everything else is shared: the same
two-tiered policy, the same per-skill risk parameters, the same two-timescale
projected updates.  Only the reward column the gradient sees changes (base
shaped rewards, discounted at ``gamma`` < 1) and the thing the learning curve
calls success is reported the same way so curves stay comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .core import EpisodeConfig, RewardMode, ValidationError
from .learner import StepSchedule, TrainConfig, TrainResult, train

ER_GAMMA_DEFAULT = 0.99


@dataclass(frozen=True)
class ErConfig:
    """Training budget for the expected-return baseline.

    The episode config is forced to expected-return mode with a discount
    strictly below 1; a discount of 1 would make long reward-farming episodes
    and quick goals indistinguishable in scale.
    """

    episode: EpisodeConfig
    episodes: int = 20_000
    batch_size: int = 1
    schedule: StepSchedule = field(default_factory=StepSchedule)
    advantage: str = "baseline"
    critic_step: float = 0.05
    seed: int = 0
    early_stop: bool = True

    def __post_init__(self):
        if self.episode.reward_mode is not RewardMode.EXPECTED_RETURN:
            forced = replace(self.episode, reward_mode=RewardMode.EXPECTED_RETURN)
            object.__setattr__(self, "episode", forced)
        if not 0 < self.episode.gamma < 1:
            raise ValidationError(
                f"expected-return training needs gamma in (0, 1), got {self.episode.gamma}")

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(episode=self.episode, episodes=self.episodes,
                           batch_size=self.batch_size, schedule=self.schedule,
                           advantage=self.advantage, critic_step=self.critic_step,
                           seed=self.seed, early_stop=self.early_stop)


def train_er(env_factory, policy_init, cfg: ErConfig) -> TrainResult:
    """Run the expected-return baseline with the shared training loop."""
    return train(env_factory, policy_init, cfg.to_train_config())
