import numpy as np
import pytest

from riskskills.core import EpisodeConfig, RewardMode
from riskskills.offense import MiniOffenseEnv
from riskskills.policy import GibbsGaussianPolicy


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def losing_env():
    return MiniOffenseEnv(scenario="losing")


@pytest.fixture
def winning_env():
    return MiniOffenseEnv(scenario="winning")


@pytest.fixture
def pg_episode():
    return EpisodeConfig(horizon=150, beta=1.0, gamma=1.0,
                         reward_mode=RewardMode.PROBABILISTIC_GOAL)


@pytest.fixture
def er_episode():
    return EpisodeConfig(horizon=150, beta=1.0, gamma=0.99,
                         reward_mode=RewardMode.EXPECTED_RETURN)


@pytest.fixture
def losing_policy(losing_env):
    return GibbsGaussianPolicy.for_environment(losing_env)
