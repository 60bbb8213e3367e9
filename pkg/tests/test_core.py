"""Episode machinery: augmentation, indicator rewards, rollouts, dumps."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskskills.core import (AugmentedState, EnvState, EnvironmentStepError,
                             EpisodeConfig, RewardMode, RiskAwareTrajectory,
                             SkillChoice, SkillOutcome, TrajectoryStep,
                             ValidationError, augment_transition, augmented_reward,
                             format_trajectory, parse_trajectory, run_episode,
                             success_probability_estimate)


# ---------------------------------------------------------------------------
# stub environment and policy for controlled rollouts


class ChainEnv:
    """Deterministic 1-D chain: every skill yields reward ``reward`` and
    consumes ``steps`` timesteps.  Terminates early after ``stop_after``
    decisions when configured."""

    n_skills = 2

    def __init__(self, reward=0.25, steps=1, stop_after=None, overrun=False):
        self.reward = reward
        self.steps = steps
        self.stop_after = stop_after
        self.overrun = overrun
        self.calls = 0

    @property
    def feature_bounds(self):
        return ((0.0, 1.0),)

    def reset(self, rng):
        self.calls = 0
        return EnvState(features=np.array([0.0]))

    def run_skill(self, state, skill, rap, rng, max_steps=None):
        self.calls += 1
        steps = self.steps
        if self.overrun:
            steps = (max_steps or 1) + 5
        terminated = self.stop_after is not None and self.calls >= self.stop_after
        return SkillOutcome(steps=steps, base_reward=self.reward,
                            state=EnvState(features=np.array([float(self.calls)])),
                            terminated=terminated,
                            outcome="stopped" if terminated else None)


class FixedPolicy:
    """Always chooses skill 0 with a fixed risk parameter."""

    def __init__(self, rap=5.0):
        self.rap = rap

    def act(self, z, rng, greedy=False):
        return SkillChoice(skill=0, rap=self.rap, rap_executed=self.rap)


# ---------------------------------------------------------------------------
# augmented state and rewards


def test_augment_transition_accumulates_reward_and_steps():
    z = AugmentedState(env=None, w=0.5, t=3)
    z2 = augment_transition(z, -0.2, next_env="next", steps=4)
    assert z2.w == pytest.approx(0.3)
    assert z2.t == 7
    assert z2.env == "next"


def test_augment_transition_rejects_bad_inputs():
    z = AugmentedState(env=None, w=0.0, t=0)
    with pytest.raises(ValidationError):
        augment_transition(z, float("nan"), None)
    with pytest.raises(ValidationError):
        augment_transition(z, 0.0, None, steps=0)


def test_augmented_state_validation():
    with pytest.raises(ValidationError):
        AugmentedState(env=None, w=float("inf"), t=0)
    with pytest.raises(ValidationError):
        AugmentedState(env=None, w=0.0, t=-1)


def test_indicator_is_zero_before_horizon():
    for t in range(0, 10):
        assert augmented_reward(t, 10, w=99.0, beta=0.0) == 0.0


def test_indicator_at_horizon_threshold_semantics():
    assert augmented_reward(10, 10, w=1.2, beta=1.0) == 1.0
    assert augmented_reward(10, 10, w=0.8, beta=1.0) == 0.0
    # crossing exactly counts as success
    assert augmented_reward(10, 10, w=1.0, beta=1.0) == 1.0


def test_indicator_rejects_out_of_range_timesteps():
    with pytest.raises(ValidationError):
        augmented_reward(-1, 10, 0.0, 0.0)
    with pytest.raises(ValidationError):
        augmented_reward(11, 10, 0.0, 0.0)


def test_episode_config_validation():
    with pytest.raises(ValidationError):
        EpisodeConfig(horizon=0, beta=1.0)
    with pytest.raises(ValidationError):
        EpisodeConfig(horizon=10, beta=float("nan"))
    with pytest.raises(ValidationError):
        EpisodeConfig(horizon=10, beta=1.0, gamma=1.5)
    with pytest.raises(ValidationError):
        EpisodeConfig(horizon=10, beta=1.0, reward_mode="pg")


def test_env_state_validation():
    with pytest.raises(ValidationError):
        EnvState(features=np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        EnvState(features=np.array([1.0, float("nan")]))


# ---------------------------------------------------------------------------
# rollouts


def test_full_horizon_rollout_pg_reward_column(rng):
    env = ChainEnv(reward=0.25, steps=1)
    cfg = EpisodeConfig(horizon=4, beta=1.0, reward_mode=RewardMode.PROBABILISTIC_GOAL)
    traj = run_episode(env, FixedPolicy(), cfg, rng)
    assert len(traj.steps) == 4
    assert traj.total_steps == 4
    assert traj.terminal_flag
    assert traj.outcome == "timeout"
    assert traj.final_w == pytest.approx(1.0)
    # w == beta counts as success; indicator sits on the last record only
    assert [rec.reward for rec in traj.steps] == [0.0, 0.0, 0.0, 1.0]
    assert [rec.augmented_reward for rec in traj.steps] == [0.0, 0.0, 0.0, 1.0]
    traj.validate_chain()


def test_full_horizon_rollout_er_reward_column(rng):
    env = ChainEnv(reward=0.25, steps=1)
    cfg = EpisodeConfig(horizon=4, beta=1.0, gamma=0.9,
                        reward_mode=RewardMode.EXPECTED_RETURN)
    traj = run_episode(env, FixedPolicy(), cfg, rng)
    assert [rec.reward for rec in traj.steps] == [0.25] * 4
    # augmented column still carries the indicator for bookkeeping
    assert traj.indicator_return == 1.0
    assert traj.discounted_return(0.9) == pytest.approx(
        sum(0.25 * 0.9 ** t for t in range(4)))


def test_early_termination_applies_indicator_from_final_w(rng):
    env = ChainEnv(reward=0.6, steps=1, stop_after=2)
    cfg = EpisodeConfig(horizon=10, beta=1.0)
    traj = run_episode(env, FixedPolicy(), cfg, rng)
    assert len(traj.steps) == 2
    assert traj.outcome == "stopped"
    assert not traj.terminal_flag
    # final w = 1.2 >= beta: absorbing zero-reward tail cannot change it
    assert traj.steps[-1].augmented_reward == 1.0
    assert traj.final_w == pytest.approx(1.2)


def test_early_termination_failure_gets_zero_indicator(rng):
    env = ChainEnv(reward=0.1, steps=1, stop_after=2)
    cfg = EpisodeConfig(horizon=10, beta=1.0)
    traj = run_episode(env, FixedPolicy(), cfg, rng)
    assert traj.steps[-1].augmented_reward == 0.0
    assert traj.indicator_return == 0.0


def test_multi_step_skills_respect_budget(rng):
    class TruncatingEnv(ChainEnv):
        def run_skill(self, state, skill, rap, rng, max_steps=None):
            out = super().run_skill(state, skill, rap, rng, max_steps)
            used = min(out.steps, max_steps)
            return SkillOutcome(steps=used, base_reward=out.base_reward,
                                state=out.state)

    env = TruncatingEnv(reward=0.1, steps=4)
    cfg = EpisodeConfig(horizon=10, beta=99.0)
    traj = run_episode(env, FixedPolicy(), cfg, rng)
    # decisions at t = 0, 4, 8; the last one is cut to the 2-step budget
    assert [rec.steps for rec in traj.steps] == [4, 4, 2]
    assert traj.total_steps == 10
    traj.validate_chain()


def test_overrun_raises_environment_step_error(rng):
    env = ChainEnv(overrun=True)
    cfg = EpisodeConfig(horizon=5, beta=1.0)
    with pytest.raises(EnvironmentStepError) as err:
        run_episode(env, FixedPolicy(), cfg, rng)
    assert "budget" in str(err.value)


def test_environment_exception_is_annotated_with_timestep(rng):
    class BoomEnv(ChainEnv):
        def run_skill(self, state, skill, rap, rng, max_steps=None):
            raise RuntimeError("boom")

    with pytest.raises(EnvironmentStepError) as err:
        run_episode(BoomEnv(), FixedPolicy(), EpisodeConfig(horizon=5, beta=1.0), rng)
    assert err.value.step == 0


def test_discounted_return_uses_elapsed_timesteps(rng):
    env = ChainEnv(reward=1.0, steps=3)
    cfg = EpisodeConfig(horizon=9, beta=99.0, gamma=0.5,
                        reward_mode=RewardMode.EXPECTED_RETURN)
    traj = run_episode(env, FixedPolicy(), cfg, rng)
    # records start at t = 0, 3, 6
    assert traj.discounted_return(0.5) == pytest.approx(1.0 + 0.5 ** 3 + 0.5 ** 6)


# ---------------------------------------------------------------------------
# success probability


def test_success_probability_matches_mean_indicator_bitwise(rng):
    env = ChainEnv(reward=0.21, steps=1, stop_after=3)
    cfg = EpisodeConfig(horizon=6, beta=0.5)
    trajs = [run_episode(env, FixedPolicy(), cfg, rng) for _ in range(7)]
    est = success_probability_estimate(trajs)
    mean_return = float(np.mean([t.discounted_return(1.0) for t in trajs]))
    assert est == mean_return


def test_success_probability_validates_batch():
    with pytest.raises(ValidationError):
        success_probability_estimate([])


def test_success_probability_rejects_mixed_thresholds(rng):
    env = ChainEnv()
    t1 = run_episode(env, FixedPolicy(), EpisodeConfig(horizon=3, beta=1.0), rng)
    t2 = run_episode(env, FixedPolicy(), EpisodeConfig(horizon=3, beta=2.0), rng)
    with pytest.raises(ValidationError):
        success_probability_estimate([t1, t2])


@settings(max_examples=50, deadline=None)
@given(rewards=st.lists(st.floats(min_value=-1, max_value=1, allow_nan=False),
                        min_size=1, max_size=6),
       beta=st.floats(min_value=-2, max_value=2, allow_nan=False))
def test_indicator_equivalence_property(rewards, beta):
    """Empirical success probability == mean terminal-indicator return."""
    rng = np.random.default_rng(0)
    trajs = []
    for r in rewards:
        env = ChainEnv(reward=r, steps=1)
        cfg = EpisodeConfig(horizon=3, beta=beta)
        trajs.append(run_episode(env, FixedPolicy(), cfg, rng))
    est = success_probability_estimate(trajs, beta=beta)
    assert est == float(np.mean([t.indicator_return for t in trajs]))


# ---------------------------------------------------------------------------
# chain validation


def _record(z, z_next, base_reward, steps):
    return TrajectoryStep(z=z, skill=0, rap=0.0, rap_executed=0.0, steps=steps,
                          base_reward=base_reward, reward=0.0, augmented_reward=0.0,
                          z_next=z_next)


def test_validate_chain_catches_broken_accumulation():
    s = EnvState(features=np.array([0.0]))
    z0 = AugmentedState(env=s, w=0.0, t=0)
    z1 = AugmentedState(env=s, w=0.7, t=1)  # claims 0.7 but reward was 0.5
    traj = RiskAwareTrajectory(steps=(_record(z0, z1, 0.5, 1),), horizon=5, beta=1.0,
                               mode=RewardMode.PROBABILISTIC_GOAL, outcome="timeout",
                               terminal_flag=False)
    with pytest.raises(ValidationError):
        traj.validate_chain()


def test_validate_chain_catches_horizon_overrun():
    s = EnvState(features=np.array([0.0]))
    z0 = AugmentedState(env=s, w=0.0, t=0)
    z1 = AugmentedState(env=s, w=0.5, t=9)
    traj = RiskAwareTrajectory(steps=(_record(z0, z1, 0.5, 9),), horizon=5, beta=1.0,
                               mode=RewardMode.PROBABILISTIC_GOAL, outcome="timeout",
                               terminal_flag=False)
    with pytest.raises(ValidationError):
        traj.validate_chain()


# ---------------------------------------------------------------------------
# trajectory dump format


def test_trajectory_dump_round_trip(rng):
    env = ChainEnv(reward=0.3, steps=2)
    cfg = EpisodeConfig(horizon=8, beta=1.0)
    traj = run_episode(env, FixedPolicy(rap=7.5), cfg, rng)
    text = format_trajectory(traj)
    assert text.startswith("# schema_version: 1\n# mode: pg\n")
    rows = parse_trajectory(text)
    assert len(rows) == len(traj.steps)
    for row, rec in zip(rows, traj.steps):
        assert row["t"] == rec.z.t
        assert row["rap"] == rec.rap
        assert row["w"] == pytest.approx(rec.z_next.w)
    # w column replays as cumulative base reward
    acc = 0.0
    for row in rows:
        acc += row["base_reward"]
        assert row["w"] == pytest.approx(acc)


def test_trajectory_dump_records_raw_rap_not_clamped(rng):
    class ClampedPolicy:
        def act(self, z, rng, greedy=False):
            return SkillChoice(skill=0, rap=-12.5, rap_executed=0.0)

    env = ChainEnv()
    traj = run_episode(env, ClampedPolicy(), EpisodeConfig(horizon=2, beta=1.0), rng)
    rows = parse_trajectory(format_trajectory(traj))
    assert rows[0]["rap"] == -12.5


def test_parse_trajectory_rejects_garbage():
    with pytest.raises(ValidationError):
        parse_trajectory("")
    with pytest.raises(ValidationError):
        parse_trajectory("a\tb\n1\t2\n")
    good_header = "\t".join(("t", "skill", "rap", "base_reward",
                             "augmented_reward", "w"))
    with pytest.raises(ValidationError):
        parse_trajectory(good_header + "\n1\t2\n")
