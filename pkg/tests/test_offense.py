"""Tests for the soccer-offense environment: geometry, skills, rewards,
metrics, and the dribble-power field."""

import dataclasses
import math

import numpy as np
import pytest

from riskskills.core import EpisodeConfig, RewardMode, ValidationError, run_episode
from riskskills.learner import evaluate
from riskskills.offense import (
    FieldState,
    MetricsRecord,
    MiniOffenseEnv,
    OffenseParams,
    RewardTable,
    SkillId,
    goal_probability,
    heatmap_region_means,
    keeper_policy,
    metrics_collect,
    rap_mean_field,
    scenario_init,
)
from riskskills.policy import GibbsGaussianPolicy

P = OffenseParams()


def plain_state(striker, ball=None, keeper=(P.keeper_line_x, 0.5), score=(0, 1),
                possession="striker"):
    return FieldState(striker=striker, ball=ball or striker, keeper=keeper,
                      score=score, possession=possession)


# ---------------------------------------------------------------------------
# construction and kickoff


def test_scenario_init_scores():
    rng = np.random.default_rng(0)
    assert scenario_init("winning", rng).score == (1, 0)
    assert scenario_init("losing", rng).score == (0, 1)
    with pytest.raises(ValidationError):
        scenario_init("draw", rng)


def test_scenario_init_geometry(rng):
    for _ in range(50):
        state = scenario_init("losing", rng)
        assert state.ball == state.striker
        assert state.keeper == (P.keeper_line_x, 0.5)
        assert abs(state.striker[0] - P.start_x) <= P.start_jitter + 1e-12
        assert abs(state.striker[1] - 0.5) <= P.start_jitter + 1e-12
        assert state.possession == "striker"


def test_features_layout():
    state = plain_state((0.2, 0.3), ball=(0.25, 0.35), score=(1, 0))
    feats = state.features
    assert np.allclose(feats, [0.2, 0.3, 0.25, 0.35, 0.5, 1.0])
    blowout = plain_state((0.2, 0.3), score=(0, 5))
    assert blowout.features[5] == -1.0  # score difference is clamped


def test_reward_table_sign_validation():
    with pytest.raises(ValidationError):
        RewardTable(r_move=-0.001)
    with pytest.raises(ValidationError):
        RewardTable(r_dribble_near=0.01)
    with pytest.raises(ValidationError):
        RewardTable(r_shoot_far=0.0)
    with pytest.raises(ValidationError):
        RewardTable(goal_reward=0.0)
    with pytest.raises(ValidationError):
        RewardTable(near_box_threshold=1.5)


def test_env_rejects_unknown_scenario():
    with pytest.raises(ValidationError):
        MiniOffenseEnv(scenario="overtime")


# ---------------------------------------------------------------------------
# goal probability and the keeper


def test_goal_probability_monotone_in_distance_and_block():
    for block in (0.0, 0.5, 1.0):
        probs = [goal_probability(d, block) for d in np.linspace(0.0, 1.0, 21)]
        assert all(a > b for a, b in zip(probs, probs[1:]))
    for dist in (0.1, 0.3, 0.6):
        probs = [goal_probability(dist, b) for b in np.linspace(0.0, 1.0, 11)]
        assert all(a > b for a, b in zip(probs, probs[1:]))


def test_goal_probability_calibration_points():
    # long shots against a set keeper are nearly hopeless
    assert goal_probability(0.55, 1.0) < 0.1
    # point-blank with the keeper beaten mostly scores
    assert goal_probability(0.06, 0.0) > 0.9


def test_keeper_tracks_ball_at_bounded_speed():
    state = plain_state((0.3, 0.9), ball=(0.3, 0.9))
    kx, ky = keeper_policy(state)
    assert kx == P.keeper_line_x
    assert abs(ky - 0.5) <= P.keeper_speed + 1e-12
    assert ky > 0.5  # moved toward the ball


def test_keeper_stays_on_patrol_segment():
    state = plain_state((0.3, 0.99), ball=(0.3, 0.99), keeper=(P.keeper_line_x, 0.64))
    _, ky = keeper_policy(state)
    assert ky <= P.keeper_patrol[1]
    state = plain_state((0.3, 0.01), ball=(0.3, 0.01), keeper=(P.keeper_line_x, 0.36))
    _, ky = keeper_policy(state)
    assert ky >= P.keeper_patrol[0]


# ---------------------------------------------------------------------------
# MOVE


def test_move_idles_on_the_ball(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.3, 0.5))
    out = env.run_skill(state, SkillId.MOVE, 0.0, rng)
    assert out.steps == 1
    assert out.state.striker == state.striker
    assert not out.terminated
    assert abs(out.base_reward - (env.rewards.r_move + env.rewards.r_score_lose)) < 1e-12


def test_move_walks_toward_a_loose_ball(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.2, 0.5), ball=(0.4, 0.5), possession="loose")
    out = env.run_skill(state, SkillId.MOVE, 0.0, rng)
    assert abs(out.state.striker[0] - (0.2 + P.striker_speed)) < 1e-12
    assert out.state.striker[1] == 0.5


def test_move_score_reward_depends_on_scenario(rng):
    win = MiniOffenseEnv(scenario="winning")
    state = plain_state((0.3, 0.5), score=(1, 0))
    out = win.run_skill(state, SkillId.MOVE, 0.0, rng)
    assert abs(out.base_reward - (win.rewards.r_move + win.rewards.r_score_win)) < 1e-12


# ---------------------------------------------------------------------------
# DRIBBLE


def test_zero_power_dribble_earns_no_dribble_reward(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.3, 0.5))
    out = env.run_skill(state, SkillId.DRIBBLE, 0.0, rng)
    assert out.steps == 1
    assert out.state.ball == state.ball
    assert abs(out.base_reward - env.rewards.r_score_lose) < 1e-12


def test_dribble_step_count_follows_power(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.2, 0.2))
    out30 = env.run_skill(state, SkillId.DRIBBLE, 30.0, rng)
    assert out30.steps == 2
    out150 = env.run_skill(state, SkillId.DRIBBLE, 150.0, rng)
    assert out150.steps == 6


def test_dribble_moves_ball_toward_goal(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.2, 0.2))
    out = env.run_skill(state, SkillId.DRIBBLE, 90.0, rng)
    moved = math.hypot(out.state.ball[0] - 0.2, out.state.ball[1] - 0.2)
    assert abs(moved - P.max_kick * 90.0 / P.rap_max) < 1e-9
    assert out.state.ball[0] > 0.2
    assert out.state.possession == "striker"
    assert abs(out.base_reward
               - (env.rewards.r_dribble_far + out.steps * env.rewards.r_score_lose)) < 1e-12


def test_dribble_near_box_is_penalized(rng):
    # pressing disabled so the kick resolves; the reward gate is the subject
    env = MiniOffenseEnv(scenario="losing",
                         params=dataclasses.replace(P, press_scale=0.0))
    state = plain_state((0.80, 0.62))  # 0.233 from goal center: inside the box region
    out = env.run_skill(state, SkillId.DRIBBLE, 30.0, rng)
    assert not out.terminated
    assert abs(out.base_reward
               - (env.rewards.r_dribble_near + out.steps * env.rewards.r_score_lose)) < 1e-12


def test_hard_kicks_near_keeper_draw_pressing():
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.70, 0.5))
    rates = {}
    for rap in (10.0, 100.0):
        rng = np.random.default_rng(77)
        outs = [env.run_skill(state, SkillId.DRIBBLE, rap, rng) for _ in range(400)]
        rates[rap] = sum(1 for o in outs if o.outcome == "capture") / 400
    assert rates[10.0] < 0.05
    assert rates[100.0] > 5 * rates[10.0]


def test_dribble_power_is_clamped_to_range(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.2, 0.2))
    out = env.run_skill(state, SkillId.DRIBBLE, 900.0, rng)
    assert out.steps == 6  # same as power 150


def test_dribble_budget_truncation_drops_kick_reward(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.2, 0.2))
    out = env.run_skill(state, SkillId.DRIBBLE, 150.0, rng, max_steps=3)
    assert out.steps == 3
    assert not out.terminated
    assert out.state.possession == "loose"  # ball still in flight
    assert abs(out.base_reward - 3 * env.rewards.r_score_lose) < 1e-12


def test_dribble_into_keeper_reach_is_captured(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.8, 0.5), keeper=(P.keeper_line_x, 0.5))
    out = env.run_skill(state, SkillId.DRIBBLE, 150.0, rng)
    assert out.terminated
    assert out.outcome == "capture"
    assert out.state.possession == "keeper"
    assert out.steps < 6  # interception happens mid-flight


def test_dribble_displacement_monotone_in_power():
    # mean per-kick ball advance grows with power (2 SE separation)
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.2, 0.5))
    grid = (0.0, 30.0, 60.0, 90.0, 120.0, 150.0)
    means, ses = [], []
    rng = np.random.default_rng(77)
    n = 10_000
    for rap in grid:
        gains = np.empty(n)
        for i in range(n):
            out = env.run_skill(state, SkillId.DRIBBLE, rap, rng)
            gains[i] = out.state.ball[0] - state.ball[0]
        means.append(float(gains.mean()))
        ses.append(float(gains.std(ddof=1) / math.sqrt(n)))
    for i in range(len(grid) - 1):
        gap = means[i + 1] - means[i]
        assert gap > 2 * math.hypot(ses[i + 1], ses[i])


# ---------------------------------------------------------------------------
# SHOOT


def test_shot_terminates_with_goal_or_capture(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.7, 0.5))
    out = env.run_skill(state, SkillId.SHOOT, 0.0, rng)
    assert out.terminated
    assert out.outcome in ("goal", "capture")
    assert out.steps == P.shoot_steps


def test_point_blank_shot_past_keeper_mostly_scores():
    env = MiniOffenseEnv(scenario="losing")
    # ball beyond the keeper's line: block is zero, distance is tiny
    state = plain_state((0.95, 0.5), keeper=(P.keeper_line_x, 0.35))
    rng = np.random.default_rng(4)
    outcomes = [env.run_skill(state, SkillId.SHOOT, 0.0, rng).outcome for _ in range(300)]
    assert outcomes.count("goal") / 300 > 0.8


def test_long_shot_against_set_keeper_mostly_fails():
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.3, 0.5))
    rng = np.random.default_rng(4)
    outcomes = [env.run_skill(state, SkillId.SHOOT, 0.0, rng).outcome for _ in range(300)]
    assert outcomes.count("capture") / 300 > 0.95


def test_shot_walks_to_a_loose_ball_first(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.2, 0.5), ball=(0.3, 0.5), possession="loose")
    out = env.run_skill(state, SkillId.SHOOT, 0.0, rng)
    # 4 walking steps to cover 0.1, then the shot itself
    assert out.steps == 4 + P.shoot_steps
    assert out.terminated


def test_shot_with_tight_budget_burns_time_without_shooting(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.7, 0.5))
    out = env.run_skill(state, SkillId.SHOOT, 0.0, rng, max_steps=1)
    assert out.steps == 1
    assert not out.terminated
    assert abs(out.base_reward - env.rewards.r_score_lose) < 1e-12


def test_shot_reward_gates_on_box_distance(rng):
    env = MiniOffenseEnv(scenario="losing")
    near = plain_state((0.85, 0.45), keeper=(P.keeper_line_x, 0.65))
    out = env.run_skill(near, SkillId.SHOOT, 0.0, np.random.default_rng(1))
    shaped = out.base_reward - P.shoot_steps * env.rewards.r_score_lose
    if out.outcome == "goal":
        shaped -= env.rewards.goal_reward
    assert abs(shaped - env.rewards.r_shoot_near) < 1e-9
    far = plain_state((0.3, 0.5))
    out = env.run_skill(far, SkillId.SHOOT, 0.0, np.random.default_rng(2))
    shaped = out.base_reward - P.shoot_steps * env.rewards.r_score_lose
    if out.outcome == "goal":
        shaped -= env.rewards.goal_reward
    assert abs(shaped - env.rewards.r_shoot_far) < 1e-9


def test_ball_skills_without_possession_fall_back_to_move(rng):
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.3, 0.5), ball=(0.5, 0.5), possession="keeper")
    assert env.fallback_moves == 0
    out = env.run_skill(state, SkillId.SHOOT, 0.0, rng)
    assert env.fallback_moves == 1
    assert out.steps == 1  # MOVE semantics
    env.run_skill(state, SkillId.DRIBBLE, 50.0, rng)
    assert env.fallback_moves == 2


def test_unknown_skill_id_is_rejected(rng):
    env = MiniOffenseEnv(scenario="losing")
    with pytest.raises(ValueError):
        env.run_skill(plain_state((0.3, 0.5)), 7, 0.0, rng)


def test_run_skill_is_deterministic_given_seed():
    env = MiniOffenseEnv(scenario="losing")
    state = plain_state((0.4, 0.4))
    a = env.run_skill(state, SkillId.DRIBBLE, 80.0, np.random.default_rng(9))
    b = env.run_skill(state, SkillId.DRIBBLE, 80.0, np.random.default_rng(9))
    assert a.state.ball == b.state.ball
    assert a.base_reward == b.base_reward


# ---------------------------------------------------------------------------
# metrics


def test_metrics_collect_partitions_outcomes(rng, losing_env, losing_policy):
    episode = EpisodeConfig(horizon=150, beta=1.0, gamma=1.0,
                            reward_mode=RewardMode.PROBABILISTIC_GOAL)
    trajs = evaluate(losing_env, losing_policy, episode, 60, rng)
    m = metrics_collect(trajs)
    assert m.episodes == 60
    assert m.goals + m.captures + m.out_of_time == 60
    assert abs(m.avg_reward - float(np.mean([t.final_w for t in trajs]))) < 1e-12
    assert abs(m.avg_episode_length - float(np.mean([t.total_steps for t in trajs]))) < 1e-12


def test_metrics_reject_foreign_outcome_labels(rng, losing_env, losing_policy):
    episode = EpisodeConfig(horizon=20, beta=1.0, gamma=1.0,
                            reward_mode=RewardMode.PROBABILISTIC_GOAL)
    traj = run_episode(losing_env, losing_policy, episode, rng)
    bad = dataclasses.replace(traj, outcome="own_goal")
    with pytest.raises(ValidationError):
        metrics_collect([bad])


def test_metrics_record_validates_partition():
    with pytest.raises(ValidationError):
        MetricsRecord(episodes=10, goals=5, captures=4, out_of_time=0,
                      avg_reward=0.0, avg_episode_length=1.0)


def test_metrics_need_at_least_one_trajectory():
    with pytest.raises(ValidationError):
        metrics_collect([])


# ---------------------------------------------------------------------------
# dribble-power field


def test_rap_mean_field_single_cell(losing_env, losing_policy):
    rows = rap_mean_field(losing_policy, losing_env, 1)
    assert len(rows) == 1
    x, y, mean, clamped = rows[0]
    assert (x, y) == (0.5, 0.5)
    assert 0.0 <= clamped <= 150.0
    assert abs(mean - 75.0) < 1e-9  # fresh policy: neutral power everywhere


def test_rap_mean_field_rejects_bad_resolution(losing_env, losing_policy):
    with pytest.raises(ValidationError):
        rap_mean_field(losing_policy, losing_env, 0)


def test_rap_mean_field_grid_size(losing_env, losing_policy):
    rows = rap_mean_field(losing_policy, losing_env, 4)
    assert len(rows) == 16
    assert all(0.0 < r[0] < 1.0 and 0.0 < r[1] < 1.0 for r in rows)


def test_heatmap_region_means_split(losing_env, losing_policy):
    rows = rap_mean_field(losing_policy, losing_env, 6)
    near_half, near_goal = heatmap_region_means(rows)
    assert abs(near_half - 75.0) < 1e-9
    assert abs(near_goal - 75.0) < 1e-9
    with pytest.raises(ValidationError):
        heatmap_region_means(rap_mean_field(losing_policy, losing_env, 1))


def test_heatmap_reflects_learned_position_dependence(losing_env):
    policy = GibbsGaussianPolicy.for_environment(losing_env)
    omega = policy.omega.copy()
    omega[int(SkillId.DRIBBLE), 1] = -60.0  # power drops with striker x
    policy = policy.replace(omega=omega)
    rows = rap_mean_field(policy, losing_env, 6)
    near_half, near_goal = heatmap_region_means(rows)
    assert near_half > near_goal
