"""Desk-scale soccer offense: one striker against a scripted keeper.

The field is the unit square with the goal mouth centered at (1.0, 0.5).  The
striker owns three skills:

* ``MOVE``    - one step toward the ball, or idle when already on it.
* ``SHOOT``   - kick at the goal corner farther from the keeper; the shot
  succeeds with a probability that decays with distance and with how squarely
  the keeper covers the shot line (see :func:`goal_probability`).  A save ends
  the episode as a capture.
* ``DRIBBLE`` - kick the ball toward the goal with the skill's risk parameter
  as kick power.  Power 0..150 maps linearly to kick length, and a kick takes
  ``ceil(power / 30) + 1`` timesteps, so harder kicks cover more ground per
  timestep but push the ball ahead of the striker, where the keeper may
  intercept it at any interpolated flight position.  Near the keeper a loose
  ball also draws pressing: each flight step risks interception with a
  probability that grows with kick power and with keeper proximity, so soft
  touches are the only safe way to work the ball close to the box.

Scenario context is the current score: when winning, every elapsed timestep
earns a small positive score reward; when losing or drawing, a small negative
one.  Shaping rewards gate on the box region (within ``near_box_threshold`` of
the goal center): dribbling far from goal and shooting near it earn positive
rewards, the two opposite pairings negative ones.  A zero-length dribble kick
earns no dribble reward; it only consumes time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Sequence

import numpy as np

from .core import (AugmentedState, RiskAwareTrajectory, SkillOutcome, ValidationError)


class SkillId(IntEnum):
    MOVE = 0
    SHOOT = 1
    DRIBBLE = 2


@dataclass(frozen=True)
class RewardTable:
    """Shaping rewards.  Sign constraints are validated at construction."""

    r_move: float = 0.008
    r_dribble_far: float = 0.005
    r_dribble_near: float = -0.02
    r_shoot_near: float = 0.05
    r_shoot_far: float = -0.8
    goal_reward: float = 3.5
    r_score_win: float = 0.022
    r_score_lose: float = -0.004
    near_box_threshold: float = 0.25

    def __post_init__(self):
        positive = {"r_move": self.r_move, "r_dribble_far": self.r_dribble_far,
                    "r_shoot_near": self.r_shoot_near, "goal_reward": self.goal_reward,
                    "r_score_win": self.r_score_win}
        negative = {"r_dribble_near": self.r_dribble_near, "r_shoot_far": self.r_shoot_far,
                    "r_score_lose": self.r_score_lose}
        for name, value in positive.items():
            if value <= 0:
                raise ValidationError(f"{name} must be positive, got {value}")
        for name, value in negative.items():
            if value >= 0:
                raise ValidationError(f"{name} must be negative, got {value}")
        if not 0 < self.near_box_threshold < 1:
            raise ValidationError(
                f"near_box_threshold must lie in (0, 1), got {self.near_box_threshold}")


@dataclass(frozen=True)
class OffenseParams:
    """Geometry and dynamics constants (field units; the pitch is [0,1]^2)."""

    striker_speed: float = 0.025
    keeper_speed_factor: float = 0.6
    keeper_reach: float = 0.05
    keeper_line_x: float = 0.86
    keeper_patrol: tuple[float, float] = (0.35, 0.65)
    goal_center: tuple[float, float] = (1.0, 0.5)
    goal_half_width: float = 0.1
    max_kick: float = 0.15
    kick_step_divisor: float = 30.0
    rap_max: float = 150.0
    dribble_noise: float = 0.12
    press_radius: float = 0.45
    press_scale: float = 0.9
    shoot_steps: int = 2
    corner_inset: float = 0.08
    block_width: float = 0.08
    goal_p_base: float = 5.8
    goal_p_dist: float = 16.0
    goal_p_block: float = 2.4
    possess_radius: float = 0.02
    start_x: float = 0.08
    start_jitter: float = 0.03

    @property
    def keeper_speed(self) -> float:
        return self.keeper_speed_factor * self.striker_speed


@dataclass(frozen=True)
class FieldState:
    """Positions, score, and possession.  ``features`` is the policy's view."""

    striker: tuple[float, float]
    ball: tuple[float, float]
    keeper: tuple[float, float]
    score: tuple[int, int]
    possession: str = "striker"

    @property
    def features(self) -> np.ndarray:
        diff = float(min(max(self.score[0] - self.score[1], -1), 1))
        return np.array([self.striker[0], self.striker[1],
                         self.ball[0], self.ball[1], self.keeper[1], diff])


def scenario_init(kind: str, rng: np.random.Generator,
                  params: OffenseParams | None = None) -> FieldState:
    """Kickoff state: striker near the halfway line with jitter, ball at their
    feet, keeper centered on the goal line.  ``winning`` starts 1-0, ``losing``
    0-1."""
    if kind not in ("winning", "losing"):
        raise ValidationError(f"scenario must be 'winning' or 'losing', got {kind!r}")
    p = params or OffenseParams()
    sx = p.start_x + rng.uniform(-p.start_jitter, p.start_jitter)
    sy = 0.5 + rng.uniform(-p.start_jitter, p.start_jitter)
    striker = (min(max(sx, 0.01), 0.99), min(max(sy, 0.01), 0.99))
    keeper = (p.keeper_line_x, 0.5)
    score = (1, 0) if kind == "winning" else (0, 1)
    return FieldState(striker=striker, ball=striker, keeper=keeper, score=score)


def goal_probability(dist: float, block: float, params: OffenseParams | None = None) -> float:
    """Chance a shot scores: sigmoid(base - c_dist * dist - c_block * block).

    ``dist`` is the kick position's distance to the goal center in field units;
    ``block`` in [0, 1] measures how squarely the keeper sits on the shot line
    (1 = dead center, 0 = nowhere near).  Long shots against a set keeper are
    nearly hopeless; close-range shots past a displaced keeper mostly score.
    """
    p = params or OffenseParams()
    score = p.goal_p_base - p.goal_p_dist * dist - p.goal_p_block * block
    return 1.0 / (1.0 + math.exp(-score))


def keeper_policy(state: FieldState, rng: np.random.Generator | None = None,
                  params: OffenseParams | None = None) -> tuple[float, float]:
    """Keeper target for one step: track the ball's y on the goal-line patrol
    segment at bounded speed.  Deterministic; ``rng`` is accepted for protocol
    uniformity but unused."""
    p = params or OffenseParams()
    kx, ky = state.keeper
    dy = state.ball[1] - ky
    dy = min(max(dy, -p.keeper_speed), p.keeper_speed)
    ny = min(max(ky + dy, p.keeper_patrol[0]), p.keeper_patrol[1])
    return (kx, ny)


class MiniOffenseEnv:
    """Rollout-protocol environment; also the policy's spatial adapter."""

    n_skills = 3

    def __init__(self, scenario: str = "losing", params: OffenseParams | None = None,
                 rewards: RewardTable | None = None):
        if scenario not in ("winning", "losing"):
            raise ValidationError(f"scenario must be 'winning' or 'losing', got {scenario!r}")
        self.scenario = scenario
        self.params = params or OffenseParams()
        self.rewards = rewards or RewardTable()
        self.fallback_moves = 0

    # -- adapter capabilities (consumed by the policy featurizers) ----------

    @property
    def feature_bounds(self):
        # striker_x, striker_y, ball_x, ball_y, keeper_y, score_diff
        return ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (-1.0, 1.0))

    @property
    def field_bounds(self):
        return ((0.0, 1.0), (0.0, 1.0))

    def agent_xy(self, state: FieldState) -> tuple[float, float]:
        return state.striker

    def goal_xy(self) -> tuple[float, float]:
        return self.params.goal_center

    # -- rollout protocol ----------------------------------------------------

    def reset(self, rng: np.random.Generator) -> FieldState:
        return scenario_init(self.scenario, rng, self.params)

    def run_skill(self, state: FieldState, skill: int, rap: float,
                  rng: np.random.Generator, max_steps: int | None = None) -> SkillOutcome:
        budget = 10 ** 9 if max_steps is None else int(max_steps)
        if budget < 1:
            raise ValidationError("skill execution needs a step budget of at least 1")
        skill = SkillId(skill)
        if skill in (SkillId.SHOOT, SkillId.DRIBBLE) and state.possession == "keeper":
            # Not initiable without the ball in play; fall back to MOVE.
            self.fallback_moves += 1
            skill = SkillId.MOVE
        if skill == SkillId.MOVE:
            return self._move(state, budget)
        if skill == SkillId.SHOOT:
            return self._shoot(state, rng, budget)
        return self._dribble(state, float(rap), rng, budget)

    # -- shared helpers ------------------------------------------------------

    def _score_reward(self, state: FieldState) -> float:
        own, opp = state.score
        return self.rewards.r_score_win if own > opp else self.rewards.r_score_lose

    def _captured(self, keeper: tuple[float, float], ball: tuple[float, float]) -> bool:
        return math.hypot(keeper[0] - ball[0], keeper[1] - ball[1]) <= self.params.keeper_reach

    def _goal_dist(self, pos: tuple[float, float]) -> float:
        gx, gy = self.params.goal_center
        return math.hypot(pos[0] - gx, pos[1] - gy)

    @staticmethod
    def _clamp_point(x: float, y: float, x_hi: float = 0.99) -> tuple[float, float]:
        return (min(max(x, 0.01), x_hi), min(max(y, 0.01), 0.99))

    # -- skills ----------------------------------------------------------------

    def _move(self, state: FieldState, budget: int) -> SkillOutcome:
        p = self.params
        sx, sy = state.striker
        bx, by = state.ball
        gap = math.hypot(bx - sx, by - sy)
        if gap > p.possess_radius:
            step = min(p.striker_speed, gap)
            sx += (bx - sx) / gap * step
            sy += (by - sy) / gap * step
        keeper = keeper_policy(state, params=p)
        reward = self.rewards.r_move + self._score_reward(state)
        nxt = replace(state, striker=(sx, sy), keeper=keeper)
        if self._captured(keeper, nxt.ball):
            return SkillOutcome(steps=1, base_reward=reward,
                                state=replace(nxt, possession="keeper"),
                                terminated=True, outcome="capture")
        return SkillOutcome(steps=1, base_reward=reward, state=nxt)

    def _dribble(self, state: FieldState, rap: float, rng: np.random.Generator,
                 budget: int) -> SkillOutcome:
        p = self.params
        rap = min(max(rap, 0.0), p.rap_max)
        n_steps = int(math.ceil(rap / p.kick_step_divisor)) + 1
        length = p.max_kick * rap / p.rap_max
        score_r = self._score_reward(state)
        if length <= 0.0:
            # Power 0: no kick, no dribble reward, one timestep consumed.
            keeper = keeper_policy(state, params=p)
            nxt = replace(state, keeper=keeper)
            if self._captured(keeper, nxt.ball):
                return SkillOutcome(steps=1, base_reward=score_r,
                                    state=replace(nxt, possession="keeper"),
                                    terminated=True, outcome="capture")
            return SkillOutcome(steps=1, base_reward=score_r, state=nxt)
        bx, by = state.ball
        gx, gy = p.goal_center
        angle = math.atan2(gy - by, gx - bx) + p.dribble_noise * rng.standard_normal()
        # Dribble kicks stop short of the goal line; only SHOOT can score.
        tx, ty = self._clamp_point(bx + length * math.cos(angle),
                                   by + length * math.sin(angle), x_hi=0.97)
        near_kick = self._goal_dist(state.ball) < self.rewards.near_box_threshold
        n_flight = max(1, n_steps // 2)  # ball outruns the striker, then rests
        sx0, sy0 = state.striker
        keeper = state.keeper
        reward = 0.0
        used = min(n_steps, budget)
        cur = state
        for i in range(1, used + 1):
            f_ball = min(i / n_flight, 1.0)
            ball = (bx + (tx - bx) * f_ball, by + (ty - by) * f_ball)
            f_striker = i / n_steps
            striker = (sx0 + (tx - sx0) * f_striker, sy0 + (ty - sy0) * f_striker)
            cur = replace(cur, striker=striker, ball=ball, possession="loose")
            keeper = keeper_policy(cur, params=p)
            cur = replace(cur, keeper=keeper)
            reward += score_r
            if self._captured(keeper, ball):
                return SkillOutcome(steps=i, base_reward=reward,
                                    state=replace(cur, possession="keeper"),
                                    terminated=True, outcome="capture")
            # Pressing: a loose ball near the keeper may be intercepted.
            # Quadratic in kick power: soft touches slip through, hard
            # kicks near the box are close to suicidal.
            gap = math.hypot(keeper[0] - ball[0], keeper[1] - ball[1])
            press_p = (p.press_scale * (rap / p.rap_max) ** 2
                       * max(0.0, 1.0 - gap / p.press_radius) ** 2)
            if press_p > 0.0 and rng.random() < press_p:
                return SkillOutcome(steps=i, base_reward=reward,
                                    state=replace(cur, possession="keeper"),
                                    terminated=True, outcome="capture")
        if used < n_steps:
            # Horizon truncated the kick mid-flight; no dribble reward.
            return SkillOutcome(steps=used, base_reward=reward, state=cur)
        reward += (self.rewards.r_dribble_near if near_kick else self.rewards.r_dribble_far)
        return SkillOutcome(steps=used, base_reward=reward,
                            state=replace(cur, possession="striker"))

    def _shoot(self, state: FieldState, rng: np.random.Generator,
               budget: int) -> SkillOutcome:
        p = self.params
        steps = 0
        reward = 0.0
        cur = state
        # Walk to the ball first if it is not at the striker's feet.
        while math.hypot(cur.ball[0] - cur.striker[0],
                         cur.ball[1] - cur.striker[1]) > p.possess_radius:
            if steps >= budget:
                return SkillOutcome(steps=steps, base_reward=reward, state=cur)
            sx, sy = cur.striker
            bx, by = cur.ball
            gap = math.hypot(bx - sx, by - sy)
            step = min(p.striker_speed, gap)
            cur = replace(cur, striker=(sx + (bx - sx) / gap * step,
                                        sy + (by - sy) / gap * step))
            cur = replace(cur, keeper=keeper_policy(cur, params=p))
            reward += self._score_reward(cur)
            steps += 1
            if self._captured(cur.keeper, cur.ball):
                return SkillOutcome(steps=steps, base_reward=reward,
                                    state=replace(cur, possession="keeper"),
                                    terminated=True, outcome="capture")
        if budget - steps < p.shoot_steps:
            # Not enough time left to get the shot away; burn the remainder.
            remaining = budget - steps
            for _ in range(remaining):
                cur = replace(cur, keeper=keeper_policy(cur, params=p))
                reward += self._score_reward(cur)
                steps += 1
            return SkillOutcome(steps=steps, base_reward=reward, state=cur)
        bx, by = cur.ball
        gx, gy = p.goal_center
        dist = self._goal_dist(cur.ball)
        near = dist < self.rewards.near_box_threshold
        reward += self.rewards.r_shoot_near if near else self.rewards.r_shoot_far
        # Aim at the corner the keeper covers least.
        corners = (gy - p.goal_half_width + p.corner_inset / 4,
                   gy + p.goal_half_width - p.corner_inset / 4)
        target_y = max(corners, key=lambda c: abs(c - cur.keeper[1]))
        if bx >= cur.keeper[0]:
            block = 0.0  # already past the keeper's line
        else:
            line_y = by + (target_y - by) * (cur.keeper[0] - bx) / (gx - bx)
            block = math.exp(-((cur.keeper[1] - line_y) / p.block_width) ** 2)
        p_goal = goal_probability(dist, block, p)
        scored = rng.random() < p_goal
        for _ in range(p.shoot_steps):
            cur = replace(cur, keeper=keeper_policy(cur, params=p))
            reward += self._score_reward(cur)
            steps += 1
        if scored:
            reward += self.rewards.goal_reward
            final = replace(cur, ball=(gx, target_y), possession="loose")
            return SkillOutcome(steps=steps, base_reward=reward, state=final,
                                terminated=True, outcome="goal")
        final = replace(cur, ball=cur.keeper, possession="keeper")
        return SkillOutcome(steps=steps, base_reward=reward, state=final,
                            terminated=True, outcome="capture")


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricsRecord:
    """Outcome counts and averages for a batch of evaluation episodes."""

    episodes: int
    goals: int
    captures: int
    out_of_time: int
    avg_reward: float
    avg_episode_length: float

    def __post_init__(self):
        if self.goals + self.captures + self.out_of_time != self.episodes:
            raise ValidationError("outcome counts must partition the batch")


def metrics_collect(trajectories: Sequence[RiskAwareTrajectory]) -> MetricsRecord:
    """Aggregate evaluation trajectories.  ``avg_reward`` is the mean final w,
    i.e. the mean undiscounted sum of base shaped rewards."""
    if len(trajectories) == 0:
        raise ValidationError("metrics need at least one trajectory")
    goals = sum(1 for t in trajectories if t.outcome == "goal")
    captures = sum(1 for t in trajectories if t.outcome == "capture")
    timeouts = sum(1 for t in trajectories if t.outcome == "timeout")
    if goals + captures + timeouts != len(trajectories):
        raise ValidationError("unexpected outcome labels in batch")
    return MetricsRecord(
        episodes=len(trajectories), goals=goals, captures=captures, out_of_time=timeouts,
        avg_reward=float(np.mean([t.final_w for t in trajectories])),
        avg_episode_length=float(np.mean([t.total_steps for t in trajectories])))


# ---------------------------------------------------------------------------
# dribble-power field (heatmap data)


def rap_mean_field(policy, env: MiniOffenseEnv, resolution: int,
                   w_value: float = 0.0) -> list[tuple[float, float, float, float]]:
    """Mean dribble power over a grid of striker positions at fixed w.

    Returns rows (x, y, mean, mean_clamped); the grid uses cell midpoints so
    resolution 1 probes the field center.
    """
    if resolution < 1:
        raise ValidationError(f"resolution must be >= 1, got {resolution}")
    lo, hi = policy.rap_clamp
    score = (1, 0) if env.scenario == "winning" else (0, 1)
    rows = []
    for i in range(resolution):
        x = (i + 0.5) / resolution
        for j in range(resolution):
            y = (j + 0.5) / resolution
            state = FieldState(striker=(x, y), ball=(x, y),
                               keeper=(env.params.keeper_line_x, 0.5), score=score)
            z = AugmentedState(env=state, w=w_value, t=0)
            mean = policy.rad_mean(z, int(SkillId.DRIBBLE))
            rows.append((x, y, mean, min(max(mean, lo), hi)))
    return rows


def heatmap_region_means(rows: Sequence[tuple[float, float, float, float]],
                         split_lo: float = 1.0 / 3.0,
                         split_hi: float = 2.0 / 3.0) -> tuple[float, float]:
    """Average clamped dribble power near the halfway line (x < split_lo) and
    near the goal (x > split_hi)."""
    near_half = [r[3] for r in rows if r[0] < split_lo]
    near_goal = [r[3] for r in rows if r[0] > split_hi]
    if not near_half or not near_goal:
        raise ValidationError("grid too coarse to form both regions")
    return float(np.mean(near_half)), float(np.mean(near_goal))
