"""Episode machinery for threshold-success objectives over semi-Markov skills.

The augmented state carries the raw environment state together with ``w``, the
running sum of base rewards, and ``t``, the elapsed environment timesteps.
Under the probabilistic-goal reward mode the only nonzero learning reward is a
terminal indicator of whether ``w`` crossed the configured threshold ``beta``
within the horizon; maximizing its expectation is exactly maximizing the
probability of crossing the threshold.  The expected-return mode records the
base shaped rewards instead, leaving the rollout machinery identical.

Environments plug in via a small duck-typed protocol::

    env.n_skills                -> int
    env.reset(rng)              -> state (anything with a ``features`` ndarray)
    env.run_skill(state, skill, rap, rng, max_steps) -> SkillOutcome

A skill runs to completion inside ``run_skill`` (semi-Markov execution), so a
new (skill, risk parameter) pair is drawn exactly once per returned outcome.
Early termination is treated as a transition to an absorbing state that yields
zero base reward until the horizon; since those steps cannot change ``w``, the
rollout stops early and applies the terminal indicator as if at ``t = T``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum
from typing import Any, Sequence

import numpy as np


class ValidationError(ValueError):
    """An input violated a documented contract."""


class ConfigurationError(ValidationError):
    """A configuration value or capability requirement was not met."""


class EnvironmentStepError(RuntimeError):
    """Environment failure during a rollout, annotated with the step index."""

    def __init__(self, step: int, message: str):
        super().__init__(f"environment failure at timestep {step}: {message}")
        self.step = step


class RewardMode(Enum):
    """Which reward stream the recorded trajectory exposes for learning."""

    PROBABILISTIC_GOAL = "pg"
    EXPECTED_RETURN = "er"


@dataclass(frozen=True)
class EnvState:
    """Plain feature-vector environment state.

    Environments with richer internal state may duck-type this: anything
    carrying a fixed-dimension, finite ``features`` ndarray works.
    """

    features: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 1:
            raise ValidationError(f"state features must be 1-D, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValidationError("state features must be finite")
        object.__setattr__(self, "features", feats)


@dataclass(frozen=True)
class AugmentedState:
    """Environment state joined with accumulated base reward and elapsed time."""

    env: Any
    w: float
    t: int

    def __post_init__(self):
        if not np.isfinite(self.w):
            raise ValidationError(f"accumulated reward must be finite, got {self.w}")
        if self.t < 0:
            raise ValidationError(f"timestep must be nonnegative, got {self.t}")


@dataclass(frozen=True)
class EpisodeConfig:
    """Horizon, success threshold, discount, and reward mode for rollouts."""

    horizon: int
    beta: float
    gamma: float = 1.0
    reward_mode: RewardMode = RewardMode.PROBABILISTIC_GOAL

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {self.horizon}")
        if not np.isfinite(self.beta):
            raise ValidationError("beta must be finite")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not isinstance(self.reward_mode, RewardMode):
            raise ValidationError(f"reward_mode must be a RewardMode, got {self.reward_mode!r}")


@dataclass(frozen=True)
class SkillChoice:
    """One decision: skill index plus the risk-parameter draw.

    ``rap`` is the raw distribution draw used by likelihood-ratio gradients;
    ``rap_executed`` is the value actually handed to the environment (clamped
    to the executable range).  ``cache`` may carry featurization intermediates
    so gradient passes need not recompute them; it is never serialized.
    """

    skill: int
    rap: float
    rap_executed: float
    cache: Any = None


@dataclass(frozen=True)
class SkillOutcome:
    """Result of running one skill to completion inside the environment."""

    steps: int
    base_reward: float
    state: Any
    terminated: bool = False
    outcome: str | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError(f"a skill execution must consume >= 1 step, got {self.steps}")
        if not np.isfinite(self.base_reward):
            raise ValidationError(f"base reward must be finite, got {self.base_reward}")


@dataclass(frozen=True)
class TrajectoryStep:
    """One decision record: state, choice, aggregated rewards, next state."""

    z: AugmentedState
    skill: int
    rap: float
    rap_executed: float
    steps: int
    base_reward: float
    reward: float
    augmented_reward: float
    z_next: AugmentedState
    cache: Any = None


@dataclass(frozen=True)
class RiskAwareTrajectory:
    """Decision-level record of one episode.

    ``steps[i].z_next`` is ``steps[i+1].z`` (chaining), each record consumes at
    least one environment timestep, and ``outcome`` is exactly one of the
    environment's terminal outcomes or ``"timeout"``.  ``terminal_flag`` marks
    episodes that ran all the way to the horizon.
    """

    steps: tuple[TrajectoryStep, ...]
    horizon: int
    beta: float
    mode: RewardMode
    outcome: str
    terminal_flag: bool

    @property
    def final_w(self) -> float:
        return self.steps[-1].z_next.w

    @property
    def total_steps(self) -> int:
        return self.steps[-1].z_next.t

    @property
    def indicator_return(self) -> float:
        """Sum of the terminal-indicator rewards (zero everywhere but the end)."""
        total = 0.0
        for rec in self.steps:
            total += rec.augmented_reward
        return total

    def discounted_return(self, gamma: float) -> float:
        """Sum of mode rewards discounted by the timestep each record started at."""
        total = 0.0
        for rec in self.steps:
            total += (gamma ** rec.z.t) * rec.reward
        return total

    def validate_chain(self, atol: float = 1e-9) -> None:
        """Raise if records do not chain or ``w`` does not replay from rewards."""
        w = self.steps[0].z.w
        t = self.steps[0].z.t
        for i, rec in enumerate(self.steps):
            if rec.z.t != t or abs(rec.z.w - w) > atol:
                raise ValidationError(f"record {i} does not chain from its predecessor")
            w += rec.base_reward
            t += rec.steps
            if rec.z_next.t != t or abs(rec.z_next.w - w) > atol:
                raise ValidationError(f"record {i} next-state accumulation is inconsistent")
        if t > self.horizon:
            raise ValidationError(f"trajectory overran the horizon: {t} > {self.horizon}")


def augment_transition(z: AugmentedState, skill_reward: float, next_env: Any,
                       steps: int = 1) -> AugmentedState:
    """Advance the augmented state: add the skill's base reward into ``w``.

    ``w`` accumulates undiscounted; discounting is applied by estimators, never
    by the state itself.
    """
    if not np.isfinite(skill_reward):
        raise ValidationError(f"skill reward must be finite, got {skill_reward}")
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}")
    return AugmentedState(env=next_env, w=z.w + float(skill_reward), t=z.t + int(steps))


def augmented_reward(t: int, horizon: int, w: float, beta: float) -> float:
    """Terminal indicator reward: 1 at ``t == horizon`` iff ``w >= beta``, else 0.

    Crossing exactly (``w == beta``) counts as success.  Querying beyond the
    horizon is a contract violation.
    """
    if t < 0 or t > horizon:
        raise ValidationError(f"timestep {t} outside [0, {horizon}]")
    if t < horizon:
        return 0.0
    return 1.0 if w >= beta else 0.0


def run_episode(env, policy, cfg: EpisodeConfig, rng: np.random.Generator,
                greedy: bool = False) -> RiskAwareTrajectory:
    """Roll out one episode, re-selecting a skill only when the previous one ends.

    Records the raw risk-parameter draw (for gradients) alongside the executed
    value.  The learning ``reward`` column holds the terminal indicator in
    probabilistic-goal mode and the base shaped reward in expected-return mode.
    """
    state = env.reset(rng)
    z = AugmentedState(env=state, w=0.0, t=0)
    raw: list[tuple[AugmentedState, SkillChoice, SkillOutcome, AugmentedState]] = []
    outcome = None
    while z.t < cfg.horizon:
        choice = policy.act(z, rng, greedy=greedy)
        budget = cfg.horizon - z.t
        try:
            out = env.run_skill(z.env, choice.skill, choice.rap_executed, rng,
                                max_steps=budget)
        except ValidationError:
            raise
        except Exception as exc:  # noqa: BLE001 - annotate with the step index
            raise EnvironmentStepError(z.t, str(exc)) from exc
        if out.steps > budget:
            raise EnvironmentStepError(z.t, f"skill consumed {out.steps} steps, budget {budget}")
        z_next = augment_transition(z, out.base_reward, out.state, steps=out.steps)
        raw.append((z, choice, out, z_next))
        z = z_next
        if out.terminated:
            outcome = out.outcome or "terminated"
            break
    terminal_flag = outcome is None
    if terminal_flag:
        outcome = "timeout"
    # Early termination is an absorbing state with zero base reward, so the
    # horizon indicator can be evaluated immediately from the final w.
    final_r = augmented_reward(cfg.horizon, cfg.horizon, z.w, cfg.beta)
    pg = cfg.reward_mode is RewardMode.PROBABILISTIC_GOAL
    records = []
    last = len(raw) - 1
    for i, (z0, choice, out, z1) in enumerate(raw):
        aug = final_r if i == last else 0.0
        records.append(TrajectoryStep(
            z=z0, skill=choice.skill, rap=choice.rap, rap_executed=choice.rap_executed,
            steps=out.steps, base_reward=out.base_reward,
            reward=aug if pg else out.base_reward,
            augmented_reward=aug, z_next=z1, cache=choice.cache))
    return RiskAwareTrajectory(steps=tuple(records), horizon=cfg.horizon, beta=cfg.beta,
                               mode=cfg.reward_mode, outcome=outcome,
                               terminal_flag=terminal_flag)


def success_probability_estimate(trajectories: Sequence[RiskAwareTrajectory],
                                 beta: float | None = None) -> float:
    """Fraction of trajectories whose final ``w`` reached the threshold.

    Computed as the mean of the terminal indicators, so it agrees bitwise with
    the mean episode return under the probabilistic-goal reward stream.
    """
    if len(trajectories) == 0:
        raise ValidationError("need at least one trajectory")
    if beta is None:
        beta = trajectories[0].beta
    horizon = trajectories[0].horizon
    for traj in trajectories:
        if traj.beta != beta or traj.horizon != horizon:
            raise ValidationError("trajectories mix thresholds or horizons")
    flags = np.array([1.0 if t.final_w >= beta else 0.0 for t in trajectories])
    return float(np.mean(flags))


TRAJECTORY_SCHEMA_VERSION = 1
TRAJECTORY_COLUMNS = ("t", "skill", "rap", "base_reward", "augmented_reward", "w")


def format_trajectory(traj: RiskAwareTrajectory) -> str:
    """Serialize a trajectory, one decision record per line.

    ``t`` is the timestep the record's skill started at, ``rap`` the raw
    (pre-clamp) risk-parameter draw, and ``w`` the accumulated base reward
    after the record, so the column replays as a cumulative sum of
    ``base_reward``.
    """
    buf = io.StringIO()
    buf.write(f"# schema_version: {TRAJECTORY_SCHEMA_VERSION}\n")
    buf.write(f"# mode: {traj.mode.value}\n")
    buf.write("\t".join(TRAJECTORY_COLUMNS) + "\n")
    for rec in traj.steps:
        buf.write("\t".join([
            repr(rec.z.t), repr(rec.skill), repr(rec.rap),
            repr(rec.base_reward), repr(rec.augmented_reward), repr(rec.z_next.w),
        ]) + "\n")
    return buf.getvalue()


def dump_trajectory(traj: RiskAwareTrajectory, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_trajectory(traj))


def parse_trajectory(text: str) -> list[dict]:
    """Parse the line format back into per-record dicts (for replay checks)."""
    rows = []
    header = None
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = tuple(line.split("\t"))
            if header != TRAJECTORY_COLUMNS:
                raise ValidationError(f"unexpected trajectory columns: {header}")
            continue
        parts = line.split("\t")
        if len(parts) != len(TRAJECTORY_COLUMNS):
            raise ValidationError(f"malformed trajectory line: {line!r}")
        rows.append({
            "t": int(parts[0]), "skill": int(parts[1]), "rap": float(parts[2]),
            "base_reward": float(parts[3]), "augmented_reward": float(parts[4]),
            "w": float(parts[5]),
        })
    if header is None:
        raise ValidationError("empty trajectory document")
    return rows
