"""INI-file configuration: parsing, validation, canonical hashing, builders.

A run config has five optional sections; every key has a default, so the
empty file is a valid config.  Unknown sections or keys are rejected rather
than ignored, and each bad value is reported with its section and key.

::

    [episode]
    horizon = 150
    beta = 1.0
    gamma = 1.0

    [policy]
    fourier_order = 3
    coupled = false
    rap_variance = 25.0
    rap_clamp_low = 0.0
    rap_clamp_high = 150.0
    rap_mean_init = 75.0

    [learner]
    episodes = 20000
    batch_size = 1
    a0 = 3.0
    p_a = 0.8
    b0 = 25.0
    p_b = 0.55
    advantage = baseline
    critic_step = 0.05
    early_stop = true

    [env]
    scenario = losing

    [rewards]
    r_move = 0.008
    ...

The canonical text (sorted sections and keys, defaults filled in) is what the
config hash digests, so two files that mean the same run hash the same.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, fields

from .core import ConfigurationError, EpisodeConfig, RewardMode
from .learner import StepSchedule, TrainConfig
from .offense import MiniOffenseEnv, OffenseParams, RewardTable
from .policy import GibbsGaussianPolicy


@dataclass(frozen=True)
class EpisodeSection:
    horizon: int = 150
    beta: float = 1.0
    gamma: float = 1.0


@dataclass(frozen=True)
class PolicySection:
    fourier_order: int = 3
    coupled: bool = False
    rap_variance: float = 25.0
    rap_clamp_low: float = 0.0
    rap_clamp_high: float = 150.0
    rap_mean_init: float = 75.0


@dataclass(frozen=True)
class LearnerSection:
    episodes: int = 20_000
    batch_size: int = 1
    a0: float = 3.0
    p_a: float = 0.8
    b0: float = 25.0
    p_b: float = 0.55
    advantage: str = "baseline"
    critic_step: float = 0.05
    early_stop: bool = True


@dataclass(frozen=True)
class EnvSection:
    scenario: str = "losing"


@dataclass(frozen=True)
class RewardsSection:
    r_move: float = 0.008
    r_dribble_far: float = 0.005
    r_dribble_near: float = -0.02
    r_shoot_near: float = 0.05
    r_shoot_far: float = -0.8
    goal_reward: float = 3.5
    r_score_win: float = 0.022
    r_score_lose: float = -0.004
    near_box_threshold: float = 0.25


@dataclass(frozen=True)
class RunConfig:
    episode: EpisodeSection
    policy: PolicySection
    learner: LearnerSection
    env: EnvSection
    rewards: RewardsSection


_SECTIONS = {
    "episode": EpisodeSection,
    "policy": PolicySection,
    "learner": LearnerSection,
    "env": EnvSection,
    "rewards": RewardsSection,
}


def _coerce(section: str, key: str, raw: str, target_type: type):
    try:
        if target_type is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigurationError(f"[{section}] {key}: {exc}") from None


def _parse_section(parser: configparser.ConfigParser, name: str, cls: type):
    known = {f.name: f.type for f in fields(cls)}
    type_map = {"int": int, "float": float, "bool": bool, "str": str}
    values = {}
    if parser.has_section(name):
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigurationError(f"[{name}] unknown key {key!r}")
            values[key] = _coerce(name, key, raw, type_map[known[key]])
    return cls(**values)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config syntax error: {exc}") from None
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigurationError(f"unknown section [{section}]")
    cfg = RunConfig(**{name: _parse_section(parser, name, cls)
                       for name, cls in _SECTIONS.items()})
    validate_config(cfg)
    return cfg


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def validate_config(cfg: RunConfig) -> None:
    """Reject out-of-range values with section-and-key error messages."""
    problems = []
    ep, pol, lrn, env, rew = cfg.episode, cfg.policy, cfg.learner, cfg.env, cfg.rewards
    if ep.horizon < 1:
        problems.append(f"[episode] horizon must be >= 1, got {ep.horizon}")
    if not ep.beta > 0:
        problems.append(f"[episode] beta must be positive, got {ep.beta}")
    if not 0 < ep.gamma <= 1:
        problems.append(f"[episode] gamma must lie in (0, 1], got {ep.gamma}")
    if pol.fourier_order < 1:
        problems.append(f"[policy] fourier_order must be >= 1, got {pol.fourier_order}")
    if pol.rap_variance <= 0:
        problems.append(f"[policy] rap_variance must be positive, got {pol.rap_variance}")
    if not pol.rap_clamp_low < pol.rap_clamp_high:
        problems.append(
            f"[policy] rap_clamp_low must be below rap_clamp_high, "
            f"got ({pol.rap_clamp_low}, {pol.rap_clamp_high})")
    if lrn.episodes < 1:
        problems.append(f"[learner] episodes must be >= 1, got {lrn.episodes}")
    if lrn.batch_size < 1:
        problems.append(f"[learner] batch_size must be >= 1, got {lrn.batch_size}")
    if lrn.advantage not in ("td", "baseline", "none"):
        problems.append(
            f"[learner] advantage must be td, baseline, or none, got {lrn.advantage!r}")
    if lrn.critic_step <= 0:
        problems.append(f"[learner] critic_step must be positive, got {lrn.critic_step}")
    for key, value in (("a0", lrn.a0), ("b0", lrn.b0)):
        if value <= 0:
            problems.append(f"[learner] {key} must be positive, got {value}")
    for key, value in (("p_a", lrn.p_a), ("p_b", lrn.p_b)):
        if not 0.5 < value <= 1.0:
            problems.append(f"[learner] {key} must lie in (0.5, 1], got {value}")
    if lrn.b0 <= lrn.a0:
        problems.append(
            f"[learner] fast base step b0 must exceed slow base step a0, "
            f"got b0={lrn.b0}, a0={lrn.a0}")
    if lrn.p_a < lrn.p_b:
        problems.append(
            f"[learner] slow decay p_a must be >= fast decay p_b, "
            f"got p_a={lrn.p_a}, p_b={lrn.p_b}")
    if env.scenario not in ("winning", "losing"):
        problems.append(f"[env] scenario must be winning or losing, got {env.scenario!r}")
    for key in ("r_move", "r_dribble_far", "r_shoot_near", "goal_reward", "r_score_win"):
        if getattr(rew, key) <= 0:
            problems.append(f"[rewards] {key} must be positive, got {getattr(rew, key)}")
    for key in ("r_dribble_near", "r_shoot_far", "r_score_lose"):
        if getattr(rew, key) >= 0:
            problems.append(f"[rewards] {key} must be negative, got {getattr(rew, key)}")
    if not 0 < rew.near_box_threshold < 1:
        problems.append(
            f"[rewards] near_box_threshold must lie in (0, 1), got {rew.near_box_threshold}")
    if problems:
        raise ConfigurationError("; ".join(problems))


def canonical_text(cfg: RunConfig) -> str:
    """Defaults-filled INI text with sorted sections and keys."""
    out = io.StringIO()
    payload = {name: getattr(cfg, name) for name in _SECTIONS}
    for name in sorted(payload):
        out.write(f"[{name}]\n")
        section = payload[name]
        for f in sorted(fields(section), key=lambda f: f.name):
            value = getattr(section, f.name)
            if isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            out.write(f"{f.name} = {rendered}\n")
        out.write("\n")
    return out.getvalue()


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_text(cfg).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# builders


def build_env(cfg: RunConfig) -> MiniOffenseEnv:
    rewards = RewardTable(**{f.name: getattr(cfg.rewards, f.name)
                             for f in fields(RewardsSection)})
    return MiniOffenseEnv(scenario=cfg.env.scenario, params=OffenseParams(),
                          rewards=rewards)


def build_policy(cfg: RunConfig, env: MiniOffenseEnv) -> GibbsGaussianPolicy:
    return GibbsGaussianPolicy.for_environment(
        env,
        fourier_order=cfg.policy.fourier_order,
        coupled=cfg.policy.coupled,
        rap_variance=cfg.policy.rap_variance,
        rap_clamp=(cfg.policy.rap_clamp_low, cfg.policy.rap_clamp_high),
        rap_mean_init=cfg.policy.rap_mean_init,
    )


def build_episode(cfg: RunConfig, mode: RewardMode) -> EpisodeConfig:
    gamma = cfg.episode.gamma
    if mode is RewardMode.EXPECTED_RETURN and gamma >= 1.0:
        gamma = 0.99
    return EpisodeConfig(horizon=cfg.episode.horizon, beta=cfg.episode.beta,
                         gamma=gamma, reward_mode=mode)


def build_train_config(cfg: RunConfig, mode: RewardMode, seed: int,
                       episodes: int | None = None) -> TrainConfig:
    schedule = StepSchedule(a0=cfg.learner.a0, p_a=cfg.learner.p_a,
                            b0=cfg.learner.b0, p_b=cfg.learner.p_b)
    return TrainConfig(
        episode=build_episode(cfg, mode),
        episodes=cfg.learner.episodes if episodes is None else episodes,
        batch_size=cfg.learner.batch_size,
        schedule=schedule,
        advantage=cfg.learner.advantage,
        critic_step=cfg.learner.critic_step,
        seed=seed,
        early_stop=cfg.learner.early_stop,
    )
