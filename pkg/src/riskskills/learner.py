"""Two-timescale likelihood-ratio learning for two-tiered skill policies.

The reference estimator multiplies the summed per-decision score functions by
the whole trajectory's discounted return.  Variance-reduced variants subtract
a learned linear state value ("baseline") or use TD errors as advantages
("td", the training default).  Updates run on two step-size schedules: the
RAP-distribution parameters move on the faster one, skill selection on the
slower one, and both are projected back into compact boxes after every step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (EpisodeConfig, RewardMode, RiskAwareTrajectory, ValidationError,
                   run_episode, success_probability_estimate)

log = logging.getLogger(__name__)

CURVE_SCHEMA_VERSION = 1
CURVE_COLUMNS = ("iteration", "episodes", "mean_return", "success_prob",
                 "mean_episode_length", "projection_saturation")


# ---------------------------------------------------------------------------
# schedules and projection


@dataclass(frozen=True)
class StepSchedule:
    """Polynomially decaying step sizes a_k = a0/(1+k)^p_a, b_k = b0/(1+k)^p_b.

    Exponents must lie in (0.5, 1] so the sums diverge while the squared sums
    converge.  The fast schedule must dominate everywhere: requiring b0 > a0
    and p_a >= p_b makes b_k > a_k hold for every k, not just k = 0.
    """

    a0: float = 3.0
    p_a: float = 0.8
    b0: float = 25.0
    p_b: float = 0.55

    def __post_init__(self):
        for name, p in (("p_a", self.p_a), ("p_b", self.p_b)):
            if not 0.5 < p <= 1.0:
                raise ValidationError(f"{name} must lie in (0.5, 1], got {p}")
        if self.a0 <= 0 or self.b0 <= 0:
            raise ValidationError("step-size bases must be positive")
        if self.b0 <= self.a0:
            raise ValidationError(
                f"fast schedule must start above the slow one: b0={self.b0} <= a0={self.a0}")
        if self.p_a < self.p_b:
            raise ValidationError(
                f"fast schedule would decay below the slow one: p_a={self.p_a} < p_b={self.p_b}")

    def a(self, k: int) -> float:
        return self.a0 / (1.0 + k) ** self.p_a

    def b(self, k: int) -> float:
        return self.b0 / (1.0 + k) ** self.p_b

    def ordering_holds_upto(self, k_max: int, chunk: int = 1_000_000) -> bool:
        """Directly verify b_k > a_k for every k in [0, k_max]."""
        start = 0
        while start <= k_max:
            stop = min(start + chunk, k_max + 1)
            ks = 1.0 + np.arange(start, stop, dtype=float)
            if not np.all(self.b0 / ks ** self.p_b > self.a0 / ks ** self.p_a):
                return False
            start = stop
        return True


@dataclass(frozen=True)
class ProjectionBox:
    """Elementwise box used to keep iterates compact."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValidationError(
                f"projection box needs lower < upper, got [{self.lower}, {self.upper}]")

    @classmethod
    def symmetric(cls, halfwidth: float) -> "ProjectionBox":
        return cls(-abs(halfwidth), abs(halfwidth))

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def saturation_fraction(self, x: np.ndarray) -> float:
        at_edge = (x <= self.lower) | (x >= self.upper)
        return float(np.mean(at_edge))


# ---------------------------------------------------------------------------
# gradient estimation


@dataclass(frozen=True)
class GradientEstimate:
    grad_alpha: np.ndarray
    grad_omega: np.ndarray
    batch_size: int
    mean_return: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.grad_alpha)) and np.all(np.isfinite(self.grad_omega))):
            raise ValidationError("gradient estimate contains non-finite entries")
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")


def trajectory_gradient(traj: RiskAwareTrajectory, policy, gamma: float,
                        coefs: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, float]:
    """Score-function gradient contribution of one trajectory.

    With ``coefs`` omitted, every decision's score function is weighted by the
    whole trajectory's discounted return (the reference estimator).  Otherwise
    ``coefs[h]`` weights decision ``h`` (advantages).
    """
    disc = traj.discounted_return(gamma)
    ga = np.zeros_like(policy.alpha)
    go = np.zeros_like(policy.omega)
    if coefs is None and disc == 0.0:
        return ga, go, disc
    if coefs is not None and len(coefs) != len(traj.steps):
        raise ValidationError(
            f"got {len(coefs)} coefficients for {len(traj.steps)} decisions")
    for h, rec in enumerate(traj.steps):
        c = disc if coefs is None else float(coefs[h])
        if c == 0.0:
            continue
        if not 0 <= rec.skill < policy.alpha.shape[0]:
            raise ValidationError(
                f"trajectory uses skill {rec.skill}, policy has {policy.alpha.shape[0]}")
        ga += c * policy.log_grad_alpha(rec.z, rec.skill, cache=rec.cache)
        go += c * policy.log_grad_omega(rec.z, rec.skill, rec.rap, cache=rec.cache)
    return ga, go, disc


# ---------------------------------------------------------------------------
# critic


@dataclass
class LinearCritic:
    """Linear state-value approximator over the policy's tier-one features."""

    weights: np.ndarray
    step_size: float = 0.05

    @classmethod
    def zeros(cls, dim: int, step_size: float = 0.05) -> "LinearCritic":
        return cls(weights=np.zeros(dim), step_size=step_size)

    def value(self, phi: np.ndarray) -> float:
        return float(np.dot(phi, self.weights))


@dataclass(frozen=True)
class CriticUpdate:
    weights: np.ndarray
    td_errors: np.ndarray


def critic_update(traj: RiskAwareTrajectory, value_weights: np.ndarray,
                  features: Callable, gamma: float, step: float) -> CriticUpdate:
    """One online TD(0) pass along a trajectory.

    Multi-step skills discount the bootstrap by gamma**steps.  The value after
    the final record is zero (finite horizon / absorbing termination).  TD
    errors are returned for use as advantages; a non-finite one aborts with
    the offending record index.
    """
    theta = np.array(value_weights, dtype=float, copy=True)
    phis = [rec.cache[0] if rec.cache is not None else features(rec.z) for rec in traj.steps]
    tds = np.empty(len(traj.steps))
    last = len(traj.steps) - 1
    for i, rec in enumerate(traj.steps):
        v = float(np.dot(phis[i], theta))
        v_next = 0.0 if i == last else float(np.dot(phis[i + 1], theta))
        delta = rec.reward + (gamma ** rec.steps) * v_next - v
        if not np.isfinite(delta):
            raise ValidationError(f"non-finite TD error at record {i}: {delta}")
        theta += step * delta * phis[i]
        tds[i] = delta
    return CriticUpdate(weights=theta, td_errors=tds)


def estimate_gradients(batch: Sequence[RiskAwareTrajectory], policy, gamma: float,
                       baseline: LinearCritic | None = None,
                       advantage: str = "td") -> GradientEstimate:
    """Batch-mean score-function gradients for both parameter tiers.

    ``baseline=None`` is the plain full-return estimator.  With a critic,
    ``advantage`` picks TD errors ("td", updates the critic in place along the
    way) or return-minus-value coefficients ("baseline", leaves it untouched).
    """
    if len(batch) == 0:
        raise ValidationError("gradient estimation needs a nonempty batch")
    if advantage not in ("td", "baseline"):
        raise ValidationError(f"unknown advantage form {advantage!r}")
    ga = np.zeros_like(policy.alpha)
    go = np.zeros_like(policy.omega)
    returns = np.empty(len(batch))
    weights = None if baseline is None else baseline.weights
    for i, traj in enumerate(batch):
        coefs = None
        if baseline is not None:
            if advantage == "td":
                upd = critic_update(traj, weights, policy.features, gamma, baseline.step_size)
                coefs = upd.td_errors
                weights = upd.weights
            else:
                disc = traj.discounted_return(gamma)
                values = np.array([
                    baseline.value(rec.cache[0] if rec.cache is not None
                                   else policy.features(rec.z))
                    for rec in traj.steps])
                coefs = disc - values
        t_ga, t_go, disc = trajectory_gradient(traj, policy, gamma, coefs)
        ga += t_ga
        go += t_go
        returns[i] = disc
    if baseline is not None and advantage == "td":
        baseline.weights = weights
    n = len(batch)
    return GradientEstimate(grad_alpha=ga / n, grad_omega=go / n,
                            batch_size=n, mean_return=float(np.mean(returns)))


def two_timescale_step(alpha: np.ndarray, omega: np.ndarray, grads: GradientEstimate,
                       k: int, schedule: StepSchedule, alpha_box: ProjectionBox,
                       omega_box: ProjectionBox) -> tuple[np.ndarray, np.ndarray]:
    """Projected ascent: slow step on skill selection, fast step on RAP means."""
    if not (np.all(np.isfinite(grads.grad_alpha)) and np.all(np.isfinite(grads.grad_omega))):
        raise ValidationError(f"non-finite gradient at iteration {k}; step rejected")
    new_alpha = alpha_box.clamp(alpha + schedule.a(k) * grads.grad_alpha)
    new_omega = omega_box.clamp(omega + schedule.b(k) * grads.grad_omega)
    return new_alpha, new_omega


# ---------------------------------------------------------------------------
# training loop


@dataclass(frozen=True)
class TrainConfig:
    episode: EpisodeConfig
    episodes: int = 20_000
    batch_size: int = 1
    schedule: StepSchedule = StepSchedule()
    alpha_box: float = 50.0
    omega_box: float = 300.0
    advantage: str = "baseline"  # "td" | "baseline" | "none"
    critic_step: float = 0.05
    seed: int = 0
    early_stop: bool = True
    early_stop_window: int = 500
    early_stop_tol: float = 1e-3
    early_stop_min_fraction: float = 0.5
    early_stop_patience: int = 3

    def __post_init__(self):
        if self.episodes < 1 or self.batch_size < 1:
            raise ValidationError("episode budget and batch size must be >= 1")
        if self.advantage not in ("td", "baseline", "none"):
            raise ValidationError(f"unknown advantage form {self.advantage!r}")


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    episodes: int
    mean_return: float
    success_prob: float
    mean_episode_length: float
    projection_saturation: float


@dataclass
class TrainResult:
    policy: object
    critic: LinearCritic | None
    curve: list[CurvePoint]
    episodes_run: int
    warnings: list[str]


def train(env_factory: Callable, policy_init, cfg: TrainConfig) -> TrainResult:
    """Run the two-timescale loop for one trial.  Deterministic given cfg.seed.

    Emits one curve point per batch.  A divergence detector records a warning
    when projection keeps >90% of all parameters pinned to their boxes over
    consecutive batches; the run continues.  Early stopping (if enabled) only
    arms after ``early_stop_min_fraction`` of the budget, then stops once the
    moving-average return over the window is stable for ``patience`` checks.
    """
    rng = np.random.default_rng(cfg.seed)
    env = env_factory() if callable(env_factory) else env_factory
    policy = policy_init
    alpha_box = ProjectionBox.symmetric(cfg.alpha_box)
    omega_box = ProjectionBox.symmetric(cfg.omega_box)
    critic = None
    if cfg.advantage in ("td", "baseline"):
        critic = LinearCritic.zeros(policy.feature_dim, cfg.critic_step)
    curve: list[CurvePoint] = []
    warnings: list[str] = []
    episode_returns: list[float] = []
    k = 0
    done = 0
    sat_streak = 0
    stable_checks = 0
    arm_at = int(cfg.episodes * cfg.early_stop_min_fraction)
    while done < cfg.episodes:
        n = min(cfg.batch_size, cfg.episodes - done)
        batch = [run_episode(env, policy, cfg.episode, rng) for _ in range(n)]
        grads = estimate_gradients(batch, policy, cfg.episode.gamma,
                                   baseline=critic if cfg.advantage != "none" else None,
                                   advantage=cfg.advantage if cfg.advantage != "none" else "td")
        alpha, omega = two_timescale_step(policy.alpha, policy.omega, grads, k,
                                          cfg.schedule, alpha_box, omega_box)
        policy = policy.replace(alpha=alpha, omega=omega)
        done += n
        saturation = (alpha_box.saturation_fraction(alpha) * alpha.size
                      + omega_box.saturation_fraction(omega) * omega.size) / (alpha.size + omega.size)
        success = success_probability_estimate(batch)
        mean_len = float(np.mean([t.total_steps for t in batch]))
        curve.append(CurvePoint(iteration=k, episodes=done, mean_return=grads.mean_return,
                                success_prob=success, mean_episode_length=mean_len,
                                projection_saturation=saturation))
        episode_returns.extend(t.discounted_return(cfg.episode.gamma) for t in batch)
        if saturation > 0.9:
            sat_streak += 1
            if sat_streak == 10:
                msg = (f"projection saturated on {saturation:.0%} of parameters for "
                       f"{sat_streak} consecutive batches at iteration {k}")
                warnings.append(msg)
                log.warning(msg)
        else:
            sat_streak = 0
        if cfg.early_stop and done >= arm_at and len(episode_returns) >= 2 * cfg.early_stop_window:
            w = cfg.early_stop_window
            recent = float(np.mean(episode_returns[-w:]))
            previous = float(np.mean(episode_returns[-2 * w:-w]))
            if abs(recent - previous) < cfg.early_stop_tol:
                stable_checks += 1
                if stable_checks >= cfg.early_stop_patience:
                    log.info("early stop at %d episodes (moving average stable)", done)
                    break
            else:
                stable_checks = 0
        k += 1
    return TrainResult(policy=policy, critic=critic, curve=curve,
                       episodes_run=done, warnings=warnings)


def evaluate(env, policy, episode: EpisodeConfig, n_episodes: int,
             rng: np.random.Generator, greedy: bool = False) -> list[RiskAwareTrajectory]:
    """Roll out a frozen policy; sampling by default, deterministic if greedy."""
    if n_episodes < 1:
        raise ValidationError("evaluation needs at least one episode")
    return [run_episode(env, policy, episode, rng, greedy=greedy) for _ in range(n_episodes)]


# ---------------------------------------------------------------------------
# learning-curve files


def format_curve(points: Sequence[CurvePoint], mode: RewardMode) -> str:
    lines = [f"# schema_version: {CURVE_SCHEMA_VERSION}", f"# mode: {mode.value}",
             "\t".join(CURVE_COLUMNS)]
    for p in points:
        lines.append("\t".join([
            repr(p.iteration), repr(p.episodes), repr(p.mean_return), repr(p.success_prob),
            repr(p.mean_episode_length), repr(p.projection_saturation)]))
    return "\n".join(lines) + "\n"


def write_curve(path, points: Sequence[CurvePoint], mode: RewardMode) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_curve(points, mode))


def read_curve(path) -> tuple[list[CurvePoint], str]:
    points = []
    mode = ""
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# mode:"):
                mode = line.split(":", 1)[1].strip()
                continue
            if line.startswith("#") or not line:
                continue
            if not header_seen:
                if tuple(line.split("\t")) != CURVE_COLUMNS:
                    raise ValidationError(f"unexpected curve columns: {line!r}")
                header_seen = True
                continue
            f = line.split("\t")
            points.append(CurvePoint(int(f[0]), int(f[1]), float(f[2]), float(f[3]),
                                     float(f[4]), float(f[5])))
    return points, mode
