"""Exact gradients on a tiny enumerable decision process.

The fixture is small enough that every trajectory can be enumerated, giving
the exact objective J and its exact parameter gradient via the score-function
identity.  A tabular two-tiered policy (softmax skill selection per state,
softmax RAP selection over a discretized support per skill) plugs into the
very same rollout and estimator code paths as the production policy, so the
oracle validates the estimator as actually used, not a reimplementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (AugmentedState, EnvState, EpisodeConfig, RewardMode, SkillChoice,
                   SkillOutcome, ValidationError, run_episode)
from .learner import trajectory_gradient

ENUMERATION_LIMIT = 1_000_000


@dataclass(frozen=True)
class TinyMdpFixture:
    """Explicit tables: transitions (X,S,Y,X), rewards (X,S,Y), RAP support.

    Limits keep exhaustive enumeration cheap: at most 4 states, 2 single-step
    skills, 3 RAP values and horizon 4.  Construction refuses fixtures whose
    trajectory count estimate exceeds the enumeration limit.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    rap_values: tuple[float, ...]
    horizon: int
    start_state: int = 0

    def __post_init__(self):
        trans = np.asarray(self.transitions, dtype=float)
        rew = np.asarray(self.rewards, dtype=float)
        if trans.ndim != 4 or trans.shape[0] != trans.shape[3]:
            raise ValidationError(f"transitions must be (X,S,Y,X), got {trans.shape}")
        n_states, n_skills, n_raps, _ = trans.shape
        if rew.shape != (n_states, n_skills, n_raps):
            raise ValidationError(f"rewards must be (X,S,Y) = {(n_states, n_skills, n_raps)}, "
                                  f"got {rew.shape}")
        if n_states > 4:
            raise ValidationError(f"fixture allows at most 4 states, got {n_states}")
        if n_skills > 2:
            raise ValidationError(f"fixture allows at most 2 skills, got {n_skills}")
        if n_raps > 3 or len(self.rap_values) != n_raps:
            raise ValidationError("RAP support must have at most 3 values and match the tables")
        if not 1 <= self.horizon <= 4:
            raise ValidationError(f"fixture horizon must lie in [1, 4], got {self.horizon}")
        if not 0 <= self.start_state < n_states:
            raise ValidationError(f"start state {self.start_state} out of range")
        sums = trans.sum(axis=3)
        if not np.allclose(sums, 1.0, atol=1e-12):
            raise ValidationError("every transition row must sum to 1")
        if np.any(trans < 0):
            raise ValidationError("transition probabilities must be nonnegative")
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "rewards", rew)
        object.__setattr__(self, "rap_values", tuple(float(v) for v in self.rap_values))
        estimate = self.trajectory_count_estimate()
        if estimate > ENUMERATION_LIMIT:
            raise ValidationError(
                f"fixture not enumerable: ~{estimate} trajectories exceeds {ENUMERATION_LIMIT}")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_skills(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_rap_values(self) -> int:
        return self.transitions.shape[2]

    def trajectory_count_estimate(self) -> int:
        successors = int(np.max(np.count_nonzero(self.transitions, axis=3)))
        branching = self.n_skills * self.n_rap_values * max(successors, 1)
        return branching ** self.horizon

    @classmethod
    def default(cls) -> "TinyMdpFixture":
        """Canonical stochastic fixture: 3 states, 2 skills, 2 RAP values, horizon 3."""
        trans = np.zeros((3, 2, 2, 3))
        # Skill 0 tends to advance, more so with the high RAP; skill 1 holds.
        trans[0, 0, 0] = (0.6, 0.4, 0.0)
        trans[0, 0, 1] = (0.2, 0.8, 0.0)
        trans[0, 1, 0] = (0.9, 0.1, 0.0)
        trans[0, 1, 1] = (0.7, 0.0, 0.3)
        trans[1, 0, 0] = (0.3, 0.4, 0.3)
        trans[1, 0, 1] = (0.0, 0.3, 0.7)
        trans[1, 1, 0] = (0.5, 0.5, 0.0)
        trans[1, 1, 1] = (0.1, 0.6, 0.3)
        trans[2, 0, 0] = (0.0, 0.2, 0.8)
        trans[2, 0, 1] = (0.0, 0.0, 1.0)
        trans[2, 1, 0] = (0.2, 0.3, 0.5)
        trans[2, 1, 1] = (0.0, 0.5, 0.5)
        rewards = np.array([
            [[0.10, 0.30], [-0.10, 0.05]],
            [[0.20, 0.45], [0.00, -0.20]],
            [[0.40, 0.15], [0.25, 0.10]],
        ])
        return cls(transitions=trans, rewards=rewards, rap_values=(0.0, 1.0), horizon=3)

    @classmethod
    def skill_dominant(cls) -> "TinyMdpFixture":
        """Fixture where skill 0 strictly dominates: reward +1 vs -1, any state."""
        trans = np.zeros((2, 2, 2, 2))
        trans[:, :, :, :] = 0.5
        rewards = np.zeros((2, 2, 2))
        rewards[:, 0, :] = 1.0
        rewards[:, 1, :] = -1.0
        return cls(transitions=trans, rewards=rewards, rap_values=(0.0, 1.0), horizon=2)


class FixtureEnv:
    """Rollout-protocol adapter over a TinyMdpFixture (one step per skill)."""

    def __init__(self, fixture: TinyMdpFixture):
        self.fixture = fixture
        self._states = [EnvState(features=np.eye(fixture.n_states)[i])
                        for i in range(fixture.n_states)]
        self._cum = np.cumsum(fixture.transitions, axis=3)
        self._rap_index = {v: i for i, v in enumerate(fixture.rap_values)}

    @property
    def n_skills(self) -> int:
        return self.fixture.n_skills

    @property
    def feature_bounds(self):
        return tuple((0.0, 1.0) for _ in range(self.fixture.n_states))

    def reset(self, rng: np.random.Generator) -> EnvState:
        return self._states[self.fixture.start_state]

    def run_skill(self, state: EnvState, skill: int, rap: float,
                  rng: np.random.Generator, max_steps: int | None = None) -> SkillOutcome:
        x = int(np.argmax(state.features))
        yi = self._rap_index.get(float(rap))
        if yi is None:
            raise ValidationError(f"RAP value {rap} not in fixture support {self.fixture.rap_values}")
        row = self._cum[x, skill, yi]
        x_next = int(np.searchsorted(row, rng.random(), side="right"))
        x_next = min(x_next, self.fixture.n_states - 1)
        return SkillOutcome(steps=1, base_reward=float(self.fixture.rewards[x, skill, yi]),
                            state=self._states[x_next])


class TabularTwoTieredPolicy:
    """State-indexed softmax skill selection plus per-skill softmax RAP choice.

    ``alpha`` is (n_skills, n_states) over one-hot state features; ``omega`` is
    (n_skills, n_rap_values) of logits over the discretized RAP support.  Both
    tiers are exponential-family, so the score-function estimator applies
    unchanged.
    """

    def __init__(self, alpha: np.ndarray, omega: np.ndarray, rap_values: tuple[float, ...]):
        alpha = np.asarray(alpha, dtype=float)
        omega = np.asarray(omega, dtype=float)
        if alpha.ndim != 2 or omega.ndim != 2 or alpha.shape[0] != omega.shape[0]:
            raise ValidationError("alpha and omega must be 2-D with matching skill counts")
        if omega.shape[1] != len(rap_values):
            raise ValidationError("omega columns must match the RAP support size")
        self.alpha = alpha
        self.omega = omega
        self.rap_values = tuple(float(v) for v in rap_values)

    @classmethod
    def for_fixture(cls, fixture: TinyMdpFixture, rng: np.random.Generator | None = None,
                    scale: float = 0.0) -> "TabularTwoTieredPolicy":
        shape_a = (fixture.n_skills, fixture.n_states)
        shape_o = (fixture.n_skills, fixture.n_rap_values)
        if rng is None or scale == 0.0:
            return cls(np.zeros(shape_a), np.zeros(shape_o), fixture.rap_values)
        return cls(rng.uniform(-scale, scale, shape_a),
                   rng.uniform(-scale, scale, shape_o), fixture.rap_values)

    @property
    def n_skills(self) -> int:
        return self.alpha.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.alpha.shape[1]

    def features(self, z: AugmentedState) -> np.ndarray:
        return z.env.features

    @staticmethod
    def _softmax(scores: np.ndarray) -> np.ndarray:
        e = np.exp(scores - np.max(scores))
        return e / np.sum(e)

    def skill_probs(self, state_index: int) -> np.ndarray:
        return self._softmax(self.alpha[:, state_index])

    def rap_probs(self, skill: int) -> np.ndarray:
        return self._softmax(self.omega[skill])

    def act(self, z: AugmentedState, rng: np.random.Generator,
            greedy: bool = False) -> SkillChoice:
        x = int(np.argmax(z.env.features))
        probs = self.skill_probs(x)
        if greedy:
            skill = int(np.argmax(probs))
        else:
            skill = int(min(np.searchsorted(np.cumsum(probs), rng.random()), len(probs) - 1))
        q = self.rap_probs(skill)
        if greedy:
            yi = int(np.argmax(q))
        else:
            yi = int(min(np.searchsorted(np.cumsum(q), rng.random()), len(q) - 1))
        y = self.rap_values[yi]
        # cache[0] is the tier-one feature vector (the critic reads it too)
        return SkillChoice(skill=skill, rap=y, rap_executed=y,
                           cache=(z.env.features, probs, q, yi))

    def log_grad_alpha(self, z: AugmentedState, skill: int, cache=None) -> np.ndarray:
        if cache is not None:
            x, probs = int(np.argmax(cache[0])), cache[1]
        else:
            x = int(np.argmax(z.env.features))
            probs = self.skill_probs(x)
        grad = np.zeros_like(self.alpha)
        grad[:, x] = -probs
        grad[skill, x] += 1.0
        return grad

    def log_grad_omega(self, z: AugmentedState, skill: int, rap: float, cache=None) -> np.ndarray:
        if cache is not None:
            q, yi = cache[2], cache[3]
        else:
            q = self.rap_probs(skill)
            yi = self.rap_values.index(float(rap))
        grad = np.zeros_like(self.omega)
        grad[skill] = -q
        grad[skill, yi] += 1.0
        return grad

    def two_tiered_log_prob(self, z: AugmentedState, skill: int, rap: float) -> float:
        x = int(np.argmax(z.env.features))
        yi = self.rap_values.index(float(rap))
        return float(np.log(self.skill_probs(x)[skill]) + np.log(self.rap_probs(skill)[yi]))

    def replace(self, alpha: np.ndarray | None = None,
                omega: np.ndarray | None = None) -> "TabularTwoTieredPolicy":
        return TabularTwoTieredPolicy(
            alpha=self.alpha if alpha is None else alpha,
            omega=self.omega if omega is None else omega,
            rap_values=self.rap_values)


# ---------------------------------------------------------------------------
# exact enumeration


def _leaf_return(episode: EpisodeConfig, w: float, disc: float) -> float:
    if episode.reward_mode is RewardMode.PROBABILISTIC_GOAL:
        # The rollout attaches the indicator to the final record, which starts
        # at t = horizon - 1 under single-step skills.
        indicator = 1.0 if w >= episode.beta else 0.0
        return (episode.gamma ** (episode.horizon - 1)) * indicator
    return disc


def exact_return(fixture: TinyMdpFixture, policy: TabularTwoTieredPolicy,
                 episode: EpisodeConfig) -> float:
    """J = sum over all trajectories of P(trajectory) * R(trajectory)."""
    trans = fixture.transitions
    rewards = fixture.rewards
    skill_probs = [policy.skill_probs(x) for x in range(fixture.n_states)]
    rap_probs = [policy.rap_probs(s) for s in range(fixture.n_skills)]
    total = 0.0

    def rec(x: int, w: float, t: int, prob: float, disc: float):
        nonlocal total
        if t == episode.horizon:
            total += prob * _leaf_return(episode, w, disc)
            return
        for s in range(fixture.n_skills):
            ps = skill_probs[x][s]
            for yi in range(fixture.n_rap_values):
                p_dec = prob * ps * rap_probs[s][yi]
                if p_dec == 0.0:
                    continue
                r = rewards[x, s, yi]
                d2 = disc + (episode.gamma ** t) * r
                row = trans[x, s, yi]
                for x2 in range(fixture.n_states):
                    if row[x2] > 0.0:
                        rec(x2, w + r, t + 1, p_dec * row[x2], d2)

    rec(fixture.start_state, 0.0, 0, 1.0, 0.0)
    return total


@dataclass(frozen=True)
class OracleGradient:
    grad_alpha: np.ndarray
    grad_omega: np.ndarray
    value: float


def brute_force_gradient(fixture: TinyMdpFixture, policy: TabularTwoTieredPolicy,
                         episode: EpisodeConfig, fd_check: bool = False,
                         fd_step: float = 1e-6, fd_tol: float = 1e-6) -> OracleGradient:
    """Exact gradient of J by full enumeration and the score-function identity.

    With ``fd_check`` the result is verified coordinate-by-coordinate against
    central finite differences of the enumerated J; disagreement raises.
    """
    trans = fixture.transitions
    rewards = fixture.rewards
    n_states, n_skills, n_raps = fixture.n_states, fixture.n_skills, fixture.n_rap_values
    skill_probs = [policy.skill_probs(x) for x in range(n_states)]
    rap_probs = [policy.rap_probs(s) for s in range(n_skills)]
    ga_total = np.zeros_like(policy.alpha)
    go_total = np.zeros_like(policy.omega)
    j_total = 0.0
    ga_acc = np.zeros_like(policy.alpha)
    go_acc = np.zeros_like(policy.omega)

    def rec(x: int, w: float, t: int, prob: float, disc: float):
        nonlocal j_total, ga_total, go_total
        if t == episode.horizon:
            weight = prob * _leaf_return(episode, w, disc)
            if weight != 0.0:
                j_total += weight
                ga_total += weight * ga_acc
                go_total += weight * go_acc
            return
        for s in range(n_skills):
            ps = skill_probs[x]
            for yi in range(n_raps):
                p_dec = prob * ps[s] * rap_probs[s][yi]
                if p_dec == 0.0:
                    continue
                ga_acc[:, x] -= ps
                ga_acc[s, x] += 1.0
                go_acc[s] -= rap_probs[s]
                go_acc[s, yi] += 1.0
                r = rewards[x, s, yi]
                d2 = disc + (episode.gamma ** t) * r
                row = trans[x, s, yi]
                for x2 in range(n_states):
                    if row[x2] > 0.0:
                        rec(x2, w + r, t + 1, p_dec * row[x2], d2)
                ga_acc[:, x] += ps
                ga_acc[s, x] -= 1.0
                go_acc[s] += rap_probs[s]
                go_acc[s, yi] -= 1.0

    rec(fixture.start_state, 0.0, 0, 1.0, 0.0)
    result = OracleGradient(grad_alpha=ga_total, grad_omega=go_total, value=j_total)
    if fd_check:
        fd_a, fd_o = fd_gradient(fixture, policy, episode, step=fd_step)
        for name, exact, approx in (("alpha", ga_total, fd_a), ("omega", go_total, fd_o)):
            # absolute below unit scale: FD noise must not fail a zero gradient
            scale = max(float(np.max(np.abs(exact))), 1.0)
            err = float(np.max(np.abs(exact - approx))) / scale
            if err > fd_tol:
                raise ValidationError(
                    f"oracle/finite-difference mismatch on {name}: relative error {err:.3e}")
    return result


def fd_gradient(fixture: TinyMdpFixture, policy: TabularTwoTieredPolicy,
                episode: EpisodeConfig, step: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Central finite differences of the enumerated J w.r.t. both tiers."""
    def j_of(alpha: np.ndarray, omega: np.ndarray) -> float:
        return exact_return(fixture, policy.replace(alpha=alpha, omega=omega), episode)

    fd_a = np.zeros_like(policy.alpha)
    for idx in np.ndindex(*policy.alpha.shape):
        up = policy.alpha.copy()
        dn = policy.alpha.copy()
        up[idx] += step
        dn[idx] -= step
        fd_a[idx] = (j_of(up, policy.omega) - j_of(dn, policy.omega)) / (2 * step)
    fd_o = np.zeros_like(policy.omega)
    for idx in np.ndindex(*policy.omega.shape):
        up = policy.omega.copy()
        dn = policy.omega.copy()
        up[idx] += step
        dn[idx] -= step
        fd_o[idx] = (j_of(policy.alpha, up) - j_of(policy.alpha, dn)) / (2 * step)
    return fd_a, fd_o


# ---------------------------------------------------------------------------
# sampled moments (uses the production rollout + estimator path)


@dataclass(frozen=True)
class SampledGradientMoments:
    mean_alpha: np.ndarray
    se_alpha: np.ndarray
    mean_omega: np.ndarray
    se_omega: np.ndarray
    mean_return: float
    n: int


def sampled_gradient_moments(fixture: TinyMdpFixture, policy: TabularTwoTieredPolicy,
                             episode: EpisodeConfig, n: int,
                             rng: np.random.Generator) -> SampledGradientMoments:
    """Monte Carlo mean and per-coordinate standard error of the estimator."""
    env = FixtureEnv(fixture)
    sum_a = np.zeros_like(policy.alpha)
    sq_a = np.zeros_like(policy.alpha)
    sum_o = np.zeros_like(policy.omega)
    sq_o = np.zeros_like(policy.omega)
    ret = 0.0
    for _ in range(n):
        traj = run_episode(env, policy, episode, rng)
        ga, go, disc = trajectory_gradient(traj, policy, episode.gamma)
        sum_a += ga
        sq_a += ga * ga
        sum_o += go
        sq_o += go * go
        ret += disc
    mean_a = sum_a / n
    mean_o = sum_o / n
    var_a = np.maximum(sq_a / n - mean_a ** 2, 0.0)
    var_o = np.maximum(sq_o / n - mean_o ** 2, 0.0)
    return SampledGradientMoments(
        mean_alpha=mean_a, se_alpha=np.sqrt(var_a / n),
        mean_omega=mean_o, se_omega=np.sqrt(var_o / n),
        mean_return=ret / n, n=n)
