"""Gradient verification suite: analytic forms vs finite differences, and the
sampled estimator vs exhaustive enumeration.

Each check returns a named result with its tolerance and worst observed error;
the report renders them as an aligned table.  The analytic checks accept
injectable gradient functions so a deliberately corrupted gradient can be
shown to fail (mutation sensitivity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AugmentedState, EpisodeConfig, RewardMode
from .offense import FieldState, MiniOffenseEnv, OffenseParams
from .oracle import (TabularTwoTieredPolicy, TinyMdpFixture, brute_force_gradient,
                     fd_gradient, sampled_gradient_moments)
from .policy import (GibbsGaussianPolicy, gaussian_log_density, inter_skill_probs,
                     log_grad_inter, log_grad_rad)

DEFAULT_SEED = 20260816


@dataclass(frozen=True)
class CheckResult:
    name: str
    tolerance: str
    max_error: float
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class GradcheckReport:
    results: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def format(self) -> str:
        rows = [("check", "tolerance", "max_error", "status")]
        for r in self.results:
            rows.append((r.name, r.tolerance, f"{r.max_error:.3e}",
                         "PASS" if r.passed else "FAIL"))
        widths = [max(len(row[i]) for row in rows) for i in range(4)]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
                 for row in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _rel_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    # absolute below unit scale so FD noise cannot fail a near-zero gradient
    scale = max(float(np.max(np.abs(reference))), 1.0)
    return float(np.max(np.abs(analytic - reference))) / scale


def check_gibbs_fd(rng: np.random.Generator, n: int = 1000, h: float = 1e-5,
                   tol: float = 1e-5, grad_fn=None) -> CheckResult:
    """Skill-selection log-gradient vs central finite differences."""
    fn = grad_fn if grad_fn is not None else log_grad_inter
    worst = 0.0
    for _ in range(n):
        n_skills = int(rng.integers(2, 5))
        n_feat = int(rng.integers(2, 6))
        alpha = rng.standard_normal((n_skills, n_feat))
        phi = rng.standard_normal(n_feat)
        chosen = int(rng.integers(n_skills))
        analytic = fn(alpha, phi, chosen)
        fd = np.zeros_like(alpha)
        for idx in np.ndindex(*alpha.shape):
            up = alpha.copy()
            dn = alpha.copy()
            up[idx] += h
            dn[idx] -= h
            fd[idx] = (math.log(inter_skill_probs(up, phi)[chosen])
                       - math.log(inter_skill_probs(dn, phi)[chosen])) / (2 * h)
        worst = max(worst, _rel_error(analytic, fd))
    return CheckResult(name="gibbs_log_grad_vs_fd", tolerance=f"rel<{tol:g}",
                       max_error=worst, passed=worst < tol,
                       detail=f"{n} random instances, h={h:g}")


def check_gaussian_fd(rng: np.random.Generator, n: int = 1000, h: float = 1e-5,
                      tol: float = 1e-5, grad_fn=None) -> CheckResult:
    """RAP log-density gradient vs central finite differences."""
    fn = grad_fn if grad_fn is not None else log_grad_rad
    worst = 0.0
    for _ in range(n):
        dim = int(rng.integers(2, 7))
        omega_i = rng.normal(0.0, 5.0, dim)
        phi = rng.uniform(-1.0, 1.0, dim)
        variance = float(rng.uniform(1.0, 40.0))
        y = float(np.dot(phi, omega_i) + math.sqrt(variance) * rng.standard_normal())
        analytic = fn(omega_i, phi, y, variance)
        fd = np.zeros_like(omega_i)
        for i in range(dim):
            up = omega_i.copy()
            dn = omega_i.copy()
            up[i] += h
            dn[i] -= h
            fd[i] = (gaussian_log_density(y, float(np.dot(phi, up)), variance)
                     - gaussian_log_density(y, float(np.dot(phi, dn)), variance)) / (2 * h)
        worst = max(worst, _rel_error(analytic, fd))
    return CheckResult(name="gaussian_log_grad_vs_fd", tolerance=f"rel<{tol:g}",
                       max_error=worst, passed=worst < tol,
                       detail=f"{n} random instances, h={h:g}")


def _random_offense_state(rng: np.random.Generator) -> AugmentedState:
    striker = (float(rng.uniform(0.05, 0.95)), float(rng.uniform(0.05, 0.95)))
    ball = (float(rng.uniform(0.05, 0.95)), float(rng.uniform(0.05, 0.95)))
    keeper = (OffenseParams().keeper_line_x, float(rng.uniform(0.35, 0.65)))
    score = (1, 0) if rng.random() < 0.5 else (0, 1)
    state = FieldState(striker=striker, ball=ball, keeper=keeper, score=score)
    return AugmentedState(env=state, w=float(rng.uniform(0.0, 2.5)),
                          t=int(rng.integers(0, 100)))


def check_joint_logprob_fd(rng: np.random.Generator, n: int = 25, h: float = 1e-5,
                           tol: float = 1e-5) -> CheckResult:
    """Full-policy joint log-probability gradient vs finite differences.

    Exercises the production featurization chain end to end: Fourier features
    for skill selection, spatial features for the RAP mean.
    """
    env = MiniOffenseEnv(scenario="losing")
    worst = 0.0
    for _ in range(n):
        policy = GibbsGaussianPolicy.for_environment(env, fourier_order=2)
        alpha = rng.normal(0.0, 0.5, policy.alpha.shape)
        omega = rng.normal(0.0, 10.0, policy.omega.shape)
        omega[:, 0] += 75.0
        policy = policy.replace(alpha=alpha, omega=omega)
        z = _random_offense_state(rng)
        skill = int(rng.integers(policy.n_skills))
        rap = float(policy.rad_mean(z, skill) + 5.0 * rng.standard_normal())
        ga = policy.log_grad_alpha(z, skill)
        go = policy.log_grad_omega(z, skill, rap)

        def logp(a: np.ndarray, o: np.ndarray) -> float:
            return policy.replace(alpha=a, omega=o).two_tiered_log_prob(z, skill, rap)

        fd_a = np.zeros_like(alpha)
        for idx in np.ndindex(*alpha.shape):
            up = alpha.copy()
            dn = alpha.copy()
            up[idx] += h
            dn[idx] -= h
            fd_a[idx] = (logp(up, omega) - logp(dn, omega)) / (2 * h)
        fd_o = np.zeros_like(omega)
        for idx in np.ndindex(*omega.shape):
            up = omega.copy()
            dn = omega.copy()
            up[idx] += h
            dn[idx] -= h
            fd_o[idx] = (logp(alpha, up) - logp(alpha, dn)) / (2 * h)
        worst = max(worst, _rel_error(ga, fd_a), _rel_error(go, fd_o))
    return CheckResult(name="joint_log_prob_vs_fd", tolerance=f"rel<{tol:g}",
                       max_error=worst, passed=worst < tol,
                       detail=f"{n} random policies over the offense featurizers")


def _fixture_episode(fixture: TinyMdpFixture, mode: RewardMode) -> EpisodeConfig:
    if mode is RewardMode.PROBABILISTIC_GOAL:
        return EpisodeConfig(horizon=fixture.horizon, beta=0.6, gamma=1.0,
                             reward_mode=mode)
    return EpisodeConfig(horizon=fixture.horizon, beta=0.6, gamma=0.9,
                         reward_mode=mode)


def check_oracle_fd(rng: np.random.Generator, tol: float = 1e-6,
                    settings: int = 3) -> CheckResult:
    """Enumeration gradient vs central finite differences of the exact J."""
    worst = 0.0
    count = 0
    for fixture in (TinyMdpFixture.default(), TinyMdpFixture.skill_dominant()):
        for mode in (RewardMode.PROBABILISTIC_GOAL, RewardMode.EXPECTED_RETURN):
            episode = _fixture_episode(fixture, mode)
            for i in range(settings):
                scale = 0.0 if i == 0 else 0.6
                policy = TabularTwoTieredPolicy.for_fixture(fixture, rng=rng, scale=scale)
                exact = brute_force_gradient(fixture, policy, episode)
                fd_a, fd_o = fd_gradient(fixture, policy, episode)
                worst = max(worst, _rel_error(exact.grad_alpha, fd_a),
                            _rel_error(exact.grad_omega, fd_o))
                count += 1
    return CheckResult(name="oracle_vs_fd", tolerance=f"rel<{tol:g}",
                       max_error=worst, passed=worst < tol,
                       detail=f"{count} fixture/mode/parameter combinations")


def check_sampled_vs_oracle(rng: np.random.Generator, n_samples: int = 100_000,
                            n_settings: int = 5, se_mult: float = 3.0) -> CheckResult:
    """Monte Carlo estimator mean vs exact gradient, per-coordinate SE bound.

    Error is reported as the worst |difference| / (se_mult * SE) ratio, so the
    pass threshold is 1.  A coordinate whose sampled SE is zero must agree
    exactly.
    """
    fixture = TinyMdpFixture.default()
    worst = 0.0
    for i in range(n_settings):
        mode = RewardMode.PROBABILISTIC_GOAL if i % 2 == 0 else RewardMode.EXPECTED_RETURN
        episode = _fixture_episode(fixture, mode)
        policy = TabularTwoTieredPolicy.for_fixture(fixture, rng=rng, scale=0.8)
        exact = brute_force_gradient(fixture, policy, episode)
        moments = sampled_gradient_moments(fixture, policy, episode, n_samples, rng)
        for mean, se, ref in ((moments.mean_alpha, moments.se_alpha, exact.grad_alpha),
                              (moments.mean_omega, moments.se_omega, exact.grad_omega)):
            diff = np.abs(mean - ref)
            ratio = diff / np.maximum(se_mult * se, 1e-12)
            ratio = np.where(diff == 0.0, 0.0, ratio)
            worst = max(worst, float(np.max(ratio)))
    return CheckResult(name="sampled_vs_oracle", tolerance=f"|diff|<={se_mult:g}*SE",
                       max_error=worst, passed=worst <= 1.0,
                       detail=f"{n_settings} parameter settings x {n_samples} trajectories")


def run_gradient_checks(seed: int = DEFAULT_SEED, n_random: int = 1000,
                        n_joint: int = 25, n_samples: int = 100_000,
                        n_settings: int = 5, inter_grad_fn=None,
                        rad_grad_fn=None) -> GradcheckReport:
    """Run the whole suite with one seed; deterministic end to end."""
    rng = np.random.default_rng(seed)
    results = (
        check_gibbs_fd(rng, n=n_random, grad_fn=inter_grad_fn),
        check_gaussian_fd(rng, n=n_random, grad_fn=rad_grad_fn),
        check_joint_logprob_fd(rng, n=n_joint),
        check_oracle_fd(rng),
        check_sampled_vs_oracle(rng, n_samples=n_samples, n_settings=n_settings),
    )
    return GradcheckReport(results=results)
