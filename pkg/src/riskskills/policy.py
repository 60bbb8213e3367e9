"""Two-tiered skill policy.

Tier one selects a skill by a softmax over a linear function of Fourier
features of the augmented state.  Tier two draws that skill's continuous
risk-awareness parameter (RAP) from a Gaussian whose mean is linear in a small
hand-picked feature vector and whose variance is fixed.  Both tiers expose
closed-form log-likelihood gradients, which is all the learner needs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import AugmentedState, ConfigurationError, SkillChoice, ValidationError

RAD_FEATURE_DIM = 5  # [1, x_agent, y_agent, w, dist_to_goal]
CHECKPOINT_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# featurization


@dataclass(frozen=True)
class FeatureSpec:
    """How to featurize the augmented-state vector for tier one.

    ``bounds`` has one (lo, hi) row per input dimension (the last row is for
    ``w``).  Inputs are clamped into bounds, normalized to [0, 1], and expanded
    either to Fourier cosines or left raw with a constant prepended.
    """

    kind: str
    order: int
    bounds: tuple[tuple[float, float], ...]
    coupled: bool = False

    def __post_init__(self):
        if self.kind not in ("fourier", "raw"):
            raise ValidationError(f"feature kind must be 'fourier' or 'raw', got {self.kind!r}")
        if self.kind == "fourier" and self.order < 1:
            raise ValidationError(f"fourier order must be >= 1, got {self.order}")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        for lo, hi in bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValidationError(f"feature bounds must satisfy lo < hi, got ({lo}, {hi})")
        object.__setattr__(self, "bounds", bounds)

    @property
    def dims(self) -> int:
        return len(self.bounds)


def _fourier_coefficients(order: int, dims: int, coupled: bool) -> np.ndarray:
    if coupled:
        count = (order + 1) ** dims
        if count > 65536:
            raise ValidationError(f"coupled Fourier basis too large: {count} terms")
        grid = np.indices((order + 1,) * dims).reshape(dims, -1).T
        return grid.astype(float)
    rows = [np.zeros(dims)]
    for d in range(dims):
        for k in range(1, order + 1):
            row = np.zeros(dims)
            row[d] = float(k)
            rows.append(row)
    return np.array(rows)


class Featurizer:
    """Stateful featurizer: clamps out-of-bound inputs and counts the events."""

    def __init__(self, spec: FeatureSpec):
        self.spec = spec
        self._lo = np.array([b[0] for b in spec.bounds])
        self._span = np.array([b[1] - b[0] for b in spec.bounds])
        if spec.kind == "fourier":
            self._coeffs = _fourier_coefficients(spec.order, spec.dims, spec.coupled)
        else:
            self._coeffs = None
        self.clamp_events = 0

    @property
    def n_features(self) -> int:
        if self.spec.kind == "raw":
            return self.spec.dims + 1
        return self._coeffs.shape[0]

    def __call__(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (self.spec.dims,):
            raise ValidationError(
                f"state vector has shape {raw.shape}, featurizer expects ({self.spec.dims},)")
        clipped = np.clip(raw, self._lo, self._lo + self._span)
        if not np.array_equal(clipped, raw):
            self.clamp_events += 1
        s = (clipped - self._lo) / self._span
        if self.spec.kind == "raw":
            return np.concatenate(([1.0], s))
        return np.cos(np.pi * (self._coeffs @ s))


def _state_vector(z: AugmentedState) -> np.ndarray:
    return np.append(z.env.features, z.w)


def fourier_features(state, spec: FeatureSpec, featurizer: Featurizer | None = None) -> np.ndarray:
    """Featurize a raw state vector (or an AugmentedState joined with its w).

    Out-of-bound inputs are clamped, never rejected; the shared ``featurizer``
    counts clamp events when one is supplied.
    """
    if featurizer is None:
        featurizer = Featurizer(spec)
    if isinstance(state, AugmentedState):
        state = _state_vector(state)
    return featurizer(np.asarray(state, dtype=float))


def rad_features(z: AugmentedState, adapter, w_bounds: tuple[float, float] = (0.0, 3.0)) -> np.ndarray:
    """Risk-distribution features: [1, x_agent, y_agent, w, dist_to_goal].

    Every component is normalized to [0, 1] by declared bounds.  The adapter
    must expose ``agent_xy(state)``, ``goal_xy()`` and ``field_bounds``; a
    missing capability is a configuration error.
    """
    for cap in ("agent_xy", "goal_xy", "field_bounds"):
        if not hasattr(adapter, cap):
            raise ConfigurationError(f"environment adapter lacks capability {cap!r}")
    (xlo, xhi), (ylo, yhi) = adapter.field_bounds
    ax, ay = adapter.agent_xy(z.env)
    gx, gy = adapter.goal_xy()
    wlo, whi = w_bounds
    if not wlo < whi:
        raise ConfigurationError(f"w bounds must satisfy lo < hi, got ({wlo}, {whi})")
    # Farthest field corner from the goal bounds the distance feature.
    dist_max = max(math.hypot(cx - gx, cy - gy)
                   for cx in (xlo, xhi) for cy in (ylo, yhi))
    dist = math.hypot(ax - gx, ay - gy)
    xn = min(max((ax - xlo) / (xhi - xlo), 0.0), 1.0)
    yn = min(max((ay - ylo) / (yhi - ylo), 0.0), 1.0)
    wn = min(max((z.w - wlo) / (whi - wlo), 0.0), 1.0)
    return np.array([1.0, xn, yn, wn, dist / dist_max])


# ---------------------------------------------------------------------------
# distribution primitives


def inter_skill_probs(alpha: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Softmax over per-skill linear scores, stabilized by max subtraction.

    Probabilities are floored at a denormal-safe minimum and renormalized so
    every entry stays strictly positive under extreme score gaps.
    """
    alpha = np.asarray(alpha, dtype=float)
    features = np.asarray(features, dtype=float)
    if alpha.ndim != 2 or alpha.shape[1] != features.shape[0]:
        raise ValidationError(
            f"alpha shape {alpha.shape} incompatible with feature dim {features.shape}")
    scores = alpha @ features
    scores = scores - np.max(scores)
    probs = np.exp(scores)
    probs = np.maximum(probs, 1e-300)
    return probs / np.sum(probs)


def sample_skill(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw a skill index; deterministic given the generator state."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0) or abs(float(np.sum(probs)) - 1.0) > 1e-9:
        raise ValidationError("skill probabilities must be a simplex")
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(probs), u), len(probs) - 1))


class RadDraw(NamedTuple):
    value: float  # clamped to the executable range
    raw: float    # the distribution's draw; gradients use this one


def rad_sample(omega_i: np.ndarray, phi: np.ndarray, variance: float,
               clamp: tuple[float, float], rng: np.random.Generator) -> RadDraw:
    """Draw a RAP from N(phi @ omega_i, variance); execution clamps, gradients don't."""
    if variance <= 0:
        raise ValidationError(f"RAD variance must be positive, got {variance}")
    lo, hi = clamp
    if not lo < hi:
        raise ValidationError(f"clamp range must satisfy lo < hi, got ({lo}, {hi})")
    mean = float(np.dot(phi, omega_i))
    raw = mean + math.sqrt(variance) * rng.standard_normal()
    return RadDraw(value=min(max(raw, lo), hi), raw=raw)


def log_grad_inter(alpha: np.ndarray, features: np.ndarray, chosen: int) -> np.ndarray:
    """d log softmax(alpha @ phi)[chosen] / d alpha: row i is (1[i==chosen] - p_i) phi."""
    probs = inter_skill_probs(alpha, features)
    if not 0 <= chosen < probs.shape[0]:
        raise ValidationError(f"chosen skill {chosen} out of range")
    coeff = -probs
    coeff[chosen] += 1.0
    return np.outer(coeff, features)


def log_grad_rad(omega_i: np.ndarray, phi: np.ndarray, y: float, variance: float) -> np.ndarray:
    """d log N(y; phi @ omega_i, V) / d omega_i = phi (y - phi @ omega_i) / V."""
    if variance <= 0:
        raise ValidationError(f"RAD variance must be positive, got {variance}")
    phi = np.asarray(phi, dtype=float)
    residual = (y - float(np.dot(phi, omega_i))) / variance
    return phi * residual


def gaussian_log_density(y: float, mean: float, variance: float) -> float:
    if variance <= 0:
        raise ValidationError(f"variance must be positive, got {variance}")
    return -0.5 * math.log(2.0 * math.pi * variance) - (y - mean) ** 2 / (2.0 * variance)


# ---------------------------------------------------------------------------
# the policy


class GibbsGaussianPolicy:
    """Softmax skill selection plus per-skill Gaussian RAP distributions.

    Parameters: ``alpha`` (n_skills x n_features) for tier one and ``omega``
    (n_skills x 5) for the RAP means.  The Gaussian variance is shared and
    fixed; it is exploration noise, not a learned quantity.
    """

    def __init__(self, alpha: np.ndarray, omega: np.ndarray, rap_variance: float,
                 rap_clamp: tuple[float, float], featurizer: Featurizer,
                 rad_adapter, w_bounds: tuple[float, float] = (0.0, 3.0)):
        alpha = np.asarray(alpha, dtype=float)
        omega = np.asarray(omega, dtype=float)
        if alpha.ndim != 2:
            raise ValidationError(f"alpha must be 2-D, got shape {alpha.shape}")
        if omega.shape != (alpha.shape[0], RAD_FEATURE_DIM):
            raise ValidationError(
                f"omega must have shape ({alpha.shape[0]}, {RAD_FEATURE_DIM}), got {omega.shape}")
        if alpha.shape[1] != featurizer.n_features:
            raise ValidationError(
                f"alpha has {alpha.shape[1]} columns, featurizer yields {featurizer.n_features}")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(omega))):
            raise ValidationError("policy parameters must be finite")
        if rap_variance <= 0:
            raise ValidationError(f"RAD variance must be positive, got {rap_variance}")
        lo, hi = rap_clamp
        if not lo < hi:
            raise ValidationError(f"RAP clamp must satisfy lo < hi, got ({lo}, {hi})")
        self.alpha = alpha
        self.omega = omega
        self.rap_variance = float(rap_variance)
        self.rap_clamp = (float(lo), float(hi))
        self.featurizer = featurizer
        self.rad_adapter = rad_adapter
        self.w_bounds = (float(w_bounds[0]), float(w_bounds[1]))

    @classmethod
    def for_environment(cls, env, *, fourier_order: int = 3, coupled: bool = False,
                        kind: str = "fourier", rap_variance: float = 25.0,
                        rap_clamp: tuple[float, float] = (0.0, 150.0),
                        rap_mean_init: float = 75.0,
                        w_bounds: tuple[float, float] = (0.0, 3.0)) -> "GibbsGaussianPolicy":
        """Zero-initialized policy sized for ``env``, with a neutral RAP mean."""
        bounds = tuple(env.feature_bounds) + (w_bounds,)
        spec = FeatureSpec(kind=kind, order=fourier_order, bounds=bounds, coupled=coupled)
        featurizer = Featurizer(spec)
        alpha = np.zeros((env.n_skills, featurizer.n_features))
        omega = np.zeros((env.n_skills, RAD_FEATURE_DIM))
        omega[:, 0] = rap_mean_init
        return cls(alpha, omega, rap_variance, rap_clamp, featurizer, env, w_bounds)

    # -- featurization -----------------------------------------------------

    @property
    def n_skills(self) -> int:
        return self.alpha.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.alpha.shape[1]

    def features(self, z: AugmentedState) -> np.ndarray:
        return self.featurizer(_state_vector(z))

    def rad_feature_vector(self, z: AugmentedState) -> np.ndarray:
        return rad_features(z, self.rad_adapter, self.w_bounds)

    def inter_probs(self, z: AugmentedState, phi: np.ndarray | None = None) -> np.ndarray:
        if phi is None:
            phi = self.features(z)
        return inter_skill_probs(self.alpha, phi)

    def rad_mean(self, z: AugmentedState, skill: int,
                 phi_r: np.ndarray | None = None) -> float:
        if phi_r is None:
            phi_r = self.rad_feature_vector(z)
        return float(np.dot(phi_r, self.omega[skill]))

    # -- acting ------------------------------------------------------------

    def act(self, z: AugmentedState, rng: np.random.Generator,
            greedy: bool = False) -> SkillChoice:
        """Sample (skill, RAP).  Greedy: argmax skill (lowest index wins ties)
        and the RAP distribution mean."""
        phi = self.features(z)
        probs = inter_skill_probs(self.alpha, phi)
        skill = int(np.argmax(probs)) if greedy else sample_skill(probs, rng)
        phi_r = self.rad_feature_vector(z)
        if greedy:
            raw = float(np.dot(phi_r, self.omega[skill]))
            lo, hi = self.rap_clamp
            draw = RadDraw(value=min(max(raw, lo), hi), raw=raw)
        else:
            draw = rad_sample(self.omega[skill], phi_r, self.rap_variance,
                              self.rap_clamp, rng)
        return SkillChoice(skill=skill, rap=draw.raw, rap_executed=draw.value,
                           cache=(phi, probs, phi_r))

    # -- gradients ---------------------------------------------------------

    def log_grad_alpha(self, z: AugmentedState, skill: int, cache=None) -> np.ndarray:
        if cache is not None:
            phi, probs, _ = cache
            coeff = -probs.copy()
            coeff[skill] += 1.0
            return np.outer(coeff, phi)
        return log_grad_inter(self.alpha, self.features(z), skill)

    def log_grad_omega(self, z: AugmentedState, skill: int, rap: float, cache=None) -> np.ndarray:
        phi_r = cache[2] if cache is not None else self.rad_feature_vector(z)
        grad = np.zeros_like(self.omega)
        grad[skill] = log_grad_rad(self.omega[skill], phi_r, rap, self.rap_variance)
        return grad

    def two_tiered_log_prob(self, z: AugmentedState, skill: int, rap: float) -> float:
        """log mu(skill, rap | z): skill log-probability plus RAP log-density."""
        phi = self.features(z)
        probs = inter_skill_probs(self.alpha, phi)
        phi_r = self.rad_feature_vector(z)
        mean = float(np.dot(phi_r, self.omega[skill]))
        return float(np.log(probs[skill])) + gaussian_log_density(rap, mean, self.rap_variance)

    # -- snapshots ---------------------------------------------------------

    def replace(self, alpha: np.ndarray | None = None,
                omega: np.ndarray | None = None) -> "GibbsGaussianPolicy":
        """Copy with swapped parameters; featurizer (and its clamp counter) shared."""
        return GibbsGaussianPolicy(
            alpha=self.alpha if alpha is None else alpha,
            omega=self.omega if omega is None else omega,
            rap_variance=self.rap_variance, rap_clamp=self.rap_clamp,
            featurizer=self.featurizer, rad_adapter=self.rad_adapter,
            w_bounds=self.w_bounds)


# ---------------------------------------------------------------------------
# checkpoints


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def checkpoint_document(policy: GibbsGaussianPolicy,
                        seed_lineage: tuple[int, ...] = ()) -> dict:
    spec = policy.featurizer.spec
    return {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": "two_tiered_policy",
        "alpha": [[float(v) for v in row] for row in policy.alpha],
        "omega": [[float(v) for v in row] for row in policy.omega],
        "rap_variance": policy.rap_variance,
        "rap_clamp": [policy.rap_clamp[0], policy.rap_clamp[1]],
        "w_bounds": [policy.w_bounds[0], policy.w_bounds[1]],
        "feature_spec": {
            "kind": spec.kind,
            "order": spec.order,
            "coupled": spec.coupled,
            "bounds": [[lo, hi] for lo, hi in spec.bounds],
        },
        "seed_lineage": [int(s) for s in seed_lineage],
    }


def save_checkpoint(policy: GibbsGaussianPolicy, path,
                    seed_lineage: tuple[int, ...] = ()) -> None:
    """Write the canonical checkpoint document (save-load-save is byte-stable)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_canonical_json(checkpoint_document(policy, seed_lineage)))


def load_checkpoint(path, rad_adapter) -> tuple[GibbsGaussianPolicy, tuple[int, ...]]:
    """Rebuild a policy from a checkpoint, binding it to ``rad_adapter``.

    The adapter's feature dimensionality must match the stored feature spec;
    a mismatch is refused with both shapes reported.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported checkpoint schema_version {doc.get('schema_version')!r}")
    fs = doc["feature_spec"]
    spec = FeatureSpec(kind=fs["kind"], order=int(fs["order"]),
                       bounds=tuple((b[0], b[1]) for b in fs["bounds"]),
                       coupled=bool(fs["coupled"]))
    if hasattr(rad_adapter, "feature_bounds"):
        expected = len(tuple(rad_adapter.feature_bounds)) + 1
        if spec.dims != expected:
            raise ValidationError(
                f"checkpoint feature dims {spec.dims} do not match environment dims {expected}")
    policy = GibbsGaussianPolicy(
        alpha=np.array(doc["alpha"], dtype=float),
        omega=np.array(doc["omega"], dtype=float),
        rap_variance=float(doc["rap_variance"]),
        rap_clamp=(doc["rap_clamp"][0], doc["rap_clamp"][1]),
        featurizer=Featurizer(spec), rad_adapter=rad_adapter,
        w_bounds=(doc["w_bounds"][0], doc["w_bounds"][1]))
    return policy, tuple(int(s) for s in doc.get("seed_lineage", []))
