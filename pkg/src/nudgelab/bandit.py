"""K-armed Bayesian linear bandit with a Normal-Gamma conjugate posterior.

Each arm carries its own coefficient vector and noise precision under a
shared conjugate prior.  Arm selection is available as Thompson sampling
(a two-step Gamma-then-Gaussian draw, or an equivalent single draw from a
location-scale student-t) and as deterministic UCB.  The module also hosts
the post-hoc analytics: assignment probabilities, soft-thresholded
probability-derivative sensitivities, and best-arm confidence.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky

SNAPSHOT_VERSION = 1

CATEGORY_NEGLIGIBLE = 0.05
CATEGORY_SMALL = 0.35
CATEGORY_MEDIUM = 0.70


class BanditConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Prior:
    mu0: np.ndarray
    precision0: np.ndarray
    a0: float = 2.0
    b0: float = 1.0

    @staticmethod
    def default(d: int) -> "Prior":
        return Prior(mu0=np.zeros(d), precision0=np.eye(d), a0=2.0, b0=1.0)

    def validate(self) -> None:
        if self.a0 <= 0 or self.b0 <= 0:
            raise BanditConfigError("prior shape and rate must be positive")
        prec = np.asarray(self.precision0, dtype=float)
        if prec.ndim != 2 or prec.shape[0] != prec.shape[1]:
            raise BanditConfigError("precision0 must be a square matrix")
        if not np.allclose(prec, prec.T, atol=1e-9):
            raise BanditConfigError("precision0 must be symmetric")
        try:
            cholesky(prec, lower=True)
        except np.linalg.LinAlgError as exc:
            raise BanditConfigError("precision0 must be positive definite") from exc


@dataclass
class ArmPosterior:
    mu: np.ndarray
    precision: np.ndarray
    a: float
    b: float
    n_obs: int = 0

    def covariance_quadform(self, x: np.ndarray) -> float:
        """x^T precision^{-1} x via a Cholesky solve (no explicit inverse)."""
        factor = cho_factor(self.precision, lower=True)
        return float(x @ cho_solve(factor, x))


@dataclass
class BanditModel:
    arm_labels: tuple[str, ...]
    arms: list[ArmPosterior]
    d: int
    prior: Prior
    control_label: str = "control"

    @property
    def k(self) -> int:
        return len(self.arms)

    def arm_index(self, label: str) -> int:
        return self.arm_labels.index(label)

    def means(self) -> np.ndarray:
        """K x d matrix of posterior coefficient means."""
        return np.stack([arm.mu for arm in self.arms])


@dataclass(frozen=True)
class Decision:
    user_id: str
    day: int
    chosen_arm: str
    sampled_scores: np.ndarray
    assignment_probabilities: Optional[np.ndarray] = None


def init_model(arm_labels: Sequence[str], d: int, prior: Optional[Prior] = None,
               control_label: str = "control") -> BanditModel:
    labels = tuple(arm_labels)
    if len(labels) < 2:
        raise BanditConfigError("need at least 2 arms")
    if len(set(labels)) != len(labels):
        raise BanditConfigError("arm labels must be unique")
    if control_label not in labels:
        raise BanditConfigError(f"control arm {control_label!r} missing from labels")
    if d < 1:
        raise BanditConfigError("context dimension must be >= 1")
    if prior is None:
        prior = Prior.default(d)
    prior.validate()
    if prior.mu0.shape != (d,) or prior.precision0.shape != (d, d):
        raise BanditConfigError("prior dimensions do not match d")
    arms = [
        ArmPosterior(mu=prior.mu0.astype(float).copy(),
                     precision=np.asarray(prior.precision0, dtype=float).copy(),
                     a=prior.a0, b=prior.b0)
        for _ in labels
    ]
    return BanditModel(arm_labels=labels, arms=arms, d=d, prior=prior,
                       control_label=control_label)


def update(model: BanditModel, arm: str, x: np.ndarray, reward: float) -> BanditModel:
    """Conjugate Normal-Gamma update of one arm; other arms untouched."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.d,):
        raise BanditConfigError(f"context must have dimension {model.d}")
    if not (np.all(np.isfinite(x)) and np.isfinite(reward)):
        raise BanditConfigError("non-finite update inputs")
    idx = model.arm_index(arm)
    old = model.arms[idx]

    precision_new = old.precision + np.outer(x, x)
    eta_new = old.precision @ old.mu + reward * x
    factor = cho_factor(precision_new, lower=True)
    mu_new = cho_solve(factor, eta_new)
    a_new = old.a + 0.5
    b_new = old.b + 0.5 * (reward**2 + old.mu @ (old.precision @ old.mu) - mu_new @ eta_new)

    arms = list(model.arms)
    arms[idx] = ArmPosterior(mu=mu_new, precision=precision_new, a=a_new,
                             b=float(b_new), n_obs=old.n_obs + 1)
    return replace(model, arms=arms)


def _arm_scale(arm: ArmPosterior, x: np.ndarray) -> float:
    return np.sqrt(max(arm.covariance_quadform(x), 0.0) * arm.b / arm.a)


def _argmax_first(scores: np.ndarray) -> int:
    # np.argmax already returns the lowest index among ties
    return int(np.argmax(scores))


def thompson_sample_arm(model: BanditModel, x: np.ndarray, rng: np.random.Generator,
                        method: str = "two_step", user_id: str = "", day: int = 0) -> Decision:
    """One Thompson draw per arm; the arm with the highest sampled score wins."""
    x = np.asarray(x, dtype=float)
    scores = np.empty(model.k)
    if method == "two_step":
        for k, arm in enumerate(model.arms):
            tau = rng.gamma(shape=arm.a, scale=1.0 / arm.b)
            lower = cholesky(arm.precision, lower=True)
            # solve L^T w = z gives w ~ N(0, precision^{-1})
            w = np.linalg.solve(lower.T, rng.standard_normal(model.d))
            theta = arm.mu + w / np.sqrt(tau)
            scores[k] = x @ theta
    elif method == "student_t":
        for k, arm in enumerate(model.arms):
            scores[k] = x @ arm.mu + _arm_scale(arm, x) * rng.standard_t(2.0 * arm.a)
    else:
        raise BanditConfigError(f"unknown sampling method {method!r}")
    chosen = _argmax_first(scores)
    return Decision(user_id=user_id, day=day, chosen_arm=model.arm_labels[chosen],
                    sampled_scores=scores)


def ucb_select(model: BanditModel, x: np.ndarray, alpha: float,
               user_id: str = "", day: int = 0) -> Decision:
    """Deterministic optimism-based selection; ties go to the lowest arm index."""
    if alpha < 0:
        raise BanditConfigError("alpha must be non-negative")
    x = np.asarray(x, dtype=float)
    scores = np.array([x @ arm.mu + alpha * _arm_scale(arm, x) for arm in model.arms])
    chosen = _argmax_first(scores)
    return Decision(user_id=user_id, day=day, chosen_arm=model.arm_labels[chosen],
                    sampled_scores=scores)


def arm_probability(model: BanditModel, x: np.ndarray, method: str = "monte_carlo",
                    n: int = 10_000, tau: float = 1.0,
                    rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Per-arm assignment probabilities for one context; sums to 1."""
    x = np.asarray(x, dtype=float)
    if method == "monte_carlo":
        if n < 1000:
            raise BanditConfigError("monte_carlo needs n >= 1000")
        if rng is None:
            rng = np.random.default_rng()
        # student-t marginal of x^T theta per arm; identical law to the two-step draw
        draws = np.empty((n, model.k))
        for k, arm in enumerate(model.arms):
            draws[:, k] = x @ arm.mu + _arm_scale(arm, x) * rng.standard_t(2.0 * arm.a, size=n)
        winners = np.argmax(draws, axis=1)
        return np.bincount(winners, minlength=model.k) / n
    if method == "softmax":
        if tau <= 0:
            raise BanditConfigError("softmax temperature must be positive")
        return softmax_probabilities(model.means(), x, tau)
    raise BanditConfigError(f"unknown probability method {method!r}")


def softmax_probabilities(theta: np.ndarray, x: np.ndarray, tau: float) -> np.ndarray:
    logits = theta @ x / tau
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def soft_threshold(v: float, lam: float) -> float:
    if v == 0:
        return 0.0
    return v * max(1.0 - lam / abs(v), 0.0)


@dataclass(frozen=True)
class SensitivityReport:
    arm_labels: tuple[str, ...]
    trait_names: tuple[str, ...]
    raw_mean: np.ndarray        # K x d mean probability derivative over the sample
    soft_mean: np.ndarray       # K x d soft-thresholded mean
    normalized: np.ndarray      # K x d, max |entry| mapped to 1
    categories: list[list[str]]

    def category(self, arm: str, trait: str) -> str:
        return self.categories[self.arm_labels.index(arm)][self.trait_names.index(trait)]


def categorize(score: float) -> str:
    mag = abs(score)
    if mag < CATEGORY_NEGLIGIBLE:
        return "negligible"
    if mag < CATEGORY_SMALL:
        size = "small"
    elif mag < CATEGORY_MEDIUM:
        size = "medium"
    else:
        size = "large"
    return f"{size}{'+' if score > 0 else '-'}"


def sensitivity(model: BanditModel, contexts: Sequence, lambda_factor: float = 1 / 5,
                tau: float = 1.0, trait_names: Optional[Sequence[str]] = None) -> SensitivityReport:
    """Soft-thresholded mean derivative of arm probability w.r.t. each trait.

    Probabilities come from the softmax approximation over posterior-mean
    scores; the derivative is its analytic Jacobian evaluated at each sampled
    context.  Per (arm, trait) entry the derivative is soft-thresholded at
    lambda_factor times its standard deviation across the sample, averaged,
    then normalized so the largest magnitude maps to 1.
    """
    xs = np.stack([getattr(c, "values", c) for c in contexts]).astype(float)
    if xs.shape[0] < 2:
        raise ValueError("need at least 2 contexts for the sensitivity spread")
    if trait_names is None:
        first = contexts[0]
        trait_names = tuple(getattr(first, "names", tuple(f"x{j}" for j in range(xs.shape[1]))))
    theta = model.means()  # K x d

    n = xs.shape[0]
    jac = np.empty((n, model.k, model.d))
    for j in range(n):
        p = softmax_probabilities(theta, xs[j], tau)
        weighted = p @ theta  # sum_k p_k theta_kb
        jac[j] = p[:, None] * (theta - weighted[None, :]) / tau

    raw_mean = jac.mean(axis=0)
    sigma = jac.std(axis=0)
    lam = lambda_factor * sigma
    thresholded = np.where(
        np.abs(jac) > 0,
        jac * np.maximum(1.0 - lam[None, :, :] / np.where(np.abs(jac) > 0, np.abs(jac), 1.0), 0.0),
        0.0,
    )
    soft_mean = thresholded.mean(axis=0)

    peak = np.abs(soft_mean).max()
    normalized = soft_mean / peak if peak > 0 else np.zeros_like(soft_mean)
    categories = [[categorize(normalized[k, b]) for b in range(model.d)] for k in range(model.k)]
    return SensitivityReport(arm_labels=model.arm_labels, trait_names=tuple(trait_names),
                             raw_mean=raw_mean, soft_mean=soft_mean,
                             normalized=normalized, categories=categories)


def best_arm_confidence(model: BanditModel, contexts: Sequence, n: int = 10_000,
                        rng: Optional[np.random.Generator] = None) -> list[tuple[str, float]]:
    """Per context: (best arm, gap between top two assignment probabilities)."""
    if len(contexts) == 0:
        raise ValueError("contexts must be non-empty")
    if rng is None:
        rng = np.random.default_rng()
    out = []
    for c in contexts:
        x = getattr(c, "values", c)
        p = arm_probability(model, x, method="monte_carlo", n=n, rng=rng)
        order = np.argsort(p)[::-1]
        out.append((model.arm_labels[int(order[0])], float(p[order[0]] - p[order[1]])))
    return out


# ---------------------------------------------------------------------------
# Snapshots and decision logs


def save_snapshot(model: BanditModel, path) -> None:
    payload = {
        "version": SNAPSHOT_VERSION,
        "arm_labels": list(model.arm_labels),
        "control_label": model.control_label,
        "d": model.d,
        "prior": {
            "mu0": model.prior.mu0.tolist(),
            "precision0": model.prior.precision0.tolist(),
            "a0": model.prior.a0,
            "b0": model.prior.b0,
        },
        "arms": [
            {"mu": arm.mu.tolist(), "precision": arm.precision.tolist(),
             "a": arm.a, "b": arm.b, "n_obs": arm.n_obs}
            for arm in model.arms
        ],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_snapshot(path) -> BanditModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != SNAPSHOT_VERSION:
        raise BanditConfigError(f"unsupported snapshot version {payload.get('version')}")
    prior = Prior(mu0=np.array(payload["prior"]["mu0"]),
                  precision0=np.array(payload["prior"]["precision0"]),
                  a0=payload["prior"]["a0"], b0=payload["prior"]["b0"])
    arms = [
        ArmPosterior(mu=np.array(a["mu"]), precision=np.array(a["precision"]),
                     a=a["a"], b=a["b"], n_obs=a["n_obs"])
        for a in payload["arms"]
    ]
    return BanditModel(arm_labels=tuple(payload["arm_labels"]), arms=arms,
                       d=payload["d"], prior=prior,
                       control_label=payload["control_label"])


def write_decision_log(path, decisions: Sequence[Decision]) -> None:
    if not decisions:
        Path(path).write_text("user_id,day,arm\n", encoding="utf-8")
        return
    k = len(decisions[0].sampled_scores)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "day", "arm"] + [f"score_{i}" for i in range(k)])
        for d in decisions:
            writer.writerow([d.user_id, d.day, d.chosen_arm] + [repr(float(s)) for s in d.sampled_scores])
