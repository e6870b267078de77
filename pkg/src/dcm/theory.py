"""Closed forms and checkable bounds behind confidence minimization.

The per-example objective xent(s, p) + lam * conf(s) equals
(1 + lam) * H(p_lam, s) with p_lam = (p + lam/C) / (1 + lam), so its unique
minimizer is p_lam itself.  Pinsker's inequality turns a small objective
gap into a total-variation ball around the optimum, which yields a lower
bound on ID MSP and an upper bound on OOD MSP; when the measured gap is
below the separation threshold the two bounds cannot cross.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, EmptyInputError, NumericError
from .losses import LOG_CLAMP
from .netcore import MlpModel, forward_logits, softmax

_DIST_TOL = 1e-9


def _check_dist(p, name: str = "p") -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64).ravel()
    if arr.size < 2:
        raise NumericError(f"{name} needs at least 2 entries")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise NumericError(f"{name} must be finite and nonnegative")
    if abs(arr.sum() - 1.0) > _DIST_TOL:
        raise NumericError(f"{name} must sum to 1, got {arr.sum()}")
    return arr


def optimal_distribution(p, lam: float) -> np.ndarray:
    """The smoothed optimum p_lam = (p + lam/C) / (1 + lam)."""
    arr = _check_dist(p)
    if lam < 0:
        raise NumericError(f"lambda must be nonnegative, got {lam}")
    return (arr + lam / arr.size) / (1.0 + lam)


def optimal_msp_id(lam: float, n_classes: int) -> float:
    """MSP of p_lam for a one-hot p: 1/(1+lam) + lam/((1+lam)*C)."""
    if n_classes < 2:
        raise ConfigError(f"n_classes must be >= 2, got {n_classes}")
    if lam < 0:
        raise NumericError(f"lambda must be nonnegative, got {lam}")
    return 1.0 / (1.0 + lam) + lam / ((1.0 + lam) * n_classes)


def msp_uniform(n_classes: int) -> float:
    """MSP of the uniform distribution: 1/C."""
    if n_classes < 2:
        raise ConfigError(f"n_classes must be >= 2, got {n_classes}")
    return 1.0 / n_classes


def separation_epsilon(n_total: int, n_classes: int, lam: float) -> float:
    """Objective-gap threshold below which separation is guaranteed:
    (1/(2N)) * ((M-1) / ((1+lam) M))^2.
    """
    if n_total < 1:
        raise ConfigError(f"n_total must be >= 1, got {n_total}")
    if n_classes < 2:
        raise ConfigError(f"n_classes must be >= 2, got {n_classes}")
    if lam <= 0:
        raise ConfigError("separation threshold requires lambda > 0")
    m = n_classes
    return (1.0 / (2.0 * n_total)) * ((m - 1.0) / ((1.0 + lam) * m)) ** 2


class PinskerResult(NamedTuple):
    tv: float
    kl: float
    holds: bool


def pinsker_check(p, q) -> PinskerResult:
    """Total variation vs sqrt(KL(p||q)/2); kl is inf where q vanishes on
    the support of p."""
    pa = _check_dist(p, "p")
    qa = _check_dist(q, "q")
    if pa.size != qa.size:
        raise NumericError("p and q must have the same length")
    tv = 0.5 * float(np.abs(pa - qa).sum())
    support = pa > 0
    if np.any(qa[support] == 0):
        kl = math.inf
    else:
        kl = float(np.sum(pa[support] * np.log(pa[support] / qa[support])))
        kl = max(kl, 0.0)
    return PinskerResult(tv=tv, kl=kl, holds=tv <= math.sqrt(kl / 2.0) + 1e-12)


def descend_single_example(
    p, lam: float, steps: int = 4000, lr: float = 1.0
) -> np.ndarray:
    """Gradient descent on one example's logits for xent(s, p) + lam*conf(s).

    Returns the final softmax output; an independent iterative route to the
    closed-form optimum.  The logit gradient is (1+lam)*s - p - lam/C.
    """
    arr = _check_dist(p)
    if lam < 0:
        raise NumericError(f"lambda must be nonnegative, got {lam}")
    c = arr.size
    z = np.zeros(c)
    step = lr / (1.0 + lam)
    for _ in range(steps):
        s = softmax(z)
        z = z - step * ((1.0 + lam) * s - arr - lam / c)
    return softmax(z)


@dataclass
class SeparationCertificate:
    """Measured and guaranteed MSP separation for one model and test pair."""

    lam: float
    n_total: int
    n_classes: int
    epsilon_threshold: float
    epsilon_hat: float
    id_msp_lower_bound: float
    ood_msp_upper_bound: float
    min_id_msp: float
    max_ood_msp: float
    achieved_gap: float
    premise_met: bool
    separation_holds: bool
    id_bound_ok: bool
    ood_bound_ok: bool


def _per_example_objective(
    model: MlpModel, id_features, id_labels, ood_features, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-example ID terms xent + lam*conf and OOD terms lam*conf."""
    probs_id = softmax(forward_logits(model, id_features))
    logs_id = np.log(np.maximum(probs_id, LOG_CLAMP))
    n_id = probs_id.shape[0]
    xent = -logs_id[np.arange(n_id), id_labels]
    conf_id = -logs_id.mean(axis=1)
    id_terms = xent + lam * conf_id
    probs_ood = softmax(forward_logits(model, ood_features))
    conf_ood = -np.log(np.maximum(probs_ood, LOG_CLAMP)).mean(axis=1)
    return id_terms, lam * conf_ood


def analytic_l0(lam: float, n_classes: int, n_id: int, n_ood: int) -> float:
    """Mean minimal objective over n_id + n_ood examples.

    ID minimum: the objective at s = p_lam for one-hot p, which is
    -log p_lam[y] - (lam/C) * sum_j log p_lam[j]; OOD minimum: lam * ln C
    at the uniform output.
    """
    c = n_classes
    top = (1.0 + lam / c) / (1.0 + lam)
    rest = (lam / c) / (1.0 + lam)
    if lam > 0:
        id_min = -math.log(top) - (lam / c) * (math.log(top) + (c - 1) * math.log(rest))
    else:
        id_min = 0.0
    ood_min = lam * math.log(c)
    n = n_id + n_ood
    return (n_id * id_min + n_ood * ood_min) / n


def certify_separation(
    model: MlpModel,
    id_test,
    ood_test,
    lam: float,
    l0_gap: float | None = None,
) -> SeparationCertificate:
    """Builds the Pinsker-based separation certificate.

    id_test is a LabeledDataset (labels needed for the cross-entropy term);
    ood_test is a feature matrix.  l0_gap, when given, overrides the
    measured objective gap epsilon_hat; otherwise the gap is the mean
    per-example objective minus the analytic minimum.
    """
    if lam <= 0:
        raise ConfigError("certification requires lambda > 0")
    id_features = np.asarray(id_test.features, dtype=np.float64)
    id_labels = np.asarray(id_test.labels, dtype=np.int64)
    ood_features = np.asarray(ood_test, dtype=np.float64)
    if id_features.shape[0] == 0 or ood_features.shape[0] == 0:
        raise EmptyInputError("certification needs nonempty ID and OOD sets")
    m = model.n_classes
    n_id, n_ood = id_features.shape[0], ood_features.shape[0]
    n = n_id + n_ood

    id_terms, ood_terms = _per_example_objective(
        model, id_features, id_labels, ood_features, lam
    )
    if l0_gap is None:
        measured = (id_terms.sum() + ood_terms.sum()) / n
        eps_hat = float(measured - analytic_l0(lam, m, n_id, n_ood))
    else:
        eps_hat = float(l0_gap)
    # float error in a perfectly fit model can leave a tiny negative gap
    eps_hat = max(eps_hat, 0.0)

    radius = math.sqrt(n * eps_hat / 2.0)
    id_lower = min(max(optimal_msp_id(lam, m) - radius, 0.0), 1.0)
    ood_upper = min(max(msp_uniform(m) + radius, 0.0), 1.0)

    msp_id = softmax(forward_logits(model, id_features)).max(axis=1)
    msp_ood = softmax(forward_logits(model, ood_features)).max(axis=1)
    min_id = float(msp_id.min())
    max_ood = float(msp_ood.max())
    threshold = separation_epsilon(n, m, lam)

    # tiny float slack so a model sitting exactly on the bound passes
    tol = 1e-9
    return SeparationCertificate(
        lam=lam,
        n_total=n,
        n_classes=m,
        epsilon_threshold=threshold,
        epsilon_hat=eps_hat,
        id_msp_lower_bound=id_lower,
        ood_msp_upper_bound=ood_upper,
        min_id_msp=min_id,
        max_ood_msp=max_ood,
        achieved_gap=min_id - max_ood,
        premise_met=eps_hat < threshold,
        separation_holds=min_id > max_ood,
        id_bound_ok=min_id >= id_lower - tol,
        ood_bound_ok=max_ood <= ood_upper + tol,
    )


def neighborhood_check(
    model: MlpModel,
    id_features,
    ood_features,
    delta: float,
    k: int = 8,
    seed: int = 0,
) -> bool:
    """Empirical delta-neighborhood test: perturb each point with k random
    directions of norm delta and require the MSP ordering to persist."""
    if delta < 0:
        raise ConfigError(f"delta must be nonnegative, got {delta}")
    rng = np.random.default_rng([seed, 7])

    def perturbed_msp(features: np.ndarray) -> np.ndarray:
        out = [softmax(forward_logits(model, features)).max(axis=1)]
        for _ in range(k):
            d = rng.standard_normal(features.shape)
            d *= delta / np.linalg.norm(d, axis=1, keepdims=True)
            out.append(softmax(forward_logits(model, features + d)).max(axis=1))
        return np.concatenate(out)

    id_msp = perturbed_msp(np.asarray(id_features, dtype=np.float64))
    ood_msp = perturbed_msp(np.asarray(ood_features, dtype=np.float64))
    return bool(id_msp.min() > ood_msp.max())
