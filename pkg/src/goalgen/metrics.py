"""Prediction-quality metrics over three-way choice distributions.

All metrics compare an observed distribution p-hat against a predicted
distribution q. Three-way mode scores the full (a, b, neither)
distribution; two-way mode drops the neither component and renormalises
both sides, skipping observations with zero combined goal mass.
Directional accuracy always uses the two-way observed gap, and only pairs
whose observed gap is at least 10 percentage points are counted.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import ChoiceDistribution
from .errors import NumericalError, ValidationError

DIRECTIONAL_GAP_THRESHOLD = 0.10


class MetricMode(str, Enum):
    THREE_WAY = "three_way"
    TWO_WAY = "two_way"


@dataclass(frozen=True)
class MetricsReport:
    kl: float
    tv: float
    brier: float
    directional_accuracy: float
    n_directional: int
    mode: MetricMode
    n_skipped: int = 0


def kl_divergence(observed: np.ndarray, predicted: np.ndarray) -> float:
    """KL(observed || predicted) with 0 log 0 = 0."""
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    mask = obs > 0
    with np.errstate(divide="ignore"):
        terms = obs[mask] * (np.log(obs[mask]) - np.log(pred[mask]))
    return float(terms.sum())


def total_variation(observed: np.ndarray, predicted: np.ndarray) -> float:
    return float(0.5 * np.abs(np.asarray(observed) - np.asarray(predicted)).sum())


def brier_score(observed: np.ndarray, predicted: np.ndarray) -> float:
    diff = np.asarray(observed, dtype=float) - np.asarray(predicted, dtype=float)
    return float((diff**2).mean())


def _two_way(dist: ChoiceDistribution) -> np.ndarray | None:
    mass = dist.p_a + dist.p_b
    if mass <= 0:
        return None
    return np.array([dist.p_a / mass, dist.p_b / mass])


def compute_metrics(
    predictions: list[ChoiceDistribution],
    observations: list[ChoiceDistribution],
    mode: MetricMode = MetricMode.THREE_WAY,
) -> MetricsReport:
    """Score aligned prediction/observation lists."""
    mode = MetricMode(mode)
    if len(predictions) != len(observations):
        raise ValidationError(
            f"{len(predictions)} predictions vs {len(observations)} observations"
        )
    if not predictions:
        raise ValidationError("no examples to score")

    kls: list[float] = []
    tvs: list[float] = []
    briers: list[float] = []
    n_dir = 0
    n_correct = 0
    n_skipped = 0

    for pred, obs in zip(predictions, observations):
        obs2 = _two_way(obs)
        if mode is MetricMode.THREE_WAY:
            p = np.array(pred.as_tuple())
            q = np.array(obs.as_tuple())
            kls.append(kl_divergence(q, p))
            tvs.append(total_variation(q, p))
            briers.append(brier_score(q, p))
        else:
            if obs2 is None:
                n_skipped += 1
                continue
            pred2 = _two_way(pred)
            if pred2 is None:
                raise NumericalError("prediction has zero goal mass in two-way mode")
            kls.append(kl_divergence(obs2, pred2))
            tvs.append(total_variation(obs2, pred2))
            briers.append(brier_score(obs2, pred2))

        # Directional accuracy on the observed two-way gap; predicted ties
        # count as incorrect.
        if obs2 is not None and abs(obs2[0] - obs2[1]) >= DIRECTIONAL_GAP_THRESHOLD:
            n_dir += 1
            obs_sign = np.sign(obs2[0] - obs2[1])
            pred_sign = np.sign(pred.p_a - pred.p_b)
            if pred_sign != 0 and pred_sign == obs_sign:
                n_correct += 1

    if not kls:
        raise ValidationError("every example was skipped (zero goal mass)")

    return MetricsReport(
        kl=float(np.mean(kls)),
        tv=float(np.mean(tvs)),
        brier=float(np.mean(briers)),
        directional_accuracy=(n_correct / n_dir) if n_dir else 0.0,
        n_directional=n_dir,
        mode=mode,
        n_skipped=n_skipped,
    )
