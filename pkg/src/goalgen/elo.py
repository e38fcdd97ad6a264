"""Anchored Elo/Bradley-Terry scores over three-way preference data.

Each three-way observation is converted into three pairwise comparisons by
masking out one outcome at a time and renormalising the remaining two
rates; a "no goal" competitor stands in for the episode timing out. Scores
are fitted by batch maximum likelihood under the base-10 Elo link
P(a beats b) = 1 / (1 + 10^-(Va-Vb)/400), then shifted so the no-goal
score is exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import ChoiceDistribution, PreferenceRecord, record_to_distribution
from .errors import NumericalError, ValidationError
from .features import FEATURE_NAMES, ObjectFeatures
from .metrics import MetricMode, MetricsReport, compute_metrics

# Natural-log growth rate of the base-10, 400-point Elo link.
ELO_SCALE = math.log(10.0) / 400.0

RIDGE = 1e-8
GRADIENT_STEP = 32.0
CONVERGENCE_TOL = 1e-6
MAX_ITERATIONS = 100_000

Competitor = ObjectFeatures | None  # None is the no-goal competitor


@dataclass(frozen=True)
class PairwiseComparison:
    competitor_a: Competitor
    competitor_b: Competitor
    win_rate_a: float
    weight: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.win_rate_a <= 1.0:
            raise ValidationError(f"win_rate_a {self.win_rate_a} outside [0, 1]")
        if not math.isfinite(self.weight) or self.weight < 0:
            raise ValidationError(f"bad comparison weight {self.weight}")


@dataclass(frozen=True)
class EloTable:
    """Scores per object, anchored so the no-goal competitor sits at zero."""

    scores: dict[ObjectFeatures, float]
    no_goal_score: float = 0.0

    def score(self, competitor: Competitor) -> float:
        if competitor is None:
            return self.no_goal_score
        if competitor not in self.scores:
            raise ValidationError(f"unknown competitor {competitor.name}")
        return self.scores[competitor]


def to_pairwise(record: PreferenceRecord) -> list[PairwiseComparison]:
    """Three masked-and-renormalised comparisons from one record.

    Each comparison is weighted by the probability mass of its two
    outcomes; a comparison whose outcomes never occurred gets weight 0
    (its win rate is reported as 0.5 but carries no information).
    """
    dist = record_to_distribution(record)
    out = []
    for ca, cb, pa, pb in (
        (record.object_a, record.object_b, dist.p_a, dist.p_b),
        (record.object_a, None, dist.p_a, dist.p_none),
        (record.object_b, None, dist.p_b, dist.p_none),
    ):
        mass = pa + pb
        rate = pa / mass if mass > 0 else 0.5
        out.append(PairwiseComparison(ca, cb, rate, mass))
    return out


def elo_predict(table: EloTable, a: Competitor, b: Competitor) -> float:
    """Probability that competitor a beats competitor b."""
    gap = table.score(a) - table.score(b)
    return 1.0 / (1.0 + 10.0 ** (-gap / 400.0))


def fit_elo(
    comparisons: list[PairwiseComparison],
    step: float = GRADIENT_STEP,
    tol: float = CONVERGENCE_TOL,
    max_iterations: int = MAX_ITERATIONS,
) -> EloTable:
    """Maximum-likelihood scores by gradient descent on the weighted NLL.

    A small ridge penalty keeps scores finite when a competitor never
    loses; raises NumericalError if the score change does not fall below
    ``tol`` within the iteration cap.
    """
    active = [c for c in comparisons if c.weight > 0]
    if not active:
        raise ValidationError("no positive-weight comparisons to fit")

    competitors = {c.competitor_a for c in active} | {c.competitor_b for c in active}
    objects = sorted(
        competitors - {None}, key=lambda o: (o.colour.value, o.shape.value)
    )
    index: dict[Competitor, int] = {obj: i for i, obj in enumerate(objects)}
    index[None] = len(objects)
    n = len(objects) + 1

    ia = np.array([index[c.competitor_a] for c in active])
    ib = np.array([index[c.competitor_b] for c in active])
    rate = np.array([c.win_rate_a for c in active])
    weight = np.array([c.weight for c in active])

    scores = np.zeros(n)
    for _ in range(max_iterations):
        gap = scores[ia] - scores[ib]
        p = 1.0 / (1.0 + np.exp(-ELO_SCALE * gap))
        resid = weight * ELO_SCALE * (rate - p)
        grad = (
            2.0 * RIDGE * scores
            - np.bincount(ia, weights=resid, minlength=n)
            + np.bincount(ib, weights=resid, minlength=n)
        )
        delta = step * grad
        scores -= delta
        if np.abs(delta).max() < tol:
            break
    else:
        raise NumericalError(
            f"Elo fit did not converge in {max_iterations} iterations "
            f"(gradient norm {np.linalg.norm(grad):.3e})"
        )

    anchored = scores - scores[index[None]]
    return EloTable(
        scores={obj: float(anchored[index[obj]]) for obj in objects},
        no_goal_score=0.0,
    )


def marginalised_elo(table: EloTable, feature: str) -> float:
    """Mean score of all objects in the table containing the feature."""
    if feature not in FEATURE_NAMES:
        raise ValidationError(f"unknown feature {feature!r}")
    values = [
        score
        for obj, score in table.scores.items()
        if feature in (obj.colour.value, obj.shape.value)
    ]
    if not values:
        raise ValidationError(f"no scored objects contain feature {feature!r}")
    return float(np.mean(values))


def elo_table_to_csv(table: EloTable, path) -> None:
    """Write scores as (object_colour, object_shape, score) plus a no-goal row."""
    from pathlib import Path

    lines = ["object_colour,object_shape,score"]
    for obj in sorted(table.scores, key=lambda o: (o.colour.value, o.shape.value)):
        lines.append(f"{obj.colour.value},{obj.shape.value},{table.scores[obj]:.6f}")
    lines.append(f"no-goal,no-goal,{table.no_goal_score:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def marginalised_to_csv(table: EloTable, path) -> None:
    """Write marginalised feature scores as (feature, score).

    Features with no scored objects (possible on sparse tables) are
    omitted; full 24-object tables always produce all 10 rows.
    """
    from pathlib import Path

    lines = ["feature,score"]
    for feature in FEATURE_NAMES:
        try:
            lines.append(f"{feature},{marginalised_elo(table, feature):.6f}")
        except ValidationError:
            continue
    Path(path).write_text("\n".join(lines) + "\n")


def elo_holdout_validation(
    records: list[PreferenceRecord],
    k: int = 4,
    rng_seed: int = 0,
) -> MetricsReport:
    """K-fold validation of how well Elo scores predict held-out pairs.

    Fits scores on K-1 folds of one agent's records, predicts the held-out
    fold's renormalised two-way rates through the Elo link, and averages
    the two-way metrics over folds.
    """
    if k < 2:
        raise ValidationError(f"need at least 2 folds, got {k}")
    if len(records) < k:
        raise ValidationError(f"{len(records)} records cannot fill {k} folds")

    rng = np.random.default_rng([0x656C6F, rng_seed])
    order = rng.permutation(len(records))
    folds = [order[i::k] for i in range(k)]

    reports = []
    n_uncovered = 0
    for held in range(k):
        train = [records[i] for f, fold in enumerate(folds) if f != held for i in fold]
        test = [records[i] for i in folds[held]]
        comparisons = [c for rec in train for c in to_pairwise(rec)]
        table = fit_elo(comparisons)
        predictions = []
        observations = []
        for rec in test:
            # held-out objects absent from the training folds are unpredictable
            if rec.object_a not in table.scores or rec.object_b not in table.scores:
                n_uncovered += 1
                continue
            p = elo_predict(table, rec.object_a, rec.object_b)
            predictions.append(ChoiceDistribution(p, 1.0 - p, 0.0))
            observations.append(record_to_distribution(rec))
        if predictions:
            reports.append(
                compute_metrics(predictions, observations, MetricMode.TWO_WAY)
            )
    if not reports:
        raise ValidationError(
            "no held-out record involved two competitors seen during fitting"
        )

    return MetricsReport(
        kl=float(np.mean([r.kl for r in reports])),
        tv=float(np.mean([r.tv for r in reports])),
        brier=float(np.mean([r.brier for r in reports])),
        directional_accuracy=float(
            np.mean([r.directional_accuracy for r in reports])
        ),
        n_directional=int(sum(r.n_directional for r in reports)),
        mode=MetricMode.TWO_WAY,
        n_skipped=int(sum(r.n_skipped for r in reports)) + n_uncovered,
    )
