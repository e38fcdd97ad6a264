"""Evaluation harnesses: K-fold cross-validation over pipelines, transfer
evaluation between pipeline families, the Elo-versus-model comparison, and
run manifests for reproducibility.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .dataset import Dataset, TrainingPipeline, record_to_distribution
from .elo import EloTable
from .errors import ValidationError
from .features import enumerate_objects
from .fitting import (
    FitConfig,
    FitResult,
    ModelVariant,
    fit_hyperparameters,
    modelling_loss,
    predicted_distributions,
    simulate_variant,
)
from .latent import goal_value
from .metrics import MetricMode, MetricsReport, compute_metrics


@dataclass(frozen=True)
class PipelinePredicate:
    """Declarative pipeline filter; None fields match anything."""

    stage_count: int | None = None
    has_distractor: bool | None = None
    ids: frozenset[str] | None = None

    def matches(self, pipeline: TrainingPipeline) -> bool:
        if self.stage_count is not None and len(pipeline.stages) != self.stage_count:
            return False
        if (
            self.has_distractor is not None
            and pipeline.has_distractor != self.has_distractor
        ):
            return False
        if self.ids is not None and pipeline.id not in self.ids:
            return False
        return True

    @classmethod
    def from_json(cls, data: dict) -> "PipelinePredicate":
        known = {"stage_count", "has_distractor", "ids"}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown predicate keys: {sorted(unknown)}")
        ids = data.get("ids")
        return cls(
            stage_count=data.get("stage_count"),
            has_distractor=data.get("has_distractor"),
            ids=frozenset(ids) if ids is not None else None,
        )


@dataclass(frozen=True)
class EvaluationPlan:
    """Either a K-fold plan (k set) or a transfer plan (train/eval set)."""

    train: PipelinePredicate | None = None
    eval: PipelinePredicate | None = None
    k: int | None = None
    seed: int = 0

    @classmethod
    def from_json(cls, data: dict) -> "EvaluationPlan":
        known = {"train", "eval", "k", "seed"}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown plan keys: {sorted(unknown)}")
        train = data.get("train")
        eval_ = data.get("eval")
        plan = cls(
            train=PipelinePredicate.from_json(train) if train is not None else None,
            eval=PipelinePredicate.from_json(eval_) if eval_ is not None else None,
            k=data.get("k"),
            seed=data.get("seed", 0),
        )
        if plan.k is None and (plan.train is None or plan.eval is None):
            raise ValidationError("plan needs either k or both train and eval filters")
        return plan

    @classmethod
    def from_file(cls, path: str | Path) -> "EvaluationPlan":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: malformed plan JSON ({exc})") from exc
        return cls.from_json(data)


@dataclass
class KFoldResult:
    fold_losses: list[float]
    mean_loss: float
    se: float
    fold_assignment: dict[str, int]


def kfold_partition(
    pipeline_ids: list[str], k: int, rng_seed: int
) -> dict[str, int]:
    """Seeded partition of pipelines into k folds (fold id per pipeline)."""
    if k < 2:
        raise ValidationError(f"need at least 2 folds, got {k}")
    if len(pipeline_ids) < k:
        raise ValidationError(f"{len(pipeline_ids)} pipelines cannot fill {k} folds")
    rng = np.random.default_rng([0x666F6C64, rng_seed])
    order = rng.permutation(len(pipeline_ids))
    ids = sorted(pipeline_ids)
    return {ids[j]: i % k for i, j in enumerate(order)}


def kfold_cv(
    dataset: Dataset,
    variant: ModelVariant = ModelVariant.FULL,
    k: int = 4,
    config: FitConfig | None = None,
) -> KFoldResult:
    """Fit on k-1 pipeline folds, score the held-out fold's records."""
    config = config or FitConfig()
    pids = sorted({r.pipeline_id for r in dataset.records})
    assignment = kfold_partition(pids, k, config.rng_seed)
    losses = []
    for fold in range(k):
        train_ids = {pid for pid, f in assignment.items() if f != fold}
        eval_ids = {pid for pid, f in assignment.items() if f == fold}
        result = fit_hyperparameters(dataset.subset(train_ids), variant, config)
        eval_records = [r for r in dataset.records if r.pipeline_id in eval_ids]
        losses.append(
            modelling_loss(
                result.hyperparameters, dataset, eval_records, variant, config
            )
        )
    mean = float(np.mean(losses))
    se = float(np.std(losses, ddof=1) / np.sqrt(k)) if k > 1 else 0.0
    return KFoldResult(losses, mean, se, assignment)


@dataclass
class TransferResult:
    fit: FitResult
    eval_loss: float
    metrics_three_way: MetricsReport
    metrics_two_way: MetricsReport
    n_train_pipelines: int
    n_eval_pipelines: int


def transfer_eval(
    dataset: Dataset,
    plan: EvaluationPlan,
    variant: ModelVariant = ModelVariant.FULL,
    config: FitConfig | None = None,
) -> TransferResult:
    """Fit on the plan's train pipelines, evaluate on the disjoint eval set."""
    if plan.train is None or plan.eval is None:
        raise ValidationError("transfer plan needs both train and eval filters")
    config = config or FitConfig()
    active = {r.pipeline_id for r in dataset.records}
    train_ids = {
        pid
        for pid, pipe in dataset.pipelines.items()
        if pid in active and plan.train.matches(pipe)
    }
    eval_ids = {
        pid
        for pid, pipe in dataset.pipelines.items()
        if pid in active and plan.eval.matches(pipe)
    }
    if not train_ids:
        raise ValidationError("train filter matched no pipelines with records")
    if not eval_ids:
        raise ValidationError("eval filter matched no pipelines with records")
    overlap = train_ids & eval_ids
    if overlap:
        raise ValidationError(
            f"train and eval filters overlap on {sorted(overlap)[:5]}"
        )

    result = fit_hyperparameters(dataset.subset(train_ids), variant, config)
    eval_records = [r for r in dataset.records if r.pipeline_id in eval_ids]
    eval_loss = modelling_loss(
        result.hyperparameters, dataset, eval_records, variant, config
    )
    predictions = predicted_distributions(
        result.hyperparameters, dataset, eval_records, variant, config
    )
    observations = [record_to_distribution(r) for r in eval_records]
    return TransferResult(
        fit=result,
        eval_loss=eval_loss,
        metrics_three_way=compute_metrics(
            predictions, observations, MetricMode.THREE_WAY
        ),
        metrics_two_way=compute_metrics(predictions, observations, MetricMode.TWO_WAY),
        n_train_pipelines=len(train_ids),
        n_eval_pipelines=len(eval_ids),
    )


@dataclass
class EloModelComparison:
    spearman_rho: float
    r_squared: float
    points: list[dict] = field(default_factory=list)


def elo_vs_model(
    dataset: Dataset,
    elo_tables: dict[str, EloTable],
    fit_result: FitResult,
    normalised: bool = False,
    config: FitConfig | None = None,
) -> EloModelComparison:
    """Correlate per-(agent, goal) Elo scores with model-assigned values.

    Normalised mode subtracts the per-agent means from both sides before
    computing the statistics.
    """
    missing = set(elo_tables) - set(dataset.pipelines)
    if missing:
        raise ValidationError(f"Elo tables cover unknown pipelines: {sorted(missing)}")
    if not elo_tables:
        raise ValidationError("no Elo tables supplied")
    objects = enumerate_objects()
    hp = fit_result.hyperparameters

    rows = []
    for pid in sorted(elo_tables):
        table = elo_tables[pid]
        not_scored = [o for o in objects if o not in table.scores]
        if not_scored:
            raise ValidationError(
                f"Elo table for {pid!r} lacks scores for "
                f"{[o.name for o in not_scored[:3]]}"
            )
        w = simulate_variant(hp, dataset.pipelines[pid], fit_result.variant, config)
        for obj in objects:
            rows.append(
                {
                    "pipeline_id": pid,
                    "colour": obj.colour.value,
                    "shape": obj.shape.value,
                    "elo": table.scores[obj],
                    "model_value": goal_value(hp, w, obj),
                }
            )

    elo_arr = np.array([r["elo"] for r in rows])
    val_arr = np.array([r["model_value"] for r in rows])
    if normalised:
        pids = [r["pipeline_id"] for r in rows]
        for pid in sorted(set(pids)):
            sel = np.array([p == pid for p in pids])
            elo_arr[sel] -= elo_arr[sel].mean()
            val_arr[sel] -= val_arr[sel].mean()
        for row, e, v in zip(rows, elo_arr, val_arr):
            row["elo"], row["model_value"] = float(e), float(v)

    rho = float(spearmanr(elo_arr, val_arr).statistic)
    r = float(np.corrcoef(elo_arr, val_arr)[0, 1])
    return EloModelComparison(spearman_rho=rho, r_squared=r * r, points=rows)


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(
    out_dir: str | Path,
    command: str,
    parameters: dict,
    seed: int | None,
    input_paths: list[str | Path],
) -> Path:
    """Record everything needed to reproduce a run byte-for-byte."""
    from . import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool_version": __version__,
        "command": command,
        "parameters": parameters,
        "seed": seed,
        "inputs": {str(p): file_digest(p) for p in input_paths},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
