"""Desk-scale linear policy-gradient agent and preference rollout harness.

The policy scores each action by a dot product between shared weights and
that action's 20-dim observation (see maze.observe) and samples from the
softmax. Training is REINFORCE on the total episode return against a
moving-average baseline, one stage at a time, with a fresh maze per
episode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import PreferenceRecord, TrainingPipeline
from .errors import NumericalError, ValidationError
from .features import ObjectFeatures, object_index
from .maze import (
    HORIZON,
    N_OBSERVATION_FEATURES,
    WALL_PROBABILITY,
    distance_field,
    generate_maze,
)

_MOVE_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class DeskPolicyParameters:
    """Policy weights plus the training configuration that produced them."""

    weights: np.ndarray = field(
        default_factory=lambda: np.zeros(N_OBSERVATION_FEATURES)
    )
    learning_rate: float = 0.05
    episodes_per_stage: int = 2000
    baseline_decay: float = 0.99

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (N_OBSERVATION_FEATURES,):
            raise ValidationError(f"weights must have shape (20,), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite")
        object.__setattr__(self, "weights", w)


def _episode(
    walls_rows: list,
    dist_rows: list,
    obj_feature_idx: list[tuple[int, int]],
    obj_cells: list[tuple[int, int]],
    start: tuple[int, int],
    weights: list[float],
    rng: np.random.Generator,
    rewarded_index: int | None,
    collect_grad: bool,
) -> tuple[int, int, float, list[float] | None]:
    """Run one episode with the softmax policy.

    Returns (outcome index or -1 for none, steps taken, total return,
    summed score-function gradient when collect_grad).
    """
    size = len(walls_rows)
    n_obj = len(obj_cells)
    # Per-object weight sums for the closer/farther blocks; fixed within
    # an episode since weights only change between episodes.
    closer_w = [weights[ci] + weights[si] for ci, si in obj_feature_idx]
    farther_w = [weights[10 + ci] + weights[10 + si] for ci, si in obj_feature_idx]

    grad = [0.0] * N_OBSERVATION_FEATURES if collect_grad else None
    r, c = start
    total = 0.0
    steps = 0
    random = rng.random

    while True:
        next_cells = []
        logits = []
        for dr, dc in _MOVE_DELTAS:
            nr, nc = r + dr, c + dc
            if nr < 0 or nr >= size or nc < 0 or nc >= size or walls_rows[nr][nc]:
                nr, nc = r, c
            score = 0.0
            for o in range(n_obj):
                d = dist_rows[o]
                d0, d1 = d[r][c], d[nr][nc]
                if d1 < d0:
                    score += closer_w[o]
                elif d1 > d0:
                    score += farther_w[o]
            next_cells.append((nr, nc))
            logits.append(score)

        m = max(logits)
        exps = [math.exp(x - m) for x in logits]
        z = exps[0] + exps[1] + exps[2] + exps[3]
        probs = [e / z for e in exps]

        u = random()
        acc = 0.0
        action = 3
        for a in range(4):
            acc += probs[a]
            if u < acc:
                action = a
                break

        if collect_grad:
            ar, ac = r, c
            for a in range(4):
                coeff = (1.0 if a == action else 0.0) - probs[a]
                if coeff == 0.0:
                    continue
                nr, nc = next_cells[a]
                for o in range(n_obj):
                    d = dist_rows[o]
                    d0, d1 = d[ar][ac], d[nr][nc]
                    if d1 < d0:
                        ci, si = obj_feature_idx[o]
                        grad[ci] += coeff
                        grad[si] += coeff
                    elif d1 > d0:
                        ci, si = obj_feature_idx[o]
                        grad[10 + ci] += coeff
                        grad[10 + si] += coeff

        r, c = next_cells[action]
        steps += 1
        pos = (r, c)
        if pos in obj_cells:
            idx = obj_cells.index(pos)
            total += 1.0 if idx == rewarded_index else -0.1
            return idx, steps, total, grad
        total += -0.1
        if steps >= HORIZON:
            return -1, steps, total, grad


def _maze_tables(grid) -> tuple[list, list, list, list]:
    walls_rows = grid.walls.tolist()
    dist_rows = [
        distance_field(grid.walls, cell).tolist() for cell in grid.object_cells
    ]
    feature_idx = [obj.feature_indices() for obj in grid.objects]
    return walls_rows, dist_rows, feature_idx, grid.object_cells


def train_desk_agent(
    pipeline: TrainingPipeline,
    params0: DeskPolicyParameters,
    rng_seed: int,
    wall_prob: float = WALL_PROBABILITY,
    with_history: bool = False,
):
    """Train the policy through each stage of the pipeline in order.

    Returns the trained parameters, or (parameters, per-stage lists of
    episode returns) when with_history is set.
    """
    if not pipeline.stages:
        raise ValidationError("pipeline has no stages")
    rng = np.random.default_rng([0x7261696E, rng_seed])
    weights = params0.weights.copy()
    lr = params0.learning_rate
    decay = params0.baseline_decay
    history: list[list[float]] = []

    for stage_idx, stage in enumerate(pipeline.stages):
        objects = [stage.goal] if stage.distractor is None else [
            stage.goal,
            stage.distractor,
        ]
        baseline = None
        returns: list[float] = []
        w_list = weights.tolist()
        for ep in range(params0.episodes_per_stage):
            grid = generate_maze(rng, objects, wall_prob)
            walls_rows, dist_rows, feature_idx, cells = _maze_tables(grid)
            _, _, ret, grad = _episode(
                walls_rows,
                dist_rows,
                feature_idx,
                cells,
                grid.agent_pos,
                w_list,
                rng,
                rewarded_index=0,
                collect_grad=True,
            )
            if baseline is None:
                baseline = ret
            advantage = ret - baseline
            scale = lr * advantage
            for k in range(N_OBSERVATION_FEATURES):
                w_list[k] += scale * grad[k]
            baseline = decay * baseline + (1.0 - decay) * ret
            returns.append(ret)
            if not all(math.isfinite(x) for x in w_list):
                raise NumericalError(
                    f"non-finite policy weights during stage {stage_idx} "
                    f"({stage.goal.name}), episode {ep}"
                )
        weights = np.array(w_list)
        history.append(returns)

    trained = replace(params0, weights=weights)
    if with_history:
        return trained, history
    return trained


def mean_return(
    policy: DeskPolicyParameters,
    goal: ObjectFeatures,
    n_episodes: int = 100,
    rng_seed: int = 0,
    wall_prob: float = WALL_PROBABILITY,
) -> float:
    """Average return of the policy on fresh single-goal mazes (goal rewarded)."""
    rng = np.random.default_rng([0x6D65616E, rng_seed])
    w_list = policy.weights.tolist()
    total = 0.0
    for _ in range(n_episodes):
        grid = generate_maze(rng, [goal], wall_prob)
        walls_rows, dist_rows, feature_idx, cells = _maze_tables(grid)
        _, _, ret, _ = _episode(
            walls_rows,
            dist_rows,
            feature_idx,
            cells,
            grid.agent_pos,
            w_list,
            rng,
            rewarded_index=0,
            collect_grad=False,
        )
        total += ret
    return total / n_episodes


def evaluate_preferences(
    policy: DeskPolicyParameters,
    pairs: list[tuple[ObjectFeatures, ObjectFeatures]],
    episodes_per_pair: int = 100,
    rng_seed: int = 0,
    pipeline_id: str = "agent",
    wall_prob: float = WALL_PROBABILITY,
) -> list[PreferenceRecord]:
    """Tally which object the policy reaches first over two-object mazes.

    No reward is delivered; the episode ends on reaching either object or
    at the horizon. Episodes are seeded by the unordered pair and episode
    index, so evaluating a swapped pair replays the identical episodes and
    exactly swaps the tallies.
    """
    if not np.all(np.isfinite(policy.weights)):
        raise ValidationError("policy weights must be finite")
    w_list = policy.weights.tolist()
    records = []
    for obj_a, obj_b in pairs:
        ia, ib = object_index(obj_a), object_index(obj_b)
        if ia == ib:
            raise ValidationError(f"pair contains {obj_a.name} twice")
        swap = ia > ib
        first, second = (obj_b, obj_a) if swap else (obj_a, obj_b)
        lo, hi = min(ia, ib), max(ia, ib)
        counts = [0, 0, 0]  # first, second, none
        for ep in range(episodes_per_pair):
            rng = np.random.default_rng([0x6576616C, rng_seed, lo, hi, ep])
            grid = generate_maze(rng, [first, second], wall_prob)
            walls_rows, dist_rows, feature_idx, cells = _maze_tables(grid)
            outcome, _, _, _ = _episode(
                walls_rows,
                dist_rows,
                feature_idx,
                cells,
                grid.agent_pos,
                w_list,
                rng,
                rewarded_index=None,
                collect_grad=False,
            )
            counts[outcome if outcome >= 0 else 2] += 1
        count_a, count_b = (counts[1], counts[0]) if swap else (counts[0], counts[1])
        records.append(
            PreferenceRecord(
                pipeline_id=pipeline_id,
                object_a=obj_a,
                object_b=obj_b,
                count_a=count_a,
                count_b=count_b,
                count_none=counts[2],
                episodes=episodes_per_pair,
            )
        )
    return records
