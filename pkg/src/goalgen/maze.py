"""Procedurally generated 8x8 maze MDP.

Wall cells are sampled independently (p = 0.2 by default) and the map is
rejection-sampled until every vacant cell is reachable from every other.
Reaching any object cell ends the episode; only the rewarded goal pays +1,
every other transition pays -0.1, and episodes are cut off after 200 steps.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import NumericalError, ValidationError
from .features import ObjectFeatures, encode_features

GRID_SIZE = 8
HORIZON = 200
STEP_PENALTY = -0.1
GOAL_REWARD = 1.0
WALL_PROBABILITY = 0.2
MAX_GENERATION_ATTEMPTS = 10_000

# Observation basis: per action, the summed feature vectors of objects the
# action moves strictly closer to (block 0) and strictly farther from
# (block 1), by BFS distance.
N_OBSERVATION_FEATURES = 20


class Action(int, Enum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


_MOVES = {
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
}


class Outcome(str, Enum):
    GOAL_A = "goal_a"
    GOAL_B = "goal_b"
    NONE = "none"
    PENDING = "pending"


@dataclass(frozen=True)
class MazeGrid:
    """A generated maze: walls plus placed agent and object(s)."""

    walls: np.ndarray  # bool (8, 8)
    agent_pos: tuple[int, int]
    goal_pos: tuple[int, int]
    goal: ObjectFeatures
    distractor_pos: tuple[int, int] | None = None
    distractor: ObjectFeatures | None = None

    @property
    def objects(self) -> list[ObjectFeatures]:
        objs = [self.goal]
        if self.distractor is not None:
            objs.append(self.distractor)
        return objs

    @property
    def object_cells(self) -> list[tuple[int, int]]:
        cells = [self.goal_pos]
        if self.distractor_pos is not None:
            cells.append(self.distractor_pos)
        return cells


@dataclass(frozen=True)
class EpisodeState:
    """Episode progress through a maze.

    ``rewarded`` marks whether the goal-slot object pays +1 on contact;
    evaluation episodes run with rewarded=False (pure behavioural tally).
    """

    grid: MazeGrid
    step_count: int = 0
    terminated: bool = False
    outcome: Outcome = Outcome.PENDING
    rewarded: bool = True


def _as_generator(rng: int | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _connected(walls: np.ndarray) -> bool:
    """True when all vacant cells are mutually reachable by 4-neighbour moves."""
    vacant = ~walls
    n_vacant = int(vacant.sum())
    if n_vacant == 0:
        return False
    start = tuple(np.argwhere(vacant)[0])
    seen = np.zeros_like(walls, dtype=bool)
    seen[start] = True
    queue = deque([start])
    count = 1
    size = walls.shape[0]
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < size and 0 <= nc < size and vacant[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                count += 1
                queue.append((nr, nc))
    return count == n_vacant


def distance_field(walls: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """BFS shortest-path distance from every vacant cell to ``target``.

    Wall cells (and anything unreachable) get -1.
    """
    size = walls.shape[0]
    dist = np.full((size, size), -1, dtype=np.int32)
    if walls[target]:
        raise ValidationError(f"distance target {target} is a wall cell")
    dist[target] = 0
    queue = deque([target])
    while queue:
        r, c = queue.popleft()
        d = dist[r, c] + 1
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < size and 0 <= nc < size and not walls[nr, nc] and dist[nr, nc] < 0:
                dist[nr, nc] = d
                queue.append((nr, nc))
    return dist


def generate_maze(
    rng: int | np.random.Generator,
    objects: list[ObjectFeatures],
    wall_prob: float = WALL_PROBABILITY,
    size: int = GRID_SIZE,
    max_attempts: int = MAX_GENERATION_ATTEMPTS,
) -> MazeGrid:
    """Sample a connected maze and place objects and agent in distinct vacant cells."""
    if not 1 <= len(objects) <= 2:
        raise ValidationError(f"expected 1 or 2 objects, got {len(objects)}")
    gen = _as_generator(rng)
    needed = len(objects) + 1
    for _ in range(max_attempts):
        walls = gen.random((size, size)) < wall_prob
        if int((~walls).sum()) < needed or not _connected(walls):
            continue
        vacant = np.argwhere(~walls)
        chosen = gen.choice(len(vacant), size=needed, replace=False)
        cells = [tuple(int(x) for x in vacant[i]) for i in chosen]
        return MazeGrid(
            walls=walls,
            agent_pos=cells[-1],
            goal_pos=cells[0],
            goal=objects[0],
            distractor_pos=cells[1] if len(objects) == 2 else None,
            distractor=objects[1] if len(objects) == 2 else None,
        )
    raise NumericalError(
        f"no connected maze with {needed} vacant cells found in "
        f"{max_attempts} attempts (wall_prob={wall_prob})"
    )


def initial_state(grid: MazeGrid, rewarded: bool = True) -> EpisodeState:
    return EpisodeState(grid=grid, rewarded=rewarded)


def step(state: EpisodeState, action: Action) -> tuple[EpisodeState, float]:
    """Apply one action; returns the new state and the transition reward."""
    if state.terminated:
        raise ValidationError("cannot step a terminated episode")
    grid = state.grid
    size = grid.walls.shape[0]
    r, c = grid.agent_pos
    dr, dc = _MOVES[Action(action)]
    nr, nc = r + dr, c + dc
    if not (0 <= nr < size and 0 <= nc < size) or grid.walls[nr, nc]:
        nr, nc = r, c

    step_count = state.step_count + 1
    new_pos = (nr, nc)
    cells = grid.object_cells

    if new_pos in cells:
        idx = cells.index(new_pos)
        outcome = Outcome.GOAL_A if idx == 0 else Outcome.GOAL_B
        reward = GOAL_REWARD if (idx == 0 and state.rewarded) else STEP_PENALTY
        terminated = True
    elif step_count >= HORIZON:
        outcome = Outcome.NONE
        reward = STEP_PENALTY
        terminated = True
    else:
        outcome = Outcome.PENDING
        reward = STEP_PENALTY
        terminated = False

    new_state = EpisodeState(
        grid=replace(grid, agent_pos=new_pos),
        step_count=step_count,
        terminated=terminated,
        outcome=outcome,
        rewarded=state.rewarded,
    )
    return new_state, reward


def observe(state: EpisodeState) -> np.ndarray:
    """Per-action observation features, shape (4, 20).

    For each action, the feature vectors of all objects the action moves
    strictly closer to are summed into components 0..9, and those it moves
    strictly farther from into components 10..19. A blocked move leaves all
    distances unchanged and therefore contributes nothing.
    """
    if state.terminated:
        raise ValidationError("cannot observe a terminated episode")
    grid = state.grid
    size = grid.walls.shape[0]
    obs = np.zeros((len(_MOVES), N_OBSERVATION_FEATURES))
    fields = [distance_field(grid.walls, cell) for cell in grid.object_cells]
    vectors = [encode_features(obj) for obj in grid.objects]
    r, c = grid.agent_pos
    for action, (dr, dc) in _MOVES.items():
        nr, nc = r + dr, c + dc
        if not (0 <= nr < size and 0 <= nc < size) or grid.walls[nr, nc]:
            nr, nc = r, c
        for field, vec in zip(fields, vectors):
            d0, d1 = field[r, c], field[nr, nc]
            if d1 < d0:
                obs[action.value, :10] += vec
            elif d1 > d0:
                obs[action.value, 10:] += vec
    return obs
