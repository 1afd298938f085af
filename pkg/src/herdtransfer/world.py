"""Herding gridworld: terrain, flocking cows, agent movement and perception.

Coordinates are ``(x, y)`` cells with ``y`` growing northwards. All
transitions are pure: they take a :class:`WorldState` and return a new one.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import cached_property
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import ConfigurationError, ProtocolError

Cell = tuple[int, int]
Rect = tuple[int, int, int, int]

SIGHT_RADIUS = 8


class MoveAction(IntEnum):
    SKIP = 0
    NORTH = 1
    NORTHEAST = 2
    EAST = 3
    SOUTHEAST = 4
    SOUTH = 5
    SOUTHWEST = 6
    WEST = 7
    NORTHWEST = 8

    @property
    def delta(self) -> Cell:
        return DELTAS[self]


DELTAS: tuple[Cell, ...] = (
    (0, 0), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1),
)
_DELTA_ARRAY = np.array(DELTAS, dtype=float)


class CellContent(IntEnum):
    EMPTY = 0
    COW = 1
    AGENT = 2
    OBSTACLE = 3
    CORRAL = 4


@dataclass(frozen=True)
class GridMap:
    side: int
    obstacles: frozenset[Cell]
    corral: Rect  # inclusive (x_min, y_min, x_max, y_max)

    def __post_init__(self) -> None:
        x1, y1, x2, y2 = self.corral
        if self.side <= 0:
            raise ConfigurationError(f"side must be positive, got {self.side}")
        if not (1 <= x1 <= x2 <= self.side - 2 and 1 <= y1 <= y2 <= self.side - 2):
            raise ConfigurationError(
                f"corral {self.corral} must lie strictly inside a {self.side}x{self.side} grid"
            )
        for cell in self.obstacles:
            if self.in_corral(cell):
                raise ConfigurationError(f"obstacle {cell} lies inside the corral")

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.side and 0 <= cell[1] < self.side

    def in_corral(self, cell: Sequence[float]) -> bool:
        x1, y1, x2, y2 = self.corral
        return x1 <= cell[0] <= x2 and y1 <= cell[1] <= y2

    @property
    def corral_mid(self) -> tuple[float, float]:
        x1, y1, x2, y2 = self.corral
        return ((x1 + x2) / 2.0, (y1 + y2) / 2.0)

    @property
    def corral_area(self) -> int:
        x1, y1, x2, y2 = self.corral
        return (x2 - x1 + 1) * (y2 - y1 + 1)

    @cached_property
    def blocked(self) -> np.ndarray:
        """Boolean ``(side, side)`` obstacle mask indexed ``[x, y]``."""
        grid = np.zeros((self.side, self.side), dtype=bool)
        for x, y in self.obstacles:
            grid[x, y] = True
        return grid


@dataclass(frozen=True)
class WorldState:
    step: int
    cows: tuple[Cell, ...]
    agents: tuple[Cell, ...]
    rng_stream: int = 0


@dataclass(frozen=True)
class CowParams:
    flee_radius: float = 6.0
    cohesion_radius: float = 5.0
    separation_radius: float = 2.0
    flee_weight: float = 1.0
    cohesion_weight: float = 0.6
    separation_weight: float = 0.8
    random_weight: float = 0.3
    wall_weight: float = 0.5

    def __post_init__(self) -> None:
        if not self.separation_radius < self.cohesion_radius:
            raise ConfigurationError("separation_radius must be smaller than cohesion_radius")
        weights = (self.flee_weight, self.cohesion_weight, self.separation_weight, self.random_weight, self.wall_weight)
        if min(weights) < 0:
            raise ConfigurationError("cow rule weights must be nonnegative")
        if max(weights) <= 0:
            raise ConfigurationError("at least one cow rule weight must be positive")

    def deterministic(self) -> CowParams:
        """The same model with the random rule switched off (used for prediction)."""
        if self.random_weight == 0:
            return self
        if max(self.flee_weight, self.cohesion_weight, self.separation_weight, self.wall_weight) <= 0:
            return self
        return replace(self, random_weight=0.0)


DEFAULT_COW_PARAMS = CowParams()


@dataclass(frozen=True)
class Percept:
    agent_id: int
    step: int
    position: Cell
    window: Rect  # inclusive (x_min, y_min, x_max, y_max), clipped to the grid
    cows: tuple[Cell, ...]
    agents: dict[int, Cell]
    obstacles: frozenset[Cell]
    corral: Rect
    reward: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        x1, y1, x2, y2 = self.window
        return (x2 - x1 + 1, y2 - y1 + 1)

    def contains(self, cell: Cell) -> bool:
        x1, y1, x2, y2 = self.window
        return x1 <= cell[0] <= x2 and y1 <= cell[1] <= y2

    def grid(self) -> np.ndarray:
        """Cell contents of the window as a :class:`CellContent` array indexed ``[x - x_min, y - y_min]``."""
        x1, y1, x2, y2 = self.window
        out = np.full(self.shape, CellContent.EMPTY, dtype=np.int8)
        cx1, cy1, cx2, cy2 = self.corral
        ax1, ax2 = max(x1, cx1), min(x2, cx2)
        ay1, ay2 = max(y1, cy1), min(y2, cy2)
        if ax1 <= ax2 and ay1 <= ay2:
            out[ax1 - x1:ax2 - x1 + 1, ay1 - y1:ay2 - y1 + 1] = CellContent.CORRAL
        for x, y in self.obstacles:
            out[x - x1, y - y1] = CellContent.OBSTACLE
        for x, y in self.cows:
            out[x - x1, y - y1] = CellContent.COW
        for x, y in self.agents.values():
            out[x - x1, y - y1] = CellContent.AGENT
        return out


def build_map(side: int, obstacle_count: int, corral: Rect, seed: int, entity_count: int = 0) -> GridMap:
    """Place ``obstacle_count`` obstacles uniformly outside the corral."""
    x1, y1, x2, y2 = corral
    corral_area = (x2 - x1 + 1) * (y2 - y1 + 1)
    if obstacle_count < 0 or entity_count < 0:
        raise ConfigurationError("obstacle and entity counts must be nonnegative")
    if obstacle_count + corral_area + entity_count >= side * side:
        raise ConfigurationError(
            f"capacity exceeded: obstacles ({obstacle_count}) + corral area ({corral_area})"
            f" + entities ({entity_count}) must be below side^2 ({side * side})"
        )
    probe = GridMap(side, frozenset(), tuple(corral))
    candidates = [(x, y) for x in range(side) for y in range(side) if not probe.in_corral((x, y))]
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(candidates), size=obstacle_count, replace=False)
    return GridMap(side, frozenset(candidates[i] for i in sorted(chosen)), tuple(corral))


def initial_world(grid: GridMap, cow_count: int, agent_count: int, seed: int, rng_stream: int | None = None) -> WorldState:
    """Scatter cows and agents over distinct free cells outside the corral."""
    free = [
        (x, y)
        for x in range(grid.side)
        for y in range(grid.side)
        if (x, y) not in grid.obstacles and not grid.in_corral((x, y))
    ]
    if cow_count + agent_count > len(free):
        raise ConfigurationError(
            f"capacity exceeded: {cow_count} cows + {agent_count} agents > {len(free)} free cells"
        )
    if cow_count <= 0:
        raise ConfigurationError("cows must be positive")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(free), size=cow_count + agent_count, replace=False)
    cells = [free[i] for i in picks]
    stream = seed if rng_stream is None else rng_stream
    return WorldState(0, tuple(cells[:cow_count]), tuple(cells[cow_count:]), stream)


def _legal_target(grid: GridMap, occupied: set[Cell], cell: Cell) -> bool:
    x, y = cell
    return 0 <= x < grid.side and 0 <= y < grid.side and not grid.blocked[x, y] and cell not in occupied


def step_world(
    world: WorldState,
    grid: GridMap,
    actions: Sequence[MoveAction | int],
    params: CowParams = DEFAULT_COW_PARAMS,
) -> WorldState:
    """Advance one step: agents move in id order, then cows."""
    if len(actions) != len(world.agents):
        raise ProtocolError(f"expected {len(world.agents)} actions, got {len(actions)}")
    occupied = set(world.cows) | set(world.agents)
    agents = list(world.agents)
    for i, action in enumerate(actions):
        dx, dy = DELTAS[int(action)]
        if dx == 0 and dy == 0:
            continue
        x, y = agents[i]
        target = (x + dx, y + dy)
        if _legal_target(grid, occupied, target):
            occupied.discard(agents[i])
            occupied.add(target)
            agents[i] = target
    moved = replace(world, agents=tuple(agents))
    cows = update_cows(moved, grid, params)
    return WorldState(world.step + 1, cows, moved.agents, world.rng_stream)


def _units(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)


def preferred_displacements(world: WorldState, grid: GridMap, params: CowParams) -> np.ndarray:
    """Quantized rule-sum displacement index (into ``DELTAS``) for every cow."""
    n = len(world.cows)
    if n == 0:
        return np.zeros(0, dtype=int)
    cows = np.asarray(world.cows, dtype=float)
    pull = np.zeros((n, 2))

    if world.agents and params.flee_weight > 0:
        agents = np.asarray(world.agents, dtype=float)
        away = cows[:, None, :] - agents[None, :, :]
        dist = np.linalg.norm(away, axis=-1)
        nearest = np.argmin(dist, axis=1)
        rows = np.arange(n)
        near = dist[rows, nearest] <= params.flee_radius
        pull += params.flee_weight * near[:, None] * _units(away[rows, nearest])

    if n > 1 and (params.cohesion_weight > 0 or params.separation_weight > 0):
        offset = cows[None, :, :] - cows[:, None, :]  # [i, j] = cow j - cow i
        dist = np.linalg.norm(offset, axis=-1)
        np.fill_diagonal(dist, np.inf)
        if params.cohesion_weight > 0:
            nearest = np.argmin(dist, axis=1)
            rows = np.arange(n)
            near = dist[rows, nearest] <= params.cohesion_radius
            pull += params.cohesion_weight * near[:, None] * _units(offset[rows, nearest])
        if params.separation_weight > 0:
            crowd = dist <= params.separation_radius
            pull -= params.separation_weight * (crowd[:, :, None] * _units(offset)).sum(axis=1)

    if params.wall_weight > 0:
        # push away from every blocked or out-of-bounds neighbouring cell
        padded = np.pad(grid.blocked, 1, constant_values=True)
        ix = cows[:, 0].astype(int) + 1
        iy = cows[:, 1].astype(int) + 1
        for k in range(1, 9):
            dx, dy = DELTAS[k]
            hit = padded[ix + dx, iy + dy]
            pull -= params.wall_weight * hit[:, None] * (_DELTA_ARRAY[k] / math.hypot(dx, dy))

    if params.random_weight > 0:
        rng = np.random.default_rng([world.rng_stream, world.step])
        theta = rng.random(n) * (2.0 * math.pi)
        pull += params.random_weight * np.stack([np.cos(theta), np.sin(theta)], axis=1)

    gap = ((pull[:, None, :] - _DELTA_ARRAY[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(gap, axis=1)


def update_cows(world: WorldState, grid: GridMap, params: CowParams = DEFAULT_COW_PARAMS) -> tuple[Cell, ...]:
    """Move every cow outside the corral one cell along its preferred displacement.

    Moves are applied in ascending cow index; a move into an occupied,
    blocked or out-of-bounds cell degrades to a skip. Cows in the corral
    never move.
    """
    choice = preferred_displacements(world, grid, params)
    occupied = set(world.cows) | set(world.agents)
    cows = list(world.cows)
    for i, idx in enumerate(choice):
        if idx == 0 or grid.in_corral(cows[i]):
            continue
        dx, dy = DELTAS[idx]
        x, y = cows[i]
        target = (x + dx, y + dy)
        if _legal_target(grid, occupied, target):
            occupied.discard(cows[i])
            occupied.add(target)
            cows[i] = target
    return tuple(cows)


def perceive(world: WorldState, grid: GridMap, agent_id: int, radius: int = SIGHT_RADIUS, reward: float | None = None) -> Percept:
    if not 0 <= agent_id < len(world.agents):
        raise ProtocolError(f"unknown agent id {agent_id}")
    ax, ay = world.agents[agent_id]
    x1, x2 = max(0, ax - radius), min(grid.side - 1, ax + radius)
    y1, y2 = max(0, ay - radius), min(grid.side - 1, ay + radius)

    def inside(c: Cell) -> bool:
        return x1 <= c[0] <= x2 and y1 <= c[1] <= y2

    sub = grid.blocked[x1:x2 + 1, y1:y2 + 1]
    xs, ys = np.nonzero(sub)
    obstacles = frozenset(zip((xs + x1).tolist(), (ys + y1).tolist()))
    return Percept(
        agent_id=agent_id,
        step=world.step,
        position=(ax, ay),
        window=(x1, y1, x2, y2),
        cows=tuple(c for c in world.cows if inside(c)),
        agents={i: a for i, a in enumerate(world.agents) if inside(a)},
        obstacles=obstacles,
        corral=grid.corral,
        reward=reward,
    )


def success_percent(world: WorldState, grid: GridMap) -> float:
    if not world.cows:
        raise ConfigurationError("success is undefined for a world without cows")
    inside = sum(1 for c in world.cows if grid.in_corral(c))
    return 100.0 * inside / len(world.cows)


def check_world(world: WorldState, grid: GridMap) -> None:
    """Raise ``AssertionError`` if occupancy invariants are violated."""
    cells = list(world.cows) + list(world.agents)
    assert len(set(cells)) == len(cells), "two entities share a cell"
    for c in cells:
        assert grid.in_bounds(c), f"{c} out of bounds"
        assert c not in grid.obstacles, f"{c} sits on an obstacle"


# --- line-oriented snapshot format -------------------------------------------------

def write_snapshot(grid: GridMap, world: WorldState | None = None, out: TextIO | None = None) -> str:
    """Serialize a map (and optionally a world) to the line-oriented text format."""
    buf = out if out is not None else io.StringIO()
    x1, y1, x2, y2 = grid.corral
    buf.write(f"{grid.side} {len(grid.obstacles)} corral {x1} {y1} {x2} {y2}\n")
    if world is not None:
        buf.write(f"T {world.step} {world.rng_stream}\n")
    for x, y in sorted(grid.obstacles):
        buf.write(f"O {x} {y}\n")
    if world is not None:
        for x, y in world.cows:
            buf.write(f"C {x} {y}\n")
        for i, (x, y) in enumerate(world.agents):
            buf.write(f"A {i} {x} {y}\n")
    return buf.getvalue() if out is None else ""


@dataclass
class Snapshot:
    grid: GridMap
    world: WorldState | None
    extra: dict[str, list[tuple[int, ...]]] = field(default_factory=dict)


def read_snapshot(lines: Iterable[str] | str) -> Snapshot:
    """Parse the snapshot format. Unknown record tags are collected in ``extra``."""
    if isinstance(lines, str):
        lines = lines.splitlines()
    rows = [ln.split() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise ConfigurationError("empty snapshot")
    head = rows[0]
    if len(head) != 7 or head[2] != "corral":
        raise ConfigurationError(f"malformed snapshot header: {' '.join(head)}")
    side, count = int(head[0]), int(head[1])
    corral = tuple(int(v) for v in head[3:7])
    obstacles: list[Cell] = []
    cows: list[Cell] = []
    agents: dict[int, Cell] = {}
    step, stream, has_world = 0, 0, False
    extra: dict[str, list[tuple[int, ...]]] = {}
    for row in rows[1:]:
        tag, vals = row[0], [int(v) for v in row[1:]]
        if tag == "O":
            obstacles.append((vals[0], vals[1]))
        elif tag == "C":
            cows.append((vals[0], vals[1]))
            has_world = True
        elif tag == "A":
            agents[vals[0]] = (vals[1], vals[2])
            has_world = True
        elif tag == "T":
            step, stream = vals[0], vals[1]
            has_world = True
        else:
            extra.setdefault(tag, []).append(tuple(vals))
    if len(obstacles) != count:
        raise ConfigurationError(f"header declares {count} obstacles, found {len(obstacles)}")
    grid = GridMap(side, frozenset(obstacles), corral)  # type: ignore[arg-type]
    world = None
    if has_world:
        world = WorldState(step, tuple(cows), tuple(agents[i] for i in sorted(agents)), stream)
    return Snapshot(grid, world, extra)
