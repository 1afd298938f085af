"""Cooperative goal search: three agents, one Q-table per map area, optional
per-step fusion of same-area tables.

Two engines share the same semantics. :func:`run_episode` is the plain
reference built on :class:`QTable`; :func:`run_goalsearch_experiment` runs
all trials in lock-step with dense numpy tables. Every random number of an
episode is drawn up front from the trial's own generator, so both engines
consume identical noise and trials are independent of each other.
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .abstraction import AbstractionParams, bin_distance
from .errors import ConfigurationError
from .learning import LearningParams, QTable, adopt, fuse_tables, own_snapshot, q_update
from .world import GridMap, read_snapshot, write_snapshot

Rect = tuple[int, int, int, int]
REPORT_EPISODES = (32, 94, 218, 280, 404, 466)
_EPS = 1e-9


class GSAction(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


_STEP = np.array([(0, 1), (0, -1), (-1, 0), (1, 0)], dtype=int)


def _in_rect(r: Rect, x: int, y: int) -> bool:
    return r[0] <= x <= r[2] and r[1] <= y <= r[3]


@dataclass(frozen=True, eq=False)
class GoalWorld:
    side: int
    walls: np.ndarray  # bool (side, side) indexed [x, y]
    goal: Rect
    starts: tuple[Rect, Rect, Rect]

    def __post_init__(self) -> None:
        if self.walls.shape != (self.side, self.side):
            raise ConfigurationError("wall mask does not match the side length")
        rects = (self.goal, *self.starts)
        for r in rects:
            x1, y1, x2, y2 = r
            if not (0 <= x1 <= x2 < self.side and 0 <= y1 <= y2 < self.side):
                raise ConfigurationError(f"region {r} outside the {self.side}x{self.side} map")
            if self.walls[x1:x2 + 1, y1:y2 + 1].any():
                raise ConfigurationError(f"region {r} overlaps a wall")
        for i, a in enumerate(rects):
            for b in rects[i + 1:]:
                if a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]:
                    raise ConfigurationError(f"regions {a} and {b} overlap")

    @property
    def goal_center(self) -> tuple[float, float]:
        x1, y1, x2, y2 = self.goal
        return ((x1 + x2) / 2.0, (y1 + y2) / 2.0)

    @property
    def area_width(self) -> int:
        return self.side // 3

    def area_of(self, x: int, y: int) -> int:
        return min(2, x // self.area_width)

    def in_goal(self, x: int, y: int) -> bool:
        return _in_rect(self.goal, x, y)

    def free_runs(self) -> np.ndarray:
        """``runs[k, x, y]``: free cells in a row from (x, y) along action ``k`` (not counting the cell itself)."""
        n = self.side
        free = ~self.walls
        runs = np.zeros((4, n, n), dtype=np.int32)
        up, down, left, right = (runs[k] for k in range(4))
        for y in range(n - 2, -1, -1):
            up[:, y] = np.where(free[:, y + 1], up[:, y + 1] + 1, 0)
        for y in range(1, n):
            down[:, y] = np.where(free[:, y - 1], down[:, y - 1] + 1, 0)
        for x in range(1, n):
            left[x] = np.where(free[x - 1], left[x - 1] + 1, 0)
        for x in range(n - 2, -1, -1):
            right[x] = np.where(free[x + 1], right[x + 1] + 1, 0)
        return runs


def build_goal_map(side: int = 300) -> GoalWorld:
    """The bundled layout: two horizontal barriers with hooked inner lips.

    The goal sits in the north of the middle third, agent 2 starts in
    the open corridor below it, agents 1 and 3 start under the barriers
    and must walk around the lips to reach the corridor.
    """
    if side % 30:
        raise ConfigurationError("the bundled layout needs a side divisible by 30")
    u = side // 30  # 10 cells at side 300
    walls = np.zeros((side, side), dtype=bool)
    walls[0:10 * u, 18 * u:19 * u] = True
    walls[20 * u:side, 18 * u:19 * u] = True
    walls[9 * u:10 * u, 12 * u:19 * u] = True
    walls[20 * u:21 * u, 12 * u:19 * u] = True
    goal = (135 * u // 10, 25 * u, 165 * u // 10 - 1, 28 * u - 1)
    starts = (
        (4 * u, 14 * u, 5 * u - 1, 15 * u - 1),
        (145 * u // 10, 14 * u, 155 * u // 10 - 1, 15 * u - 1),
        (25 * u, 14 * u, 26 * u - 1, 15 * u - 1),
    )
    return GoalWorld(side, walls, goal, starts)


def write_goal_map(world: GoalWorld, out: TextIO | None = None) -> str:
    xs, ys = np.nonzero(world.walls)
    grid = GridMap(world.side, frozenset(zip(xs.tolist(), ys.tolist())), world.goal)
    buf = out if out is not None else io.StringIO()
    write_snapshot(grid, out=buf)
    buf.write("G {} {} {} {}\n".format(*world.goal))
    for i, r in enumerate(world.starts, start=1):
        buf.write(f"R{i} {r[0]} {r[1]} {r[2]} {r[3]}\n")
    return buf.getvalue() if out is None else ""


def read_goal_map(lines) -> GoalWorld:
    snap = read_snapshot(lines)
    try:
        goal = snap.extra["G"][0]
        starts = tuple(snap.extra[f"R{i}"][0] for i in (1, 2, 3))
    except (KeyError, IndexError) as exc:
        raise ConfigurationError("goal map needs G, R1, R2 and R3 records") from exc
    walls = np.zeros((snap.grid.side, snap.grid.side), dtype=bool)
    for x, y in snap.grid.obstacles:
        walls[x, y] = True
    return GoalWorld(snap.grid.side, walls, goal, starts)  # type: ignore[arg-type]


def load_goal_map(path: str | Path | None = None) -> GoalWorld:
    """Read a goal map file; ``None`` loads the bundled layout."""
    if path is None:
        text = resources.files("herdtransfer").joinpath("data/goalsearch.map").read_text()
    else:
        text = Path(path).read_text()
    return read_goal_map(text)


# --- state ----------------------------------------------------------------------------

def gs_angle(agent: Sequence[float], goal: Sequence[float]) -> float:
    """Direction of the ray agent -> goal against the positive x-axis, in [0, 360)."""
    dx, dy = goal[0] - agent[0], goal[1] - agent[1]
    if dx == 0 and dy == 0:
        return 0.0
    return math.degrees(math.atan2(dy, dx)) % 360.0


def gs_state(agent: Sequence[float], goal: Sequence[float], params: AbstractionParams) -> tuple[int, int]:
    bins = int(math.floor(360.0 / params.a + _EPS))
    angle = gs_angle(agent, goal)
    return (
        bin_distance(math.hypot(goal[0] - agent[0], goal[1] - agent[1]), params),
        min(bins, max(1, math.ceil(angle / params.a - _EPS))),
    )


@dataclass(frozen=True)
class GoalSearchParams:
    abstraction: AbstractionParams = field(default_factory=lambda: AbstractionParams(20, 10, 300))
    learning_rate: float = 0.1
    discount: float = 0.95
    goal_reward: float = 100.0
    step_reward: float = -1.0
    step_cap: int = 2000
    move_length: int = 10
    eps_start: float = 1.0
    eps_min: float = 0.05
    eps_decay_episodes: int = 100

    def __post_init__(self) -> None:
        if self.step_cap < 1 or self.move_length < 1:
            raise ConfigurationError("step_cap and move_length must be positive")
        self.learning  # validates the learning fields

    @property
    def learning(self) -> LearningParams:
        return LearningParams(self.learning_rate, self.discount, self.eps_start, self.eps_min, self.eps_decay_episodes)

    def epsilon(self, episode: int) -> float:
        return self.learning.epsilon(episode)

    @property
    def angle_bins(self) -> int:
        return int(math.floor(360.0 / self.abstraction.a + _EPS))

    @property
    def n_states(self) -> int:
        return self.abstraction.distance_bins * self.angle_bins


@dataclass(frozen=True)
class TrialConfig:
    episodes: int = 500
    trials: int = 40
    fusion: bool = True
    seed: int = 0
    params: GoalSearchParams = field(default_factory=GoalSearchParams)

    def __post_init__(self) -> None:
        if self.episodes < 1 or self.trials < 1:
            raise ConfigurationError("episodes and trials must be positive")


# --- noise ----------------------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeNoise:
    starts: np.ndarray  # (3, 2) start cells
    explore: np.ndarray  # (cap, 3) uniforms
    random: np.ndarray  # (cap, 3) random actions

    @classmethod
    def draw(cls, rng: np.random.Generator, world: GoalWorld, cap: int) -> EpisodeNoise:
        starts = np.empty((3, 2), dtype=int)
        for i, (x1, y1, x2, y2) in enumerate(world.starts):
            starts[i] = (rng.integers(x1, x2 + 1), rng.integers(y1, y2 + 1))
        return cls(starts, rng.random((cap, 3)), rng.integers(0, 4, size=(cap, 3)))


def trial_generators(seed: int, trials: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


# --- reference engine -----------------------------------------------------------------

@dataclass
class GSAgent:
    tables: list[QTable] = field(default_factory=lambda: [QTable(k, 4) for k in range(3)])
    own_visits: list[dict] = field(default_factory=lambda: [defaultdict(int) for _ in range(3)])


def run_episode(
    world: GoalWorld,
    agents: list[GSAgent],
    params: GoalSearchParams,
    noise: EpisodeNoise,
    episode: int = 0,
    fusion: bool = True,
    runs: np.ndarray | None = None,
) -> list[int]:
    """Play one joint episode in place; returns the steps each agent took."""
    runs = world.free_runs() if runs is None else runs
    goal = world.goal_center
    lp = LearningParams(params.learning_rate, params.discount)
    eps = params.epsilon(episode)
    L = params.move_length
    pos = [tuple(int(v) for v in p) for p in noise.starts]
    active = [not world.in_goal(*p) for p in pos]
    steps = [0, 0, 0]
    t = 0
    while any(active) and t < params.step_cap:
        for j, agent in enumerate(agents):
            if not active[j]:
                continue
            x, y = pos[j]
            area = world.area_of(x, y)
            s = gs_state((x, y), goal, params.abstraction)
            if noise.explore[t, j] < eps:
                a = int(noise.random[t, j])
            else:
                a = agent.tables[area].greedy(s)
            if runs[a, x, y] >= L:
                x, y = x + L * int(_STEP[a, 0]), y + L * int(_STEP[a, 1])
            done = world.in_goal(x, y)
            nxt = world.area_of(x, y)
            s2 = None if done else gs_state((x, y), goal, params.abstraction)
            q_update(agent.tables[area], s, a, params.goal_reward if done else params.step_reward, s2, lp, agent.tables[nxt])
            agent.own_visits[area][(s, a)] += 1
            pos[j] = (x, y)
            steps[j] += 1
            active[j] = not done
        if fusion:
            for area in range(3):
                fused = fuse_tables([own_snapshot(ag.tables[area], ag.own_visits[area]) for ag in agents])
                for ag in agents:
                    adopt(ag.tables[area], fused)
        t += 1
    return steps


# --- fast engine ----------------------------------------------------------------------

try:  # the kernel is plain Python in numba's subset; compile it when numba is present
    from numba import njit as _njit

    def _compile(fn):
        return _njit(cache=True)(fn)
except ImportError:  # pragma: no cover
    def _compile(fn):
        return fn


@dataclass
class GoalSearchResult:
    steps: np.ndarray  # (trials, episodes, agents)
    fusion: bool

    @property
    def mean_steps(self) -> np.ndarray:
        """(episodes, agents) mean over trials."""
        return self.steps.mean(axis=0)

    def at(self, episode: int, agent: int) -> float:
        """Mean steps of ``agent`` (1-based) at ``episode`` (1-based)."""
        return float(self.mean_steps[episode - 1, agent - 1])

    def report(self, episodes: Sequence[int] = REPORT_EPISODES) -> dict[int, tuple[float, ...]]:
        m = self.mean_steps
        return {e: tuple(float(v) for v in m[e - 1]) for e in episodes if e <= m.shape[0]}

    def to_csv(self, out: TextIO | None = None) -> str:
        buf = out if out is not None else io.StringIO()
        buf.write("# goalsearch curve v1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["episode", "agent", "meanSteps"])
        for e, row in enumerate(self.mean_steps, start=1):
            for a, v in enumerate(row, start=1):
                w.writerow([e, a, repr(float(v))])
        return buf.getvalue() if out is None else ""


class Lookup:
    """Per-cell state index, area and goal flag of a map, plus its free-run table."""

    def __init__(self, world: GoalWorld, params: GoalSearchParams):
        n = world.side
        gx, gy = world.goal_center
        xs, ys = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        ab = params.abstraction
        state = np.empty((n, n), dtype=np.int64)
        # same arithmetic as gs_state, cell by cell
        for x in range(n):
            for y in range(n):
                state[x, y] = state_index(gs_state((x, y), (gx, gy), ab), params)
        self.state = state
        self.area = np.minimum(2, xs // world.area_width).astype(np.int64)
        x1, y1, x2, y2 = world.goal
        self.goal = (xs >= x1) & (xs <= x2) & (ys >= y1) & (ys <= y2)
        self.runs = world.free_runs().astype(np.int64)


def state_index(state: tuple[int, int], params: GoalSearchParams) -> int:
    return (state[0] - 1) * params.angle_bins + (state[1] - 1)


@_compile
def _episode_kernel(Q, N, lut_state, lut_area, lut_goal, runs, starts, explore, randoms,
                    eps, L, cap, lr, gamma, R, C, fusion, steps):
    n_agents = starts.shape[0]
    px = starts[:, 0].copy()
    py = starts[:, 1].copy()
    active = np.empty(n_agents, dtype=np.bool_)
    for j in range(n_agents):
        active[j] = not lut_goal[px[j], py[j]]
        steps[j] = 0
    moved = np.zeros(n_agents, dtype=np.bool_)
    k_area = np.zeros(n_agents, dtype=np.int64)
    k_state = np.zeros(n_agents, dtype=np.int64)
    k_act = np.zeros(n_agents, dtype=np.int64)
    k_new = np.zeros(n_agents)
    fused = np.zeros(n_agents)
    t = 0
    while t < cap:
        any_active = False
        for j in range(n_agents):
            moved[j] = False
            if not active[j]:
                continue
            any_active = True
            g = 0 if fusion else j
            x = px[j]
            y = py[j]
            ar = lut_area[x, y]
            s = lut_state[x, y]
            if explore[t, j] < eps:
                a = randoms[t, j]
            else:
                a = 0
                for b in range(1, 4):
                    if Q[g, ar, s, b] > Q[g, ar, s, a]:
                        a = b
            if runs[a, x, y] >= L:
                if a == 0:
                    y += L
                elif a == 1:
                    y -= L
                elif a == 2:
                    x -= L
                else:
                    x += L
            done = lut_goal[x, y]
            if done:
                target = R + gamma * 0.0
            else:
                ar2 = lut_area[x, y]
                s2 = lut_state[x, y]
                best = Q[g, ar2, s2, 0]
                for b in range(1, 4):
                    if Q[g, ar2, s2, b] > best:
                        best = Q[g, ar2, s2, b]
                target = C + gamma * best
            old = Q[g, ar, s, a]
            new = old + lr * (target - old)
            if not fusion:
                Q[j, ar, s, a] = new
            N[j, ar, s, a] += 1
            moved[j] = True
            k_area[j] = ar
            k_state[j] = s
            k_act[j] = a
            k_new[j] = new
            px[j] = x
            py[j] = y
            steps[j] += 1
            active[j] = not done
        if not any_active:
            break
        if fusion:
            for j in range(n_agents):
                if not moved[j]:
                    continue
                ar = k_area[j]
                s = k_state[j]
                a = k_act[j]
                num = 0.0
                den = 0
                first = 0.0
                seen = False
                same = True
                for i in range(n_agents):
                    n = N[i, ar, s, a]
                    if n == 0:
                        continue
                    if moved[i] and k_area[i] == ar and k_state[i] == s and k_act[i] == a:
                        v = k_new[i]
                    else:
                        v = Q[0, ar, s, a]
                    if not seen:
                        first = v
                        seen = True
                    elif v != first:
                        same = False
                    num += v * n
                    den += n
                fused[j] = first if same else num / den
            for j in range(n_agents):
                if moved[j]:
                    Q[0, k_area[j], k_state[j], k_act[j]] = fused[j]
        t += 1
    return steps


def run_trial(world: GoalWorld, config: TrialConfig, rng: np.random.Generator, lookup: Lookup | None = None) -> np.ndarray:
    """Steps per (episode, agent) for one trial."""
    p = config.params
    look = Lookup(world, p) if lookup is None else lookup
    n_agents = len(world.starts)
    groups = 1 if config.fusion else n_agents
    Q = np.zeros((groups, 3, p.n_states, 4))
    N = np.zeros((n_agents, 3, p.n_states, 4), dtype=np.int64)
    out = np.zeros((config.episodes, n_agents), dtype=np.int64)
    steps = np.zeros(n_agents, dtype=np.int64)
    for e in range(config.episodes):
        noise = EpisodeNoise.draw(rng, world, p.step_cap)
        _episode_kernel(Q, N, look.state, look.area, look.goal, look.runs,
                        noise.starts.astype(np.int64), noise.explore, noise.random.astype(np.int64),
                        p.epsilon(e), p.move_length, p.step_cap, p.learning_rate, p.discount,
                        p.goal_reward, p.step_reward, config.fusion, steps)
        out[e] = steps
    return out


def run_goalsearch_experiment(config: TrialConfig, world: GoalWorld | None = None) -> GoalSearchResult:
    """Independent trials, each seeded from its own child of ``config.seed``.

    With fusion every agent reads one shared table per area: after each
    step's broadcast all agents hold identical values, so only the keys
    updated in that step need re-fusing. Own visit counts are kept per
    agent as the fusion weights.
    """
    world = load_goal_map() if world is None else world
    look = Lookup(world, config.params)
    gens = trial_generators(config.seed, config.trials)
    steps = np.stack([run_trial(world, config, g, look) for g in gens])
    return GoalSearchResult(steps, config.fusion)
