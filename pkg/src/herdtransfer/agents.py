"""Player agents: corral survey, herd detection, behavior-specific Q-learning,
action mapping of shared knowledge, and the two steering heuristics."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .abstraction import (
    AbstractionParams,
    AbstractState,
    Behavior,
    HerdFrame,
    Zone,
    abstract_joint_action,
    canonical_action,
    decompose_behavior,
    entrance_side,
    group_state,
    nearest_direction,
    solo_state,
    state_features,
    vertex_angle,
    zone_of,
)
from .errors import ConfigurationError, ProtocolError
from .learning import LearningParams, QTable, is_exploring, own_snapshot, adopt, q_update
from .messages import COORDINATOR, Message, MessageKind
from .world import (
    DEFAULT_COW_PARAMS,
    DELTAS,
    Cell,
    CowParams,
    GridMap,
    MoveAction,
    Percept,
    Rect,
    WorldState,
    success_percent,
    update_cows,
)

Point = tuple[float, float]
Predictor = Callable[[WorldState, GridMap], Sequence[Cell]]


@dataclass(frozen=True)
class AgentConfig:
    abstraction: AbstractionParams
    learning: LearningParams = field(default_factory=LearningParams)
    cow_params: CowParams = DEFAULT_COW_PARAMS
    proximity_threshold: float = 3.0
    heuristics: bool = False
    reward_mode: str = "level"
    threshold: float = 120.0
    hysteresis: float = 10.0
    dissolve_after: int = 5
    seed: int = 0
    record_decisions: bool = False

    def __post_init__(self) -> None:
        if self.reward_mode not in ("level", "delta"):
            raise ConfigurationError(f"reward_mode must be 'level' or 'delta', got {self.reward_mode!r}")
        if self.proximity_threshold <= 0:
            raise ConfigurationError("proximity_threshold must be positive")


# --- herds ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Herd:
    members: tuple[Cell, ...]
    gcm: Point

    @property
    def size(self) -> int:
        return len(self.members)

    @classmethod
    def of(cls, members: Sequence[Cell]) -> Herd:
        members = tuple(members)
        n = len(members)
        return cls(members, (sum(c[0] for c in members) / n, sum(c[1] for c in members) / n))


def cluster_herd(cows: Sequence[Cell], threshold: float, agent: Point | None = None) -> Herd | None:
    """Single-linkage clusters (Euclidean distance <= threshold); returns the most populous.

    Ties go to the cluster whose GCM is nearest ``agent``, then to the one
    holding the lowest cow index. ``None`` when no cow is in sight.
    """
    n = len(cows)
    if n == 0:
        return None
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    t2 = threshold * threshold
    for i in range(n):
        xi, yi = cows[i]
        for j in range(i + 1, n):
            dx, dy = cows[j][0] - xi, cows[j][1] - yi
            if dx * dx + dy * dy <= t2:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = defaultdict(list)
    for i in range(n):
        groups[find(i)].append(i)

    def rank(idx: list[int]) -> tuple:
        herd = Herd.of([cows[i] for i in idx])
        near = 0.0 if agent is None else math.hypot(herd.gcm[0] - agent[0], herd.gcm[1] - agent[1])
        return (-len(idx), near, idx[0])

    best = min(groups.values(), key=rank)
    return Herd.of([cows[i] for i in best])


def aggregate_herds(herds: Sequence[Herd | None]) -> Herd | None:
    members: dict[Cell, None] = {}
    for h in herds:
        if h is not None:
            for c in h.members:
                members.setdefault(tuple(c), None)
    if not members:
        return None
    return Herd.of(list(members))


def select_target_entrance(entrances: Sequence[Cell], gcm: Point) -> Cell:
    if not entrances:
        raise ConfigurationError("no corral entrances known (detection incomplete)")
    best = min(range(len(entrances)), key=lambda i: (math.hypot(entrances[i][0] - gcm[0], entrances[i][1] - gcm[1]), i))
    return tuple(entrances[best])


def compute_reward(before: WorldState, after: WorldState, grid: GridMap, mode: str = "level") -> float:
    level = success_percent(after, grid)
    if mode == "delta":
        return level - success_percent(before, grid)
    return level


# --- corral survey --------------------------------------------------------------------

def ring_cells(corral: Rect) -> list[Cell]:
    """Cells just outside the corral, clockwise from the north-west corner."""
    x1, y1, x2, y2 = corral
    top = [(x, y2 + 1) for x in range(x1 - 1, x2 + 2)]
    right = [(x2 + 1, y) for y in range(y2, y1 - 2, -1)]
    bottom = [(x, y1 - 1) for x in range(x2, x1 - 2, -1)]
    left = [(x1 - 1, y) for y in range(y1, y2 + 1)]
    return top + right + bottom + left


def border_cells(corral: Rect) -> list[Cell]:
    """Corral cells on its border, clockwise from the north-west corner."""
    x1, y1, x2, y2 = corral
    if x1 == x2 or y1 == y2:
        cells = [(x, y) for x in range(x1, x2 + 1) for y in range(y1, y2 + 1)]
        return sorted(cells, key=lambda c: (-c[1], c[0]))
    top = [(x, y2) for x in range(x1, x2 + 1)]
    right = [(x2, y) for y in range(y2 - 1, y1 - 1, -1)]
    bottom = [(x, y1) for x in range(x2 - 1, x1 - 1, -1)]
    left = [(x1, y) for y in range(y1 + 1, y2)]
    return top + right + bottom + left


def outside_neighbor(corral: Rect, cell: Cell) -> Cell:
    side = entrance_side(corral, cell)
    x, y = cell
    return {"left": (x - 1, y), "right": (x + 1, y), "bottom": (x, y - 1), "top": (x, y + 1)}[side]


@dataclass
class PerimeterWalk:
    waypoints: list[Cell]
    index: int = 0
    stuck: int = 0
    steps: int = 0
    last_position: Cell | None = None
    seen: dict[Cell, bool] = field(default_factory=dict)

    @classmethod
    def start(cls, corral: Rect, position: Cell) -> PerimeterWalk:
        ring = ring_cells(corral)
        entry = min(range(len(ring)), key=lambda i: (math.hypot(ring[i][0] - position[0], ring[i][1] - position[1]), i))
        return cls(ring[entry:] + ring[:entry] + [ring[entry]])

    def entrances(self, corral: Rect) -> list[Cell]:
        return [c for c in border_cells(corral) if self.seen.get(c)]


def _occupied(percept: Percept) -> set[Cell]:
    return set(percept.cows) | {p for i, p in percept.agents.items() if i != percept.agent_id}


def legal_moves(percept: Percept, side: int, obstacles: set[Cell] | frozenset[Cell] | None = None) -> list[MoveAction]:
    """Moves that stay in bounds and avoid obstacles and visible entities (SKIP always included)."""
    blocked = _occupied(percept) | (percept.obstacles if obstacles is None else obstacles)
    x, y = percept.position
    out = [MoveAction.SKIP]
    for a in list(MoveAction)[1:]:
        dx, dy = DELTAS[a]
        c = (x + dx, y + dy)
        if 0 <= c[0] < side and 0 <= c[1] < side and c not in blocked:
            out.append(a)
    return out


def explore_corral_perimeter(agent: AgentState, percept: Percept) -> tuple[MoveAction, list[Cell], bool]:
    """One step of the detector's lap around the corral.

    Returns the move, the entrances recorded so far and whether the lap is
    complete. Waypoints on obstacles, or that cannot be reached within three
    steps, are skipped.
    """
    if not agent.detector:
        raise ProtocolError(f"agent {agent.id} is not the entrance detector")
    corral = agent.corral
    walk = agent.walk
    if walk is None:
        walk = agent.walk = PerimeterWalk.start(corral, percept.position)
    for b in border_cells(corral):
        o = outside_neighbor(corral, b)
        if percept.contains(o):
            walk.seen[b] = o not in percept.obstacles

    pos = percept.position
    walk.stuck = walk.stuck + 1 if walk.last_position == pos else 0
    walk.last_position = pos
    walk.steps += 1
    while walk.index < len(walk.waypoints):
        wp = walk.waypoints[walk.index]
        if wp == pos or wp in percept.obstacles or walk.stuck >= 3:
            walk.index += 1
            walk.stuck = 0
            continue
        break
    if walk.index >= len(walk.waypoints) or walk.steps > 8 * len(walk.waypoints):
        return MoveAction.SKIP, walk.entrances(corral), True

    wp = walk.waypoints[walk.index]
    moves = legal_moves(percept, agent.side)
    best = min(moves, key=lambda a: (math.hypot(pos[0] + DELTAS[a][0] - wp[0], pos[1] + DELTAS[a][1] - wp[1]), int(a)))
    return best, walk.entrances(corral), False


# --- action mapping -------------------------------------------------------------------

@dataclass(frozen=True)
class AgentView:
    """What an agent knows when mapping an action: its cell, visible entities and the target."""

    position: Cell
    allies: tuple[Cell, ...]
    cows: tuple[Cell, ...]
    herd: tuple[int, ...]  # indices into ``cows`` forming the targeted herd
    target: Point
    grid: GridMap
    step: int = 0

    @property
    def gcm(self) -> Point:
        xs = [self.cows[i][0] for i in self.herd]
        ys = [self.cows[i][1] for i in self.herd]
        return (sum(xs) / len(xs), sum(ys) / len(ys))


def frame_action(abstract: MoveAction | int, view: AgentView) -> MoveAction:
    """The concrete move an abstract (canonical-frame) action denotes for this agent."""
    frame = HerdFrame.of(view.position, view.gcm, view.target)
    return nearest_direction(*frame.from_canonical(*DELTAS[int(abstract)]))


def predicted_delta(cell: Cell, view: AgentView, params: AbstractionParams, predictor: Predictor) -> tuple[float, float, float]:
    """Feature change if the agent steps to ``cell`` and the visible cows react per ``predictor``."""
    here = state_features(view.position, view.target, view.gcm, params)
    moved = predictor(WorldState(view.step, view.cows, (cell, *view.allies)), view.grid)
    herd = [moved[i] for i in view.herd]
    gcm = (sum(c[0] for c in herd) / len(herd), sum(c[1] for c in herd) / len(herd))
    there = state_features(cell, view.target, gcm, params)
    return (there[0] - here[0], there[1] - here[1], there[2] - here[2])


def intended_delta(abstract: MoveAction | int, view: AgentView, params: AbstractionParams, predictor: Predictor) -> tuple[float, float, float]:
    """Predicted feature change of the abstract action's geometric effect in this agent's frame."""
    dx, dy = DELTAS[frame_action(abstract, view)]
    return predicted_delta((view.position[0] + dx, view.position[1] + dy), view, params, predictor)


def map_action(
    abstract: MoveAction | int,
    view: AgentView,
    params: AbstractionParams,
    predictor: Predictor,
    intended: tuple[float, float, float] | None = None,
) -> MoveAction:
    """Concrete move whose predicted state change is L1-closest to the intended one.

    Each legal candidate is simulated for one step with ``predictor``
    moving the visible cows; ties go to the lowest action index. When the
    move the abstract action denotes is legal it matches exactly; otherwise
    the nearest legal substitute is chosen.
    """
    x, y = view.position
    occupied = set(view.cows) | set(view.allies)
    deltas: dict[MoveAction, tuple[float, float, float]] = {}
    for a in MoveAction:
        dx, dy = DELTAS[a]
        cell = (x + dx, y + dy)
        if a is not MoveAction.SKIP:
            if not view.grid.in_bounds(cell) or cell in view.grid.obstacles or cell in occupied:
                continue
        deltas[a] = predicted_delta(cell, view, params, predictor)
    if intended is None:
        own = frame_action(abstract, view)
        intended = deltas[own] if own in deltas else intended_delta(abstract, view, params, predictor)
    best, best_cost = MoveAction.SKIP, math.inf
    for a, d in deltas.items():
        cost = sum(abs(d[k] - intended[k]) for k in range(3))
        if cost < best_cost - 1e-12:
            best, best_cost = a, cost
    return best


def make_predictor(params: CowParams = DEFAULT_COW_PARAMS) -> Predictor:
    """The cow model with its random rule off, as used to anticipate the herd."""
    deterministic = params.deterministic()

    def predict(world: WorldState, grid: GridMap) -> Sequence[Cell]:
        return update_cows(world, grid, deterministic)

    return predict


# --- heuristics -----------------------------------------------------------------------

def _angle_of(vx: float, vy: float) -> float:
    return math.degrees(math.atan2(vy, vx))


def _gap(a: float, b: float) -> float:
    g = abs(a - b) % 360.0
    return min(g, 360.0 - g)


def _legal_or_all(legal: Sequence[MoveAction] | None) -> list[MoveAction]:
    return list(MoveAction) if legal is None else list(legal)


def heuristic_middle(agent: Cell, herd: Herd, target: Point, legal: Sequence[MoveAction] | None = None) -> MoveAction:
    """Move along the GCM-to-target direction."""
    tx, ty = target[0] - herd.gcm[0], target[1] - herd.gcm[1]
    if tx == 0 and ty == 0:
        return MoveAction.SKIP
    heading = _angle_of(tx, ty)
    moves = [a for a in _legal_or_all(legal) if a is not MoveAction.SKIP]
    if not moves:
        return MoveAction.SKIP
    return min(moves, key=lambda a: (_gap(_angle_of(*DELTAS[a]), heading), int(a)))


def heuristic_rotational(agent: Cell, herd: Herd, target: Point, legal: Sequence[MoveAction] | None = None) -> MoveAction:
    """Circle the herd at the current radius towards the post behind it.

    The post is the point opposite the target at the agent's current GCM
    distance. The agent moves tangentially in the shorter rotation sense and
    never steps more than one cell closer to the GCM.
    """
    gx, gy = herd.gcm
    tx, ty = target[0] - gx, target[1] - gy
    tnorm = math.hypot(tx, ty)
    if tnorm == 0:
        return MoveAction.SKIP
    ax, ay = agent[0] - gx, agent[1] - gy
    rho = math.hypot(ax, ay)
    moves = [a for a in _legal_or_all(legal) if a is not MoveAction.SKIP]
    if rho == 0:
        heading = _angle_of(-tx, -ty)
    else:
        post = (gx - rho * tx / tnorm, gy - rho * ty / tnorm)
        if math.hypot(agent[0] - post[0], agent[1] - post[1]) < 1.0:
            return MoveAction.SKIP
        gap = (_angle_of(post[0] - gx, post[1] - gy) - _angle_of(ax, ay) + 180.0) % 360.0 - 180.0
        sense = -1.0 if gap < 0 else 1.0
        heading = _angle_of(-sense * ay, sense * ax)
        moves = [
            a for a in moves
            if math.hypot(ax + DELTAS[a][0], ay + DELTAS[a][1]) >= rho - 1.0 - 1e-9
        ]
    if not moves:
        return MoveAction.SKIP
    return min(moves, key=lambda a: (_gap(_angle_of(*DELTAS[a]), heading), int(a)))


# --- agent state and step -------------------------------------------------------------

@dataclass
class Transition:
    behavior: Behavior
    state: AbstractState
    action: MoveAction
    gcm: Point
    target: Point
    members: dict[int, Cell]  # positions of group members (self included) at decision time


@dataclass
class Decision:
    step: int
    behavior: Behavior | None
    source: str  # 'coordinate', 'survey', 'wander', 'explore', 'greedy', 'rotational', 'middle'
    action: MoveAction


def _fresh_tables() -> dict[Behavior, QTable]:
    return {b: QTable(b) for b in Behavior}


@dataclass
class AgentState:
    id: int
    side: int
    corral: Rect
    detector: bool = False
    coordinated: bool = False
    entrances: list[Cell] = field(default_factory=list)
    tables: dict[Behavior, QTable] = field(default_factory=_fresh_tables)
    own_visits: dict[Behavior, dict] = field(default_factory=lambda: {b: defaultdict(int) for b in Behavior})
    last_transition: Transition | None = None
    cooperation_sent: set[int] = field(default_factory=set)
    partners: set[int] = field(default_factory=set)
    group_members: set[int] = field(default_factory=set)
    last_seen: dict[int, int] = field(default_factory=dict)
    ally_positions: dict[int, Cell] = field(default_factory=dict)
    known_obstacles: set[Cell] = field(default_factory=set)
    walk: PerimeterWalk | None = None
    behavior: Behavior | None = None
    updated_behavior: Behavior | None = None
    update_count: int = 0
    previous_level: float = 0.0
    pending_herds: list[Herd] = field(default_factory=list)
    decisions: list[Decision] = field(default_factory=list)
    _known_grid: GridMap | None = field(default=None, repr=False)

    def known_grid(self) -> GridMap:
        if self._known_grid is None or len(self._known_grid.obstacles) != len(self.known_obstacles):
            self._known_grid = GridMap(self.side, frozenset(self.known_obstacles), self.corral)
        return self._known_grid


def _receive(agent: AgentState, msg: Message) -> None:
    kind = msg.kind
    if kind is MessageKind.CLOSER_NOTIFY:
        agent.detector = True
    elif kind is MessageKind.ENTRANCES_BROADCAST:
        agent.entrances = [tuple(c) for c in msg.payload["entrances"]]
    elif kind is MessageKind.FUSED_TABLES_BROADCAST:
        for behavior, fused in msg.payload["tables"].items():
            adopt(agent.tables[behavior], fused)
    elif kind is MessageKind.COOPERATION:
        agent.partners.add(msg.sender)
        herd = msg.payload["herd"]
        if herd:
            agent.pending_herds.append(Herd.of(herd))
    else:
        raise ProtocolError(f"agent {agent.id} cannot handle {kind.value!r} messages")


def share_message(agent: AgentState, step: int) -> Message:
    """The agent's per-step table share: the table it last updated, weighted by its own visits."""
    behavior = agent.updated_behavior or agent.behavior or Behavior.SOLO_TRANSFERRING
    snapshot = own_snapshot(agent.tables[behavior], agent.own_visits[behavior])
    return Message(MessageKind.QTABLE_SHARE, agent.id, step, COORDINATOR, {"behavior": behavior, "table": snapshot})


def _note(agent: AgentState, config: AgentConfig, step: int, behavior: Behavior | None, source: str, action: MoveAction) -> MoveAction:
    if config.record_decisions:
        agent.decisions.append(Decision(step, behavior, source, action))
    return action


def agent_step(
    agent: AgentState,
    percept: Percept,
    inbox: Sequence[Message],
    config: AgentConfig,
) -> tuple[MoveAction, list[Message], AgentState]:
    """One perceive-act cycle of a player agent."""
    outbox: list[Message] = []
    for msg in inbox:
        _receive(agent, msg)
    step = percept.step
    agent.known_obstacles |= percept.obstacles
    for ally, pos in percept.agents.items():
        if ally != agent.id:
            agent.last_seen[ally] = step
            agent.ally_positions[ally] = pos
    agent.updated_behavior = None
    rng = np.random.default_rng([config.seed, agent.id, step])

    if not agent.coordinated:
        agent.coordinated = True
        outbox.append(Message(MessageKind.COORDINATE, agent.id, step, COORDINATOR, {"position": percept.position}))
        return _note(agent, config, step, None, "coordinate", MoveAction.SKIP), outbox, agent

    if agent.detector:
        action, entrances, done = explore_corral_perimeter(agent, percept)
        if done:
            agent.detector = False
            agent.walk = None
            outbox.append(Message(MessageKind.ENTRANCES_REPORT, agent.id, step, COORDINATOR, {"entrances": entrances}))
        return _note(agent, config, step, None, "survey", action), outbox, agent

    if not agent.entrances:
        return _note(agent, config, step, None, "wander", _random_legal(rng, percept, agent.side)), outbox, agent

    action = _learning_step(agent, percept, config, rng, outbox)
    return action, outbox, agent


def _random_legal(rng: np.random.Generator, percept: Percept, side: int) -> MoveAction:
    a = MoveAction(int(rng.integers(9)))
    return a if a in legal_moves(percept, side) else MoveAction.SKIP


def _finish_transition(agent: AgentState, percept: Percept, reward: float, next_state: AbstractState | None,
                       next_behavior: Behavior | None, params: LearningParams) -> None:
    lt = agent.last_transition
    if lt is None:
        return
    action = lt.action
    if lt.behavior.is_group:
        moves = []
        for member, before in lt.members.items():
            now = percept.position if member == agent.id else percept.agents.get(member)
            if now is None:
                moves.append(MoveAction.SKIP)
                continue
            dx, dy = now[0] - before[0], now[1] - before[1]
            moves.append(nearest_direction(*HerdFrame.of(before, lt.gcm, lt.target).to_canonical(dx, dy)))
        action = abstract_joint_action(moves)
    table = agent.tables[lt.behavior]
    bootstrap = agent.tables[next_behavior] if next_behavior is not None else None
    q_update(table, lt.state, int(action), reward, next_state, params, bootstrap)
    agent.own_visits[lt.behavior][(lt.state, int(action))] += 1
    agent.updated_behavior = lt.behavior
    agent.update_count += 1
    agent.last_transition = None


def _learning_step(agent: AgentState, percept: Percept, config: AgentConfig, rng: np.random.Generator,
                   outbox: list[Message]) -> MoveAction:
    step = percept.step
    pos = percept.position
    params = config.abstraction
    grid = agent.known_grid()

    level = 0.0 if percept.reward is None else percept.reward
    reward = level - agent.previous_level if config.reward_mode == "delta" else level
    agent.previous_level = level

    free_cows = [c for c in percept.cows if not grid.in_corral(c)]
    herd = cluster_herd(free_cows, config.proximity_threshold, pos)
    if agent.pending_herds:
        herd = aggregate_herds([herd, *agent.pending_herds])
        agent.pending_herds.clear()

    allies = [i for i in percept.agents if i != agent.id]
    for ally in allies:
        if ally not in agent.cooperation_sent:
            agent.cooperation_sent.add(ally)
            agent.partners.add(ally)
            outbox.append(Message(
                MessageKind.COOPERATION, agent.id, step, ally,
                {"invited": (ally,), "herd": None if herd is None else herd.members},
            ))
    agent.group_members = {
        p for p in agent.partners if step - agent.last_seen.get(p, -10**9) < config.dissolve_after
    }

    if herd is None:
        _finish_transition(agent, percept, reward, None, None, config.learning)
        agent.behavior = None
        return _note(agent, config, step, None, "wander", _random_legal(rng, percept, agent.side))

    target = select_target_entrance(agent.entrances, herd.gcm)
    members = {agent.id: pos}
    for m in sorted(agent.group_members):
        members[m] = agent.ally_positions[m]
    points = [members[m] for m in sorted(members)]
    if len(points) >= 2:
        centre = (sum(p[0] for p in points) / len(points), sum(p[1] for p in points) / len(points))
        angle = sum(vertex_angle(p, herd.gcm, target) for p in points) / len(points)
        state = group_state(points, target, herd.gcm, params)
    else:
        centre = pos
        angle = vertex_angle(pos, herd.gcm, target)
        state = solo_state(pos, target, herd.gcm, params)
    in_a = zone_of(herd.gcm, grid, target) is Zone.A and zone_of(centre, grid, target) is Zone.A
    behavior = decompose_behavior(len(points), Zone.A if in_a else Zone.B, min(180.0, angle),
                                  agent.behavior, config.threshold, config.hysteresis)

    _finish_transition(agent, percept, reward, state, behavior, config.learning)

    explore = is_exploring(step, config.learning, rng)
    random_action = MoveAction(int(rng.integers(9)))
    legal = legal_moves(percept, agent.side, agent.known_obstacles)
    frame = HerdFrame.of(pos, herd.gcm, target)
    if config.heuristics and behavior.is_following:
        concrete, source = heuristic_rotational(pos, herd, target, legal), "rotational"
        abstract = canonical_action(concrete, frame)
    elif config.heuristics and behavior.is_herding:
        concrete, source = heuristic_middle(pos, herd, target, legal), "middle"
        abstract = canonical_action(concrete, frame)
    elif explore:
        concrete = random_action if random_action in legal else MoveAction.SKIP
        abstract, source = canonical_action(concrete, frame), "explore"
    else:
        abstract = MoveAction(agent.tables[behavior].greedy(state))
        cows = tuple(percept.cows)
        extra = [c for c in herd.members if c not in set(cows)]
        cows = cows + tuple(extra)
        index = {c: i for i, c in enumerate(cows)}
        view = AgentView(
            position=pos,
            allies=tuple(p for i, p in sorted(percept.agents.items()) if i != agent.id),
            cows=cows,
            herd=tuple(index[c] for c in herd.members),
            target=target,
            grid=grid,
            step=step,
        )
        concrete, source = map_action(abstract, view, params, make_predictor(config.cow_params)), "greedy"

    agent.last_transition = Transition(behavior, state, abstract, herd.gcm, target, members)
    agent.behavior = behavior
    return _note(agent, config, step, behavior, source, concrete)
