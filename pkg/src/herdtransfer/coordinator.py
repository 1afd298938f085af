"""The coordinator: closer-agent election, entrance broadcast and per-behavior
Q-table fusion, plus the deterministic round loop tying agents to the world."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .abstraction import Behavior
from .agents import AgentConfig, AgentState, agent_step, share_message
from .errors import ConfigurationError, ProtocolError
from .learning import QTable, fuse_tables
from .messages import COORDINATOR, EVERYONE, Message, MessageKind
from .world import Cell, GridMap, WorldState, perceive, step_world, success_percent

Point = tuple[float, float]


def is_closer(p1: Sequence[float], p2: Sequence[float], corral_mid: Sequence[float]) -> bool:
    """Strictly closer to the corral centre; ties keep the incumbent."""
    return math.hypot(p1[0] - corral_mid[0], p1[1] - corral_mid[1]) < math.hypot(p2[0] - corral_mid[0], p2[1] - corral_mid[1])


@dataclass
class CoordinatorState:
    n_agents: int
    corral_mid: Point
    counter1: int = 0
    counter2: int = 0
    closer: int = 0
    closer_position: Cell | None = None
    entrances: list[Cell] = field(default_factory=list)
    staged: dict[Behavior, list[QTable]] = field(default_factory=dict)
    shared: set[int] = field(default_factory=set)
    fused_rounds: int = 0
    last_fused: dict[Behavior, QTable] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_agents < 1:
            raise ConfigurationError("the coordinator needs at least one agent")


def handle_message(state: CoordinatorState, msg: Message) -> tuple[CoordinatorState, list[Message]]:
    """Process one message; ``state`` is updated in place and returned."""
    out: list[Message] = []
    kind = msg.kind
    if kind is MessageKind.COORDINATE:
        if state.counter1 >= state.n_agents:
            raise ProtocolError(f"coordinate message from agent {msg.sender} after the election closed")
        position = tuple(msg.payload["position"])
        if state.closer_position is None or is_closer(position, state.closer_position, state.corral_mid):
            state.closer, state.closer_position = msg.sender, position
        state.counter1 += 1
        if state.counter1 == state.n_agents:
            out.append(Message(MessageKind.CLOSER_NOTIFY, COORDINATOR, msg.step, state.closer, {}))
    elif kind is MessageKind.ENTRANCES_REPORT:
        state.entrances = [tuple(c) for c in msg.payload["entrances"]]
        out.append(Message(MessageKind.ENTRANCES_BROADCAST, COORDINATOR, msg.step, EVERYONE,
                           {"entrances": list(state.entrances)}))
    elif kind is MessageKind.QTABLE_SHARE:
        if msg.sender in state.shared:
            raise ProtocolError(f"agent {msg.sender} already shared a table this round")
        state.shared.add(msg.sender)
        state.staged.setdefault(msg.payload["behavior"], []).append(msg.payload["table"])
        state.counter2 += 1
        if state.counter2 == state.n_agents:
            fused = {b: fuse_tables(state.staged[b]) for b in Behavior if b in state.staged}
            out.append(Message(MessageKind.FUSED_TABLES_BROADCAST, COORDINATOR, msg.step, EVERYONE, {"tables": fused}))
            state.last_fused = fused
            state.fused_rounds += 1
            state.counter2 = 0
            state.staged = {}
            state.shared = set()
    else:
        raise ProtocolError(f"the coordinator cannot handle {kind.value!r} messages")
    return state, out


def state_text(state: CoordinatorState) -> str:
    """Canonical text of the coordinator state (floats in repr form, so equal text means equal bits)."""
    def rows(table: QTable) -> list:
        return sorted([list(s) + [a, repr(q), m] for (s, a), (q, m) in table.items()])

    return json.dumps({
        "n_agents": state.n_agents,
        "corral_mid": [repr(float(v)) for v in state.corral_mid],
        "counter1": state.counter1,
        "counter2": state.counter2,
        "closer": state.closer,
        "closer_position": None if state.closer_position is None else list(state.closer_position),
        "entrances": [list(c) for c in state.entrances],
        "staged": {b.value: [rows(t) for t in ts] for b, ts in sorted(state.staged.items(), key=lambda kv: kv[0].value)},
        "shared": sorted(state.shared),
        "fused_rounds": state.fused_rounds,
        "last_fused": {b.value: rows(t) for b, t in sorted(state.last_fused.items(), key=lambda kv: kv[0].value)},
    }, sort_keys=True, separators=(",", ":"))


def replay(messages: Iterable[Message], n_agents: int, corral_mid: Point) -> CoordinatorState:
    """Rebuild coordinator state from a logged trace (only coordinator-bound messages are used)."""
    state = CoordinatorState(n_agents, corral_mid)
    for msg in messages:
        if msg.to == COORDINATOR:
            handle_message(state, msg)
    return state


# --- round loop -----------------------------------------------------------------------

@dataclass
class Simulation:
    grid: GridMap
    world: WorldState
    agents: list[AgentState]
    coordinator: CoordinatorState
    config: AgentConfig
    transfer: bool = True
    fusion_period: int = 1
    sight: int = 8
    pending: list[Message] = field(default_factory=list)
    trace: list[Message] | None = None

    @classmethod
    def create(cls, grid: GridMap, world: WorldState, config: AgentConfig, transfer: bool = True,
               fusion_period: int = 1, record_trace: bool = False, sight: int = 8) -> Simulation:
        if fusion_period < 1:
            raise ConfigurationError(f"fusion_period must be >= 1, got {fusion_period}")
        n = len(world.agents)
        agents = [AgentState(i, grid.side, grid.corral) for i in range(n)]
        return cls(grid, world, agents, CoordinatorState(n, grid.corral_mid), config, transfer, fusion_period,
                   sight, trace=[] if record_trace else None)

    def success(self) -> float:
        return success_percent(self.world, self.grid)


def _inboxes(pending: Sequence[Message], n: int) -> list[list[Message]]:
    boxes: list[list[Message]] = [[] for _ in range(n)]
    for msg in pending:
        if msg.to == EVERYONE:
            for box in boxes:
                box.append(msg)
        elif 0 <= msg.to < n:
            boxes[msg.to].append(msg)
        else:
            raise ProtocolError(f"message addressed to unknown agent {msg.to}")
    return boxes


def run_round(sim: Simulation) -> Simulation:
    """Advance one global step (``sim`` is updated in place and returned).

    Broadcasts from the previous step are delivered, every agent acts in id
    order, the world advances, agents share their tables (if transfer is on
    and the step falls on the fusion period) and the coordinator processes
    the step's messages ordered by (sender id, emission index).
    """
    n = len(sim.agents)
    step = sim.world.step
    boxes = _inboxes(sim.pending, n)
    sim.pending = []
    level = sim.success()
    actions = []
    emitted: list[list[Message]] = []
    for i, agent in enumerate(sim.agents):
        percept = perceive(sim.world, sim.grid, i, sim.sight, reward=level)
        action, outbox, sim.agents[i] = agent_step(agent, percept, boxes[i], sim.config)
        actions.append(action)
        emitted.append(list(outbox))
    sim.world = step_world(sim.world, sim.grid, actions, sim.config.cow_params)
    if sim.transfer and step % sim.fusion_period == 0:
        for i, agent in enumerate(sim.agents):
            emitted[i].append(share_message(agent, step))

    for i in range(n):
        for msg in emitted[i]:
            if sim.trace is not None:
                sim.trace.append(msg)
            if msg.to != COORDINATOR:
                sim.pending.append(msg)
                continue
            _, out = handle_message(sim.coordinator, msg)
            for reply in out:
                if reply.kind is MessageKind.ENTRANCES_BROADCAST and not reply.payload["entrances"]:
                    raise ConfigurationError("the corral has no entrance reachable from outside")
                if sim.trace is not None:
                    sim.trace.append(reply)
                sim.pending.append(reply)
    return sim


def run(sim: Simulation, steps: int) -> Simulation:
    for _ in range(steps):
        run_round(sim)
    return sim
