import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.cluster.hierarchy import fcluster, linkage

from herdtransfer.abstraction import AbstractionParams, Behavior
from herdtransfer.agents import (
    AgentConfig,
    AgentState,
    AgentView,
    Herd,
    aggregate_herds,
    agent_step,
    border_cells,
    cluster_herd,
    compute_reward,
    explore_corral_perimeter,
    frame_action,
    heuristic_middle,
    heuristic_rotational,
    legal_moves,
    make_predictor,
    map_action,
    select_target_entrance,
)
from herdtransfer.errors import ConfigurationError, ProtocolError
from herdtransfer.learning import QTable
from herdtransfer.messages import COORDINATOR, Message, MessageKind
from herdtransfer.world import DELTAS, GridMap, MoveAction, WorldState, perceive, step_world

CORRAL = (12, 12, 17, 17)
PARAMS = AbstractionParams(6, 10, 30)


def static(world, grid):
    return world.cows


# --- herds ----------------------------------------------------------------------------

def test_cluster_two_way_split():
    herd = cluster_herd([(0, 0), (1, 0), (10, 10)], 2)
    assert set(herd.members) == {(0, 0), (1, 0)} and herd.gcm == (0.5, 0.0)


def test_cluster_single_and_empty():
    assert cluster_herd([(4, 4)], 3) == Herd(((4, 4),), (4.0, 4.0))
    assert cluster_herd([], 3) is None


def _scipy_clusters(cows, threshold):
    if len(cows) == 1:
        return [set(cows)]
    labels = fcluster(linkage(np.asarray(cows, dtype=float), method="single"), threshold, criterion="distance")
    groups = {}
    for c, lab in zip(cows, labels):
        groups.setdefault(lab, set()).add(c)
    return list(groups.values())


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10**6), threshold=st.sampled_from([1.5, 2.0, 3.0, 4.5]))
def test_cluster_matches_single_linkage_oracle(seed, threshold):
    rng = np.random.default_rng(seed)
    cells = rng.choice(30 * 30, size=30, replace=False)
    cows = [(int(c // 30), int(c % 30)) for c in cells]
    herd = cluster_herd(cows, threshold)
    clusters = _scipy_clusters(cows, threshold)
    biggest = max(len(c) for c in clusters)
    assert set(herd.members) in [c for c in clusters if len(c) == biggest]


def test_aggregate_herds():
    a = Herd.of([(0, 0), (1, 0)])
    b = Herd.of([(5, 5), (6, 5), (7, 5)])
    assert aggregate_herds([a, b]).size == 5
    assert aggregate_herds([a, a]) == a
    c = Herd.of([(1, 0), (9, 9)])
    assert aggregate_herds([a, c]).size == 3
    assert aggregate_herds([None, None]) is None


def test_select_target_entrance():
    assert select_target_entrance([(0, 0), (10, 0)], (8, 0)) == (10, 0)
    assert select_target_entrance([(3, 3)], (50, 50)) == (3, 3)
    assert select_target_entrance([(0, 0), (10, 0)], (5, 0)) == (0, 0)
    with pytest.raises(ConfigurationError):
        select_target_entrance([], (0, 0))


def test_compute_reward_levels():
    grid = GridMap(30, frozenset(), CORRAL)
    outside = tuple((1, i) for i in range(10))
    after = tuple((12 + i, 12) for i in range(4)) + outside[4:]
    before_w, after_w = WorldState(0, outside, (), 0), WorldState(1, after, (), 0)
    assert compute_reward(before_w, after_w, grid) == 40.0
    assert compute_reward(after_w, after_w, grid) == 40.0
    assert compute_reward(before_w, after_w, grid) > compute_reward(before_w, before_w, grid)
    assert compute_reward(before_w, after_w, grid, "delta") == 40.0


# --- corral survey --------------------------------------------------------------------

def _survey(grid, start):
    agent = AgentState(0, grid.side, grid.corral, detector=True)
    world = WorldState(0, ((0, 0),), (start,), 0)
    dones = 0
    for _ in range(400):
        percept = perceive(world, grid, 0)
        action, entrances, done = explore_corral_perimeter(agent, percept)
        if done:
            dones += 1
            return entrances, dones
        world = WorldState(world.step + 1, world.cows, (tuple(np.add(world.agents[0], DELTAS[action])),), 0)
    raise AssertionError("walk never completed")


def test_perimeter_without_obstacles_finds_every_border_cell():
    grid = GridMap(30, frozenset(), CORRAL)
    entrances, dones = _survey(grid, (5, 5))
    assert sorted(entrances) == sorted(border_cells(CORRAL)) and dones == 1


def test_perimeter_excludes_cell_behind_obstacle():
    grid = GridMap(30, frozenset({(18, 14)}), CORRAL)
    entrances, _ = _survey(grid, (25, 25))
    assert (17, 14) not in entrances
    assert set(entrances) == set(border_cells(CORRAL)) - {(17, 14)}


def test_only_detector_walks():
    grid = GridMap(30, frozenset(), CORRAL)
    percept = perceive(WorldState(0, ((0, 0),), ((5, 5),), 0), grid, 0)
    with pytest.raises(ProtocolError):
        explore_corral_perimeter(AgentState(0, 30, CORRAL), percept)


def test_legal_moves_stay_in_bounds():
    grid = GridMap(30, frozenset({(1, 1)}), CORRAL)
    percept = perceive(WorldState(0, ((0, 1),), ((0, 0),), 0), grid, 0)
    assert legal_moves(percept, 30) == [MoveAction.SKIP, MoveAction.EAST]


# --- action mapping -------------------------------------------------------------------

def _view(position, cows, target, grid=None):
    grid = grid or GridMap(30, frozenset(), CORRAL)
    return AgentView(position, (), tuple(cows), tuple(range(len(cows))), target, grid)


def test_zero_intended_change_with_static_cows_is_skip():
    view = _view((5, 5), [(8, 8), (9, 8)], (12, 14))
    assert map_action(MoveAction.NORTH, view, PARAMS, static, intended=(0.0, 0.0, 0.0)) is MoveAction.SKIP


def test_legal_denoted_move_is_returned():
    view = _view((5, 5), [(8, 8), (9, 8)], (12, 14))
    predictor = make_predictor()
    for a in MoveAction:
        assert map_action(a, view, PARAMS, predictor) is frame_action(a, view)


def _mirror(c, side=30):
    return (side - 1 - c[0], c[1])


def test_mirrored_scene_gives_mirrored_move():
    grid = GridMap(30, frozenset(), CORRAL)
    mgrid = GridMap(30, frozenset(), (12, 12, 17, 17))  # symmetric about x = 14.5
    cows = [(7, 20), (8, 21), (8, 20)]
    view = _view((4, 23), cows, (12, 17), grid)
    mview = _view(_mirror((4, 23)), [_mirror(c) for c in cows], _mirror((12, 17)), mgrid)
    predictor = make_predictor()
    for abstract in MoveAction:
        got = DELTAS[map_action(abstract, view, PARAMS, predictor)]
        mgot = DELTAS[map_action(abstract, mview, PARAMS, predictor)]
        assert mgot == (-got[0], got[1])


def test_never_maps_out_of_bounds():
    grid = GridMap(30, frozenset(), CORRAL)
    view = _view((0, 10), [(3, 10), (3, 11)], (12, 14), grid)
    predictor = make_predictor()
    for abstract in MoveAction:
        dx, dy = DELTAS[map_action(abstract, view, PARAMS, predictor)]
        assert grid.in_bounds((dx, 10 + dy))


# --- heuristics -----------------------------------------------------------------------

def _arc_oracle(agent, gcm, target):
    """Move keeping the distance to the GCM while turning fastest towards the far side."""
    post_angle = math.atan2(gcm[1] - target[1], gcm[0] - target[0])
    best = None
    rho = math.dist(agent, gcm)
    for a in list(MoveAction)[1:]:
        nx, ny = agent[0] + DELTAS[a][0], agent[1] + DELTAS[a][1]
        if math.hypot(nx - gcm[0], ny - gcm[1]) < rho - 1.0 - 1e-9:
            continue
        ang = math.atan2(ny - gcm[1], nx - gcm[0])
        gap = abs((ang - post_angle + math.pi) % (2 * math.pi) - math.pi)
        score = (round(gap, 9), abs(math.hypot(nx - gcm[0], ny - gcm[1]) - rho))
        if best is None or score < best[0]:
            best = (score, a)
    return best[1]


def test_rotational_heuristic_arcs_westward():
    herd = Herd(((0, 0),), (0.0, 0.0))
    got = heuristic_rotational((0, 10), herd, (10, 0))
    assert got in (MoveAction.WEST, MoveAction.NORTHWEST)
    assert got is MoveAction.WEST
    assert DELTAS[_arc_oracle((0, 10), (0, 0), (10, 0))][0] == -1


def test_rotational_heuristic_at_post_and_degenerate():
    herd = Herd(((0, 0),), (0.0, 0.0))
    assert heuristic_rotational((-10, 0), herd, (10, 0)) is MoveAction.SKIP
    assert heuristic_rotational((3, 4), herd, (0, 0)) is MoveAction.SKIP


@pytest.mark.parametrize("target,expected", [
    ((10, 0), MoveAction.EAST), ((10, 10), MoveAction.NORTHEAST), ((0, 0), MoveAction.SKIP),
])
def test_middle_heuristic(target, expected):
    herd = Herd(((0, 0),), (0.0, 0.0))
    assert heuristic_middle((-3, 0), herd, target) is expected


# --- agent step -----------------------------------------------------------------------

def _config(**kw):
    return AgentConfig(PARAMS, **kw)


def test_first_step_sends_one_coordinate_and_skips():
    grid = GridMap(30, frozenset(), CORRAL)
    world = WorldState(1, ((2, 2),), ((5, 5),), 0)
    agent = AgentState(0, 30, CORRAL)
    action, outbox, agent = agent_step(agent, perceive(world, grid, 0), [], _config())
    assert action is MoveAction.SKIP
    assert [m.kind for m in outbox] == [MessageKind.COORDINATE] and outbox[0].to == COORDINATOR
    _, outbox, _ = agent_step(agent, perceive(world, grid, 0), [], _config())
    assert MessageKind.COORDINATE not in [m.kind for m in outbox]


def test_detector_walks_without_messages():
    grid = GridMap(30, frozenset(), CORRAL)
    world = WorldState(2, ((2, 2),), ((5, 5),), 0)
    agent = AgentState(0, 30, CORRAL, coordinated=True)
    notify = Message(MessageKind.CLOSER_NOTIFY, COORDINATOR, 1, 0, {})
    action, outbox, agent = agent_step(agent, perceive(world, grid, 0), [notify], _config())
    assert agent.detector and outbox == [] and action is not MoveAction.SKIP


def test_cooperation_is_sent_once_per_ally():
    grid = GridMap(30, frozenset(), CORRAL)
    agent = AgentState(0, 30, CORRAL, coordinated=True, entrances=border_cells(CORRAL))
    sent = []
    world = WorldState(5, ((8, 8), (9, 8)), ((5, 5), (6, 6)), 0)
    for step in range(5, 8):
        world = WorldState(step, world.cows, world.agents, 0)
        _, outbox, agent = agent_step(agent, perceive(world, grid, 0), [], _config())
        sent += [m for m in outbox if m.kind is MessageKind.COOPERATION]
    assert len(sent) == 1 and sent[0].to == 1


def test_unknown_inbox_message_is_protocol_error():
    grid = GridMap(30, frozenset(), CORRAL)
    world = WorldState(1, ((2, 2),), ((5, 5),), 0)
    bogus = Message(MessageKind.QTABLE_SHARE, 1, 0, COORDINATOR,
                    {"behavior": Behavior.SOLO_HERDING, "table": QTable(Behavior.SOLO_HERDING)})
    with pytest.raises(ProtocolError):
        agent_step(AgentState(0, 30, CORRAL), perceive(world, grid, 0), [bogus], _config())


def test_agent_step_is_deterministic():
    grid = GridMap(30, frozenset(), CORRAL)
    results = []
    for _ in range(2):
        agent = AgentState(0, 30, CORRAL, coordinated=True, entrances=border_cells(CORRAL))
        world = WorldState(0, ((8, 8), (9, 8), (9, 9)), ((5, 5),), 3)
        actions = []
        for _ in range(30):
            action, _, agent = agent_step(agent, perceive(world, grid, 0), [], _config())
            world = step_world(world, grid, [action])
            actions.append(action)
        results.append(actions)
    assert results[0] == results[1]
