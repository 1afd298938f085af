"""State abstraction, zones, behavior decomposition and action abstraction.

An agent's situation is reduced to three coarse bins: distance to the
target entrance, distance to the herd's centre of mass (GCM) and the angle
at the GCM between the agent and the target. Distances are binned with
resolution ``d`` and angles with resolution ``a``; bin counts are
``floor(R*sqrt(2)/d)`` and ``floor(180/a)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

from .errors import DomainError
from .world import DELTAS, GridMap, MoveAction

Point = Sequence[float]

# Guards ceilings against representation error (e.g. 40.000000000000007 / 20).
_EPS = 1e-9


@dataclass(frozen=True)
class AbstractionParams:
    d: float
    a: float
    R: float

    def __post_init__(self) -> None:
        if not self.R > 0:
            raise DomainError(f"R must be positive, got {self.R}")
        if not 1 < self.d < self.R * math.sqrt(2):
            raise DomainError(f"need 1 < d < R*sqrt(2), got d={self.d}, R={self.R}")
        if not 1 < self.a < 180:
            raise DomainError(f"need 1 < a < 180, got a={self.a}")

    @property
    def distance_bins(self) -> int:
        return int(math.floor(self.R * math.sqrt(2) / self.d + _EPS))

    @property
    def angle_bins(self) -> int:
        return int(math.floor(180.0 / self.a + _EPS))

    @property
    def diagonal(self) -> float:
        return self.R * math.sqrt(2)


class AbstractState(NamedTuple):
    dist_to_target: int
    dist_to_herd: int
    angle: int


class Behavior(Enum):
    SOLO_HERDING = "SoloHerding"
    GROUP_HERDING = "GroupHerding"
    SOLO_FOLLOWING = "SoloFollowing"
    GROUP_FOLLOWING = "GroupFollowing"
    SOLO_TRANSFERRING = "SoloTransferring"
    GROUP_TRANSFERRING = "GroupTransferring"

    @property
    def is_group(self) -> bool:
        return self.name.startswith("GROUP")

    @property
    def is_herding(self) -> bool:
        return self.name.endswith("HERDING")

    @property
    def is_following(self) -> bool:
        return self.name.endswith("FOLLOWING")


class Zone(Enum):
    A = "A"
    B = "B"


def _ceil_bin(x: float, limit: int) -> int:
    return min(limit, max(1, math.ceil(x - _EPS)))


def bin_distance(D: float, params: AbstractionParams) -> int:
    if D < 0 or D > params.diagonal + _EPS:
        raise DomainError(f"distance {D} outside [0, {params.diagonal}]")
    return _ceil_bin(D / params.d, params.distance_bins)


def bin_angle(alpha: float, params: AbstractionParams) -> int:
    if alpha < 0 or alpha > 180 + _EPS:
        raise DomainError(f"angle {alpha} outside [0, 180]")
    return _ceil_bin(alpha / params.a, params.angle_bins)


def distance(p: Point, q: Point) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def vertex_angle(agent: Point, gcm: Point, target: Point) -> float:
    """Angle in degrees at ``gcm`` between rays gcm->agent and gcm->target.

    Coincident points give 0.
    """
    ux, uy = agent[0] - gcm[0], agent[1] - gcm[1]
    vx, vy = target[0] - gcm[0], target[1] - gcm[1]
    if (ux == 0 and uy == 0) or (vx == 0 and vy == 0):
        return 0.0
    return math.degrees(math.atan2(abs(ux * vy - uy * vx), ux * vx + uy * vy))


def solo_state(agent: Point, target: Point, gcm: Point, params: AbstractionParams) -> AbstractState:
    return AbstractState(
        bin_distance(distance(agent, target), params),
        bin_distance(distance(agent, gcm), params),
        bin_angle(vertex_angle(agent, gcm, target), params),
    )


def group_state(members: Sequence[Point], target: Point, gcm: Point, params: AbstractionParams) -> AbstractState:
    """Shared state of a group: per-member distances and angles averaged before binning."""
    m = len(members)
    if m < 2:
        raise DomainError("group_state needs at least two members; use solo_state")
    to_target = sum(distance(p, target) for p in members) / m
    to_herd = sum(distance(p, gcm) for p in members) / m
    angle = sum(vertex_angle(p, gcm, target) for p in members) / m
    if to_target > params.diagonal + _EPS or to_herd > params.diagonal + _EPS:
        raise DomainError("mean member distance exceeds the grid diagonal")
    return AbstractState(
        _ceil_bin(to_target / params.d, params.distance_bins),
        _ceil_bin(to_herd / params.d, params.distance_bins),
        _ceil_bin(angle / params.a, params.angle_bins),
    )


def state_features(agent: Point, target: Point, gcm: Point, params: AbstractionParams) -> tuple[float, float, float]:
    """The unbinned state in bin units: ``(D_target/d, D_herd/d, angle/a)``."""
    return (
        distance(agent, target) / params.d,
        distance(agent, gcm) / params.d,
        vertex_angle(agent, gcm, target) / params.a,
    )


def state_space_size(params: AbstractionParams) -> int:
    return params.distance_bins ** 2 * params.angle_bins


def entrance_side(corral: Sequence[int], entrance: Point) -> str:
    """Border of the corral holding ``entrance``: 'left', 'right', 'bottom' or 'top'.

    Corner cells resolve to their vertical border.
    """
    x1, y1, x2, y2 = corral
    x, y = entrance
    if y1 <= y <= y2:
        if x == x1:
            return "left"
        if x == x2:
            return "right"
    if x1 <= x <= x2:
        if y == y1:
            return "bottom"
        if y == y2:
            return "top"
    raise DomainError(f"entrance {tuple(entrance)} is not on the corral border {tuple(corral)}")


def zone_of(query: Point, grid: GridMap, entrance: Point) -> Zone:
    x1, y1, x2, y2 = grid.corral
    side = entrance_side(grid.corral, entrance)
    qx, qy = query
    facing = {
        "left": qx < x1,
        "right": qx > x2,
        "bottom": qy < y1,
        "top": qy > y2,
    }[side]
    return Zone.A if facing else Zone.B


_SOLO_GROUP = {
    "herding": (Behavior.SOLO_HERDING, Behavior.GROUP_HERDING),
    "following": (Behavior.SOLO_FOLLOWING, Behavior.GROUP_FOLLOWING),
    "transferring": (Behavior.SOLO_TRANSFERRING, Behavior.GROUP_TRANSFERRING),
}


def decompose_behavior(
    group_size: int,
    zone: Zone,
    alpha: float,
    previous: Behavior | None = None,
    threshold: float = 120.0,
    hysteresis: float = 10.0,
) -> Behavior:
    """Pick one of the six behaviors.

    In zone A the herding/following split uses ``threshold`` with a
    ``hysteresis`` band keyed to the previous behavior; zone B always
    transfers.
    """
    if group_size < 1:
        raise DomainError(f"group size must be >= 1, got {group_size}")
    if not 0 <= alpha <= 180:
        raise DomainError(f"angle {alpha} outside [0, 180]")
    if zone is Zone.B:
        family = "transferring"
    elif previous is not None and previous.is_herding:
        family = "following" if alpha < threshold - hysteresis else "herding"
    elif previous is not None and previous.is_following:
        family = "herding" if alpha > threshold + hysteresis else "following"
    else:
        family = "herding" if alpha > threshold else "following"
    return _SOLO_GROUP[family][1 if group_size >= 2 else 0]


# --- action abstraction --------------------------------------------------------------

_COMPASS = [MoveAction(i) for i in range(1, 9)]
_COMPASS_ANGLES = [math.degrees(math.atan2(DELTAS[a][1], DELTAS[a][0])) for a in _COMPASS]


def _angular_gap(a: float, b: float) -> float:
    gap = abs(a - b) % 360.0
    return min(gap, 360.0 - gap)


def nearest_direction(vx: float, vy: float) -> MoveAction:
    """Compass action whose direction is angularly closest to ``(vx, vy)``; zero gives SKIP."""
    if abs(vx) < _EPS and abs(vy) < _EPS:
        return MoveAction.SKIP
    heading = math.degrees(math.atan2(vy, vx))
    best, best_gap = MoveAction.SKIP, math.inf
    for action, angle in zip(_COMPASS, _COMPASS_ANGLES):
        gap = _angular_gap(heading, angle)
        if gap < best_gap - _EPS:
            best, best_gap = action, gap
    return best


def abstract_joint_action(actions: Sequence[MoveAction | int]) -> MoveAction:
    """Sum the members' displacements and quantize the result to a single action."""
    if not actions:
        raise DomainError("joint action of an empty group")
    sx = sum(DELTAS[int(a)][0] for a in actions)
    sy = sum(DELTAS[int(a)][1] for a in actions)
    return nearest_direction(sx, sy)


@dataclass(frozen=True)
class HerdFrame:
    """Frame with the GCM at the origin, the target on +x and the agent at y >= 0.

    Expressing moves in this frame gives them the same meaning for every
    agent whose abstract state is the same, whatever its absolute heading.
    """

    ux: float
    uy: float
    flip: float

    @classmethod
    def of(cls, agent: Point, gcm: Point, target: Point) -> HerdFrame:
        tx, ty = target[0] - gcm[0], target[1] - gcm[1]
        norm = math.hypot(tx, ty)
        ux, uy = (1.0, 0.0) if norm == 0 else (tx / norm, ty / norm)
        ax, ay = agent[0] - gcm[0], agent[1] - gcm[1]
        return cls(ux, uy, -1.0 if ux * ay - uy * ax < 0 else 1.0)

    def to_canonical(self, vx: float, vy: float) -> tuple[float, float]:
        return (vx * self.ux + vy * self.uy, self.flip * (self.ux * vy - self.uy * vx))

    def from_canonical(self, cx: float, cy: float) -> tuple[float, float]:
        cy *= self.flip
        return (cx * self.ux - cy * self.uy, cx * self.uy + cy * self.ux)


def canonical_action(action: MoveAction | int, frame: HerdFrame) -> MoveAction:
    return nearest_direction(*frame.to_canonical(*DELTAS[int(action)]))
