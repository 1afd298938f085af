"""Typed messages exchanged between player agents and the coordinator.

Every message serializes to one self-describing JSON line
(``kind``, ``sender``, ``step``, ``to``, ``payload``) so traces can be
logged and replayed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Iterator, TextIO

from .abstraction import AbstractState, Behavior
from .errors import ProtocolError
from .learning import QTable

COORDINATOR = -1
EVERYONE = -2


class MessageKind(Enum):
    COORDINATE = "coordinate"
    CLOSER_NOTIFY = "closer"
    ENTRANCES_REPORT = "entrances-report"
    ENTRANCES_BROADCAST = "entrances"
    QTABLE_SHARE = "q-table-share"
    FUSED_TABLES_BROADCAST = "q-table"
    COOPERATION = "cooperation"


_PAYLOAD_KEYS = {
    MessageKind.COORDINATE: {"position"},
    MessageKind.CLOSER_NOTIFY: set(),
    MessageKind.ENTRANCES_REPORT: {"entrances"},
    MessageKind.ENTRANCES_BROADCAST: {"entrances"},
    MessageKind.QTABLE_SHARE: {"behavior", "table"},
    MessageKind.FUSED_TABLES_BROADCAST: {"tables"},
    MessageKind.COOPERATION: {"invited", "herd"},
}


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: int
    step: int
    to: int = COORDINATOR
    payload: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.kind, MessageKind):
            raise ProtocolError(f"unknown message kind {self.kind!r}")
        expected = _PAYLOAD_KEYS[self.kind]
        if set(self.payload) != expected:
            raise ProtocolError(f"{self.kind.value} payload needs keys {sorted(expected)}, got {sorted(self.payload)}")
        if self.kind is MessageKind.QTABLE_SHARE:
            table = self.payload["table"]
            if not isinstance(self.payload["behavior"], Behavior) or table.tag != self.payload["behavior"]:
                raise ProtocolError("q-table share must carry exactly one behavior tag")


def _table_to_json(table: QTable) -> list[list[Any]]:
    return [[*s, a, q, m] for (s, a), (q, m) in table.items()]


def _table_from_json(tag: Behavior, rows: list[list[Any]]) -> QTable:
    out = QTable(tag)
    for row in rows:
        *s, a, q, m = row
        out.set(AbstractState(*s), int(a), float(q), int(m))
    return out


def encode(msg: Message) -> str:
    p = msg.payload
    if msg.kind is MessageKind.COORDINATE:
        payload: dict[str, Any] = {"position": list(p["position"])}
    elif msg.kind in (MessageKind.ENTRANCES_REPORT, MessageKind.ENTRANCES_BROADCAST):
        payload = {"entrances": [list(c) for c in p["entrances"]]}
    elif msg.kind is MessageKind.QTABLE_SHARE:
        payload = {"behavior": p["behavior"].value, "table": _table_to_json(p["table"])}
    elif msg.kind is MessageKind.FUSED_TABLES_BROADCAST:
        payload = {"tables": {b.value: _table_to_json(t) for b, t in p["tables"].items()}}
    elif msg.kind is MessageKind.COOPERATION:
        herd = p["herd"]
        payload = {"invited": list(p["invited"]), "herd": None if herd is None else [list(c) for c in herd]}
    else:
        payload = {}
    return json.dumps(
        {"kind": msg.kind.value, "sender": msg.sender, "step": msg.step, "to": msg.to, "payload": payload},
        separators=(",", ":"),
    )


def decode(line: str) -> Message:
    try:
        raw = json.loads(line)
        kind = MessageKind(raw["kind"])
    except (ValueError, KeyError) as exc:
        raise ProtocolError(f"undecodable message: {line[:80]!r}") from exc
    p = raw["payload"]
    if kind is MessageKind.COORDINATE:
        payload: dict[str, Any] = {"position": tuple(p["position"])}
    elif kind in (MessageKind.ENTRANCES_REPORT, MessageKind.ENTRANCES_BROADCAST):
        payload = {"entrances": [tuple(c) for c in p["entrances"]]}
    elif kind is MessageKind.QTABLE_SHARE:
        behavior = Behavior(p["behavior"])
        payload = {"behavior": behavior, "table": _table_from_json(behavior, p["table"])}
    elif kind is MessageKind.FUSED_TABLES_BROADCAST:
        payload = {"tables": {Behavior(b): _table_from_json(Behavior(b), rows) for b, rows in p["tables"].items()}}
    elif kind is MessageKind.COOPERATION:
        herd = p["herd"]
        payload = {"invited": tuple(p["invited"]), "herd": None if herd is None else tuple(tuple(c) for c in herd)}
    else:
        payload = {}
    return Message(kind, raw["sender"], raw["step"], raw["to"], payload)


def write_trace(messages: Iterable[Message], out: TextIO) -> None:
    for msg in messages:
        out.write(encode(msg) + "\n")


def read_trace(lines: Iterable[str]) -> Iterator[Message]:
    for ln in lines:
        if ln.strip():
            yield decode(ln)
