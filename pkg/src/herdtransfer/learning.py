"""Tabular Q-learning over abstract states and visit-weighted Q-table fusion."""
from __future__ import annotations

import io
import math
from collections.abc import Hashable, Iterable, Iterator
from dataclasses import dataclass
from typing import Any, TextIO

import numpy as np

from .errors import ConfigurationError, ProtocolError

State = tuple  # any hashable tuple of ints
Key = tuple[State, int]


@dataclass(frozen=True)
class LearningParams:
    learning_rate: float = 0.1
    discount: float = 0.9
    eps_start: float = 1.0
    eps_min: float = 0.05
    decay_steps: int = 30000
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.learning_rate <= 1:
            raise ConfigurationError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0 <= self.discount < 1:
            raise ConfigurationError(f"discount must be in [0, 1), got {self.discount}")
        for name in ("eps_start", "eps_min"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ConfigurationError(f"{name} must be in [0, 1], got {value}")
        if self.decay_steps < 0:
            raise ConfigurationError("decay_steps must be nonnegative")

    def epsilon(self, step: int) -> float:
        """Linear decay from ``eps_start`` to ``eps_min`` over ``decay_steps``, then flat."""
        if step >= self.decay_steps:
            return self.eps_min
        return self.eps_start + (self.eps_min - self.eps_start) * (step / self.decay_steps)


class QTable:
    """Sparse table ``(state, action) -> (q, visits)`` for one behavior (or area).

    Missing entries read as ``(0.0, 0)``.
    """

    __slots__ = ("tag", "n_actions", "_rows")

    def __init__(self, tag: Hashable, n_actions: int = 9):
        self.tag = tag
        self.n_actions = n_actions
        self._rows: dict[State, dict[int, tuple[float, int]]] = {}

    def get(self, state: State, action: int) -> tuple[float, int]:
        row = self._rows.get(state)
        if row is None:
            return (0.0, 0)
        return row.get(action, (0.0, 0))

    def q(self, state: State, action: int) -> float:
        return self.get(state, action)[0]

    def visits(self, state: State, action: int) -> int:
        return self.get(state, action)[1]

    def set(self, state: State, action: int, q: float, visits: int) -> None:
        self._rows.setdefault(state, {})[action] = (q, visits)

    def row(self, state: State) -> list[float]:
        """Q values of every action in ``state``."""
        row = self._rows.get(state)
        if not row:
            return [0.0] * self.n_actions
        return [row.get(a, (0.0, 0))[0] for a in range(self.n_actions)]

    def max_q(self, state: State) -> float:
        row = self._rows.get(state)
        if not row:
            return 0.0
        best = max(e[0] for e in row.values())
        return best if len(row) == self.n_actions else max(best, 0.0)

    def greedy(self, state: State) -> int:
        """Highest-valued action; ties go to the lowest index."""
        values = self.row(state)
        best = 0
        for a in range(1, self.n_actions):
            if values[a] > values[best]:
                best = a
        return best

    def items(self) -> Iterator[tuple[Key, tuple[float, int]]]:
        for s, row in self._rows.items():
            for a, entry in row.items():
                yield (s, a), entry

    def keys(self) -> Iterator[Key]:
        for s, row in self._rows.items():
            for a in row:
                yield (s, a)

    def __len__(self) -> int:
        return sum(len(r) for r in self._rows.values())

    def __contains__(self, key: Key) -> bool:
        s, a = key
        return a in self._rows.get(s, ())

    def copy(self) -> QTable:
        out = QTable(self.tag, self.n_actions)
        out._rows = {s: dict(row) for s, row in self._rows.items()}
        return out

    def as_dict(self) -> dict[Key, tuple[float, int]]:
        return dict(self.items())

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, QTable):
            return NotImplemented
        return self.tag == other.tag and self.n_actions == other.n_actions and self.as_dict() == other.as_dict()

    def __repr__(self) -> str:
        return f"QTable({self.tag!r}, entries={len(self)})"


def q_update(
    table: QTable,
    state: State,
    action: int,
    reward: float,
    next_state: State | None,
    params: LearningParams,
    next_table: QTable | None = None,
) -> QTable:
    """One-step Q-learning update in place.

    ``next_state=None`` marks a terminal transition (no bootstrap).
    ``next_table`` supplies the bootstrap values when the successor state
    belongs to a different table; it defaults to ``table``.
    """
    q, visits = table.get(state, action)
    if next_state is None:
        future = 0.0
    else:
        future = (next_table if next_table is not None else table).max_q(next_state)
    q += params.learning_rate * (reward + params.discount * future - q)
    table.set(state, action, q, visits + 1)
    return table


def is_exploring(step: int, params: LearningParams, rng: np.random.Generator) -> bool:
    return bool(rng.random() < params.epsilon(step))


def select_action(table: QTable, state: State, step: int, params: LearningParams, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; greedy ties go to the lowest action index.

    Always consumes exactly two draws from ``rng`` so that streams stay
    aligned whichever branch is taken.
    """
    explore = is_exploring(step, params, rng)
    random_action = int(rng.integers(table.n_actions))
    return random_action if explore else table.greedy(state)


def _weighted_mean(pairs: list[tuple[float, int]]) -> float:
    first = pairs[0][0]
    if all(q == first for q, _ in pairs):
        return first
    return math.fsum(q * m for q, m in pairs) / sum(m for _, m in pairs)


def fuse_tables(tables: list[QTable]) -> QTable:
    """Visit-weighted average of same-tag tables.

    For every key, ``q = sum(q_i * M_i) / sum(M_i)`` and ``visits = sum(M_i)``.
    The numerator is an exactly rounded sum, so the result does not depend
    on the order of ``tables``.
    """
    if not tables:
        raise ProtocolError("fuse_tables needs at least one table")
    tag = tables[0].tag
    for t in tables[1:]:
        if t.tag != tag:
            raise ProtocolError(f"cannot fuse tables with tags {tag!r} and {t.tag!r}")
    n_actions = max(t.n_actions for t in tables)
    gathered: dict[State, dict[int, list[tuple[float, int]]]] = {}
    for t in tables:
        for s, row in t._rows.items():
            g = gathered.setdefault(s, {})
            for a, entry in row.items():
                g.setdefault(a, []).append(entry)
    out = QTable(tag, n_actions)
    for s, row in gathered.items():
        for a, entries in row.items():
            weighted = [(q, m) for q, m in entries if m > 0]
            if not weighted:
                out.set(s, a, 0.0, 0)
            else:
                out.set(s, a, _weighted_mean(weighted), sum(m for _, m in weighted))
    return out


# --- sharing helpers ------------------------------------------------------------------

def own_snapshot(table: QTable, own_visits: dict[Key, int]) -> QTable:
    """Copy of ``table`` restricted to keys this agent visited itself, weighted by its own counts."""
    out = QTable(table.tag, table.n_actions)
    for (s, a), m in own_visits.items():
        if m > 0:
            out.set(s, a, table.q(s, a), m)
    return out


def adopt(table: QTable, fused: QTable) -> QTable:
    """Overwrite local entries with the fused values for every fused key."""
    for (s, a), (q, m) in fused.items():
        if m > 0:
            table.set(s, a, q, max(m, table.visits(s, a)))
    return table


# --- snapshot files -------------------------------------------------------------------

def write_tables(tables: Iterable[QTable], out: TextIO | None = None) -> str:
    """One ``tag s1 s2 ... action q visits`` record per entry; q with 17 significant digits."""
    buf = out if out is not None else io.StringIO()
    for t in tables:
        tag = getattr(t.tag, "value", t.tag)
        for (s, a), (q, m) in sorted(t.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            states = " ".join(str(int(v)) for v in s)
            buf.write(f"{tag} {states} {a} {q:.17g} {m}\n")
    return buf.getvalue() if out is None else ""


def read_tables(lines: Iterable[str] | str, tag_type: Any = None, n_actions: int = 9, state_type: Any = tuple) -> dict[Any, QTable]:
    if isinstance(lines, str):
        lines = lines.splitlines()
    tables: dict[Any, QTable] = {}
    for ln in lines:
        parts = ln.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) < 5:
            raise ConfigurationError(f"malformed Q-table record: {ln!r}")
        tag = tag_type(parts[0]) if tag_type is not None else parts[0]
        state = state_type(int(v) for v in parts[1:-3]) if state_type is tuple else state_type(*(int(v) for v in parts[1:-3]))
        table = tables.setdefault(tag, QTable(tag, n_actions))
        table.set(state, int(parts[-3]), float(parts[-2]), int(parts[-1]))
    return tables
