"""Quick invariant suite across all modules, used by ``herdtransfer validate``."""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .abstraction import AbstractionParams, Behavior, Zone, decompose_behavior, state_space_size
from .config import load_config
from .coordinator import replay, run, state_text
from .learning import QTable, fuse_tables
from .messages import MessageKind, decode, encode, read_trace, write_trace
from .metrics import LearningCurve, jumpstart, transfer_rate
from .runner import build_simulation
from .world import check_world, read_snapshot, write_snapshot


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def check_state_space() -> None:
    assert state_space_size(AbstractionParams(10, 5, 100)) == 7056
    assert state_space_size(AbstractionParams(20, 10, 100)) == 882


def check_fusion(instances: int = 200, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        n = int(rng.integers(1, 6))
        keys = [((int(rng.integers(4)), int(rng.integers(4))), int(rng.integers(9))) for _ in range(20)]
        tables = []
        for _ in range(n):
            t = QTable("x")
            for s, a in keys:
                if rng.random() < 0.6:
                    t.set(s, a, float(rng.normal()), int(rng.integers(0, 20)))
            tables.append(t)
        fused = fuse_tables(tables)
        for key in {k for t in tables for k, _ in t.items()}:
            entries = [t.get(*key) for t in tables if key in dict(t.items())]
            m = sum(v for _, v in entries)
            q, visits = fused.get(*key)
            assert visits == m
            if m > 0:
                assert abs(q - sum(qq * v for qq, v in entries) / m) <= 1e-12
        perm = [tables[i] for i in rng.permutation(n)]
        assert dict(fuse_tables(perm).items()) == dict(fused.items())
        assert dict(fuse_tables([fused]).items()) == dict(fused.items())


def check_behaviors(samples: int = 10000, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    previous = [None, *Behavior]
    for _ in range(samples):
        size = int(rng.integers(1, 7))
        zone = Zone.A if rng.random() < 0.5 else Zone.B
        b = decompose_behavior(size, zone, float(rng.uniform(0, 180)), previous[int(rng.integers(len(previous)))])
        assert isinstance(b, Behavior)
        assert size >= 2 or not b.is_group


def check_metrics() -> None:
    it = np.arange(50, 1050, 50)
    c = LearningCurve(it, np.full(len(it), 20.0))
    assert transfer_rate(c, c) == 0.0
    assert abs(transfer_rate(LearningCurve(it, np.full(len(it), 40.0)), c) - 1.0) <= 1e-12
    assert abs(jumpstart(LearningCurve(it, np.full(len(it), 29.0)), 0.1) - 29.0) <= 1e-12


def check_messages_and_world(steps: int = 40) -> None:
    config = load_config("desk", {"agents": 3, "total_iterations": steps, "sample_every": 1})
    sim = build_simulation(config, record_trace=True)
    run(sim, steps)
    check_world(sim.world, sim.grid)
    trace = sim.trace or []
    kinds = [m.kind for m in trace]
    assert kinds.count(MessageKind.CLOSER_NOTIFY) == 1
    assert kinds.count(MessageKind.QTABLE_SHARE) == 3 * steps
    assert kinds.count(MessageKind.FUSED_TABLES_BROADCAST) == steps
    for m in trace:
        assert encode(decode(encode(m))) == encode(m)
    buf = io.StringIO()
    write_trace(trace, buf)
    replayed = replay(read_trace(buf.getvalue().splitlines()), 3, sim.grid.corral_mid)
    assert state_text(replayed) == state_text(sim.coordinator)
    snap = read_snapshot(write_snapshot(sim.grid, sim.world))
    assert snap.world == sim.world and snap.grid.obstacles == sim.grid.obstacles


CHECKS: dict[str, Callable[[], None]] = {
    "state-space": check_state_space,
    "fusion": check_fusion,
    "behaviors": check_behaviors,
    "metrics": check_metrics,
    "protocol": check_messages_and_world,
}


def run_checks() -> list[CheckResult]:
    results = []
    for name, fn in CHECKS.items():
        try:
            fn()
            results.append(CheckResult(name, True))
        except Exception as exc:  # report every failure, keep going
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    return results
