"""Acceptance suite: one PASS/FAIL line per criterion (run with ``pytest -s``)."""
import io
import math
import time

import numpy as np
import pytest

from herdtransfer.abstraction import AbstractionParams, Behavior, Zone, decompose_behavior, state_space_size
from herdtransfer.cli import main
from herdtransfer.config import load_config
from herdtransfer.coordinator import replay, run, state_text
from herdtransfer.errors import NoBaselineError
from herdtransfer.goalsearch import TrialConfig, run_goalsearch_experiment
from herdtransfer.learning import fuse_tables
from herdtransfer.messages import MessageKind, read_trace, write_trace
from herdtransfer.metrics import LearningCurve, convergence_iteration, jumpstart, transfer_rate
from herdtransfer.runner import build_simulation, compare

from oracles import brute_force_fusion, greedy_policy, learn_gridworld, optimal_actions, random_tables, value_iteration


def verdict(number, ok, detail):
    print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def test_criterion_1_state_space_size():
    a = state_space_size(AbstractionParams(10, 5, 100))
    b = state_space_size(AbstractionParams(20, 10, 100))
    verdict(1, (a, b) == (7056, 882), f"sizes {a}, {b}")


def test_criterion_2_fusion():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst, ok = 0.0, True
    for _ in range(1000):
        tables = random_tables(rng, max_tables=8, max_keys=60)
        fused = fuse_tables(tables)
        oracle = brute_force_fusion(tables)
        ok &= set(fused.keys()) == set(oracle)
        for key, (q, m) in oracle.items():
            got_q, got_m = fused.get(*key)
            ok &= got_m == m
            worst = max(worst, abs(got_q - q))
        ok &= fuse_tables([tables[i] for i in rng.permutation(len(tables))]) == fused
        again = fuse_tables([fused])
        ok &= all(again.get(*k) == v for k, v in fused.items() if v[1] > 0)
    elapsed = time.perf_counter() - t0
    verdict(2, ok and worst <= 1e-12 and elapsed < 10, f"max error {worst:.2e}, {elapsed:.1f}s")


def test_criterion_3_gridworld_matches_value_iteration():
    t0 = time.perf_counter()
    optimal = optimal_actions(value_iteration())
    matched = sum(all(p[s] in optimal[s] for s in optimal)
                  for p in (greedy_policy(learn_gridworld(seed, updates=20000)) for seed in range(10)))
    elapsed = time.perf_counter() - t0
    verdict(3, matched == 10 and elapsed < 30, f"{matched}/10 seeds optimal, {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_4_desk_transfer():
    rates, with_js, without_js, worst = [], [], [], 0.0
    for seed in range(1, 6):
        t0 = time.perf_counter()
        c = compare(load_config("desk", {"master_seed": seed}))
        worst = max(worst, time.perf_counter() - t0)
        rates.append(c.transfer_rate)
        with_js.append(c.with_report.jumpstart or 0.0)
        without_js.append(c.without_report.jumpstart or 0.0)
    positive = sum(isinstance(r, float) and r > 0 for r in rates)
    ok = positive >= 4 and np.mean(with_js) >= np.mean(without_js) and worst < 300
    shown = ", ".join(r if isinstance(r, str) else f"{r:.3f}" for r in rates)
    verdict(4, ok, f"rates [{shown}], positive {positive}/5, jumpstart {np.mean(with_js):.2f} vs "
                   f"{np.mean(without_js):.2f}, slowest pair {worst:.0f}s")


def test_criterion_5_behaviors():
    rng = np.random.default_rng(5)
    previous = [None, *Behavior]
    total = True
    for _ in range(100_000):
        size = int(rng.integers(1, 10))
        zone = Zone.A if rng.random() < 0.5 else Zone.B
        b = decompose_behavior(size, zone, float(rng.uniform(0, 180)), previous[int(rng.integers(len(previous)))])
        total &= b in set(Behavior)
    prev, switches = None, 0
    for alpha in np.linspace(0, 180, 10001):
        b = decompose_behavior(1, Zone.A, float(alpha), prev)
        switches += prev is not None and b is not prev
        prev = b
    verdict(5, total and switches <= 2, f"total={total}, sweep switches {switches}")


@pytest.mark.slow
def test_criterion_6_goal_search():
    t0 = time.perf_counter()
    on = run_goalsearch_experiment(TrialConfig(episodes=500, trials=40, fusion=True))
    off = run_goalsearch_experiment(TrialConfig(episodes=500, trials=40, fusion=False))
    elapsed = time.perf_counter() - t0
    a = on.at(32, 2) < on.at(32, 1)
    b = on.at(218, 1) < 0.5 * on.at(32, 1) and on.at(218, 3) < 0.5 * on.at(32, 3)
    c = on.at(94, 1) < off.at(94, 1)
    detail = (f"(a) {on.at(32, 2):.0f} < {on.at(32, 1):.0f}: {a}; "
              f"(b) {on.at(218, 1):.0f}/{on.at(32, 1):.0f}, {on.at(218, 3):.0f}/{on.at(32, 3):.0f}: {b}; "
              f"(c) {on.at(94, 1):.0f} < {off.at(94, 1):.0f}: {c}; {elapsed:.0f}s")
    verdict(6, a and b and c and elapsed < 900, detail)


@pytest.mark.slow
def test_criterion_7_compare_is_byte_identical(tmp_path):
    dirs = [tmp_path / "first", tmp_path / "second"]
    codes = [main(["compare", "--config", "desk", "--out", str(d)]) for d in dirs]
    names = ("with_transfer.csv", "without_transfer.csv", "report.txt")
    same = all((dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names)
    verdict(7, codes == [0, 0] and same, f"exit codes {codes}, identical={same}")


def test_criterion_8_metric_closed_forms():
    it = np.arange(50, 5050, 50)
    flat = LearningCurve(it, np.full(len(it), 20.0))
    errors = [
        abs(transfer_rate(flat, flat)),
        abs(transfer_rate(LearningCurve(it, np.full(len(it), 40.0)), flat) - 1.0),
        abs(jumpstart(LearningCurve(it, np.full(len(it), 29.0))) - 29.0),
    ]
    n = 200
    ramp = LearningCurve(np.arange(1, n + 1), 100.0 * np.arange(n) / (n - 1))
    k = math.ceil(0.05 * n)
    errors.append(abs(jumpstart(ramp) - 100.0 * (k - 1) / (2 * (n - 1))))
    step = LearningCurve(it, np.where(it >= 1500, 80.0, 10.0))
    lag = math.ceil(20 * (1 - 2 / 70))
    converges = convergence_iteration(step, 2, 20) == 1500 + (lag - 1) * 50
    try:
        transfer_rate(flat, LearningCurve(it, np.zeros(len(it))))
        raises = False
    except NoBaselineError:
        raises = True
    verdict(8, max(errors) <= 1e-12 and converges and raises, f"max error {max(errors):.1e}")


def test_criterion_9_coordinator_protocol():
    t0 = time.perf_counter()
    config = load_config("desk", {"agents": 3})
    sim = build_simulation(config, record_trace=True)
    steps = 200
    run(sim, steps)
    kinds = [m.kind for m in sim.trace]
    notify = kinds.count(MessageKind.CLOSER_NOTIFY)
    before = kinds[:kinds.index(MessageKind.CLOSER_NOTIFY)].count(MessageKind.COORDINATE) if notify else -1
    per_step = all(
        [m.kind for m in sim.trace if m.step == s].count(MessageKind.QTABLE_SHARE) == 3
        and [m.kind for m in sim.trace if m.step == s].count(MessageKind.FUSED_TABLES_BROADCAST) == 1
        for s in range(steps)
    )
    buf = io.StringIO()
    write_trace(sim.trace, buf)
    replayed = replay(read_trace(buf.getvalue().splitlines()), 3, sim.grid.corral_mid)
    bitwise = state_text(replayed) == state_text(sim.coordinator)
    elapsed = time.perf_counter() - t0
    ok = notify == 1 and before == 3 and per_step and bitwise and elapsed < 10
    verdict(9, ok, f"notify {notify} after {before} coordinate, per-step counts {per_step}, "
                   f"replay equal {bitwise}, {elapsed:.1f}s")
