"""Scenario runs, paired comparisons and their on-disk outputs."""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .agents import AgentConfig
from .config import ScenarioConfig
from .coordinator import Simulation, run_round
from .errors import DomainError, NoBaselineError
from .learning import LearningParams
from .metrics import LearningCurve, convergence_iteration, jumpstart, transfer_rate
from .world import build_map, initial_world

ABSENT = "absent"


@dataclass(frozen=True)
class RunReport:
    arm: str
    final_success: float
    convergence_iteration: int
    jumpstart: float | None
    transfer_rate: float | str | None
    seed: int
    config_digest: str
    code_version: str = __version__

    def lines(self, prefix: str = "") -> list[str]:
        def fmt(v):
            if v is None:
                return ABSENT
            return repr(v) if isinstance(v, float) else str(v)

        return [
            f"{prefix}arm={self.arm}",
            f"{prefix}final_success={fmt(self.final_success)}",
            f"{prefix}convergence_iteration={fmt(self.convergence_iteration)}",
            f"{prefix}jumpstart={fmt(self.jumpstart)}",
            f"{prefix}transfer_rate={fmt(self.transfer_rate)}",
            f"{prefix}seed={self.seed}",
            f"{prefix}config_digest={self.config_digest}",
            f"{prefix}code_version={self.code_version}",
        ]

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def build_simulation(config: ScenarioConfig, transfer: bool | None = None, record_trace: bool = False) -> Simulation:
    """Map, initial world and agents from the config's seeds; ``transfer`` overrides the config flag."""
    seeds = config.seeds()
    corral = config.corral_rect
    grid = build_map(config.side, config.obstacles, corral, seeds["map"], entity_count=config.cows + config.agents)
    world = initial_world(grid, config.cows, config.agents, seeds["world"], rng_stream=seeds["cows"])
    learning = LearningParams(
        config.learning_rate, config.discount, config.eps_start, config.eps_min,
        int(round(config.eps_decay_fraction * config.total_iterations)),
    )
    agent_config = AgentConfig(
        abstraction=config.abstraction,
        learning=learning,
        cow_params=config.cow_params,
        proximity_threshold=config.proximity,
        heuristics=config.heuristics,
        reward_mode=config.reward_mode,
        seed=seeds["agents"],
    )
    return Simulation.create(
        grid, world, agent_config,
        transfer=config.transfer if transfer is None else transfer,
        fusion_period=config.fusion_period,
        record_trace=record_trace,
        sight=config.sight,
    )


def simulate(config: ScenarioConfig, transfer: bool | None = None, record_trace: bool = False) -> tuple[LearningCurve, Simulation]:
    sim = build_simulation(config, transfer, record_trace)
    iterations, success = [], []
    for k in range(1, config.total_iterations + 1):
        run_round(sim)
        if k % config.sample_every == 0:
            iterations.append(k)
            success.append(sim.success())
    return LearningCurve(np.array(iterations, dtype=np.int64), np.array(success)), sim


def _safe_jumpstart(curve: LearningCurve, fraction: float) -> float | None:
    try:
        return jumpstart(curve, fraction)
    except DomainError:
        return None


def make_report(config: ScenarioConfig, curve: LearningCurve, arm: str, rate: float | str | None = None) -> RunReport:
    return RunReport(
        arm=arm,
        final_success=float(curve.success[-1]),
        convergence_iteration=convergence_iteration(curve, config.convergence_tolerance, config.convergence_window),
        jumpstart=_safe_jumpstart(curve, config.jumpstart_fraction),
        transfer_rate=rate,
        seed=config.master_seed,
        config_digest=config.digest(),
    )


def run_scenario(config: ScenarioConfig) -> tuple[LearningCurve, RunReport]:
    curve, _ = simulate(config)
    return curve, make_report(config, curve, "transfer" if config.transfer else "baseline")


@dataclass(frozen=True)
class Comparison:
    with_transfer: LearningCurve
    without_transfer: LearningCurve
    with_report: RunReport
    without_report: RunReport
    transfer_rate: float | str

    def report_text(self) -> str:
        lines = [f"transfer_rate={self.transfer_rate!r}" if isinstance(self.transfer_rate, float)
                 else f"transfer_rate={self.transfer_rate}"]
        lines += [f"jumpstart_with={_fmt(self.with_report.jumpstart)}",
                  f"jumpstart_without={_fmt(self.without_report.jumpstart)}"]
        lines += self.with_report.lines("with.") + self.without_report.lines("without.")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return ABSENT if v is None else repr(v)


def compare(config: ScenarioConfig) -> Comparison:
    """Paired runs on the identical map, initial world and cow stream; only transfer differs."""
    with_curve, _ = simulate(config, transfer=True)
    without_curve, _ = simulate(config, transfer=False)
    try:
        rate: float | str = transfer_rate(with_curve, without_curve)
    except NoBaselineError:
        rate = "no-baseline"
    return Comparison(
        with_curve, without_curve,
        make_report(config, with_curve, "transfer", rate),
        make_report(config, without_curve, "baseline"),
        rate,
    )


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
