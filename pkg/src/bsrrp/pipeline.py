"""End-to-end heuristic pipeline: prioritize, sequence, schedule, repair.

Each stage is timed; any stage failure short-circuits into a RunRecord with
a named status instead of an exception, so batch sweeps keep running.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .model import Instance, Schedule
from .priority import build_queue, orders_from_instance
from .repair import RepairError, repair_verbose
from .scheduler import build_tasks, list_schedule
from .sequencer import SearchFailure, SearchParams, SearchTimeout, astar_search
from .exact.replay import replay_validate

STATUS_OK = "ok"
STATUS_SEARCH_TIMEOUT = "search-timeout"
STATUS_SEARCH_FAILURE = "search-failure"
STATUS_WINDOW_INFEASIBLE = "window-infeasible"
STATUS_REPAIR_FAILURE = "repair-failure"
STATUS_VALIDATION_FAILURE = "validation-failure"


@dataclass(frozen=True)
class PipelineConfig:
    search: SearchParams = SearchParams()
    validate_mode: str = "relaxed"
    run_repair: bool = True


@dataclass
class RunRecord:
    instance_id: str = ""
    stage_seconds: dict[str, float] = field(default_factory=dict)
    z_heur: float | None = None
    z_lb: float | None = None
    gap_percent: float | None = None
    feasible: bool = False
    status: str = STATUS_OK
    detail: str = ""
    relaxed_task_count: int = 0
    repair_actions: int = 0
    expansions: int = 0

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "stage_seconds": dict(self.stage_seconds),
            "z_heur": self.z_heur,
            "z_lb": self.z_lb,
            "gap_percent": self.gap_percent,
            "feasible": self.feasible,
            "status": self.status,
            "detail": self.detail,
            "relaxed_task_count": self.relaxed_task_count,
            "repair_actions": self.repair_actions,
            "expansions": self.expansions,
        }


def run_pipeline(instance: Instance, config: PipelineConfig = PipelineConfig(),
                 instance_id: str = "") -> tuple[Schedule | None, RunRecord]:
    rec = RunRecord(instance_id=instance_id)

    t0 = time.monotonic()
    queue = build_queue(orders_from_instance(instance))
    rec.stage_seconds["priority"] = time.monotonic() - t0

    t0 = time.monotonic()
    try:
        sequence = astar_search(instance, list(queue.orders), queue.priority,
                                config.search)
    except SearchTimeout as exc:
        rec.stage_seconds["search"] = time.monotonic() - t0
        rec.status, rec.detail = STATUS_SEARCH_TIMEOUT, str(exc)
        return None, rec
    except SearchFailure as exc:
        rec.stage_seconds["search"] = time.monotonic() - t0
        rec.status, rec.detail = STATUS_SEARCH_FAILURE, str(exc)
        return None, rec
    rec.stage_seconds["search"] = time.monotonic() - t0
    rec.expansions = sequence.expansions

    t0 = time.monotonic()
    tasks = build_tasks(sequence, instance)
    solution = list_schedule(tasks, instance)
    rec.stage_seconds["schedule"] = time.monotonic() - t0
    schedule = solution.schedule
    rec.z_heur = schedule.objective_distance
    if solution.window_violations:
        _, load, end, latest = solution.window_violations[0]
        rec.status = STATUS_WINDOW_INFEASIBLE
        rec.detail = f"load {load}: retrieval ends at {end}, window closes at {latest}"
        return schedule, rec

    if config.run_repair:
        t0 = time.monotonic()
        try:
            schedule, actions = repair_verbose(schedule, instance)
        except RepairError as exc:
            rec.stage_seconds["repair"] = time.monotonic() - t0
            rec.status, rec.detail = STATUS_REPAIR_FAILURE, str(exc)
            return None, rec
        rec.stage_seconds["repair"] = time.monotonic() - t0
        rec.repair_actions = len(actions)
        rec.z_heur = schedule.objective_distance

    report = replay_validate(instance, schedule, mode=config.validate_mode)
    rec.relaxed_task_count = report.relaxed_task_count
    if not report.ok:
        first = report.violations[0]
        rec.status = STATUS_VALIDATION_FAILURE
        rec.detail = f"{first.family} at t={first.t}: {first.indices}"
        return schedule, rec

    rec.feasible = True
    return schedule, rec
